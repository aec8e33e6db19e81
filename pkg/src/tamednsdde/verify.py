"""Sampled checks of the assumption ladder and estimates of the guard constants.

Each check draws point quadruples ``(x, y, xbar, ybar)`` on a box, half of
them uniformly and half as near-diagonal pairs (``xbar = x + eps*u``), and
reports the largest value of the assumption's defining quotient.  Samples
come from one sequential stream, so a larger sample set always contains the
smaller one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidCoefficientError, ParameterRangeError
from .model import as_spec
from .taming import (
    C_ZETA, CutoffConfig, TamedCoefficients, TamingConfig, TamingMode, frobenius_norm, vector_norm,
)

NEAR_DIAGONAL_EPS = 1e-4
WITNESS_TOL = 1e-9


class AssumptionId(str, Enum):
    """Structural inequalities that ``check_assumption`` can sample.

    ``A2`` neutral-term contraction with ``D(0) = 0``; ``A3``/``A3_WEAK``
    monotone growth; ``A4`` global one-sided Lipschitz with polynomial
    Lipschitz bound; ``A5`` local one-sided Lipschitz.  ``B1``-``B4`` are the
    sigmoidal-taming bounds (min-bound, growth, one-sided Lipschitz, rate);
    ``C1``-``C4`` the same four for balanced taming on a ball.
    """

    A2 = "A2"
    A3 = "A3"
    A3_WEAK = "A3'"
    A4 = "A4"
    A5 = "A5"
    B1 = "B1"
    B2 = "B2"
    B2_WEAK = "B2'"
    B3 = "B3"
    B4 = "B4"
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"
    C4 = "C4"


class Status(str, Enum):
    PASS_SAMPLED = "PassSampled"
    VIOLATED_WITNESS = "ViolatedWitness"


@dataclass
class AssumptionReport:
    assumption_id: AssumptionId
    status: Status
    estimated_constant: float
    witness: tuple | None
    samples: int
    box_radius: float
    details: dict = field(default_factory=dict)

    def row(self):
        witness = "" if self.witness is None else repr(tuple(np.asarray(w).tolist() for w in self.witness))
        return [self.assumption_id.value, self.status.value, f"{self.estimated_constant:.17g}",
                witness, str(self.samples), f"{self.box_radius:.17g}"]


# single-point checks need only (x, y); the rest use both points of the quadruple
_LOCAL = {AssumptionId.A5, AssumptionId.C3, AssumptionId.C4}
_NEEDS_DELTA = {
    AssumptionId.B1, AssumptionId.B2, AssumptionId.B2_WEAK, AssumptionId.B3, AssumptionId.B4,
    AssumptionId.C1, AssumptionId.C2, AssumptionId.C3, AssumptionId.C4,
}


def sample_quadruples(n, radius, samples, seed, ball=False):
    """``samples`` quadruples of points in ``[-radius, radius]^n``.

    Even-indexed samples are uniform, odd-indexed ones perturb ``(x, y)`` by
    ``NEAR_DIAGONAL_EPS`` in a random unit direction.  With ``ball=True``
    points are radially projected into the Euclidean ball of ``radius``.
    """
    # separate child streams, each drawn row by row, so a larger sample
    # set always starts with the smaller one
    box_rng, dir_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    u = box_rng.uniform(-radius, radius, size=(samples, 4, n))
    direction = dir_rng.standard_normal((samples, 2 * n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    near = np.arange(samples) % 2 == 1
    u[near, 2] = u[near, 0] + NEAR_DIAGONAL_EPS * direction[near, :n]
    u[near, 3] = u[near, 1] + NEAR_DIAGONAL_EPS * direction[near, n:]
    if ball:
        norms = np.linalg.norm(u, axis=-1, keepdims=True)
        u = np.where(norms > radius, u * (radius / np.maximum(norms, 1e-300)), u)
    else:
        u = np.clip(u, -radius, radius)
    return u[:, 0], u[:, 1], u[:, 2], u[:, 3]


def _inner(a, b):
    return np.sum(a * b, axis=-1)


def _finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise InvalidCoefficientError("coefficient evaluation produced non-finite values on the box")


def _quotients(aid, spec, tamer, x, y, xb, yb, p, delta, l):
    """Return ``(ratio, extra)``: the per-sample quotient and auxiliary maxima."""
    D, b, sigma = spec.neutral_D, spec.drift_b, spec.diffusion_sigma
    dist2 = np.sum((x - xb) ** 2, -1) + np.sum((y - yb) ** 2, -1)
    safe2 = np.where(dist2 > 0, dist2, np.nan)
    growth = 1.0 + np.sum(x * x, -1) + np.sum(y * y, -1)
    extra = {}

    if aid is AssumptionId.A2:
        num = vector_norm(D(y) - D(yb))
        den = vector_norm(y - yb)
        return num / np.where(den > 0, den, np.nan), extra

    if aid in (AssumptionId.A3, AssumptionId.A3_WEAK, AssumptionId.B2, AssumptionId.B2_WEAK,
               AssumptionId.C2):
        if aid in (AssumptionId.A3, AssumptionId.A3_WEAK):
            bv, sv = b(x, y), sigma(x, y)
        else:
            bv, sv = tamer.evaluate(x, y, delta)
        _finite(bv, sv)
        drift_part = _inner(x - D(y), bv)
        s2 = frobenius_norm(sv) ** 2
        if aid in (AssumptionId.A3_WEAK, AssumptionId.B2_WEAK):
            return (2.0 * drift_part + (p - 1.0) * s2) / growth, extra
        return np.maximum(drift_part, s2) / growth, extra

    lhs_vec = x - D(y) - xb + D(yb)

    if aid is AssumptionId.A4:
        bv, bbv = b(x, y), b(xb, yb)
        sv, sbv = sigma(x, y), sigma(xb, yb)
        _finite(bv, bbv, sv, sbv)
        one_sided = 2.0 * _inner(lhs_vec, bv - bbv) + (p - 1.0) * frobenius_norm(sv - sbv) ** 2
        poly = 1.0 + sum(vector_norm(v) ** l for v in (x, xb, y, yb))
        sep = vector_norm(x - xb) + vector_norm(y - yb)
        k4 = vector_norm(bv - bbv) / (poly * np.where(sep > 0, sep, np.nan))
        extra["K4"] = float(np.nanmax(k4))
        return one_sided / safe2, extra

    if aid is AssumptionId.A5:
        bv, bbv = b(x, y), b(xb, yb)
        sv, sbv = sigma(x, y), sigma(xb, yb)
        _finite(bv, bbv, sv, sbv)
        num = np.maximum(_inner(lhs_vec, bv - bbv), frobenius_norm(sv - sbv) ** 2)
        return num / safe2, extra

    if aid in (AssumptionId.B1, AssumptionId.C1):
        bv, sv = b(x, y), sigma(x, y)
        bt, st = tamer.evaluate(x, y, delta)
        _finite(bv, sv, bt, st)
        scale = tamer.taming.K5 * float(delta) ** (-tamer.taming.alpha)
        nx, ny = vector_norm(x), vector_norm(y)
        b_lim = np.minimum(scale * (1.0 + nx + ny), vector_norm(bv))
        s_lim = np.minimum(scale * (1.0 + nx * nx + ny * ny), frobenius_norm(sv) ** 2)
        r_b = np.where(b_lim > 0, vector_norm(bt) / np.where(b_lim > 0, b_lim, 1.0),
                       np.where(vector_norm(bt) > 0, np.inf, 0.0))
        st2 = frobenius_norm(st) ** 2
        r_s = np.where(s_lim > 0, st2 / np.where(s_lim > 0, s_lim, 1.0), np.where(st2 > 0, np.inf, 0.0))
        extra["drift_ratio"] = float(np.max(r_b))
        extra["diffusion_ratio"] = float(np.max(r_s))
        return np.maximum(r_b, r_s), extra

    if aid in (AssumptionId.B3, AssumptionId.C3):
        bt = tamer.drift(x, y, delta)
        bbt = tamer.drift(xb, yb, delta)
        _finite(bt, bbt)
        return _inner(lhs_vec, bt - bbt) / safe2, extra

    if aid is AssumptionId.B4:
        bv, sv = b(x, y), sigma(x, y)
        bt, st = tamer.evaluate(x, y, delta)
        _finite(bv, sv, bt, st)
        expo = 2.0 * (l + 1.0)
        weight = float(delta) ** tamer.taming.alpha * (1.0 + vector_norm(x) ** expo + vector_norm(y) ** expo)
        r_b = vector_norm(bv - bt) / weight
        r_s = frobenius_norm(sv - st) / weight
        extra["drift_ratio"] = float(np.max(r_b))
        extra["diffusion_ratio"] = float(np.max(r_s))
        return np.maximum(r_b, r_s), extra

    if aid is AssumptionId.C4:
        bv, sv = b(x, y), sigma(x, y)
        bt, st = tamer.evaluate(x, y, delta)
        _finite(bv, sv, bt, st)
        scale = float(delta) ** tamer.taming.alpha
        r_b = vector_norm(bv - bt) / scale
        r_s = frobenius_norm(sv - st) / scale
        extra["drift_ratio"] = float(np.max(r_b))
        extra["diffusion_ratio"] = float(np.max(r_s))
        return np.maximum(r_b, r_s), extra

    raise ParameterRangeError(f"unsupported assumption {aid}")


def _default_taming(aid):
    if aid.value.startswith("C"):
        return TamingConfig(mode=TamingMode.BALANCED)
    return TamingConfig(mode=TamingMode.SIGMOIDAL)


def check_assumption(aid, model, taming: TamingConfig | None = None, box_radius: float = 3.0,
                     samples: int = 10_000, p: float = 2.0, seed: int = 0, delta=1e-3,
                     bound: float | None = None, l: float | None = None) -> AssumptionReport:
    """Sample one assumption on ``[-box_radius, box_radius]``.

    The estimated constant is the largest sampled quotient.  A witness is
    reported when the quotient exceeds ``bound`` by more than ``1e-9``.
    Default bounds: ``A2`` must stay below 1/2 (and ``D(0) = 0``), ``B1`` and
    ``C1`` ratios must stay at or below 1.  Other assumptions only assert
    existence of a constant, so without ``bound`` they fail only on
    non-finite quotients.
    """
    aid = AssumptionId(aid)
    if box_radius <= 0 or samples < 1:
        raise ParameterRangeError("box_radius must be positive and samples >= 1")
    spec = as_spec(model)
    if l is None:
        l = getattr(getattr(model, "constants", None), "l", None) or 2.0
    taming = taming or _default_taming(aid)
    tamer = TamedCoefficients(spec, taming, None, check=False)
    x, y, xb, yb = sample_quadruples(spec.state_dim, box_radius, samples, seed, ball=aid in _LOCAL)

    with np.errstate(all="ignore"):
        ratio, extra = _quotients(aid, spec, tamer, x, y, xb, yb, p, delta, l)
    ratio = np.where(np.isnan(ratio), -np.inf, ratio)
    idx = int(np.argmax(ratio))
    estimate = float(ratio[idx])
    if estimate == -np.inf:
        estimate = 0.0
    details = dict(extra)
    if aid in _NEEDS_DELTA:
        details["delta"] = float(delta)

    strict = False
    if bound is None:
        if aid is AssumptionId.A2:
            bound, strict = 0.5, True
        elif aid in (AssumptionId.B1, AssumptionId.C1):
            bound = 1.0
    witness = None
    violated = not np.isfinite(estimate)
    if bound is not None:
        violated |= estimate >= bound if strict else estimate > bound + WITNESS_TOL
    if violated:
        witness = (x[idx], y[idx], xb[idx], yb[idx])
    if aid is AssumptionId.A2:
        zero = np.zeros(spec.state_dim)
        details["D0"] = float(vector_norm(np.asarray(spec.neutral_D(zero))))
        if details["D0"] > WITNESS_TOL and not violated:
            # the contraction holds on the sample; the failing point is the origin
            violated = True
            witness = (zero, zero, zero, zero)
    status = Status.VIOLATED_WITNESS if violated else Status.PASS_SAMPLED
    return AssumptionReport(aid, status, estimate, witness, samples, float(box_radius), details)


def sup_drift(model, radius, samples=10_000, seed=0):
    """Sampled ``sup |b(x, y)|`` over ``|x| v |y| <= radius`` (the bound ``Lbar_R``)."""
    spec = as_spec(model)
    x, y, _, _ = sample_quadruples(spec.state_dim, radius, samples, seed, ball=True)
    if spec.state_dim == 1:
        # polynomial drifts peak on the boundary; include the corners explicitly
        corners = radius * np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
        x = np.concatenate([x, corners[:, :1]])
        y = np.concatenate([y, corners[:, 1:]])
    with np.errstate(all="ignore"):
        values = vector_norm(spec.drift_b(x, y))
    _finite(values)
    return float(np.max(values))


def truncated_one_sided(model, taming: TamingConfig, cut: CutoffConfig, box_radius, samples=10_000,
                        seed=0, delta=1e-3):
    """Sampled one-sided quotient of the truncated drift over a box reaching past the cutoff."""
    spec = as_spec(model)
    tamer = TamedCoefficients(spec, taming, cut, check=False)
    x, y, xb, yb = sample_quadruples(spec.state_dim, box_radius, samples, seed)
    D = spec.neutral_D
    with np.errstate(all="ignore"):
        num = _inner(x - D(y) - xb + D(yb), tamer.drift(x, y, delta) - tamer.drift(xb, yb, delta))
        dist2 = np.sum((x - xb) ** 2, -1) + np.sum((y - yb) ** 2, -1)
        q = num / np.where(dist2 > 0, dist2, np.nan)
    return float(np.nanmax(q)) if np.isfinite(q).any() else 0.0


@dataclass(frozen=True)
class GuardConstants:
    K3_tilde: float
    M_bar: float
    L_bar: float
    M_R0: float
    M_bar_sampled: float
    M_bar_formula: float
    box_radius: float


def estimate_guard_constants(model, taming: TamingConfig | None = None, cutoff: CutoffConfig | None = None,
                             box_radius: float | None = None, samples: int = 10_000, seed: int = 0,
                             delta=1e-3) -> GuardConstants:
    """Estimate the constants consumed by the step-size guards.

    On the box of radius ``R0`` (``box_radius``; defaults to ``R + 1`` for a
    cutoff of radius ``R``, else 3): ``K3_tilde`` is the one-sided constant
    of the tamed drift, ``L_bar`` the sup of ``|b|`` and ``M_R0`` the
    one-sided constant of the balanced drift.  ``M_bar`` is the larger of the
    sampled global one-sided quotient of the truncated drift and
    ``M_R0 + 2 C_zeta L_bar``.  Without a cutoff the ``M`` fields are 0.
    """
    taming = taming or TamingConfig()
    if box_radius is None:
        box_radius = cutoff.R + 1.0 if cutoff is not None else 3.0
    k3 = check_assumption(AssumptionId.B3, model, taming, box_radius, samples, seed=seed,
                          delta=delta).estimated_constant
    k3 = max(k3, 0.0)
    l_bar = sup_drift(model, box_radius, samples, seed)
    constants = getattr(model, "constants", None)
    if constants is not None:
        constants.record_local("Lbar", box_radius, l_bar)
    if cutoff is None:
        return GuardConstants(k3, 0.0, l_bar, 0.0, 0.0, 0.0, float(box_radius))
    balanced = TamingConfig(taming.alpha, taming.K5, TamingMode.BALANCED)
    m_r = max(check_assumption(AssumptionId.C3, model, balanced, box_radius, samples, seed=seed,
                               delta=delta).estimated_constant, 0.0)
    formula = m_r + 2.0 * C_ZETA * l_bar
    # sample well past the transition band so every case of the cutoff is hit
    outer = max(box_radius, cutoff.R + 1.0) + 1.0
    sampled = max(truncated_one_sided(model, balanced, cutoff, outer, samples, seed, delta), 0.0)
    if constants is not None:
        constants.record_local("M", box_radius, m_r)
    return GuardConstants(k3, max(sampled, formula), l_bar, m_r, sampled, formula, float(box_radius))
