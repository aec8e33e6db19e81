"""Tamed theta, split-step tamed theta and truncated tamed theta integrators.

All step functions work on batches: a state is an array of shape
``(..., n)`` and every leading index is an independent path sharing the same
model and step size.  The implicit solve treats each path separately (a
converged path is frozen while others keep iterating), so a path's result
does not depend on which other paths share its batch.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from .errors import GridMismatchError, GuardViolation, ParameterRangeError, SolverNonConvergence
from .model import AssumptionConstants, ProblemSpec, as_fraction, as_spec, sample_initial_grid
from .paths import BrownianGrid
from .taming import CutoffConfig, TamedCoefficients, TamingConfig, TamingMode, vector_norm


class Variant(str, Enum):
    TAMED_THETA = "tamed_theta"
    SPLIT_STEP = "split_step"
    IMPROVED_TRUNCATED = "improved_truncated"


class SolverMethod(str, Enum):
    FIXED_POINT = "fixed_point"
    NEWTON_FALLBACK = "newton_fallback"


class GuardMode(str, Enum):
    STRICT = "strict"
    WARN_ONLY = "warn"


OK, BLEW_UP, SOLVER_FAILED = 0, 1, 2


@dataclass(frozen=True)
class ImplicitSolverPolicy:
    method: SolverMethod = SolverMethod.NEWTON_FALLBACK
    tol_residual: float = 1e-12
    max_iters: int = 100
    fd_jacobian_eps: float = 1e-7
    stall_window: int = 10
    polish_iters: int = 3

    def __post_init__(self):
        object.__setattr__(self, "method", SolverMethod(self.method))
        if not self.tol_residual > 0:
            raise ParameterRangeError("tol_residual must be positive")
        if self.max_iters < 1:
            raise ParameterRangeError("max_iters must be >= 1")
        if self.polish_iters < 0:
            raise ParameterRangeError("polish_iters must be >= 0")


@dataclass(frozen=True)
class SchemeConfig:
    theta: float
    delta: Fraction
    m: int
    M: int
    variant: Variant = Variant.TAMED_THETA
    taming: TamingConfig = TamingConfig()
    cutoff: CutoffConfig | None = None
    solver: ImplicitSolverPolicy = ImplicitSolverPolicy()
    guard_mode: GuardMode = GuardMode.STRICT

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "guard_mode", GuardMode(self.guard_mode))
        object.__setattr__(self, "delta", as_fraction(self.delta))
        if not (0.0 <= self.theta <= 1.0):
            raise ParameterRangeError(f"theta must lie in [0, 1], got {self.theta}")
        if self.m < 1 or self.M < 1:
            raise GridMismatchError("m and M must be positive integers")
        if self.variant is Variant.IMPROVED_TRUNCATED:
            if self.taming.mode is not TamingMode.BALANCED or self.cutoff is None:
                raise ParameterRangeError("the truncated scheme needs balanced taming and a cutoff")

    @classmethod
    def for_problem(cls, spec, theta, delta, **kwargs) -> "SchemeConfig":
        """Derive ``m = tau / delta`` and ``M = T / delta`` exactly."""
        spec = as_spec(spec)
        delta = as_fraction(delta)
        if delta <= 0:
            raise GridMismatchError(f"step must be positive, got {delta}")
        m, M = spec.delay / delta, spec.horizon / delta
        if m.denominator != 1 or M.denominator != 1:
            raise GridMismatchError(
                f"step {delta} does not divide tau={spec.delay} and T={spec.horizon}"
            )
        return cls(theta=float(theta), delta=delta, m=int(m), M=int(M), **kwargs)

    def coefficients(self, spec, check=False) -> TamedCoefficients:
        return TamedCoefficients(as_spec(spec), self.taming, self.cutoff, check)


# ---------------------------------------------------------------------------
# step-size guards


@dataclass(frozen=True)
class StepGuards:
    delta1: float
    delta2: float
    delta3: float
    delta: float
    theta: float
    enforcement: GuardMode
    ok: bool
    message: str

    def as_dict(self):
        return {
            "delta1": self.delta1, "delta2": self.delta2, "delta3": self.delta3,
            "delta": self.delta, "theta": self.theta,
            "enforcement": self.enforcement.value, "ok": self.ok, "message": self.message,
        }


def step_bounds(theta, p, kappa, K5, K3_tilde=None, M_bar=None):
    """Return ``(delta1, delta2, delta3)``; ``inf`` when a bound does not apply."""
    if theta == 0:
        return math.inf, math.inf, math.inf
    d1 = math.inf if K3_tilde is None or K3_tilde <= 0 else 1.0 / (theta * K3_tilde)
    d2 = 6.0 ** (1.0 - p) * (2.0 ** (-p) - kappa ** p) / (theta ** p * K5 ** p)
    d3 = math.inf if M_bar is None or M_bar <= 0 else 1.0 / (theta * M_bar)
    return d1, d2, d3


def check_guards(cfg: SchemeConfig, constants: AssumptionConstants,
                 K3_tilde=None, M_bar=None, p=None) -> StepGuards:
    """Compare the configured step with the admissibility bounds.

    ``delta3`` is only enforced for the truncated scheme.  Strict mode raises
    :class:`GuardViolation`; warn-only mode emits a warning and returns the
    report.
    """
    p = constants.p if p is None else p
    d1, d2, d3 = step_bounds(cfg.theta, p, constants.kappa, cfg.taming.K5, K3_tilde, M_bar)
    if cfg.variant is not Variant.IMPROVED_TRUNCATED:
        d3 = math.inf
    delta = float(cfg.delta)
    ok = 0.0 < delta < 1.0 and delta < min(d1, d2, d3)
    notes = []
    if cfg.theta > 0 and K3_tilde is None:
        notes.append("delta1 unchecked (no K3_tilde)")
    if cfg.theta > 0 and cfg.variant is Variant.IMPROVED_TRUNCATED and M_bar is None:
        notes.append("delta3 unchecked (no M_bar)")
    message = (
        f"delta={delta!r} vs delta1={d1!r}, delta2={d2!r}, delta3={d3!r} (theta={cfg.theta}, p={p})"
    )
    if notes:
        message += "; " + "; ".join(notes)
    report = StepGuards(d1, d2, d3, delta, cfg.theta, cfg.guard_mode, ok, message)
    if not ok:
        if cfg.guard_mode is GuardMode.STRICT:
            raise GuardViolation("step-size guard violated: " + message, report)
        warnings.warn("step-size guard violated: " + message, stacklevel=2)
    return report


# ---------------------------------------------------------------------------
# implicit solver


@dataclass
class ImplicitSolution:
    u: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    newton: np.ndarray


def _fd_jacobian(g, u, gu, eps):
    n = u.shape[-1]
    jac = np.empty(u.shape + (n,))
    for j in range(n):
        h = eps * np.maximum(1.0, np.abs(u[:, j]))
        up = u.copy()
        up[:, j] += h
        jac[:, :, j] = (g(up) - gu) / h[:, None]
    return jac


def solve_implicit(g, u0, policy: ImplicitSolverPolicy = ImplicitSolverPolicy(),
                   active=None, raise_on_failure=True, step=None) -> ImplicitSolution:
    """Find ``u = g(u)`` path by path.

    Fixed-point iteration from ``u0``; under ``NEWTON_FALLBACK`` a path whose
    residual ``|u - g(u)|`` has not improved for ``stall_window`` iterations
    (or became non-finite, or used up ``max_iters``) switches to Newton's
    method on ``u - g(u)`` with a forward-difference Jacobian and gets a
    fresh budget of ``max_iters``.
    """
    u0 = np.asarray(u0, dtype=float)
    shape = u0.shape
    n = shape[-1]
    lead = shape[:-1]

    def gflat(v):
        return np.asarray(g(v.reshape(shape)), dtype=float).reshape(-1, n)

    start = u0.reshape(-1, n).copy()
    u = start.copy()
    npaths = u.shape[0]
    act = np.ones(npaths, bool) if active is None else np.asarray(active, bool).reshape(-1)
    tol = policy.tol_residual
    fallback = policy.method is SolverMethod.NEWTON_FALLBACK

    with np.errstate(all="ignore"):
        gu = gflat(u)
        res = vector_norm(u - gu)
        done = ~act | (res <= tol)
        failed = np.zeros(npaths, bool)
        newton = np.zeros(npaths, bool)
        iters = np.zeros(npaths, np.int64)
        phase_iters = np.zeros(npaths, np.int64)
        best = res.copy()
        stall = np.zeros(npaths, np.int64)

        while True:
            todo = ~done
            if not todo.any():
                break
            fp = todo & ~newton
            nw = todo & newton
            u_new = u.copy()
            u_new[fp] = gu[fp]
            if nw.any():
                jac = np.eye(n) - _fd_jacobian(gflat, u, gu, policy.fd_jacobian_eps)
                rhs = (gu - u)[nw]
                u_new[nw] = u[nw] + np.linalg.solve(jac[nw], rhs[..., None])[..., 0]
            u = u_new
            iters[todo] += 1
            phase_iters[todo] += 1
            gu = gflat(u)
            res_new = vector_norm(u - gu)
            res[todo] = res_new[todo]
            conv = todo & (res <= tol)
            done |= conv

            open_fp = fp & ~conv
            improved = res < best
            best = np.where(fp & improved, res, best)
            stall = np.where(open_fp & ~improved, stall + 1, np.where(fp, 0, stall))
            exhausted = open_fp & ((phase_iters >= policy.max_iters) | ~np.isfinite(res))
            if fallback:
                switch = exhausted | (open_fp & (stall >= policy.stall_window))
                if switch.any():
                    # restart Newton from the better of the two candidates
                    restart = switch & ~(np.isfinite(res) & (res <= vector_norm(start - gflat(start))))
                    u[restart] = start[restart]
                    gu = gflat(u)
                    res[switch] = vector_norm(u - gu)[switch]
                    newton |= switch
                    phase_iters[switch] = 0
            else:
                failed |= exhausted
                done |= exhausted
            open_nw = nw & ~conv
            nw_fail = open_nw & ((phase_iters >= policy.max_iters) | ~np.isfinite(res))
            failed |= nw_fail
            done |= nw_fail

        # Converged roots get a few extra iterations, kept only while the residual
        # still drops.  Stopping errors then sit at roundoff level instead of
        # ``tol``, so algebraically equivalent step formulations agree.
        ok = act & ~failed & (res <= tol)
        for _ in range(policy.polish_iters):
            cand = ok & (res > 0)
            if not cand.any():
                break
            u_try = u.copy()
            fp = cand & ~newton
            nw = cand & newton
            u_try[fp] = gu[fp]
            if nw.any():
                jac = np.eye(n) - _fd_jacobian(gflat, u, gu, policy.fd_jacobian_eps)
                u_try[nw] = u[nw] + np.linalg.solve(jac[nw], (gu - u)[nw][..., None])[..., 0]
            gu_try = gflat(u_try)
            res_try = vector_norm(u_try - gu_try)
            accept = cand & np.isfinite(res_try) & (res_try < res)
            if not accept.any():
                break
            u[accept], gu[accept], res[accept] = u_try[accept], gu_try[accept], res_try[accept]
            iters[accept] += 1

    converged = ~act | (~failed & (res <= tol))
    if raise_on_failure and not converged.all():
        worst = float(np.nanmax(np.where(converged, 0.0, res))) if np.isfinite(res).any() else math.nan
        raise SolverNonConvergence(-1 if step is None else step, worst)
    return ImplicitSolution(
        u.reshape(shape), iters.reshape(lead), res.reshape(lead),
        converged.reshape(lead), newton.reshape(lead),
    )


# ---------------------------------------------------------------------------
# delay buffer and single steps


class DelayBuffer:
    """The last ``m + 1`` states; ``lag(j)`` is the state ``j`` steps before the newest."""

    def __init__(self, initial):
        self._data = np.array(initial, dtype=float)
        self.size = self._data.shape[0]
        self._head = self.size - 1

    def lag(self, j: int) -> np.ndarray:
        if not 0 <= j < self.size:
            raise IndexError(f"lag {j} outside buffer of size {self.size}")
        return self._data[(self._head - j) % self.size]

    def push(self, state) -> None:
        self._head = (self._head + 1) % self.size
        self._data[self._head] = state


def _noise(sigma_val, dW):
    return np.sum(sigma_val * np.asarray(dW, dtype=float)[..., None, :], axis=-1)


def _drift_solve(c, y_delay, cfg, coeffs, active, raise_on_failure, k):
    theta_dt = cfg.theta * float(cfg.delta)
    if cfg.theta == 0:
        lead = c.shape[:-1]
        return c.copy(), ImplicitSolution(
            c.copy(), np.zeros(lead, np.int64), np.zeros(lead), np.ones(lead, bool),
            np.zeros(lead, bool),
        )
    delta = cfg.delta

    def g(u):
        return c + theta_dt * coeffs.drift(u, y_delay, delta)

    sol = solve_implicit(g, c, cfg.solver, active=active,
                         raise_on_failure=raise_on_failure, step=k)
    return sol.u, sol


def step_tamed_theta(history: DelayBuffer, k: int, dW, cfg: SchemeConfig, coeffs: TamedCoefficients,
                     active=None, raise_on_failure=True):
    """Advance ``y_{t_k}`` to ``y_{t_{k+1}}``.

    Solves ``u = c + theta * delta * b(u, y_{k+1-m})`` with
    ``c = D(y_{k+1-m}) + y_k - D(y_{k-m}) + (1 - theta) delta b(y_k, y_{k-m}) + sigma(y_k, y_{k-m}) dW``.
    Returns ``(y_next, solution, b_k)`` where ``b_k`` is the explicit drift
    evaluation (kept for the inline drift-bound check).
    """
    m = cfg.m
    D = coeffs.spec.neutral_D
    delta = cfg.delta
    y_k, y_km, y_k1m = history.lag(0), history.lag(m), history.lag(m - 1)
    b_k, s_k = coeffs.evaluate(y_k, y_km, delta)
    c = D(y_k1m) + y_k - D(y_km) + (1.0 - cfg.theta) * float(delta) * b_k + _noise(s_k, dW)
    y_next, sol = _drift_solve(c, y_k1m, cfg, coeffs, active, raise_on_failure, k)
    return y_next, sol, b_k


def step_improved(history: DelayBuffer, k: int, dW, cfg: SchemeConfig, coeffs: TamedCoefficients,
                  active=None, raise_on_failure=True):
    """Truncated tamed theta step: the tamed theta step with the cut-off balanced drift."""
    if coeffs.cutoff is None or coeffs.taming.mode is not TamingMode.BALANCED:
        raise ParameterRangeError("the truncated step needs balanced taming with a cutoff")
    return step_tamed_theta(history, k, dW, cfg, coeffs, active, raise_on_failure)


def split_step_solve_y(y_history: DelayBuffer, z_history: DelayBuffer, k: int, cfg: SchemeConfig,
                       coeffs: TamedCoefficients, active=None, raise_on_failure=True):
    """Implicit half of the split step: ``y_k = D(y_{k-m}) + z_k - D(z_{k-m}) + theta delta b(y_k, y_{k-m})``.

    ``y_history`` ends at ``y_{k-1}``, ``z_history`` at ``z_k``.
    """
    m = cfg.m
    D = coeffs.spec.neutral_D
    y_km = y_history.lag(m - 1)
    c = D(y_km) + z_history.lag(0) - D(z_history.lag(m))
    y_k, sol = _drift_solve(c, y_km, cfg, coeffs, active, raise_on_failure, k)
    return y_k, sol


def step_split_step(y_history: DelayBuffer, z_history: DelayBuffer, k: int, dW, cfg: SchemeConfig,
                    coeffs: TamedCoefficients, active=None, raise_on_failure=True):
    """One split step: solve for ``y_{t_k}``, then advance ``z`` explicitly.

    Returns ``(y_k, z_next, solution, b_k)``; the caller pushes ``y_k`` and
    ``z_next`` onto the two buffers.
    """
    m = cfg.m
    D = coeffs.spec.neutral_D
    y_k, sol = split_step_solve_y(y_history, z_history, k, cfg, coeffs, active, raise_on_failure)
    y_km = y_history.lag(m - 1)
    b_k, s_k = coeffs.evaluate(y_k, y_km, cfg.delta)
    z_k, z_km, z_k1m = z_history.lag(0), z_history.lag(m), z_history.lag(m - 1)
    z_next = D(z_k1m) + z_k - D(z_km) + float(cfg.delta) * b_k + _noise(s_k, dW)
    return y_k, z_next, sol, b_k


def split_step_initial_z(init, cfg: SchemeConfig, coeffs: TamedCoefficients):
    """``z`` on ``k = -m..0``: the initial segment, with ``z_0 = xi(0) - theta delta b(xi(0), xi(-tau))``."""
    z = np.array(init, dtype=float)
    z[-1] = init[-1] - cfg.theta * float(cfg.delta) * coeffs.drift(init[-1], init[0], cfg.delta)
    return z


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class PathResult:
    y_grid: np.ndarray
    initial_segment: np.ndarray
    delta: Fraction
    iterations: np.ndarray | None = None
    residuals: np.ndarray | None = None
    z_grid: np.ndarray | None = None
    blew_up: bool = False
    solver_failed: bool = False
    n_completed: int = 0
    bound_violations: int = 0

    def times(self):
        return np.array([float(k * self.delta) for k in range(self.y_grid.shape[0])])

    def csv_rows(self, precision=17):
        fmt = f"{{:.{precision}g}}"
        n = self.y_grid.shape[1]
        header = ["k", "t"] + [f"y_{i + 1}" for i in range(n)] + ["iters", "residual"]
        rows = []
        for k, t in enumerate(self.times()):
            iters = "" if self.iterations is None else str(int(self.iterations[k]))
            res = "" if self.residuals is None else fmt.format(self.residuals[k])
            rows.append([str(k), fmt.format(t)] + [fmt.format(v) for v in self.y_grid[k]] + [iters, res])
        return header, rows

    def write_csv(self, path, precision=17):
        header, rows = self.csv_rows(precision)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)


@dataclass
class BatchResult:
    y: np.ndarray  # (M + 1, P, n)
    initial_segment: np.ndarray
    delta: Fraction
    status: np.ndarray  # (P,) OK / BLEW_UP / SOLVER_FAILED
    fail_step: np.ndarray  # (P,) first step index that failed, -1 if none
    iterations: np.ndarray | None = None  # (M + 1, P)
    residuals: np.ndarray | None = None
    z: np.ndarray | None = None
    bound_violations: int = 0
    max_residual: float = 0.0
    newton_steps: int = 0

    @property
    def n_paths(self):
        return self.y.shape[1]

    def path(self, i: int) -> PathResult:
        status = int(self.status[i])
        fail = int(self.fail_step[i])
        return PathResult(
            y_grid=self.y[:, i, :].copy(),
            initial_segment=self.initial_segment,
            delta=self.delta,
            iterations=None if self.iterations is None else self.iterations[:, i].copy(),
            residuals=None if self.residuals is None else self.residuals[:, i].copy(),
            z_grid=None if self.z is None else self.z[:, i, :].copy(),
            blew_up=status == BLEW_UP,
            solver_failed=status == SOLVER_FAILED,
            n_completed=self.y.shape[0] - 1 if fail < 0 else fail - 1,
            bound_violations=self.bound_violations,
        )


def _bound_violations(b_k, y_k, y_km, cfg, active):
    if cfg.taming.mode is TamingMode.NONE:
        return 0
    limit = cfg.taming.K5 * float(cfg.delta) ** (-cfg.taming.alpha) * (1.0 + vector_norm(y_k) + vector_norm(y_km))
    bad = active & (vector_norm(b_k) > limit * (1.0 + 4e-16))
    return int(np.count_nonzero(bad))


def integrate_batch(model, cfg: SchemeConfig, increments, *, record_stats=True,
                    check_bounds=True, raise_on_failure=False) -> BatchResult:
    """Integrate ``P`` paths driven by ``increments`` of shape ``(P, M, d)``.

    A path that produces a non-finite state is flagged ``BLEW_UP``, one whose
    implicit solve fails is flagged ``SOLVER_FAILED``; either way the path
    stops (its remaining states are NaN) while the others continue.
    """
    spec = as_spec(model)
    inc = np.asarray(increments, dtype=float)
    if inc.ndim != 3 or inc.shape[1] != cfg.M or inc.shape[2] != spec.noise_dim:
        raise GridMismatchError(
            f"increments of shape {inc.shape} do not match M={cfg.M}, d={spec.noise_dim}"
        )
    P, M, m, n = inc.shape[0], cfg.M, cfg.m, spec.state_dim
    coeffs = cfg.coefficients(spec, check=False)
    init = sample_initial_grid(spec, m)
    seg = np.broadcast_to(init[:, None, :], (m + 1, P, n))

    y = np.full((M + 1, P, n), np.nan)
    z = np.full((M + 1, P, n), np.nan) if cfg.variant is Variant.SPLIT_STEP else None
    iters = np.zeros((M + 1, P), np.int32) if record_stats else None
    resid = np.zeros((M + 1, P)) if record_stats else None
    status = np.zeros(P, np.int8)
    fail_step = np.full(P, -1, np.int64)
    counters = {"bound": 0, "maxres": 0.0, "newton": 0}

    def settle(k, state, sol, b_k=None, y_k=None, y_km=None):
        active = status == OK
        if sol is not None:
            if record_stats:
                iters[k] = sol.iterations
                resid[k] = np.where(active, sol.residual, np.nan)
            bad_solve = active & ~sol.converged
            if bad_solve.any():
                if raise_on_failure:
                    raise SolverNonConvergence(k, float(np.max(sol.residual[bad_solve])))
                status[bad_solve] = SOLVER_FAILED
                fail_step[bad_solve] = k
            ok = active & sol.converged
            if ok.any():
                counters["maxres"] = max(counters["maxres"], float(np.max(sol.residual[ok])))
            counters["newton"] += int(np.count_nonzero(active & sol.newton))
        if check_bounds and b_k is not None:
            counters["bound"] += _bound_violations(b_k, y_k, y_km, cfg, status == OK)
        blown = (status == OK) & ~np.all(np.isfinite(state), axis=-1)
        status[blown] = BLEW_UP
        fail_step[blown] = k
        state = np.where((status == OK)[:, None], state, np.nan)
        return state

    with np.errstate(all="ignore"):
        if cfg.variant is Variant.SPLIT_STEP:
            y_hist = DelayBuffer(np.concatenate([seg[:1], seg[:-1]]))
            z_hist = DelayBuffer(split_step_initial_z(seg, cfg, coeffs))
            z[0] = z_hist.lag(0)
            for k in range(M):
                if not (status == OK).any():
                    break
                active = status == OK
                y_k, z_next, sol, b_k = step_split_step(
                    y_hist, z_hist, k, inc[:, k, :], cfg, coeffs, active, False
                )
                y_k = settle(k, y_k, sol, b_k, y_k, y_hist.lag(m - 1))
                y[k] = y_k
                y_hist.push(y_k)
                z_next = np.where((status == OK)[:, None], z_next, np.nan)
                z_hist.push(z_next)
                z[k + 1] = z_next
            if (status == OK).any():
                y_M, sol = split_step_solve_y(y_hist, z_hist, M, cfg, coeffs, status == OK, False)
                y[M] = settle(M, y_M, sol)
        else:
            hist = DelayBuffer(seg)
            y[0] = seg[-1]
            for k in range(M):
                active = status == OK
                if not active.any():
                    break
                y_next, sol, b_k = step_tamed_theta(
                    hist, k, inc[:, k, :], cfg, coeffs, active, False
                )
                if check_bounds:
                    counters["bound"] += _bound_violations(b_k, hist.lag(0), hist.lag(m), cfg, active)
                y_next = settle(k + 1, y_next, sol if cfg.theta > 0 else None)
                if record_stats and cfg.theta == 0:
                    iters[k + 1] = 0
                    resid[k + 1] = 0.0
                hist.push(y_next)
                y[k + 1] = y_next

    return BatchResult(
        y=y, initial_segment=init, delta=cfg.delta, status=status, fail_step=fail_step,
        iterations=iters, residuals=resid, z=z, bound_violations=counters["bound"],
        max_residual=counters["maxres"], newton_steps=counters["newton"],
    )


def integrate(model, cfg: SchemeConfig, noise: BrownianGrid, *, record_stats=True,
              check_bounds=True, raise_on_failure=True) -> PathResult:
    """Integrate a single path on the grid of ``noise``."""
    if noise.n_steps != cfg.M or Fraction(noise.step) != cfg.delta:
        raise GridMismatchError(
            f"noise grid (step {noise.step}, {noise.n_steps} steps) does not match "
            f"scheme (step {cfg.delta}, M={cfg.M})"
        )
    batch = integrate_batch(model, cfg, noise.increments[None], record_stats=record_stats,
                            check_bounds=check_bounds, raise_on_failure=raise_on_failure)
    return batch.path(0)
