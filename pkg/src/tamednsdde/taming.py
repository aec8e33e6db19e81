"""Tamed coefficient maps, the smooth cutoff and the truncated drift.

Vectors use the Euclidean norm over the last axis, diffusion matrices the
Frobenius norm over the last two axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidCoefficientError, ParameterRangeError
from .model import ProblemSpec

#: Lipschitz constant of the quintic-smoothstep cutoff profile (max |phi'|).
C_ZETA = 15.0 / 8.0


class TamingMode(str, Enum):
    SIGMOIDAL = "sigmoidal"
    BALANCED = "balanced"
    NONE = "none"  # untamed coefficients, for divergence comparisons only


@dataclass(frozen=True)
class TamingConfig:
    alpha: float = 0.5
    K5: float = 1.0
    mode: TamingMode = TamingMode.SIGMOIDAL

    def __post_init__(self):
        object.__setattr__(self, "mode", TamingMode(self.mode))
        if not (0.0 < self.alpha <= 0.5):
            raise ParameterRangeError(f"alpha must lie in (0, 1/2], got {self.alpha}")
        if self.K5 < 1.0:
            raise ParameterRangeError(f"K5 must be >= 1, got {self.K5}")


@dataclass(frozen=True)
class CutoffConfig:
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ParameterRangeError(f"cutoff radius must be positive, got {self.R}")

    @property
    def C_zeta(self) -> float:
        return C_ZETA


def vector_norm(v):
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.sum(v * v, axis=-1))


def frobenius_norm(s):
    s = np.asarray(s, dtype=float)
    return np.sqrt(np.sum(s * s, axis=(-2, -1)))


def _point_at(arr, bad):
    arr = np.asarray(arr)
    if bad.ndim == 0:
        return arr.tolist()
    return arr[tuple(np.argwhere(bad)[0])].tolist()


def _require_finite(value, what):
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        bad = np.argwhere(~np.isfinite(value))[0]
        raise InvalidCoefficientError(f"non-finite {what} at index {tuple(bad)}")
    return value


def tame_drift_sigmoidal(b_val, delta, alpha, check=True):
    """``b / (1 + delta**alpha |b|)``; the result has norm below ``delta**-alpha``."""
    b_val = _require_finite(b_val, "drift value") if check else np.asarray(b_val, dtype=float)
    if b_val.ndim == 0:
        return tame_drift_sigmoidal(b_val[None], delta, alpha, check=False)[0]
    scale = float(delta) ** alpha
    return b_val / (1.0 + scale * vector_norm(b_val))[..., None]


def tame_diffusion_sigmoidal(sigma_val, delta, alpha, check=True):
    """``sigma / (1 + delta**alpha ||sigma||^2)`` with the Frobenius norm."""
    if check:
        sigma_val = _require_finite(sigma_val, "diffusion value")
    else:
        sigma_val = np.asarray(sigma_val, dtype=float)
    if sigma_val.ndim == 0:
        return tame_diffusion_sigmoidal(sigma_val[None, None], delta, alpha, check=False)[0, 0]
    scale = float(delta) ** alpha
    nrm = frobenius_norm(sigma_val)
    return sigma_val / (1.0 + scale * nrm * nrm)[..., None, None]


def tame_balanced(b_val, sigma_val, delta, alpha, check=True):
    """Divide drift and diffusion by the shared factor
    ``1 + delta**alpha |b| + delta**(alpha/2) ||sigma||``."""
    if check:
        b_val = _require_finite(b_val, "drift value")
        sigma_val = _require_finite(sigma_val, "diffusion value")
    else:
        b_val = np.asarray(b_val, dtype=float)
        sigma_val = np.asarray(sigma_val, dtype=float)
    if b_val.ndim == 0:
        b_out, s_out = tame_balanced(b_val[None], np.reshape(sigma_val, (1, 1)), delta, alpha, check=False)
        return b_out[0], s_out[0, 0]
    delta = float(delta)
    gamma = 1.0 + delta ** alpha * vector_norm(b_val) + delta ** (alpha / 2) * frobenius_norm(sigma_val)
    return b_val / gamma[..., None], sigma_val / gamma[..., None, None]


def smoothstep_profile(r, R):
    """Radial profile: 1 on ``[0, R]``, 0 beyond ``R + 1``, quintic smoothstep between."""
    u = np.clip(np.asarray(r, dtype=float) - R, 0.0, 1.0)
    return 1.0 - u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def cutoff(x, y, cfg: CutoffConfig):
    """Separable cutoff ``phi(|x|) phi(|y|)``; 1 on the R-box, 0 outside the (R+1)-box."""
    return smoothstep_profile(vector_norm(x), cfg.R) * smoothstep_profile(vector_norm(y), cfg.R)


@dataclass(frozen=True)
class TamedCoefficients:
    """Tamed drift and diffusion of a problem, optionally with the cutoff applied to the drift.

    With a cutoff configured (balanced mode only) :meth:`drift` returns the
    truncated drift ``b_bar * zeta_R``.
    """

    spec: ProblemSpec
    taming: TamingConfig = TamingConfig()
    cutoff: CutoffConfig | None = None
    check: bool = True

    def __post_init__(self):
        if self.cutoff is not None and self.taming.mode is not TamingMode.BALANCED:
            raise ParameterRangeError("the cutoff is only defined for balanced taming")

    def _raw(self, x, y):
        b_val = self.spec.drift_b(x, y)
        sigma_val = self.spec.diffusion_sigma(x, y)
        if self.check:
            bad = ~(np.isfinite(b_val).all(axis=-1) & np.isfinite(sigma_val).all(axis=(-2, -1)))
            if np.any(bad):
                raise InvalidCoefficientError(
                    f"non-finite coefficient value at x={_point_at(x, bad)}, y={_point_at(y, bad)}"
                )
        return b_val, sigma_val

    def evaluate(self, x, y, delta):
        """Return the effective ``(drift, diffusion)`` pair at ``(x, y)``."""
        b_val, sigma_val = self._raw(x, y)
        alpha = self.taming.alpha
        mode = self.taming.mode
        if mode is TamingMode.SIGMOIDAL:
            b_eff = tame_drift_sigmoidal(b_val, delta, alpha, check=False)
            s_eff = tame_diffusion_sigmoidal(sigma_val, delta, alpha, check=False)
        elif mode is TamingMode.BALANCED:
            b_eff, s_eff = tame_balanced(b_val, sigma_val, delta, alpha, check=False)
            if self.cutoff is not None:
                b_eff = b_eff * cutoff(x, y, self.cutoff)[..., None]
        else:
            b_eff, s_eff = np.asarray(b_val, dtype=float), np.asarray(sigma_val, dtype=float)
        return b_eff, s_eff

    def drift(self, x, y, delta):
        if self.taming.mode is TamingMode.SIGMOIDAL:
            b_val = self.spec.drift_b(x, y)
            if self.check:
                bad = ~np.isfinite(b_val).all(axis=-1)
                if np.any(bad):
                    raise InvalidCoefficientError(
                        f"non-finite drift at x={_point_at(x, bad)}, y={_point_at(y, bad)}"
                    )
            return tame_drift_sigmoidal(b_val, delta, self.taming.alpha, check=False)
        if self.taming.mode is TamingMode.NONE:
            return np.asarray(self.spec.drift_b(x, y), dtype=float)
        return self.evaluate(x, y, delta)[0]

    def diffusion(self, x, y, delta):
        return self.evaluate(x, y, delta)[1]

    # Names matching the field names used in the documentation.
    def b_tamed(self, x, y, delta):
        return TamedCoefficients(self.spec, self.taming, None, self.check).drift(x, y, delta)

    def sigma_tamed(self, x, y, delta):
        return self.diffusion(x, y, delta)

    def b_truncated(self, x, y, delta):
        if self.cutoff is None:
            raise ParameterRangeError("no cutoff configured")
        return self.drift(x, y, delta)


def truncated_drift(spec: ProblemSpec, x, y, delta, cfg: TamingConfig, cut: CutoffConfig):
    """Balanced-tamed drift multiplied by the cutoff ``zeta_R(x, y)``."""
    if TamingMode(cfg.mode) is not TamingMode.BALANCED:
        raise ParameterRangeError("truncated drift requires balanced taming")
    b_val = spec.drift_b(x, y)
    sigma_val = spec.diffusion_sigma(x, y)
    b_bar, _ = tame_balanced(b_val, sigma_val, delta, cfg.alpha)
    return b_bar * cutoff(x, y, cut)[..., None]
