"""Problem data for neutral stochastic delay equations.

The equation is

    d[X(t) - D(X(t - tau))] = b(X(t), X(t - tau)) dt + sigma(X(t), X(t - tau)) dW(t)

with a deterministic initial segment ``xi`` on ``[-tau, 0]``.

Coefficient callables are vectorised over leading axes: ``D(y)`` and
``b(x, y)`` map arrays of shape ``(..., n)`` to ``(..., n)`` and
``sigma(x, y)`` returns ``(..., n, d)``.  The initial segment maps a float
time to an array of shape ``(n,)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import ParameterRangeError


def as_fraction(value) -> Fraction:
    """Exact rational from an int, Fraction, ``"p/q"`` string or dyadic float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a rational")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # Fraction(float) is exact; only accept floats that mean what they say.
        frac = Fraction(value)
        if frac != Fraction(repr(value)):
            raise ValueError(f"{value!r} is not exactly representable; use a 'p/q' string")
        return frac
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational")


@dataclass(frozen=True)
class ProblemSpec:
    state_dim: int
    noise_dim: int
    delay: Fraction
    horizon: Fraction
    neutral_D: Callable
    drift_b: Callable
    diffusion_sigma: Callable
    initial_xi: Callable

    def __post_init__(self):
        object.__setattr__(self, "delay", as_fraction(self.delay))
        object.__setattr__(self, "horizon", as_fraction(self.horizon))
        if self.state_dim < 1 or self.noise_dim < 1:
            raise ParameterRangeError("state_dim and noise_dim must be positive")
        if not (self.horizon > self.delay > 0):
            raise ParameterRangeError(
                f"need T > tau > 0, got tau={self.delay}, T={self.horizon}"
            )


@dataclass(frozen=True)
class AssumptionConstants:
    """Constants of the assumption ladder.

    Only ``kappa``, ``K5``-independent ``p`` and the global constants are
    scalars; radius-dependent constants (``L_R``, ``Lbar_R``, ``M_R``,
    ``N_R``) live in ``local`` as ``{name: {R: value}}`` and are filled in by
    :mod:`tamednsdde.verify`.
    """

    kappa: float
    p: float = 2.0
    K1: float | None = None
    K2: float | None = None
    K3: float | None = None
    K4: float | None = None
    l: float | None = None
    local: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        # kappa = 0 (no neutral term) is admitted: any positive kappa then bounds D.
        if not (0.0 <= self.kappa < 0.5):
            raise ParameterRangeError(f"kappa must lie in (0, 1/2), got {self.kappa}")
        if self.p < 2:
            raise ParameterRangeError(f"moment order p must be >= 2, got {self.p}")
        for name in ("K1", "K2", "K3", "K4"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ParameterRangeError(f"{name} must be positive, got {value}")
        if self.l is not None and self.l < 0:
            raise ParameterRangeError(f"l must be non-negative, got {self.l}")

    def record_local(self, name: str, radius: float, value: float) -> None:
        self.local.setdefault(name, {})[float(radius)] = float(value)

    def local_constant(self, name: str, radius: float) -> float | None:
        return self.local.get(name, {}).get(float(radius))


class ModelId(str, Enum):
    CUBIC_GLOBAL = "cubic_global"
    COSINE_LOCAL = "cosine_local"
    ZERO = "zero"


# Coefficients are small frozen classes rather than closures so that models
# pickle cleanly into worker processes.


@dataclass(frozen=True)
class CubicGlobalCoefficients:
    """D(y) = -a y, b(x, y) = x - x^3 + a y - a^3 y^3, sigma(x, y) = x + a y."""

    a: float

    def D(self, y):
        return -self.a * y

    def b(self, x, y):
        a = self.a
        return x - x * x * x + a * y - (a * a * a) * (y * y * y)

    def sigma(self, x, y):
        return (x + self.a * y)[..., None]


@dataclass(frozen=True)
class CosineLocalCoefficients:
    """D(y) = cos(y)/4, b(x, y) = x - x^3 + cos y, sigma(x, y) = y sin x + x sin y."""

    def D(self, y):
        return 0.25 * np.cos(y)

    def b(self, x, y):
        return x - x * x * x + np.cos(y)

    def sigma(self, x, y):
        return (y * np.sin(x) + x * np.sin(y))[..., None]


@dataclass(frozen=True)
class ZeroCoefficients:
    noise_dim: int = 1

    def D(self, y):
        return np.zeros_like(y)

    def b(self, x, y):
        return np.zeros_like(x)

    def sigma(self, x, y):
        x = np.asarray(x)
        return np.zeros(x.shape + (self.noise_dim,))


@dataclass(frozen=True)
class ConstantSegment:
    value: float
    dim: int = 1

    def __call__(self, t):
        return np.full(self.dim, float(self.value))


@dataclass(frozen=True)
class CosineSegment:
    """t -> c cos(t) in every component."""

    scale: float
    dim: int = 1

    def __call__(self, t):
        return np.full(self.dim, self.scale * np.cos(float(t)))


def make_segment(kind: str, c: float, dim: int = 1):
    if kind == "const":
        return ConstantSegment(c, dim)
    if kind == "cos":
        return CosineSegment(c, dim)
    raise ParameterRangeError(f"unknown initial segment {kind!r}; expected 'const' or 'cos'")


@dataclass(frozen=True)
class ExampleModel:
    id: ModelId
    spec: ProblemSpec
    constants: AssumptionConstants
    parameter_a: float | None = None


def make_example(id, a: float = 0.25, xi="const", xi_c: float = 1.0,
                 tau=1, T=2, p: float = 2.0) -> ExampleModel:
    """Build one of the worked example problems.

    ``xi`` is either a segment kind (``"const"`` or ``"cos"``, scaled by
    ``xi_c``) or a ready-made callable.
    """
    model_id = ModelId(id)
    segment = make_segment(xi, xi_c) if isinstance(xi, str) else xi
    if model_id is ModelId.CUBIC_GLOBAL:
        if not abs(a) < 0.5:
            raise ParameterRangeError(f"CubicGlobal needs |a| < 1/2, got a={a}")
        coeffs = CubicGlobalCoefficients(float(a))
        # b is a cubic polynomial, so the polynomial Lipschitz exponent is l = 2.
        constants = AssumptionConstants(kappa=abs(float(a)), p=p, l=2.0)
        param = float(a)
    elif model_id is ModelId.COSINE_LOCAL:
        coeffs = CosineLocalCoefficients()
        constants = AssumptionConstants(kappa=0.25, p=p)
        param = None
    else:
        coeffs = ZeroCoefficients()
        constants = AssumptionConstants(kappa=0.0, p=p)
        param = None
    spec = ProblemSpec(
        state_dim=1,
        noise_dim=1,
        delay=as_fraction(tau),
        horizon=as_fraction(T),
        neutral_D=coeffs.D,
        drift_b=coeffs.b,
        diffusion_sigma=coeffs.sigma,
        initial_xi=segment,
    )
    return ExampleModel(model_id, spec, constants, param)


def as_spec(model) -> ProblemSpec:
    return model.spec if isinstance(model, ExampleModel) else model


def sample_initial_grid(spec: ProblemSpec, m: int) -> np.ndarray:
    """Initial segment at ``t = k tau / m`` for ``k = -m, ..., 0``; shape ``(m + 1, n)``."""
    if m < 1:
        raise ParameterRangeError(f"m must be >= 1, got {m}")
    rows = []
    for k in range(-m, 1):
        t = float(Fraction(k) * spec.delay / m)
        rows.append(np.asarray(spec.initial_xi(t), dtype=float).reshape(spec.state_dim))
    return np.stack(rows)
