"""Golden values frozen from the independent oracles in ``oracles.py``."""
from fractions import Fraction

import numpy as np
import pytest

import oracles
from tamednsdde.model import make_example
from tamednsdde.paths import BrownianGrid, generate
from tamednsdde.scheme import GuardMode, SchemeConfig, Variant, integrate
from tamednsdde.taming import CutoffConfig, TamingConfig

# Frozen oracle outputs.
CUBIC_IMPLICIT_ONE_STEP = 1.003455339400523
COSINE_TRUNCATED_ONE_STEP = 0.9424665812108628
COSINE_NOISE_SEED = 7
CUBIC_EXPLICIT_TERMINAL = 1.188609623802331


def test_oracles_reproduce_frozen_values():
    assert oracles.cubic_one_step_implicit(0.25, 1 / 64, 0.5) == pytest.approx(CUBIC_IMPLICIT_ONE_STEP, abs=1e-14)
    dW = float(generate(COSINE_NOISE_SEED, 0, 1, Fraction(1, 128), 256).increments[0, 0])
    assert oracles.cosine_truncated_one_step(0.5, 1 / 128, 0.5, 3.0, dW) == pytest.approx(
        COSINE_TRUNCATED_ONE_STEP, abs=1e-14)
    g = generate(42, 0, 1, Fraction(1, 64), 128)
    traj = oracles.cubic_explicit_trajectory(0.25, 1 / 64, 0.5, 64, 128, g.increments[:, 0].tolist())
    assert traj[-1] == pytest.approx(CUBIC_EXPLICIT_TERMINAL, abs=1e-14)


def cubic_implicit_step_value():
    m = make_example("cubic_global", a=0.25)
    cfg = SchemeConfig.for_problem(m, 1.0, Fraction(1, 64), guard_mode=GuardMode.WARN_ONLY)
    zero = BrownianGrid(1, cfg.delta, cfg.M, np.zeros((cfg.M, 1)), 0, 0)
    return float(integrate(m, cfg, zero).y_grid[1, 0])


def cosine_truncated_step_value():
    m = make_example("cosine_local")
    cfg = SchemeConfig.for_problem(
        m, 0.5, Fraction(1, 128), variant=Variant.IMPROVED_TRUNCATED, taming=TamingConfig(mode="balanced"),
        cutoff=CutoffConfig(3.0), guard_mode=GuardMode.WARN_ONLY,
    )
    return float(integrate(m, cfg, generate(COSINE_NOISE_SEED, 0, 1, cfg.delta, cfg.M)).y_grid[1, 0])


def cubic_explicit_terminal_value():
    m = make_example("cubic_global", a=0.25)
    cfg = SchemeConfig.for_problem(m, 0.0, Fraction(1, 64), taming=TamingConfig(alpha=0.5))
    return float(integrate(m, cfg, generate(42, 0, 1, cfg.delta, cfg.M)).y_grid[-1, 0])


def test_implicit_one_step_golden():
    assert abs(cubic_implicit_step_value() - CUBIC_IMPLICIT_ONE_STEP) <= 1e-10


def test_truncated_one_step_golden():
    assert abs(cosine_truncated_step_value() - COSINE_TRUNCATED_ONE_STEP) <= 1e-10


def test_trajectory_golden():
    assert abs(cubic_explicit_terminal_value() - CUBIC_EXPLICIT_TERMINAL) <= 1e-8


def test_whole_trajectory_matches_reimplementation():
    m = make_example("cubic_global", a=0.25, xi="cos", xi_c=0.8)
    cfg = SchemeConfig.for_problem(m, 0.0, Fraction(1, 32))
    g = generate(99, 3, 1, cfg.delta, cfg.M)
    ours = integrate(m, cfg, g).y_grid[:, 0]
    # the oracle only supports constant history, so compare on a constant one
    m1 = make_example("cubic_global", a=0.25, xi_c=0.8)
    ours1 = integrate(m1, cfg, g).y_grid[:, 0]
    ref = oracles.cubic_explicit_trajectory(0.25, 1 / 32, 0.5, 32, 64, g.increments[:, 0].tolist(), xi=0.8)
    np.testing.assert_allclose(ours1, ref, rtol=0, atol=1e-12)
    assert not np.array_equal(ours, ours1)
