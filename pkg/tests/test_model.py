import math
import pickle
from fractions import Fraction

import numpy as np
import pytest

from tamednsdde.errors import ParameterRangeError
from tamednsdde.model import (
    AssumptionConstants, ModelId, ProblemSpec, as_fraction, make_example, make_segment,
    sample_initial_grid,
)


def test_cubic_hand_values():
    m = make_example("cubic_global", a=0.25)
    spec = m.spec
    one = np.array([1.0])
    assert spec.neutral_D(one)[0] == -0.25
    assert spec.drift_b(one, one)[0] == pytest.approx(0.234375, abs=1e-15)
    assert spec.diffusion_sigma(one, one)[0, 0] == 1.25
    assert spec.neutral_D(np.zeros(1))[0] == 0.0
    assert m.constants.kappa == 0.25
    assert m.parameter_a == 0.25


def test_cosine_hand_values():
    m = make_example("cosine_local", xi_c=0.0)
    zero = np.zeros(1)
    assert m.spec.drift_b(zero, zero)[0] == 1.0
    assert m.spec.diffusion_sigma(zero, zero)[0, 0] == 0.0
    assert m.constants.kappa == 0.25
    assert m.parameter_a is None


@pytest.mark.parametrize("a", [0.5, -0.5, 0.7])
def test_cubic_rejects_a_outside_window(a):
    with pytest.raises(ParameterRangeError):
        make_example("cubic_global", a=a)


def test_unknown_model_id():
    with pytest.raises(ValueError):
        make_example("quartic")


def test_problem_spec_requires_T_gt_tau():
    c = make_example("cubic_global").spec
    with pytest.raises(ParameterRangeError):
        ProblemSpec(1, 1, 2, 2, c.neutral_D, c.drift_b, c.diffusion_sigma, c.initial_xi)
    with pytest.raises(ParameterRangeError):
        ProblemSpec(1, 1, 0, 2, c.neutral_D, c.drift_b, c.diffusion_sigma, c.initial_xi)


@pytest.mark.parametrize("kappa", [0.5, -0.1, 0.75])
def test_kappa_window(kappa):
    with pytest.raises(ParameterRangeError):
        AssumptionConstants(kappa=kappa)


def test_constants_ranges_and_local_store():
    with pytest.raises(ParameterRangeError):
        AssumptionConstants(kappa=0.25, p=1.5)
    with pytest.raises(ParameterRangeError):
        AssumptionConstants(kappa=0.25, K3=0.0)
    c = AssumptionConstants(kappa=0.25)
    c.record_local("Lbar", 3, 24.0)
    assert c.local_constant("Lbar", 3.0) == 24.0
    assert c.local_constant("Lbar", 4.0) is None


def test_as_fraction():
    assert as_fraction("1/64") == Fraction(1, 64)
    assert as_fraction(0.25) == Fraction(1, 4)
    assert as_fraction(3) == Fraction(3)
    with pytest.raises(ValueError):
        as_fraction(0.3)
    with pytest.raises(TypeError):
        as_fraction(True)


def test_initial_grid_constant():
    spec = make_example("cubic_global", xi_c=1.0).spec
    g = sample_initial_grid(spec, 4)
    assert g.shape == (5, 1)
    assert np.all(g == 1.0)


def test_initial_grid_cosine():
    spec = make_example("cubic_global", xi="cos", xi_c=1.0).spec
    g = sample_initial_grid(spec, 2)[:, 0]
    np.testing.assert_array_equal(g, [math.cos(-1.0), math.cos(-0.5), 1.0])


def test_initial_grid_linear_segment():
    base = make_example("cubic_global").spec
    spec = ProblemSpec(1, 1, 1, 2, base.neutral_D, base.drift_b, base.diffusion_sigma,
                       lambda t: np.array([t]))
    g = sample_initial_grid(spec, 4)[:, 0]
    np.testing.assert_array_equal(g, [-1.0, -0.75, -0.5, -0.25, 0.0])
    assert g[-1] == spec.initial_xi(0.0)[0]


def test_initial_grid_requires_positive_m():
    with pytest.raises(ParameterRangeError):
        sample_initial_grid(make_example("cubic_global").spec, 0)


def test_bad_segment_kind():
    with pytest.raises(ParameterRangeError):
        make_segment("linear", 1.0)


@pytest.mark.parametrize("mid", list(ModelId))
def test_models_pickle(mid):
    m = make_example(mid)
    m2 = pickle.loads(pickle.dumps(m))
    x = np.array([[0.3], [-1.2]])
    np.testing.assert_array_equal(m.spec.drift_b(x, x), m2.spec.drift_b(x, x))


@pytest.mark.parametrize("mid", ["cubic_global", "cosine_local"])
def test_neutral_contraction_at_samples(mid):
    m = make_example(mid)
    rng = np.random.default_rng(1)
    y, yb = rng.uniform(-5, 5, (2, 1000, 1))
    D = m.spec.neutral_D
    lhs = np.abs(D(y) - D(yb))[:, 0]
    assert np.all(lhs <= m.constants.kappa * np.abs(y - yb)[:, 0] + 1e-15)


def test_vectorised_shapes():
    m = make_example("cosine_local")
    x = np.zeros((7, 3, 1))
    assert m.spec.drift_b(x, x).shape == (7, 3, 1)
    assert m.spec.diffusion_sigma(x, x).shape == (7, 3, 1, 1)
