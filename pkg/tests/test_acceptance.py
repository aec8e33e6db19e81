"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line.  Run with
``pytest tests/test_acceptance.py -v -s`` to see them next to the results.
"""
from fractions import Fraction

import numpy as np
import pytest

import test_golden
from tamednsdde.experiments import (
    ConvergenceStudy, ModulusStudy, MomentStudy, run_convergence, run_modulus_study, run_moment_study,
)
from tamednsdde.model import make_example, make_segment
from tamednsdde.paths import generate_block
from tamednsdde.scheme import (
    OK, GuardMode, ImplicitSolverPolicy, SchemeConfig, Variant, check_guards, integrate_batch, step_bounds,
)
from tamednsdde.taming import (
    C_ZETA, CutoffConfig, TamedCoefficients, TamingConfig, TamingMode, cutoff, frobenius_norm,
    tame_balanced, tame_drift_sigmoidal, vector_norm,
)
from tamednsdde.verify import estimate_guard_constants, sup_drift

pytestmark = pytest.mark.acceptance

F = Fraction
LADDER = [F(1, 2 ** k) for k in range(4, 10)]
REF = F(1, 2 ** 13)
SEED = 42


def report(capsys, number, title, checks, detail):
    ok = all(checks.values())
    failed = [name for name, good in checks.items() if not good]
    line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    if failed:
        line += f"  [failed: {', '.join(failed)}]"
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


# -- shared Monte Carlo runs

_CACHE = {}


def rate_study(theta, workers=1):
    key = ("rate", theta, workers)
    if key not in _CACHE:
        # Delta2 = 1/32 at theta = 1 sits below the coarsest level 1/16, so that arm warns
        mode = GuardMode.WARN_ONLY if theta == 1.0 else GuardMode.STRICT
        study = ConvergenceStudy(
            make_example("cubic_global", a=0.25), variant=Variant.TAMED_THETA, theta=theta,
            taming=TamingConfig(alpha=0.5), p=2.0, levels=LADDER, ref_level=REF, n_paths=1000,
            seed=SEED, guard_mode=mode,
        )
        with pytest.warns(UserWarning) if mode is GuardMode.WARN_ONLY else _nullcontext():
            _CACHE[key] = run_convergence(study, workers=workers)
    return _CACHE[key]


class _nullcontext:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


# 1 ---------------------------------------------------------------------------

def test_criterion_01_strong_rate(capsys):
    checks, parts = {}, []
    for theta in (0.0, 0.5, 1.0):
        s = rate_study(theta)
        checks[f"order theta={theta:g}"] = 0.35 <= s.fitted_order <= 0.65
        checks[f"r2 theta={theta:g}"] = s.r_squared >= 0.95
        checks[f"no exclusions theta={theta:g}"] = s.excluded == 0
        parts.append(f"theta={theta:g} order={s.fitted_order:.3f} r2={s.r_squared:.4f}")
    report(capsys, 1, "strong rate in [0.35, 0.65], r2 >= 0.95", checks, "; ".join(parts))


# 2 ---------------------------------------------------------------------------

def test_criterion_02_truncated_scheme_converges(capsys):
    study = ConvergenceStudy(
        make_example("cosine_local"), variant=Variant.IMPROVED_TRUNCATED, theta=0.5,
        taming=TamingConfig(alpha=0.5, mode=TamingMode.BALANCED), cutoff=CutoffConfig(3.0), p=2.0,
        levels=LADDER, ref_level=REF, n_paths=500, seed=SEED, guard_mode=GuardMode.WARN_ONLY,
    )
    with pytest.warns(UserWarning):  # Delta3 ~ 1/115 is below the coarser levels
        s = run_convergence(study)
    errs = [e for _, e in s.per_level_error]
    drops = sum(b < a for a, b in zip(errs, errs[1:]))
    checks = {"strict decrease in >= 4 of 5 pairs": drops >= 4, "no exclusions": s.excluded == 0}
    report(capsys, 2, "truncated scheme error decreases", checks,
           f"errors={[round(e, 5) for e in errs]} decreasing pairs={drops}/5")


# 3 ---------------------------------------------------------------------------

def test_criterion_03_moment_bounds(capsys):
    study = MomentStudy(
        make_example("cubic_global", a=0.25, xi_c=2.0), variant=Variant.TAMED_THETA, theta=0.0,
        taming=TamingConfig(alpha=0.5), p=4.0, steps=[F(1, 2 ** k) for k in range(4, 9)], n_paths=500,
        seed=SEED, untamed_xi=make_segment("const", 3.0), untamed_step=F(1, 16),
    )
    with np.errstate(all="ignore"):
        s = run_moment_study(study)
    moments = [v for _, v in s.per_step_moment]
    ratio = max(moments) / min(moments)
    checks = {
        "moments finite": bool(np.all(np.isfinite(moments))),
        "max/min <= 2": ratio <= 2.0,
        "zero tamed blow-ups": s.tamed_blowups == 0,
        "untamed divergence_fraction > 0": s.divergence_fraction > 0.0,
    }
    report(capsys, 3, "moment bound uniform in step; untamed arm diverges", checks,
           f"E sup|y|^4={[round(v, 3) for v in moments]} ratio={ratio:.3f} tamed blow-ups={s.tamed_blowups} "
           f"untamed divergence_fraction={s.divergence_fraction:.4f}")


# 4 ---------------------------------------------------------------------------

def test_criterion_04_within_step_modulus(capsys):
    study = ModulusStudy(
        make_example("cubic_global", a=0.25), theta=0.0, taming=TamingConfig(alpha=0.5), p=2.0,
        levels=[F(1, 2 ** k) for k in range(6, 10)], ref_level=REF, n_paths=500, seed=SEED,
    )
    s = run_modulus_study(study)
    checks = {"slope in [0.7, 1.3]": 0.7 <= s.slope <= 1.3, "no exclusions": s.excluded == 0}
    report(capsys, 4, "within-step deviation slope", checks,
           f"slope={s.slope:.3f} r2={s.r_squared:.4f} table={[round(v, 5) for _, v in s.table]}")


# 5 ---------------------------------------------------------------------------

def test_criterion_05_split_step_equivalence(capsys):
    policy = ImplicitSolverPolicy()
    tol = 10 * policy.tol_residual
    bal = TamingConfig(mode=TamingMode.BALANCED)
    matrix = [("cubic_global", TamingConfig(), None), ("cosine_local", TamingConfig(), None),
              ("cubic_global", bal, None), ("cosine_local", bal, CutoffConfig(3.0))]
    worst, checks = 0.0, {}
    for model_id, taming, cut in matrix:
        m = make_example(model_id)
        for theta in (0.0, 0.5, 1.0):
            for delta in (F(1, 16), F(1, 64), F(1, 256)):
                kw = dict(taming=taming, cutoff=cut, solver=policy, guard_mode=GuardMode.WARN_ONLY)
                a_cfg = SchemeConfig.for_problem(m, theta, delta, **kw)
                b_cfg = SchemeConfig.for_problem(m, theta, delta, variant=Variant.SPLIT_STEP, **kw)
                inc = generate_block(SEED, range(100), 1, delta, a_cfg.M)
                a = integrate_batch(m, a_cfg, inc)
                b = integrate_batch(m, b_cfg, inc)
                gap = float(np.max(np.abs(a.y - b.y)))
                worst = max(worst, gap)
                name = f"{model_id}/{taming.mode.value}/{'cut' if cut else 'nocut'}/theta={theta:g}/delta={delta}"
                checks[name] = gap <= tol and np.all(a.status == OK) and np.all(b.status == OK)
    report(capsys, 5, "tamed theta and split-step agree on the grid", checks,
           f"{len(checks)} configurations x 100 paths, worst gap={worst:.3e} (tolerance {tol:.0e})")


# 6 ---------------------------------------------------------------------------

DELTAS = (1e-1, 1e-2, 1e-3, 1e-4)


def _min_bounds_hold(mode):
    spec = make_example("cubic_global").spec
    tc = TamedCoefficients(spec, TamingConfig(mode=mode))
    ulp = np.finfo(float).eps
    ok = True
    for j, delta in enumerate(DELTAS):
        rng = np.random.default_rng(100 + j)
        x, y = rng.uniform(-10, 10, (2, 10_000, 1))
        b_eff, s_eff = tc.evaluate(x, y, delta)
        nx, ny = vector_norm(x), vector_norm(y)
        cap_b = np.minimum(delta ** -0.5 * (1 + nx + ny), vector_norm(spec.drift_b(x, y)))
        cap_s = np.minimum(delta ** -0.5 * (1 + nx ** 2 + ny ** 2),
                           frobenius_norm(spec.diffusion_sigma(x, y)) ** 2)
        ok &= bool(np.all(vector_norm(b_eff) <= cap_b * (1 + ulp)))
        ok &= bool(np.all(frobenius_norm(s_eff) ** 2 <= cap_s * (1 + 4 * ulp)))
    return ok


def _sigmoidal_rate_quotients():
    """max over the [-3, 3] box of |b - b_D| / (D^a (1 + |x|^6 + |y|^6)) for each D, and its D -> 0 limit."""
    spec = make_example("cubic_global").spec
    x, y = np.random.default_rng(7).uniform(-3, 3, (2, 10_000, 1))
    b = spec.drift_b(x, y)
    weight = 1 + vector_norm(x) ** 6 + vector_norm(y) ** 6
    q = [float(np.max(vector_norm(b - tame_drift_sigmoidal(b, d, 0.5)) / (d ** 0.5 * weight))) for d in DELTAS]
    limit = float(np.max(vector_norm(b) ** 2 / weight))
    return q, limit


def _balanced_rate_quotients(R=3.0):
    """sup over |x| v |y| <= R of |b - b_bar_D| / D^a for each D (CosineLocal)."""
    spec = make_example("cosine_local").spec
    x, y = np.random.default_rng(8).uniform(-R, R, (2, 10_000, 1))
    corners = np.array([[[R], [R]], [[R], [-R]], [[-R], [R]], [[-R], [-R]]])
    x = np.concatenate([x, corners[:, 0]])
    y = np.concatenate([y, corners[:, 1]])
    b, s = spec.drift_b(x, y), spec.diffusion_sigma(x, y)
    return [float(np.max(vector_norm(b - tame_balanced(b, s, d, 0.5)[0])) / d ** 0.5) for d in DELTAS]


def test_criterion_06_taming_inequalities(capsys):
    b4, b4_limit = _sigmoidal_rate_quotients()
    c4 = _balanced_rate_quotients()
    n_r = c4[0]  # fitted at the largest step
    checks = {
        "sigmoidal min-bounds": _min_bounds_hold(TamingMode.SIGMOIDAL),
        "balanced min-bounds": _min_bounds_hold(TamingMode.BALANCED),
        "sigmoidal rate quotient bounded uniformly": all(np.isfinite(b4)) and max(b4) <= b4_limit * (1 + 1e-12),
        "balanced rate constant from largest step honored at smaller steps": all(q <= n_r * (1 + 1e-12) for q in c4[1:]),
    }
    report(capsys, 6, "taming inequalities", checks,
           f"sigmoidal rate quotients={[round(q, 4) for q in b4]} (limit {b4_limit:.4f}); "
           f"balanced rate quotients={[round(q, 2) for q in c4]} (N_R={n_r:.2f})")


# 7 ---------------------------------------------------------------------------

def test_criterion_07_cutoff(capsys):
    R = 3.0
    cfg = CutoffConfig(R)
    rng = np.random.default_rng(11)
    x, y = rng.uniform(-6, 6, (2, 20_000, 1))
    z = cutoff(x, y, cfg)
    ax, ay = np.abs(x[:, 0]), np.abs(y[:, 0])
    inside = (ax <= R) & (ay <= R)
    outside = (ax > R + 1) | (ay > R + 1)
    # finite-difference slopes in the sum metric |x - x'| + |y - y'|
    xp = x + rng.normal(scale=1e-4, size=x.shape)
    yp = y + rng.normal(scale=1e-4, size=y.shape)
    slope = np.abs(cutoff(xp, yp, cfg) - z) / (np.abs(xp - x) + np.abs(yp - y))[:, 0]
    model = make_example("cosine_local")
    taming = TamingConfig(mode=TamingMode.BALANCED)
    est = estimate_guard_constants(model, taming, cfg, box_radius=R)
    formula = est.M_R0 + 2 * C_ZETA * sup_drift(model, R + 1)
    checks = {
        "1 inside": bool(np.all(z[inside] == 1.0)),
        "0 outside": bool(np.all(z[outside] == 0.0)),
        "in [0, 1]": bool(np.all((z >= 0) & (z <= 1))),
        "Lipschitz <= 15/8 + 1e-6": float(slope.max()) <= C_ZETA + 1e-6,
        "sampled global quotient <= M_R0 + 2 C_zeta Lbar_(R0+1)": est.M_bar_sampled <= formula,
    }
    report(capsys, 7, "cutoff properties and truncated-drift one-sided bound", checks,
           f"max slope={slope.max():.6f}; sampled quotient={est.M_bar_sampled:.3f} <= bound={formula:.3f} "
           f"(M_3={est.M_R0:.3f})")


# 8 ---------------------------------------------------------------------------

def test_criterion_08_guard_arithmetic(capsys):
    _, d2, _ = step_bounds(1.0, 2.0, 0.25, 1.0)
    d1, _, d3 = step_bounds(0.5, 2.0, 0.25, 1.0, K3_tilde=4.0, M_bar=10.0)
    d1b, _, _ = step_bounds(1.0, 2.0, 0.25, 1.0, K3_tilde=2.0)
    m = make_example("cubic_global")
    theta0_ok = all(
        check_guards(SchemeConfig.for_problem(m, 0.0, d), m.constants, K3_tilde=1e6, M_bar=1e6).ok
        for d in (F(1, 2), F(1, 8), F(1, 1024))
    )
    checks = {
        "Delta2 == 0.03125": d2 == 0.03125,
        "Delta1 = 1/(theta K3)": d1 == 0.5 and d1b == 0.5,
        "Delta3 = 1/(theta M_bar)": d3 == 0.2,
        "theta = 0 accepts any step": theta0_ok,
    }
    report(capsys, 8, "guard arithmetic", checks, f"Delta2={d2!r} Delta1={d1!r} Delta3={d3!r}")


# 9 ---------------------------------------------------------------------------

def test_criterion_09_determinism(capsys, tmp_path):
    serial = rate_study(0.0, workers=1)
    parallel = rate_study(0.0, workers=4)
    a, b = tmp_path / "serial", tmp_path / "parallel"
    a.mkdir()
    b.mkdir()
    files_a = serial.write_csv(str(a))
    files_b = parallel.write_csv(str(b))
    same = [open(x, "rb").read() == open(y, "rb").read() for x, y in zip(files_a, files_b)]
    checks = {"byte-identical CSVs": all(same) and len(same) == 2}
    report(capsys, 9, "worker count does not change outputs", checks,
           f"compared {len(same)} CSV files from workers=1 and workers=4")


# 10 --------------------------------------------------------------------------

def test_criterion_10_oracles(capsys):
    one = abs(test_golden.cubic_implicit_step_value() - test_golden.CUBIC_IMPLICIT_ONE_STEP)
    two = abs(test_golden.cosine_truncated_step_value() - test_golden.COSINE_TRUNCATED_ONE_STEP)
    traj = abs(test_golden.cubic_explicit_terminal_value() - test_golden.CUBIC_EXPLICIT_TERMINAL)
    checks = {"one-step implicit <= 1e-10": one <= 1e-10, "one-step truncated <= 1e-10": two <= 1e-10,
              "trajectory terminal <= 1e-8": traj <= 1e-8}
    report(capsys, 10, "oracle agreement", checks,
           f"one-step gaps={one:.1e}, {two:.1e}; trajectory gap={traj:.1e}")
