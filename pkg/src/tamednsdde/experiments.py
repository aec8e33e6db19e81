"""Monte Carlo drivers: strong error vs step size, moment bounds, within-step modulus.

Paths are processed in fixed blocks of ``BLOCK_SIZE`` consecutive path
indices.  The block partition never depends on the worker count, and the
per-path results are reduced in path order with :func:`math.fsum`, so every
study is bit-for-bit reproducible for any ``workers``.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .errors import DegenerateRegression, GridMismatchError, InvalidExperiment
from .model import ExampleModel, ModelId, as_fraction, as_spec
from .paths import DEFAULT_SEED, coarsen_increments, generate_block
from .scheme import (
    OK, BLEW_UP, GuardMode, ImplicitSolverPolicy, SchemeConfig, Variant, check_guards, integrate_batch,
)
from .taming import CutoffConfig, TamingConfig, TamingMode, vector_norm
from .verify import estimate_guard_constants

BLOCK_SIZE = 250
ZERO_ERROR_MARKER = "degenerate: zero error"
NONPOSITIVE_MARKER = "degenerate: non-positive error"


def fit_order(pairs):
    """Least-squares fit of ``log(error) = slope * log(delta) + intercept``.

    Returns ``(slope, intercept, r_squared)``.
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise InvalidExperiment(f"regression needs >= 3 levels, got {len(pairs)}")
    steps = np.array([float(d) for d, _ in pairs])
    errors = np.array([float(e) for _, e in pairs])
    if not (np.all(errors > 0) and np.all(np.isfinite(errors)) and np.all(steps > 0)):
        raise DegenerateRegression("log-log regression needs positive, finite values")
    fit = stats.linregress(np.log(steps), np.log(errors))
    return float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2)


def _blocks(n_paths, block_size=None):
    block_size = block_size or BLOCK_SIZE
    return [(s, min(s + block_size, n_paths)) for s in range(0, n_paths, block_size)]


def map_blocks(fn, blocks, workers=1):
    """Apply ``fn`` to every block, in order, optionally in worker processes."""
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(workers, len(blocks)), mp_context=ctx) as pool:
        return list(pool.map(fn, blocks))


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def _model_label(model):
    if isinstance(model, ExampleModel):
        return model.id.value
    return "custom"


def _fmt(x, precision=17):
    return format(float(x), f".{precision}g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _dyadic_factor(coarse: Fraction, fine: Fraction) -> int:
    ratio = coarse / fine
    if ratio.denominator != 1 or int(ratio) < 1:
        raise GridMismatchError(f"step {coarse} is not a multiple of {fine}")
    return int(ratio)


def _check_steps(model, cfgs, study, guard_constants):
    constants = getattr(model, "constants", None)
    reports = []
    if constants is None:
        return reports
    K3, M_bar = guard_constants
    for cfg in cfgs:
        reports.append(check_guards(cfg, constants, K3_tilde=K3, M_bar=M_bar, p=study.p).as_dict())
    return reports


def _guard_constants(study, coarsest):
    if study.theta == 0 or not isinstance(study.model, ExampleModel):
        return study.K3_tilde, study.M_bar
    K3, M_bar = study.K3_tilde, study.M_bar
    if K3 is None or (study.cutoff is not None and M_bar is None):
        est = estimate_guard_constants(study.model, study.taming, study.cutoff, delta=float(coarsest))
        K3 = est.K3_tilde if K3 is None else K3
        if study.cutoff is not None and M_bar is None:
            M_bar = est.M_bar
    return K3, M_bar


# ---------------------------------------------------------------------------
# strong convergence


@dataclass
class ConvergenceStudy:
    model: object
    variant: Variant = Variant.TAMED_THETA
    theta: float = 0.5
    taming: TamingConfig = TamingConfig()
    cutoff: CutoffConfig | None = None
    p: float = 2.0
    levels: list = field(default_factory=lambda: [Fraction(1, 2 ** k) for k in range(4, 10)])
    ref_level: Fraction = Fraction(1, 2 ** 13)
    n_paths: int = 1000
    seed: int = DEFAULT_SEED
    solver: ImplicitSolverPolicy = ImplicitSolverPolicy()
    guard_mode: GuardMode = GuardMode.STRICT
    K3_tilde: float | None = None
    M_bar: float | None = None
    # results
    per_level_error: list = field(default_factory=list)
    fitted_order: float = math.nan
    intercept: float = math.nan
    r_squared: float = math.nan
    marker: str = ""
    excluded: int = 0
    guard_reports: list = field(default_factory=list)

    def file_stem(self):
        return (f"converge_{_model_label(self.model)}_{Variant(self.variant).value}"
                f"_theta{self.theta:g}_alpha{self.taming.alpha:g}_seed{self.seed}")

    def csv_rows(self, precision=17):
        header = ["level", "delta", "error_p", "n_paths", "excluded"]
        rows = [[str(j), _fmt(d, precision), _fmt(e, precision), str(self.n_paths - self.excluded),
                 str(self.excluded)] for j, (d, e) in enumerate(self.per_level_error)]
        return header, rows

    def fit_rows(self, precision=17):
        return ["slope", "intercept", "r2"], [[_fmt(self.fitted_order, precision),
                                              _fmt(self.intercept, precision),
                                              _fmt(self.r_squared, precision)]]

    def write_csv(self, directory, precision=17):
        header, rows = self.csv_rows(precision)
        main = f"{directory}/{self.file_stem()}.csv"
        fit = f"{directory}/{self.file_stem()}_fit.csv"
        _write_csv(main, header, rows)
        _write_csv(fit, *self.fit_rows(precision))
        return [main, fit]


def _scheme_configs(study, steps):
    spec = as_spec(study.model)
    return [
        SchemeConfig.for_problem(
            spec, study.theta, step, variant=study.variant, taming=study.taming,
            cutoff=study.cutoff, solver=study.solver, guard_mode=study.guard_mode,
        )
        for step in steps
    ]


def _convergence_block(model, cfgs, ref_cfg, p, seed, block):
    start, stop = block
    spec = as_spec(model)
    ref_step = ref_cfg.delta
    fine = generate_block(seed, range(start, stop), spec.noise_dim, ref_step, ref_cfg.M)
    ref = integrate_batch(model, ref_cfg, fine, record_stats=False, check_bounds=False)
    coarsest = cfgs[0].delta
    ref_on = ref.y[:: _dyadic_factor(coarsest, ref_step)]
    bad = ref.status != OK
    errors = np.empty((len(cfgs), stop - start))
    for j, cfg in enumerate(cfgs):
        inc = coarsen_increments(fine, _dyadic_factor(cfg.delta, ref_step))
        res = integrate_batch(model, cfg, inc, record_stats=False, check_bounds=False)
        bad |= res.status != OK
        diff = res.y[:: _dyadic_factor(coarsest, cfg.delta)] - ref_on
        errors[j] = np.max(vector_norm(diff) ** p, axis=0)
    return errors, bad


def run_convergence(study: ConvergenceStudy, workers: int = 1) -> ConvergenceStudy:
    """Strong error of each level against a coupled fine reference path.

    For every path the reference increments are drawn once and coarsened to
    each level; the error of a level is
    ``(mean_paths max_grid |y_level - y_ref|^p)^(1/p)`` on the coarsest grid.
    """
    levels = sorted((as_fraction(d) for d in study.levels), reverse=True)
    if len(levels) < 3:
        raise InvalidExperiment(f"regression needs >= 3 levels, got {len(levels)}")
    ref_step = as_fraction(study.ref_level)
    for d in levels:
        if d / ref_step < 8:
            raise InvalidExperiment(f"reference step {ref_step} is not 8x finer than level {d}")
        factor = _dyadic_factor(d, ref_step)
        if factor & (factor - 1):
            raise GridMismatchError(f"level {d} is not a dyadic coarsening of {ref_step}")
    cfgs = _scheme_configs(study, levels)
    (ref_cfg,) = _scheme_configs(study, [ref_step])
    guard_constants = _guard_constants(study, levels[0])
    reports = _check_steps(study.model, cfgs + [ref_cfg], study, guard_constants)

    fn = functools.partial(_convergence_block, study.model, cfgs, ref_cfg, study.p, study.seed)
    parts = map_blocks(fn, _blocks(study.n_paths), workers)
    errors = np.concatenate([e for e, _ in parts], axis=1)
    bad = np.concatenate([b for _, b in parts])
    keep = ~bad
    per_level = []
    for j, d in enumerate(levels):
        mean = _mean(errors[j, keep])
        per_level.append((d, mean ** (1.0 / study.p)))

    out = dataclasses.replace(study, levels=levels, ref_level=ref_step, per_level_error=per_level,
                              excluded=int(bad.sum()), guard_reports=reports)
    errs = [e for _, e in per_level]
    if all(e == 0 for e in errs):
        out.marker = ZERO_ERROR_MARKER
    elif not all(e > 0 and math.isfinite(e) for e in errs):
        out.marker = NONPOSITIVE_MARKER
    else:
        out.fitted_order, out.intercept, out.r_squared = fit_order(per_level)
    return out


# ---------------------------------------------------------------------------
# moment bounds


@dataclass
class MomentStudy:
    model: object
    variant: Variant = Variant.TAMED_THETA
    theta: float = 0.5
    taming: TamingConfig = TamingConfig()
    cutoff: CutoffConfig | None = None
    p: float = 4.0
    steps: list = field(default_factory=lambda: [Fraction(1, 2 ** k) for k in range(4, 9)])
    n_paths: int = 500
    seed: int = DEFAULT_SEED
    solver: ImplicitSolverPolicy = ImplicitSolverPolicy()
    guard_mode: GuardMode = GuardMode.STRICT
    K3_tilde: float | None = None
    M_bar: float | None = None
    untamed_xi: object = None  # initial segment of the untamed comparison arm; None disables it
    untamed_step: Fraction = Fraction(1, 16)
    # results
    per_step_moment: list = field(default_factory=list)
    tamed_blowups: int = 0
    excluded: int = 0
    divergence_fraction: float = math.nan
    untamed_moment: float = math.nan
    guard_reports: list = field(default_factory=list)

    def file_stem(self):
        return (f"moments_{_model_label(self.model)}_{Variant(self.variant).value}"
                f"_theta{self.theta:g}_alpha{self.taming.alpha:g}_seed{self.seed}")

    def csv_rows(self, precision=17):
        header = ["delta", "moment_p", "divergence_fraction"]
        frac = self.tamed_blowups / self.n_paths
        rows = [[_fmt(d, precision), _fmt(v, precision), _fmt(frac, precision)]
                for d, v in self.per_step_moment]
        return header, rows

    def write_csv(self, directory, precision=17):
        files = [f"{directory}/{self.file_stem()}.csv"]
        _write_csv(files[0], *self.csv_rows(precision))
        if self.untamed_xi is not None:
            files.append(f"{directory}/{self.file_stem()}_untamed.csv")
            _write_csv(files[1], ["delta", "moment_p", "divergence_fraction"],
                       [[_fmt(self.untamed_step, precision), _fmt(self.untamed_moment, precision),
                         _fmt(self.divergence_fraction, precision)]])
        return files


def _moment_block(model, cfgs, p, seed, block):
    start, stop = block
    spec = as_spec(model)
    finest = cfgs[-1]
    fine = generate_block(seed, range(start, stop), spec.noise_dim, finest.delta, finest.M)
    sups = np.empty((len(cfgs), stop - start))
    status = np.zeros((len(cfgs), stop - start), np.int8)
    for j, cfg in enumerate(cfgs):
        factor = _dyadic_factor(cfg.delta, finest.delta)
        inc = fine if factor == 1 else coarsen_increments(fine, factor)
        res = integrate_batch(model, cfg, inc, record_stats=False, check_bounds=False)
        sups[j] = np.max(vector_norm(res.y) ** p, axis=0)
        status[j] = res.status
    return sups, status


def run_moment_study(study: MomentStudy, workers: int = 1) -> MomentStudy:
    """Sample ``E max_k |y_k|^p`` across step sizes, plus the optional untamed arm."""
    steps = sorted((as_fraction(d) for d in study.steps), reverse=True)
    if not steps:
        raise InvalidExperiment("moment study needs at least one step size")
    cfgs = _scheme_configs(study, steps)
    reports = _check_steps(study.model, cfgs, study, _guard_constants(study, steps[0]))
    fn = functools.partial(_moment_block, study.model, cfgs, study.p, study.seed)
    parts = map_blocks(fn, _blocks(study.n_paths), workers)
    sups = np.concatenate([s for s, _ in parts], axis=1)
    status = np.concatenate([s for _, s in parts], axis=1)
    bad = np.any(status != OK, axis=0)
    per_step = [(d, _mean(sups[j, ~bad])) for j, d in enumerate(steps)]
    out = dataclasses.replace(study, steps=steps, per_step_moment=per_step,
                              tamed_blowups=int(np.any(status == BLEW_UP, axis=0).sum()),
                              excluded=int(bad.sum()), guard_reports=reports)

    if study.untamed_xi is not None:
        untamed_model = _with_initial_segment(study.model, study.untamed_xi)
        ucfg = SchemeConfig.for_problem(
            untamed_model, 0.0, study.untamed_step, variant=Variant.TAMED_THETA,
            taming=TamingConfig(study.taming.alpha, study.taming.K5, TamingMode.NONE),
            solver=study.solver, guard_mode=GuardMode.WARN_ONLY,
        )
        ufn = functools.partial(_moment_block, untamed_model, [ucfg], study.p, study.seed)
        uparts = map_blocks(ufn, _blocks(study.n_paths), workers)
        usups = np.concatenate([s for s, _ in uparts], axis=1)[0]
        ustatus = np.concatenate([s for _, s in uparts], axis=1)[0]
        out.divergence_fraction = float(np.count_nonzero(ustatus == BLEW_UP)) / study.n_paths
        survivors = usups[ustatus == OK]
        out.untamed_moment = _mean(survivors)
    return out


def _with_initial_segment(model, segment):
    if isinstance(model, ExampleModel):
        return dataclasses.replace(model, spec=dataclasses.replace(model.spec, initial_xi=segment))
    return dataclasses.replace(model, initial_xi=segment)


# ---------------------------------------------------------------------------
# within-step modulus of continuity


@dataclass
class ModulusStudy:
    model: object
    variant: Variant = Variant.TAMED_THETA
    theta: float = 0.0
    taming: TamingConfig = TamingConfig()
    cutoff: CutoffConfig | None = None
    p: float = 2.0
    levels: list = field(default_factory=lambda: [Fraction(1, 2 ** k) for k in range(6, 10)])
    ref_level: Fraction = Fraction(1, 2 ** 13)
    n_paths: int = 500
    seed: int = DEFAULT_SEED
    solver: ImplicitSolverPolicy = ImplicitSolverPolicy()
    guard_mode: GuardMode = GuardMode.STRICT
    K3_tilde: float | None = None
    M_bar: float | None = None
    # results
    table: list = field(default_factory=list)
    slope: float = math.nan
    intercept: float = math.nan
    r_squared: float = math.nan
    marker: str = ""
    excluded: int = 0
    guard_reports: list = field(default_factory=list)

    def file_stem(self):
        return (f"modulus_{_model_label(self.model)}_{Variant(self.variant).value}"
                f"_theta{self.theta:g}_alpha{self.taming.alpha:g}_seed{self.seed}")

    def write_csv(self, directory, precision=17):
        main = f"{directory}/{self.file_stem()}.csv"
        fit = f"{directory}/{self.file_stem()}_fit.csv"
        _write_csv(main, ["delta", "modulus_p", "n_paths", "excluded"],
                   [[_fmt(d, precision), _fmt(v, precision), str(self.n_paths - self.excluded),
                     str(self.excluded)] for d, v in self.table])
        _write_csv(fit, ["slope", "intercept", "r2"],
                   [[_fmt(self.slope, precision), _fmt(self.intercept, precision),
                     _fmt(self.r_squared, precision)]])
        return [main, fit]


def _modulus_block(model, cfgs, ref_cfg, p, seed, block):
    start, stop = block
    spec = as_spec(model)
    fine = generate_block(seed, range(start, stop), spec.noise_dim, ref_cfg.delta, ref_cfg.M)
    ref = integrate_batch(model, ref_cfg, fine, record_stats=False, check_bounds=False)
    bad = ref.status != OK
    values = np.empty((len(cfgs), stop - start))
    for j, cfg in enumerate(cfgs):
        r = _dyadic_factor(cfg.delta, ref_cfg.delta)
        res = integrate_batch(model, cfg, coarsen_increments(fine, r), record_stats=False,
                              check_bounds=False)
        bad |= res.status != OK
        M = cfg.M
        within = ref.y[:-1].reshape(M, r, *ref.y.shape[1:])
        dev = vector_norm(within - res.y[:-1][:, None]) ** p
        values[j] = np.max(dev, axis=(0, 1))
    return values, bad


def run_modulus_study(study: ModulusStudy, workers: int = 1) -> ModulusStudy:
    """Sample ``E max_k max_{t in [t_k, t_{k+1})} |Y(t) - y_k|^p`` with ``Y`` the reference path.

    The within-step supremum is taken over the reference grid points inside
    each coarse step.
    """
    levels = sorted((as_fraction(d) for d in study.levels), reverse=True)
    if len(levels) < 3:
        raise InvalidExperiment(f"regression needs >= 3 levels, got {len(levels)}")
    ref_step = as_fraction(study.ref_level)
    for d in levels:
        if d / ref_step < 2:
            raise InvalidExperiment(f"reference step {ref_step} must be finer than level {d}")
        _dyadic_factor(d, ref_step)
    cfgs = _scheme_configs(study, levels)
    (ref_cfg,) = _scheme_configs(study, [ref_step])
    reports = _check_steps(study.model, cfgs + [ref_cfg], study, _guard_constants(study, levels[0]))
    fn = functools.partial(_modulus_block, study.model, cfgs, ref_cfg, study.p, study.seed)
    parts = map_blocks(fn, _blocks(study.n_paths), workers)
    values = np.concatenate([v for v, _ in parts], axis=1)
    bad = np.concatenate([b for _, b in parts])
    table = [(d, _mean(values[j, ~bad])) for j, d in enumerate(levels)]
    out = dataclasses.replace(study, levels=levels, ref_level=ref_step, table=table,
                              excluded=int(bad.sum()), guard_reports=reports)
    vals = [v for _, v in table]
    if all(v == 0 for v in vals):
        out.marker = ZERO_ERROR_MARKER
    elif not all(v > 0 and math.isfinite(v) for v in vals):
        out.marker = NONPOSITIVE_MARKER
    else:
        out.slope, out.intercept, out.r_squared = fit_order(table)
    return out
