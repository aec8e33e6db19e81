"""Command-line front end: YAML run configuration, subcommand dispatch and run metadata.

Exit codes
----------
0 success, 2 schema or parameter range, 3 step-size guard, 4 implicit solver,
5 grid mismatch, 6 invalid experiment, 7 non-finite coefficient.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

import yaml

from . import __version__
from .errors import NSDDEError, SchemaViolation
from .experiments import (
    ConvergenceStudy, ModulusStudy, MomentStudy, run_convergence, run_modulus_study, run_moment_study,
)
from .model import ModelId, as_fraction, make_example, make_segment
from .paths import DEFAULT_SEED, generate
from .scheme import GuardMode, ImplicitSolverPolicy, SchemeConfig, SolverMethod, Variant, check_guards, integrate
from .taming import CutoffConfig, TamingConfig, TamingMode
from .verify import AssumptionId, check_assumption, estimate_guard_constants

COMMANDS = ("simulate", "converge", "moments", "modulus", "check-assumptions")
DEFAULT_LEVELS = tuple(Fraction(1, 2 ** k) for k in range(4, 10))


# ---------------------------------------------------------------------------
# configuration blocks


def _rational(value, path):
    try:
        return as_fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise SchemaViolation(path, f"expected an exact rational ('p/q' or dyadic decimal): {exc}") from None


def _real(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise SchemaViolation(path, f"expected a number, got {value!r}")
    try:
        return float(Fraction(value)) if isinstance(value, str) else float(value)
    except (ValueError, ZeroDivisionError):
        raise SchemaViolation(path, f"expected a number, got {value!r}") from None


def _integer(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(path, f"expected an integer, got {value!r}")
    return value


def _choice(value, enum, path):
    try:
        return enum(value)
    except ValueError:
        options = ", ".join(e.value for e in enum)
        raise SchemaViolation(path, f"expected one of {options}, got {value!r}") from None


def _rat_str(q: Fraction) -> str:
    return str(q)


@dataclass
class ModelBlock:
    id: ModelId = ModelId.CUBIC_GLOBAL
    a: float = 0.25
    xi: str = "const"
    xi_c: float = 1.0
    tau: Fraction = Fraction(1)
    T: Fraction = Fraction(2)


@dataclass
class SolverBlock:
    method: SolverMethod = SolverMethod.NEWTON_FALLBACK
    tol: float = 1e-12
    max_iters: int = 100


@dataclass
class SchemeBlock:
    variant: Variant = Variant.TAMED_THETA
    theta: float = 0.5
    delta: Fraction = Fraction(1, 64)
    levels: list = field(default_factory=lambda: list(DEFAULT_LEVELS))
    guard_mode: GuardMode = GuardMode.STRICT
    solver: SolverBlock = field(default_factory=SolverBlock)


@dataclass
class TamingBlock:
    mode: TamingMode = TamingMode.SIGMOIDAL
    alpha: float = 0.5
    K5: float = 1.0
    R: float | None = None


@dataclass
class ExperimentBlock:
    kind: str = "simulate"
    p: float = 2.0
    n_paths: int = 1000
    ref_level: Fraction = Fraction(1, 2 ** 13)
    seed: int = DEFAULT_SEED
    path_index: int = 0
    untamed_xi_c: float | None = None
    untamed_step: Fraction = Fraction(1, 16)
    K3_tilde: float | None = None
    M_bar: float | None = None
    box_radius: float = 3.0
    samples: int = 10_000


@dataclass
class OutputBlock:
    directory: str = "out"
    precision: int = 17


@dataclass
class RunConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    scheme: SchemeBlock = field(default_factory=SchemeBlock)
    taming: TamingBlock = field(default_factory=TamingBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def to_dict(self) -> dict:
        def conv(v):
            if dataclasses.is_dataclass(v):
                return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
            if isinstance(v, Fraction):
                return _rat_str(v)
            if isinstance(v, list):
                return [conv(x) for x in v]
            if hasattr(v, "value"):
                return v.value
            return v
        return conv(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    # -- derived objects

    def build_model(self):
        m = self.model
        return make_example(m.id, a=m.a, xi=m.xi, xi_c=m.xi_c, tau=m.tau, T=m.T, p=self.experiment.p)

    def build_taming(self):
        return TamingConfig(self.taming.alpha, self.taming.K5, self.taming.mode)

    def build_cutoff(self):
        return None if self.taming.R is None else CutoffConfig(self.taming.R)

    def build_solver(self):
        s = self.scheme.solver
        return ImplicitSolverPolicy(method=s.method, tol_residual=s.tol, max_iters=s.max_iters)

    def scheme_config(self, delta) -> SchemeConfig:
        return SchemeConfig.for_problem(
            self.build_model(), self.scheme.theta, delta, variant=self.scheme.variant,
            taming=self.build_taming(), cutoff=self.build_cutoff(), solver=self.build_solver(),
            guard_mode=self.scheme.guard_mode,
        )

    def steps_for(self, kind: str) -> list:
        if kind == "simulate":
            return [self.scheme.delta]
        if kind in ("converge", "modulus"):
            return list(self.scheme.levels) + [self.experiment.ref_level]
        if kind == "moments":
            return list(self.scheme.levels)
        return []


_SCALAR = {
    ("model", "id"): lambda v, p: _choice(v, ModelId, p),
    ("model", "a"): _real,
    ("model", "xi"): lambda v, p: _choice_str(v, ("const", "cos"), p),
    ("model", "xi_c"): _real,
    ("model", "tau"): _rational,
    ("model", "T"): _rational,
    ("scheme", "variant"): lambda v, p: _choice(v, Variant, p),
    ("scheme", "theta"): _real,
    ("scheme", "delta"): _rational,
    ("scheme", "levels"): lambda v, p: _rational_list(v, p),
    ("scheme", "guard_mode"): lambda v, p: _choice(v, GuardMode, p),
    ("solver", "method"): lambda v, p: _choice(v, SolverMethod, p),
    ("solver", "tol"): _real,
    ("solver", "max_iters"): _integer,
    ("taming", "mode"): lambda v, p: _choice(v, TamingMode, p),
    ("taming", "alpha"): _real,
    ("taming", "K5"): _real,
    ("taming", "R"): lambda v, p: None if v is None else _real(v, p),
    ("experiment", "kind"): lambda v, p: _choice_str(v, COMMANDS, p),
    ("experiment", "p"): _real,
    ("experiment", "n_paths"): _integer,
    ("experiment", "ref_level"): _rational,
    ("experiment", "seed"): _integer,
    ("experiment", "path_index"): _integer,
    ("experiment", "untamed_xi_c"): lambda v, p: None if v is None else _real(v, p),
    ("experiment", "untamed_step"): _rational,
    ("experiment", "K3_tilde"): lambda v, p: None if v is None else _real(v, p),
    ("experiment", "M_bar"): lambda v, p: None if v is None else _real(v, p),
    ("experiment", "box_radius"): _real,
    ("experiment", "samples"): _integer,
    ("output", "directory"): lambda v, p: _choice_str(v, None, p),
    ("output", "precision"): _integer,
}


def _choice_str(value, options, path):
    if not isinstance(value, str):
        raise SchemaViolation(path, f"expected a string, got {value!r}")
    if options is not None and value not in options:
        raise SchemaViolation(path, f"expected one of {', '.join(options)}, got {value!r}")
    return value


def _rational_list(value, path):
    if not isinstance(value, list):
        raise SchemaViolation(path, f"expected a list of rationals, got {value!r}")
    return [_rational(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _fill(block, data, name, path):
    if data is None:
        return block
    if not isinstance(data, dict):
        raise SchemaViolation(path, f"expected a mapping, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(block)}
    for key, value in data.items():
        key_path = f"{path}.{key}"
        if key not in known:
            raise SchemaViolation(key_path, "unknown key")
        if key == "solver" and name == "scheme":
            _fill(block.solver, value, "solver", key_path)
            continue
        setattr(block, key, _SCALAR[(name, key)](value, key_path))
    return block


def _validate(cfg: RunConfig):
    """Range checks that the typed parsers cannot express."""
    def bad(path, msg):
        raise SchemaViolation(path, msg)
    if not 0.0 <= cfg.scheme.theta <= 1.0:
        bad("scheme.theta", f"theta must lie in [0, 1], got {cfg.scheme.theta}")
    if not 0.0 < cfg.taming.alpha <= 0.5:
        bad("taming.alpha", f"alpha must lie in (0, 1/2], got {cfg.taming.alpha}")
    if cfg.taming.K5 < 1.0:
        bad("taming.K5", f"K5 must be >= 1, got {cfg.taming.K5}")
    if cfg.taming.R is not None and not cfg.taming.R > 0:
        bad("taming.R", "cutoff radius must be positive")
    if cfg.experiment.p < 2:
        bad("experiment.p", f"p must be >= 2, got {cfg.experiment.p}")
    if cfg.experiment.n_paths < 1:
        bad("experiment.n_paths", "n_paths must be >= 1")
    if cfg.experiment.seed < 0:
        bad("experiment.seed", "seed must be a non-negative integer")
    if not 1 <= cfg.output.precision <= 17:
        bad("output.precision", "precision must lie in [1, 17]")
    if cfg.scheme.solver.tol <= 0 or cfg.scheme.solver.max_iters < 1:
        bad("scheme.solver", "tol must be positive and max_iters >= 1")
    for path, q in [("scheme.delta", cfg.scheme.delta), ("experiment.ref_level", cfg.experiment.ref_level),
                    ("experiment.untamed_step", cfg.experiment.untamed_step)] + [
                        (f"scheme.levels[{i}]", q) for i, q in enumerate(cfg.scheme.levels)]:
        if q <= 0:
            bad(path, f"step must be positive, got {q}")


def guard_checks(cfg: RunConfig, kind: str, mode: GuardMode | None = None) -> list:
    """Run the step-size guards for every step the command will use.

    ``K3_tilde`` and ``M_bar`` come from the config when given, otherwise
    they are sampled.
    """
    if mode is not None:
        cfg = dataclasses.replace(cfg, scheme=dataclasses.replace(cfg.scheme, guard_mode=mode))
    steps = cfg.steps_for(kind)
    if not steps:
        return []
    cfgs = [cfg.scheme_config(d) for d in steps]  # grid compatibility first
    model = cfg.build_model()
    K3, M_bar = cfg.experiment.K3_tilde, cfg.experiment.M_bar
    if cfg.scheme.theta > 0 and (K3 is None or (cfg.taming.R is not None and M_bar is None)):
        est = estimate_guard_constants(model, cfg.build_taming(), cfg.build_cutoff(), delta=float(max(steps)))
        K3 = est.K3_tilde if K3 is None else K3
        if cfg.taming.R is not None and M_bar is None:
            M_bar = est.M_bar
    return [check_guards(c, model.constants, K3_tilde=K3, M_bar=M_bar, p=cfg.experiment.p).as_dict()
            for c in cfgs]


def from_dict(data, kind: str | None = None, check: bool = True) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SchemaViolation("<root>", "config document must be a mapping")
    cfg = RunConfig()
    blocks = {f.name for f in dataclasses.fields(cfg)}
    for key, value in data.items():
        if key not in blocks:
            raise SchemaViolation(key, "unknown key")
        _fill(getattr(cfg, key), value, key, key)
    if kind is not None:
        cfg.experiment.kind = _choice_str(kind, COMMANDS, "experiment.kind")
    _validate(cfg)
    try:
        cfg.build_model()
        cfg.build_taming()
        cfg.build_cutoff()
    except ValueError as exc:
        raise SchemaViolation("model", str(exc)) from None
    if check and cfg.scheme.guard_mode is GuardMode.STRICT:
        guard_checks(cfg, cfg.experiment.kind)
    elif check:
        for d in cfg.steps_for(cfg.experiment.kind):
            cfg.scheme_config(d)
    return cfg


def parse_config(text: str, kind: str | None = None, check: bool = True) -> RunConfig:
    """Parse and validate a YAML run configuration.

    Rational fields (``tau``, ``T``, ``delta``, ``levels``, ``ref_level``)
    are exact: write ``"1/64"``; decimals are accepted only when exactly
    dyadic.  In strict guard mode the step-size guards run here.
    """
    try:
        data = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as exc:
        raise SchemaViolation("<document>", f"malformed YAML: {exc}") from None
    return from_dict(data, kind, check)


# ---------------------------------------------------------------------------
# dispatch


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _study_kwargs(cfg: RunConfig):
    return dict(
        model=cfg.build_model(), variant=cfg.scheme.variant, theta=cfg.scheme.theta,
        taming=cfg.build_taming(), cutoff=cfg.build_cutoff(), p=cfg.experiment.p,
        n_paths=cfg.experiment.n_paths, seed=cfg.experiment.seed, solver=cfg.build_solver(),
        guard_mode=cfg.scheme.guard_mode, K3_tilde=cfg.experiment.K3_tilde, M_bar=cfg.experiment.M_bar,
    )


def _simulate(cfg, out, workers):
    model = cfg.build_model()
    scheme = cfg.scheme_config(cfg.scheme.delta)
    noise = generate(cfg.experiment.seed, cfg.experiment.path_index, model.spec.noise_dim,
                     scheme.delta, scheme.M)
    result = integrate(model, scheme, noise)
    path = os.path.join(out, f"simulate_{model.id.value}_{scheme.variant.value}_theta{scheme.theta:g}"
                             f"_alpha{scheme.taming.alpha:g}_seed{cfg.experiment.seed}.csv")
    result.write_csv(path, precision=cfg.output.precision)
    return [path], {"blew_up": bool(result.blew_up)}


def _converge(cfg, out, workers):
    study = ConvergenceStudy(levels=list(cfg.scheme.levels), ref_level=cfg.experiment.ref_level,
                             **_study_kwargs(cfg))
    res = run_convergence(study, workers)
    summary = {"fitted_order": res.fitted_order, "r2": res.r_squared, "excluded": res.excluded,
               "marker": res.marker}
    return res.write_csv(out, cfg.output.precision), summary


def _moments(cfg, out, workers):
    exp = cfg.experiment
    untamed = None if exp.untamed_xi_c is None else make_segment("const", exp.untamed_xi_c)
    study = MomentStudy(steps=list(cfg.scheme.levels), untamed_xi=untamed, untamed_step=exp.untamed_step,
                        **_study_kwargs(cfg))
    res = run_moment_study(study, workers)
    summary = {"tamed_blowups": res.tamed_blowups, "divergence_fraction": res.divergence_fraction}
    return res.write_csv(out, cfg.output.precision), summary


def _modulus(cfg, out, workers):
    study = ModulusStudy(levels=list(cfg.scheme.levels), ref_level=cfg.experiment.ref_level,
                         **_study_kwargs(cfg))
    res = run_modulus_study(study, workers)
    summary = {"slope": res.slope, "r2": res.r_squared, "excluded": res.excluded, "marker": res.marker}
    return res.write_csv(out, cfg.output.precision), summary


def _check_assumptions(cfg, out, workers):
    model = cfg.build_model()
    exp = cfg.experiment
    rows = []
    for aid in AssumptionId:
        taming = TamingConfig(cfg.taming.alpha, cfg.taming.K5,
                              TamingMode.BALANCED if aid.value.startswith("C") else TamingMode.SIGMOIDAL)
        rep = check_assumption(aid, model, taming=taming, box_radius=exp.box_radius, samples=exp.samples,
                               p=exp.p, seed=exp.seed, delta=float(cfg.scheme.delta))
        rows.append(rep.row())
    path = os.path.join(out, f"assumptions_{model.id.value}_seed{exp.seed}.csv")
    _write_rows(path, ["assumption", "status", "estimated_constant", "witness", "samples", "box_radius"], rows)
    return [path], {}


_DISPATCH = {
    "simulate": _simulate, "converge": _converge, "moments": _moments, "modulus": _modulus,
    "check-assumptions": _check_assumptions,
}


def dispatch(cmd: str, cfg: RunConfig, out: str | None = None, workers: int = 1) -> dict:
    """Run one command and write its CSVs plus ``<stem>_meta.json``; returns the metadata."""
    out = out or cfg.output.directory
    os.makedirs(out, exist_ok=True)
    start = time.perf_counter()
    guards = guard_checks(cfg, cmd)
    files, summary = _DISPATCH[cmd](cfg, out, workers)
    meta = {
        "command": cmd,
        "version": __version__,
        "config": cfg.to_dict(),
        "guard_report": guards,
        "files": [os.path.basename(f) for f in files],
        "summary": summary,
        "wall_time_s": time.perf_counter() - start,
    }
    stem = os.path.splitext(os.path.basename(files[0]))[0]
    with open(os.path.join(out, f"{stem}_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, default=float)
    return meta


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tamednsdde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override experiment.seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes (results do not change)")
        p.add_argument("--out", help="output directory (overrides output.directory)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = ""
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        cfg = parse_config(text, kind=args.command, check=False)
        if args.seed is not None:
            cfg.experiment.seed = _integer(args.seed, "--seed")
            _validate(cfg)
        meta = dispatch(args.command, cfg, args.out, max(1, args.workers))
    except NSDDEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(meta["summary"], default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
