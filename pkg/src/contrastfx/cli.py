"""Command-line entry point.

Four subcommands share one binary: ``simulate`` draws benchmark datasets,
``oracle`` computes true estimand values, ``transform`` tabulates a density
next to its intervention image, and ``estimate`` runs the cross-fitted
estimators on a CSV file.  Every command is deterministic given its flags:
file output is full precision, terminal output is rounded to 6 significant
digits, and thread count never changes a result.

Exit codes: 0 success, 2 usage, 3 data validation, 4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields

from . import density as densities
from .errors import (
    ConstraintError,
    ContrastFxError,
    DegenerateError,
    DomainError,
    FoldError,
    NoClosedFormError,
    NotADensityError,
    SingularFitError,
    ValidationError,
)
from .estimate import SCHEMA_VERSION, estimate_cov_weighted, estimate_unit_weight
from .model import Dataset, ScenarioSpec, VFunction, VKind, simulate_scenario
from .nuisance import FoldPlan, KNearest, PolynomialRidge, fit_nuisances
from .oracle import (
    DEFAULT_Z_DRAWS,
    MIN_Z_DRAWS,
    EstimandId,
    transform_curves,
    true_estimand,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Resolved inputs for one command; config-file values lose to flags."""

    subcommand: str
    scenario: str | None = None
    n: int = 2000
    seed: int = 0
    draws: int = DEFAULT_Z_DRAWS
    threads: int = 1
    out: str | None = None
    data: str | None = None
    family: str | None = None
    params: str | None = None
    estimand: str | None = None
    v: str = "identity"
    x0: float = 3.0
    folds: int = 5
    learner: str = "poly_ridge:2"
    ci_level: float = 0.95

    def __post_init__(self):
        if self.n < 1:
            raise UsageError("--n must be positive")
        if self.draws < 1:
            raise UsageError("--draws must be positive")
        if self.threads < 1:
            raise UsageError("--threads must be positive")
        if self.folds < 2:
            raise UsageError("--folds must be at least 2")
        if not 0.0 < self.ci_level < 1.0:
            raise UsageError("--ci-level must be strictly between 0 and 1")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contrastfx",
        description="Contrast effects for continuous exposures: "
        "simulation, true values, intervention densities, estimation.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of defaults; explicit flags win")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--threads", type=int, help="worker cap; results never depend on it")
        p.add_argument("--out", help="output file path")

    p = sub.add_parser("simulate", help="draw a benchmark dataset to CSV")
    common(p)
    p.add_argument("--scenario", help="outcome,exposure pair such as 2,1")
    p.add_argument("--n", type=int, help="number of observations (default 2000)")

    p = sub.add_parser("oracle", help="true estimand values with Monte Carlo error")
    common(p)
    p.add_argument("--scenario", help="outcome,exposure pair; default: all six")
    p.add_argument(
        "--estimand",
        help="comma list of ade, unit[:V], covw[:V], or all; V is identity, "
        "reciprocal, or threshold (default all)",
    )
    p.add_argument("--x0", type=float, help="threshold location (default 3)")
    p.add_argument("--draws", type=int, help=f"covariate draws (default {DEFAULT_Z_DRAWS})")

    p = sub.add_parser("transform", help="tabulate a density and its intervention image")
    common(p)
    p.add_argument("--family", help="normal, gamma, chisq, beta, or betaprime")
    p.add_argument("--params", help="comma-separated family parameters")

    p = sub.add_parser("estimate", help="cross-fitted estimates from a CSV dataset")
    common(p)
    p.add_argument("--data", help="input CSV with columns y,x,z1[,z2,...]")
    p.add_argument("--estimand", help="unit, covw, or both (default both)")
    p.add_argument("--v", help="identity, reciprocal, or threshold (default identity)")
    p.add_argument("--x0", type=float, help="threshold location (default 3)")
    p.add_argument("--folds", type=int, help="cross-fitting folds (default 5)")
    p.add_argument(
        "--learner",
        help="poly_ridge:DEGREE[:PENALTY] or k_nearest:K (default poly_ridge:2, "
        "penalty chosen by cross-validation)",
    )
    p.add_argument("--ci-level", type=float, dest="ci_level", help="default 0.95")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    merged: dict = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)}
        for key, value in loaded.items():
            if key not in known or key == "subcommand":
                raise UsageError(f"unknown config key: {key}")
            merged[key] = value
    for key, value in vars(args).items():
        if key == "config" or value is None:
            continue
        merged[key] = value
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


def _parse_scenario(token: str) -> ScenarioSpec:
    parts = token.split(",")
    if len(parts) != 2:
        raise UsageError(f"--scenario wants outcome,exposure; got {token!r}")
    try:
        outcome, exposure = int(parts[0]), int(parts[1])
    except ValueError:
        raise UsageError(f"--scenario wants two integers; got {token!r}") from None
    try:
        return ScenarioSpec(outcome_id=outcome, exposure_id=exposure)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None


def _parse_v(token: str, x0: float) -> VFunction:
    kinds = {k.value: k for k in VKind}
    if token not in kinds:
        raise UsageError(f"unknown v function {token!r}; pick one of {sorted(kinds)}")
    kind = kinds[token]
    return VFunction(kind, x0 if kind is VKind.THRESHOLD else None)


_ALL_WEIGHTS = ("unit", "covw")
_ALL_VS = ("identity", "reciprocal", "threshold")


def _parse_oracle_estimands(spec_text: str, x0: float) -> list[EstimandId]:
    out: list[EstimandId] = []
    for token in spec_text.split(","):
        token = token.strip()
        if token == "all":
            out.append(EstimandId.ade())
            for w in _ALL_WEIGHTS:
                for vt in _ALL_VS:
                    out.append(_weighted_estimand(w, vt, x0))
        elif token == "ade":
            out.append(EstimandId.ade())
        elif token in _ALL_WEIGHTS:
            for vt in _ALL_VS:
                out.append(_weighted_estimand(token, vt, x0))
        elif ":" in token:
            w, _, vt = token.partition(":")
            if w not in _ALL_WEIGHTS or vt not in _ALL_VS:
                raise UsageError(f"unknown estimand token {token!r}")
            out.append(_weighted_estimand(w, vt, x0))
        else:
            raise UsageError(f"unknown estimand token {token!r}")
    seen: set = set()
    unique = []
    for e in out:
        if e not in seen:
            seen.add(e)
            unique.append(e)
    return unique


def _weighted_estimand(weight: str, v_token: str, x0: float) -> EstimandId:
    v = _parse_v(v_token, x0)
    return EstimandId.unit(v) if weight == "unit" else EstimandId.cov_weighted(v)


def _parse_learner(token: str):
    name, _, rest = token.partition(":")
    try:
        if name == "poly_ridge":
            parts = rest.split(":") if rest else []
            if len(parts) not in (1, 2) or not parts:
                raise UsageError("poly_ridge wants DEGREE or DEGREE:PENALTY")
            degree = int(parts[0])
            penalty = float(parts[1]) if len(parts) == 2 else None
            return PolynomialRidge(degree=degree, penalty=penalty)
        if name == "k_nearest":
            if not rest:
                raise UsageError("k_nearest wants a neighbor count, e.g. k_nearest:25")
            return KNearest(k=int(rest))
    except (ValueError, ValidationError) as exc:
        raise UsageError(f"bad learner spec {token!r}: {exc}") from None
    raise UsageError(f"unknown learner {name!r}; pick poly_ridge or k_nearest")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.scenario is None:
        raise UsageError("simulate needs --scenario")
    if cfg.out is None:
        raise UsageError("simulate needs --out")
    spec = _parse_scenario(cfg.scenario)
    data = simulate_scenario(spec, cfg.n, cfg.seed)
    data.to_csv(cfg.out)
    print(f"wrote {data.n} rows to {cfg.out}")
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    if cfg.draws < MIN_Z_DRAWS:
        print(
            f"warning: --draws {cfg.draws} is below the smoke-test floor "
            f"of {MIN_Z_DRAWS}; values will be noisy",
            file=sys.stderr,
        )
    if cfg.scenario is not None:
        specs = [_parse_scenario(cfg.scenario)]
    else:
        specs = [
            ScenarioSpec(outcome_id=o, exposure_id=e) for e in (1, 2) for o in (1, 2, 3)
        ]
    estimands = _parse_oracle_estimands(cfg.estimand or "all", cfg.x0)
    rows = []
    for spec in specs:
        for est in estimands:
            res = true_estimand(
                spec, est, n_z=cfg.draws, seed=cfg.seed, threads=cfg.threads
            )
            rows.append((spec, est, res))
    if cfg.out is not None:
        with open(cfg.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["outcome", "exposure", "estimand", "value", "mc_se", "draws"])
            for spec, est, res in rows:
                writer.writerow(
                    [
                        spec.outcome_id,
                        spec.exposure_id,
                        est.label,
                        repr(res.value),
                        repr(res.mc_standard_error),
                        res.n_z_draws,
                    ]
                )
    for spec, est, res in rows:
        print(
            f"{spec.label} {est.label}: {_fmt(res.value)} "
            f"(mc se {_fmt(res.mc_standard_error)})"
        )
    return EXIT_OK


_FAMILIES = {
    "normal": (("mean", "variance"), lambda p: densities.Normal(p[0], p[1])),
    "gamma": (("shape", "rate"), lambda p: densities.Gamma(p[0], p[1])),
    "chisq": (("df",), lambda p: densities.ChiSquared(p[0])),
    "beta": (("a", "b"), lambda p: densities.Beta(p[0], p[1])),
    "betaprime": (("a", "b"), lambda p: densities.BetaPrime(p[0], p[1])),
}


def cmd_transform(cfg: RunConfig) -> int:
    if cfg.family is None or cfg.params is None:
        raise UsageError("transform needs --family and --params")
    if cfg.family not in _FAMILIES:
        raise UsageError(
            f"unknown family {cfg.family!r}; pick one of {sorted(_FAMILIES)}"
        )
    names, build = _FAMILIES[cfg.family]
    try:
        values = [float(t) for t in cfg.params.split(",")]
    except ValueError:
        raise UsageError(f"--params wants numbers, got {cfg.params!r}") from None
    if len(values) != len(names):
        raise UsageError(
            f"{cfg.family} wants {len(names)} parameters ({', '.join(names)})"
        )
    f = build(values)
    curves = transform_curves(f)
    if cfg.out is not None:
        with open(cfg.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "x", "true_pdf", "intervention_pdf"])
            for x, t, q in zip(
                curves.truth.grid, curves.truth.values, curves.intervention.values
            ):
                writer.writerow(["grid", repr(float(x)), repr(float(t)), repr(float(q))])
            med = curves.median
            writer.writerow(
                [
                    "median",
                    repr(float(med)),
                    repr(float(f.pdf(med))),
                    repr(float(curves.intervention.interp(med))),
                ]
            )
    print(
        f"{cfg.family}({cfg.params}): {curves.truth.grid.size} grid points, "
        f"true median {_fmt(curves.median)}"
    )
    return EXIT_OK


def cmd_estimate(cfg: RunConfig) -> int:
    if cfg.data is None:
        raise UsageError("estimate needs --data")
    which = cfg.estimand or "both"
    if which not in ("unit", "covw", "both"):
        raise UsageError(f"--estimand wants unit, covw, or both; got {which!r}")
    v = _parse_v(cfg.v, cfg.x0)
    learner = _parse_learner(cfg.learner)
    data = Dataset.from_csv(cfg.data)
    plan = FoldPlan.from_seed(data.n, cfg.folds, cfg.seed)
    need_lambda = which in ("unit", "both")
    fits = fit_nuisances(data, v, plan, need_lambda=need_lambda, learner=learner)
    reports = []
    if which in ("covw", "both"):
        reports.append(estimate_cov_weighted(data, v, fits, level=cfg.ci_level))
    if which in ("unit", "both"):
        reports.append(estimate_unit_weight(data, v, fits, level=cfg.ci_level))
    doc = {
        "schema_version": SCHEMA_VERSION,
        "n": data.n,
        "reports": [r.json_dict() for r in reports],
    }
    if cfg.out is not None:
        with open(cfg.out, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    for r in reports:
        lo, hi = r.ci
        print(
            f"{r.estimand.label}: {_fmt(r.point)} (se {_fmt(r.std_error)}, "
            f"{_fmt(100 * r.level)}% ci [{_fmt(lo)}, {_fmt(hi)}])"
        )
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "transform": cmd_transform,
    "estimate": cmd_estimate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return _COMMANDS[cfg.subcommand](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateError, SingularFitError, NotADensityError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (
        ValidationError,
        DomainError,
        ConstraintError,
        NoClosedFormError,
        FoldError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ContrastFxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
