"""Command-line entry point.

Exit codes: 0 success, 2 validation failure (bad input, configuration, or
failed propriety conditions), 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import chain_summary, dic
from .errors import ConditionError, ConditionWarning, NumericalError, UnerError
from .io import RunManifest, read_population_csv, read_unit_csv, write_table, write_unit_csv
from .model import ModelKind, PriorConfig, Strictness, check_counts
from .prediction import predict_finite_population, summarize_mu
from .samplers import RNG_ALGORITHM, ChainConfig, fit
from .simulation import (
    DESIGN_RATES,
    DESK_CHAIN,
    DESK_REPS,
    FULL_CHAIN,
    FULL_REPS,
    SCENARIOS,
    THREADS_ENV,
    ScenarioConfig,
    gen_scenario,
    run_design_sim,
    run_model_sim,
    synthetic_populations,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

log = logging.getLogger("uner")


def _chain_args(p, iters, burnin):
    p.add_argument("--iters", type=int, default=iters, help="total sweeps per chain")
    p.add_argument("--burnin", type=int, default=burnin, help="sweeps discarded before retention")
    p.add_argument("--thin", type=int, default=1, help="keep every k-th post-burn-in sweep")
    p.add_argument("--seed", type=int, default=42, help="base random seed")


def _prior_args(p):
    p.add_argument("--a", type=int, default=5, help="indicator-count threshold of the tau2 prior switch")
    p.add_argument("--b1", type=float, default=None, help="IG shape for tau2 when z <= a (requires --b2)")
    p.add_argument("--b2", type=float, default=None, help="IG rate for tau2 when z <= a (requires --b1)")
    p.add_argument(
        "--auto-hyper", action="store_true",
        help="derive b1 = V + 2, b2 = V (V + 1) from the within-area variance V "
        "(implied when --b1/--b2 are omitted)",
    )


def _data_args(p):
    p.add_argument("--data", required=True, type=Path, help="unit CSV: area_id,y,x1,...,xq")
    p.add_argument("--intercept", action="store_true", help="prepend a constant-1 covariate")
    p.add_argument("--model", choices=[k.value for k in ModelKind], default="uner", help="model to fit")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for output files")


class _DefaultsFormatter(argparse.ArgumentDefaultsHelpFormatter):
    # None means "resolved later"; the help text already says how
    def _get_help_string(self, action):
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _DefaultsFormatter
    parser = argparse.ArgumentParser(
        prog="uner",
        description="Gibbs samplers for nested error regression with uncertain random effects. "
        f"Threads for simulations: ${THREADS_ENV} (default 1).",
        formatter_class=fmt,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit UNER or NER to unit-level data", formatter_class=fmt)
    _data_args(p)
    _chain_args(p, FULL_CHAIN.iterations, FULL_CHAIN.burnin)
    _prior_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict-fp", help="predict finite-population means", formatter_class=fmt)
    _data_args(p)
    p.add_argument("--population", required=True, type=Path, help="population CSV: area_id,N,xbar1,...,xbarq")
    _chain_args(p, FULL_CHAIN.iterations, FULL_CHAIN.burnin)
    _prior_args(p)
    p.set_defaults(func=cmd_predict_fp)

    p = sub.add_parser("simulate", help="run the model-based or design-based study", formatter_class=fmt)
    p.add_argument("--study", choices=["model", "design"], default="model", help="model-based or design-based study")
    p.add_argument("--scenario", choices=list(SCENARIOS) + ["all"], default="all", help="effect scenario (model study)")
    p.add_argument("--n", type=int, default=6, help="units per area (model study)")
    p.add_argument("--m", type=int, default=50, help="areas (model study) or populations (design study)")
    p.add_argument("--reps", type=int, default=None, help=f"replications (default {DESK_REPS}, {FULL_REPS} with --full-scale)")
    p.add_argument("--pi", type=float, nargs="+", default=list(DESIGN_RATES), help="sampling rates (design study)")
    p.add_argument("--pop-size", type=int, default=None, help="common population size (design study; default varies 20-45)")
    p.add_argument("--full-scale", action="store_true", help="1000 replications, 5000 draws after 1000 burn-in")
    p.add_argument("--iters", type=int, default=None, help=f"sweeps per chain (default {DESK_CHAIN.iterations})")
    p.add_argument("--burnin", type=int, default=None, help=f"burn-in (default {DESK_CHAIN.burnin})")
    p.add_argument("--thin", type=int, default=1, help="keep every k-th post-burn-in sweep")
    p.add_argument("--seed", type=int, default=20160501, help="base random seed")
    p.add_argument("--a", type=int, default=5, help="indicator-count threshold of the tau2 prior switch")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for output files")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", help="write one synthetic scenario dataset as unit CSV", formatter_class=fmt)
    p.add_argument("--scenario", choices=list(SCENARIOS), default="S2", help="effect scenario")
    p.add_argument("--n", type=int, default=6, help="units per area")
    p.add_argument("--m", type=int, default=50, help="areas")
    p.add_argument("--rep", type=int, default=0, help="replication index")
    p.add_argument("--seed", type=int, default=20160501, help="base random seed")
    p.add_argument("--out", type=Path, required=True, help="output CSV path")
    p.set_defaults(func=cmd_generate)
    return parser


def _prior_from(args) -> PriorConfig:
    explicit = args.b1 is not None or args.b2 is not None
    if explicit and not args.auto_hyper:
        return PriorConfig(a=args.a, b1=args.b1, b2=args.b2, auto_hyper=False)
    return PriorConfig(a=args.a, auto_hyper=True)


def _chain_from(args) -> ChainConfig:
    return ChainConfig(iterations=args.iters, burnin=args.burnin, thin=args.thin, seed=args.seed)


def _gate(data, a, model):
    """Refuse on failed propriety conditions; warn on failed finite-variance conditions."""
    if ModelKind(model) is not ModelKind.UNER:
        return
    report = check_counts(data.N, data.q, data.m, a, Strictness.PROPRIETY)
    if not report.passed:
        raise ConditionError(report.message(), report.failures)
    fv = check_counts(data.N, data.q, data.m, a, Strictness.FINITE_VARIANCE)
    if not fv.passed:
        print(f"warning: {fv.message()}", file=sys.stderr)


def _resolved_config(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("func", "_t0")}


def cmd_fit(args) -> int:
    data = read_unit_csv(args.data, intercept=args.intercept)
    _gate(data, args.a, args.model)
    prior = _prior_from(args)
    cfg = _chain_from(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditionWarning)
        chain = fit(data, args.model, prior, cfg)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    names = ["parameter", "mean", "sd", "ci_lo", "ci_hi", "split_half", "flagged"]
    rows = [
        {"parameter": s.name, "mean": s.mean, "sd": s.sd, "ci_lo": s.ci_lo, "ci_hi": s.ci_hi,
         "split_half": s.split_half, "flagged": s.flagged}
        for s in chain_summary(chain)
    ]
    write_table(args.out_dir / "params.csv", names, rows)

    mu = summarize_mu(chain)
    area_cols = ["area_id", "mean", "sd", "ci_lo", "ci_hi"]
    if chain.model_kind is ModelKind.UNER:
        area_cols.append("p_tilde")
    write_table(args.out_dir / "areas.csv", area_cols, mu.rows())

    rep = dic(chain, data)
    write_table(
        args.out_dir / "dic.csv",
        ["model", "dic", "dbar", "d_at_mean", "p_d", "negative_p_d"],
        [{"model": chain.model_kind.value, "dic": rep.dic, "dbar": rep.dbar,
          "d_at_mean": rep.d_at_mean, "p_d": rep.p_d, "negative_p_d": rep.negative_p_d}],
    )
    config = _resolved_config(args)
    if chain.prior is not None:
        config["resolved_prior"] = {"a": chain.prior.a, "b1": chain.prior.b1, "b2": chain.prior.b2}
    return _finish(args, config, data.fingerprint, ["params.csv", "areas.csv", "dic.csv"])


def cmd_predict_fp(args) -> int:
    data = read_unit_csv(args.data, intercept=args.intercept)
    spec = read_population_csv(args.population, intercept=args.intercept)
    _gate(data, args.a, args.model)
    prior = _prior_from(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditionWarning)
        pred = predict_finite_population(data, spec, args.model, prior, _chain_from(args))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    s = pred.summary
    rows = [
        {"area_id": a, "N": pred.sizes[i], "n": pred.n[i], "mean": s.point[i], "sd": s.sd[i],
         "ci_lo": s.ci_lo[i], "ci_hi": s.ci_hi[i]}
        for i, a in enumerate(s.area_ids)
    ]
    write_table(args.out_dir / "fp.csv", ["area_id", "N", "n", "mean", "sd", "ci_lo", "ci_hi"], rows)
    return _finish(args, _resolved_config(args), data.fingerprint, ["fp.csv"])


def cmd_simulate(args) -> int:
    base = FULL_CHAIN if args.full_scale else DESK_CHAIN
    chain = ChainConfig(
        iterations=args.iters if args.iters is not None else base.iterations,
        burnin=args.burnin if args.burnin is not None else base.burnin,
        thin=args.thin,
    )
    reps = args.reps if args.reps is not None else (FULL_REPS if args.full_scale else DESK_REPS)
    prior = PriorConfig(a=args.a)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    config = _resolved_config(args)
    config.update(reps=reps, chain_iterations=chain.iterations, chain_burnin=chain.burnin)

    if args.study == "model":
        scenarios = SCENARIOS if args.scenario == "all" else (args.scenario,)
        rows, reps_rows = [], []
        for sc in scenarios:
            res = run_model_sim(ScenarioConfig(sc, args.n, args.m, reps=reps, base_seed=args.seed),
                                chain, chain, prior)
            rows.extend(vars(r) for r in res.rows)
            for rec in res.records:
                for i in range(rec.truth.shape[0]):
                    reps_rows.append({
                        "scenario": sc, "rep": rec.r, "model": rec.model, "area": i,
                        "estimate": rec.estimate[i], "truth": rec.truth[i],
                        "ci_lo": rec.ci_lo[i], "ci_hi": rec.ci_hi[i],
                    })
        write_table(args.out_dir / "table1.csv", ["n", "m", "scenario", "model", "mse", "bias", "cp", "reps"], rows)
        write_table(
            args.out_dir / "replications.csv",
            ["scenario", "rep", "model", "area", "estimate", "truth", "ci_lo", "ci_hi"],
            reps_rows,
        )
        outputs = ["table1.csv", "replications.csv"]
    else:
        scenario = "S2" if args.scenario == "all" else args.scenario
        pop = synthetic_populations(m=args.m, sizes=args.pop_size, scenario=scenario, seed=args.seed)
        rows, cov_rows = [], []
        for rate in args.pi:
            res = run_design_sim(pop, rate, reps, chain, prior, base_seed=args.seed)
            ratio = res.ratio
            for i, a in enumerate(res.area_ids):
                rows.append({
                    "pi": rate, "area_id": a, "N": res.sizes[i], "n": res.n[i],
                    "smse_uner": res.smse["uner"][i], "smse_ner": res.smse["ner"][i], "ratio": ratio[i],
                })
            cov_rows.append({
                "pi": rate, "cp_uner": res.coverage["uner"], "cp_ner": res.coverage["ner"],
                "median_ratio": float(np.nanmedian(ratio)) if np.any(np.isfinite(ratio)) else float("nan"),
            })
        write_table(args.out_dir / "smse.csv", ["pi", "area_id", "N", "n", "smse_uner", "smse_ner", "ratio"], rows)
        write_table(args.out_dir / "design_summary.csv", ["pi", "cp_uner", "cp_ner", "median_ratio"], cov_rows)
        outputs = ["smse.csv", "design_summary.csv"]
    return _finish(args, config, "", outputs)


def cmd_generate(args) -> int:
    rep = gen_scenario(ScenarioConfig(args.scenario, args.n, args.m, base_seed=args.seed), args.rep)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_unit_csv(args.out, rep.data)
    print(rep.data.fingerprint)
    return EXIT_OK


def _finish(args, config, fingerprint, outputs) -> int:
    manifest = RunManifest(
        command=args.command,
        config=config,
        seed=args.seed,
        dataset_fingerprint=fingerprint,
        version=__version__,
        duration_s=time.perf_counter() - args._t0,
        outputs=outputs,
        rng_algorithm=RNG_ALGORITHM,
    )
    manifest.write(args.out_dir / "manifest.json")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args._t0 = time.perf_counter()
    try:
        return args.func(args)
    except ConditionError as exc:
        print(f"error: posterior propriety conditions fail: {'; '.join(exc.failures) or exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UnerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
