"""Command line front end (``stmix``).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ..errors import StmixError, UsageError
from ..mixture import MixtureParams, simulate_mixture, transform_margins
from ..sbi.campaign import TrainingSet, run_campaign
from ..sbi.features import DEFAULT_SCHEMA, FeatureSchema, featurize
from ..sbi.forest import ForestConfig
from ..sbi.inference import THETA_NAMES, ForestSet, bootstrap_ci, estimate, train_forests
from ..sbi.prior import PriorSpec
from ..simulators import Margin, SpaceTimeLayout
from ..taildep import PairCase, empirical_chi, model_chi_curve, replicate_bin_stats, \
    smooth_surface, theorem1_chi, write_chi_csv
from .io import read_dataset, write_dataset
from .margins import fit_margins_and_pit, write_margins_csv, write_qq_csv
from .preprocess import StudyConfig
from .study import run_study
from .usgs import fetch_usgs, write_series_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text, n=None, name="value"):
    try:
        vals = [float(x) for x in str(text).split(",")]
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise UsageError(f"{name}: expected {n} numbers, got {len(vals)}")
    return vals


def _params(args) -> MixtureParams:
    return MixtureParams(tuple(_floats(args.weights, 4, "--lambda")), args.rho_s, args.rho_t)


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _uniform(d):
    if d.margin is Margin.UNIFORM:
        return d
    if d.margin is Margin.HYPOEXP:
        return transform_margins(d, "uniform")
    raise UsageError("data must be on uniform or hypoexponential margins; run fit-margins first")


def cmd_simulate(args):
    p = _params(args)
    n_side, n_times = (int(x) for x in _floats(args.grid, 2, "--grid"))
    layout = SpaceTimeLayout.grid(n_side, n_times, args.replicates)
    d = simulate_mixture(p, layout, args.seed)
    if args.margin == "uniform":
        d = transform_margins(d, "uniform")
    write_dataset(d, args.out)


def cmd_fit_margins(args):
    d = read_dataset(args.data)
    fit = fit_margins_and_pit(d, args.tau, seed=args.seed)
    write_dataset(fit.uniform, args.out)
    write_margins_csv(fit, d.layout.site_ids, f"{args.out}_margins.csv")
    write_qq_csv(fit, f"{args.out}_qq.csv")


def cmd_featurize(args):
    d = _uniform(read_dataset(args.data))
    z = featurize(d, DEFAULT_SCHEMA)
    lines = [",".join(DEFAULT_SCHEMA.names), ",".join(f"{v:.17g}" for v in z.values)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_train(args):
    if args.data:
        layout = read_dataset(args.data).layout
    else:
        n_side, n_times = (int(x) for x in _floats(args.grid, 2, "--grid"))
        layout = SpaceTimeLayout.grid(n_side, n_times, args.replicates)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.training:
        ts = TrainingSet.read_csv(args.training)
    else:
        ts = run_campaign(PriorSpec(), layout, args.S, args.seed, n_jobs=args.threads)
        ts.write_csv(out / "training.csv")
    fs = train_forests(ts, ForestConfig(args.n_trees, args.min_leaf, seed=args.seed,
                                        n_jobs=args.threads))
    fs.save(out)


def cmd_estimate(args):
    fs = ForestSet.load(args.model)
    theta = estimate(fs, _uniform(read_dataset(args.data)))
    _emit({"estimate": dict(zip(THETA_NAMES, theta.as_array().tolist())),
           "dominant": theta.dominant}, args.out)


def cmd_bootstrap(args):
    fs = ForestSet.load(args.model)
    res = bootstrap_ci(fs, _uniform(read_dataset(args.data)), args.B, args.seed)
    _emit(res.to_dict(), args.out)


def cmd_theory_chi(args):
    w = _floats(args.weights, 4, "--lambda")
    cases = [PairCase(args.case)] if args.case else list(PairCase)
    print("case,chi,dominant,coefficients")
    for c in cases:
        r = theorem1_chi(w, c)
        coef = ";".join(f"{x:.12g}" for x in r.coefficients)
        print(f"{c.value},{r.chi:.12g},{r.dominant},{coef}")


def cmd_chi_curves(args):
    d = _uniform(read_dataset(args.data))
    taus = _floats(args.taus, None, "--taus")
    stats = replicate_bin_stats(d, DEFAULT_SCHEMA.grid, taus, DEFAULT_SCHEMA.q0)
    surfaces = [smooth_surface(empirical_chi(d, t, stats=stats)) for t in taus]
    out = Path(args.out)
    write_chi_csv(out, surfaces)
    if args.weights:
        g = DEFAULT_SCHEMA.grid
        S, T = np.meshgrid(g.s_centers, g.t_centers, indexing="ij")
        lags = np.column_stack([S.ravel(), T.ravel()])
        curve = model_chi_curve(_params(args), lags, taus, args.samples, args.seed)
        with open(out.with_name(out.stem + "_model.csv"), "w", encoding="utf-8") as fh:
            fh.write("tau,h_s,h_t,chi_model\n")
            for k, t in enumerate(taus):
                for (hs, ht), c in zip(lags, curve[:, k]):
                    fh.write(f"{t!r},{hs:.6g},{ht:.6g},{c:.17g}\n")


def cmd_fetch_usgs(args):
    stations = [s for s in args.stations.split(",") if s]
    res = fetch_usgs(stations, args.start, args.end, cache_dir=args.cache_dir,
                     offline=args.offline)
    if args.out:
        write_series_csv(res.series, args.out)
    _emit(res.report, None)
    if res.failures and not res.series:
        raise res.failures[0]


def cmd_run_study(args):
    if not args.config:
        raise UsageError("run-study needs --config pointing to a study JSON file")
    cfg = StudyConfig.from_json(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    _emit(run_study(cfg, offline=args.offline, n_jobs=args.threads), None)


def _add_theta(p, required=True):
    p.add_argument("--lambda", dest="weights", required=required,
                   help="four comma-separated weights summing to 1")
    p.add_argument("--rho-s", type=float, default=0.4)
    p.add_argument("--rho-t", type=float, default=0.4)


def _global_flags():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--config", default=None, help="JSON file of option defaults")
    common.add_argument("--offline", action="store_true", help="read cached downloads only")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    top = _Parser(prog="stmix", parents=[_global_flags()],
                  description="Space-time exceedance mixture: simulation, diagnostics, inference.")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("simulate", cmd_simulate, "simulate the mixture on a regular grid")
    _add_theta(p)
    p.add_argument("--grid", default="5,5", help="sites per side, time points")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--margin", choices=["uniform", "hypoexp"], default="uniform")
    p.add_argument("--out", required=True, help="dataset prefix")

    p = add("fit-margins", cmd_fit_margins, "GPD margins and uniform transform")
    p.add_argument("--data", required=True)
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--out", required=True)

    p = add("featurize", cmd_featurize, "summary statistics of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)

    p = add("train", cmd_train, "simulation campaign and forests")
    p.add_argument("--data", default=None, help="dataset whose layout is used")
    p.add_argument("--grid", default="5,5")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--S", type=int, default=2000)
    p.add_argument("--training", default=None, help="reuse a training CSV")
    p.add_argument("--n-trees", type=int, default=500)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--out", required=True, help="model directory")

    p = add("estimate", cmd_estimate, "point estimate from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)

    p = add("bootstrap", cmd_bootstrap, "bootstrap intervals")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--out", default=None)

    p = add("theory-chi", cmd_theory_chi, "closed-form limiting chi")
    p.add_argument("--lambda", dest="weights", required=True)
    p.add_argument("--case", choices=[c.value for c in PairCase], default=None)

    p = add("chi-curves", cmd_chi_curves, "empirical chi surfaces with optional model overlay")
    p.add_argument("--data", required=True)
    p.add_argument("--taus", default="0.8,0.9,0.95")
    _add_theta(p, required=False)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--out", required=True)

    p = add("fetch-usgs", cmd_fetch_usgs, "download NWIS daily discharge")
    p.add_argument("--stations", required=True)
    p.add_argument("--start", required=True)
    p.add_argument("--end", required=True)
    p.add_argument("--cache-dir", default="nwis_cache")
    p.add_argument("--out", default=None)

    p = add("run-study", cmd_run_study, "full streamflow study from a config file")
    p.add_argument("--output-dir", default=None)

    # subcommand options start out unset so that --config and the global
    # flags can supply values; the real defaults are applied in _parse
    top.subcommand_defaults = {}
    for name, sp in sub.choices.items():
        d = top.subcommand_defaults.setdefault(name, {})
        for a in sp._actions:
            if a.dest in ("help", "func"):
                continue
            if a.dest not in {c.dest for c in common._actions}:
                d[a.dest] = a.default
            a.default = argparse.SUPPRESS
    return top


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    # options given to the subcommand win over --config, which wins over defaults
    defaults = dict(parser.subcommand_defaults[args.command])
    if args.config and args.command != "run-study":
        try:
            conf = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read --config {args.config}: {exc}") from exc
        defaults.update({k.replace("-", "_"): v for k, v in conf.items()})
    for k, v in defaults.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    return args


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parse(sys.argv[1:] if argv is None else argv)
        # single-threaded BLAS keeps results bitwise independent of --threads
        with threadpool_limits(1):
            args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return exc.exit_code
    except StmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
