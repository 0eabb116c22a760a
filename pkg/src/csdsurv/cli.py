"""Command line: split -> fit -> predict -> conformalize -> evaluate -> report.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
The top-level ``--config FILE.json`` supplies defaults keyed by option name
(``repeat_r``, ``handler``, ...); explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats

from . import io
from .baseline import NonConvergenceError, WeibullAftModel, weibull_fit, weibull_predict_all
from .conformal import HANDLERS, POLICIES, CsdConfig, PctMatrix, pct_mean_times, run_csd
from .core import (
    PRESET_LEVEL_COUNTS,
    PercentileGrid,
    SurvivalCurve,
    SurvivalDataset,
    UnboundedCurveError,
    curve_from_pcts,
    stratified_split,
)
from .km import DegenerateConditionalError, km_fit
from .metrics import DegenerateGroupError, NoComparablePairsError, predicted_times
from .metrics import evaluate as evaluate_metrics
from .synthetic import SyntheticSpec, generate_synthetic

REPORT_METRICS = ("c_index", "d_cal", "km_cal", "ibs", "mae_po")

DATA_ERRORS = (
    ValueError,
    KeyError,
    OSError,
    NonConvergenceError,
    DegenerateConditionalError,
    UnboundedCurveError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_schema(p):
    p.add_argument("--time-col", default="time")
    p.add_argument("--event-col", default="event")
    p.add_argument("--feature-cols", default=None, help="comma-separated; default: all other columns")


def _load(path, args) -> SurvivalDataset:
    feats = args.feature_cols.split(",") if args.feature_cols else None
    return io.load_dataset(path, args.time_col, args.event_col, feats)


def _curves(isd) -> tuple[list[SurvivalCurve], PctMatrix | None]:
    if isinstance(isd, PctMatrix):
        grid = isd.grid
        return [curve_from_pcts(row, grid) for row in isd.times], isd
    return isd, None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="csdsurv", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of option defaults")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic Weibull dataset")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--beta0", type=float, default=1.0)
    p.add_argument("--shape", type=float, default=2.0)
    p.add_argument("--censor-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("split", help="stratified split into named files")
    p.add_argument("--input", required=True)
    p.add_argument("--fractions", default="0.81,0.09,0.1")
    p.add_argument("--names", default="train,validation,test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    _add_schema(p)

    p = sub.add_parser("fit", help="fit a baseline model")
    p.add_argument("--model", choices=("weibull_aft", "km_dummy"), required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--scale-multiplier", type=float, default=1.0,
                   help="multiply the fitted Weibull scale (miscalibration fixture)")
    _add_schema(p)

    p = sub.add_parser("predict", help="write ISDs for a dataset")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_schema(p)

    def conformal_args(p):
        p.add_argument("--isd-conformal", required=True, help="ISDs of the validation set")
        p.add_argument("--labels-conformal", required=True, help="labels of the validation set")
        p.add_argument("--isd-test", required=True)
        p.add_argument("--train", required=True, help="training labels (KM estimate)")
        p.add_argument("--isd-train", help="training-set ISDs, needed by the merged policy")
        p.add_argument("--grid", type=int, choices=PRESET_LEVEL_COUNTS, default=19)
        p.add_argument("--repeat-R", "--repeat-r", dest="repeat_r", type=int, default=1000)
        p.add_argument("--policy", choices=POLICIES, default="merged_train_and_validation")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        _add_schema(p)

    p = sub.add_parser("conformalize", help="apply CSD to test ISDs")
    conformal_args(p)
    p.add_argument("--handler", choices=HANDLERS, default="km_sampling")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="time conformalize for each censoring handler")
    conformal_args(p)
    p.add_argument("--handlers", default=",".join(HANDLERS))

    p = sub.add_parser("evaluate", help="compute the metric report")
    p.add_argument("--isd", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--train", required=True, help="training labels (censoring weights)")
    p.add_argument("--out", help="metric file; default stdout")
    p.add_argument("--pp-out", help="P-P plot points (CSV)")
    p.add_argument("--risk", choices=("median", "mean"), default="median")
    p.add_argument("--dcal-levels", type=int, choices=PRESET_LEVEL_COUNTS, default=9)
    p.add_argument("--hl-time", type=float)
    p.add_argument("--hl-groups", type=int, default=10)
    _add_schema(p)

    p = sub.add_parser("report", help="mean and 95%% CI over per-seed metric files")
    p.add_argument("files", nargs="+")
    p.add_argument("--out")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        explicit = {_key(a) for a in argv if a.startswith("--")}
        for key, value in cfg.items():
            key = _key(key)
            if not hasattr(args, key):
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            if key not in explicit:
                setattr(args, key, value)
    return args


def _key(flag: str) -> str:
    return flag.lstrip("-").split("=")[0].replace("-", "_").lower()


def cmd_synth(args, out):
    ds, _ = generate_synthetic(SyntheticSpec(
        n=args.n, feature_dim=args.dim, beta0=args.beta0, shape=args.shape,
        censor_fraction=args.censor_fraction, seed=args.seed,
    ))
    io.save_dataset(args.out, ds)


def cmd_split(args, out):
    ds = _load(args.input, args)
    fractions = [float(f) for f in str(args.fractions).split(",")]
    names = str(args.names).split(",")
    if len(names) != len(fractions):
        raise UsageError("--names and --fractions must have the same length")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, part in zip(names, stratified_split(ds, fractions, args.seed)):
        io.save_dataset(outdir / f"{name}.csv", part)


def cmd_fit(args, out):
    train = _load(args.train, args)
    if args.model == "weibull_aft":
        model = weibull_fit(train, l2=args.l2, tol=args.tol)
        if args.scale_multiplier != 1.0:
            model = model.rescaled(args.scale_multiplier)
    else:
        model = km_fit(train)
    io.save_model(args.out, model, train.feature_names)


def cmd_predict(args, out):
    model, names = io.load_model(args.model_file)
    data = _load(args.data, args)
    if names and list(names) != list(data.feature_names):
        raise ValueError(f"model features {names} differ from data features {list(data.feature_names)}")
    if isinstance(model, WeibullAftModel):
        curves = weibull_predict_all(model, data.features)
    else:
        curves = [model.curve] * len(data)
    io.write_isd(args.out, curves)


def _csd_inputs(args):
    val_curves, _ = _curves(io.read_isd(args.isd_conformal))
    val = _load(args.labels_conformal, args)
    test_curves, _ = _curves(io.read_isd(args.isd_test))
    train = _load(args.train, args)
    if len(val_curves) != len(val):
        raise ValueError("conformal ISDs and labels differ in length")
    if args.policy == "merged_train_and_validation":
        if not args.isd_train:
            raise UsageError("--isd-train is required with the merged policy")
        train_curves, _ = _curves(io.read_isd(args.isd_train))
        if len(train_curves) != len(train):
            raise ValueError("training ISDs and labels differ in length")
        con_curves = list(val_curves) + list(train_curves)
        con = SurvivalDataset.concat([val, train])
    else:
        con_curves, con = list(val_curves), val
    return con_curves, con, test_curves, km_fit(train)


def _config(args, handler):
    return CsdConfig(
        handler=handler,
        repeat_r=args.repeat_r,
        grid=PercentileGrid.preset(args.grid),
        conformal_policy=args.policy,
        seed=args.seed,
    )


def cmd_conformalize(args, out):
    con_curves, con, test_curves, km = _csd_inputs(args)
    result = run_csd(con_curves, con, test_curves, km, _config(args, args.handler), args.workers)
    io.write_isd(args.out, result.pcts)


def cmd_bench(args, out):
    con_curves, con, test_curves, km = _csd_inputs(args)
    for handler in str(args.handlers).split(","):
        cfg = _config(args, handler)
        start = time.perf_counter()
        run_csd(con_curves, con, test_curves, km, cfg, args.workers)
        out.write(f"handler={handler} seconds={time.perf_counter() - start:.6f}\n")


def cmd_evaluate(args, out):
    curves, pcts = _curves(io.read_isd(args.isd))
    test = _load(args.labels, args)
    train = _load(args.train, args)
    if len(curves) != len(test):
        raise ValueError(f"{len(curves)} ISDs for {len(test)} subjects")
    if pcts is not None:
        # unclamped percentile times keep the ordering of adjusted predictions
        pred = pcts.column(0.5) if args.risk == "median" else pct_mean_times(pcts)
    else:
        pred = predicted_times(curves, args.risk)
    report = evaluate_metrics(
        curves, test, train, pred_times=pred, grid=PercentileGrid.preset(args.dcal_levels),
        hl_time=args.hl_time, hl_groups=args.hl_groups,
    )
    text = io.format_metrics(report.as_dict())
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)
    if args.pp_out:
        io.write_pp_points(args.pp_out, report.pp_points)


def summarize(values) -> tuple[float, float, float]:
    """Mean and two-sided 95% t-interval."""
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    if v.size < 2:
        return mean, mean, mean
    half = float(stats.t.ppf(0.975, v.size - 1) * v.std(ddof=1) / np.sqrt(v.size))
    return mean, mean - half, mean + half


def cmd_report(args, out):
    runs = [io.read_metrics(f) for f in args.files]
    lines = [f"runs={len(runs)}"]
    keys = [k for k in REPORT_METRICS if all(k in r for r in runs)]
    if "hl" in runs[0] and all("hl" in r for r in runs):
        keys.append("hl")
    for key in keys:
        mean, lo, hi = summarize([r[key] for r in runs])
        lines += [f"{key}.mean={mean!r}", f"{key}.ci_low={lo!r}", f"{key}.ci_high={hi!r}"]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)


COMMANDS = {
    "synth": cmd_synth,
    "split": cmd_split,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "conformalize": cmd_conformalize,
    "bench": cmd_bench,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None, out=None, err=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        err.write(f"csdsurv: usage error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (NoComparablePairsError, DegenerateGroupError) + DATA_ERRORS as exc:
        err.write(f"csdsurv: data error: {exc}\n")
        return 2
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
