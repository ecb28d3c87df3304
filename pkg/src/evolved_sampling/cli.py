"""``eswp`` command line: train, sweep, freq, oracle, plot, bpcount.

Exit codes: 0 success, 2 bad arguments/config/input, 3 numeric failure at run time.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from evolved_sampling import analysis
from evolved_sampling.errors import FormatError, NumericError
from evolved_sampling.experiment import (
    SWEEP_AXES,
    ConfigError,
    build_train_config,
    load_experiment,
    sweep_settings,
)
from evolved_sampling.plot import read_metrics, render_svg
from evolved_sampling.trainer import Trainer, bp_pass_count, write_metrics_csv


class UsageError(Exception):
    pass


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def cmd_train(args) -> int:
    exp = load_experiment(args.config, args.override)
    specs = exp.run_specs(args.run)
    if not specs:
        raise ConfigError(f"no runs match {args.run}")
    train, test = exp.load_data()
    ckpt_dir = args.checkpoint_dir or exp.output["checkpoint_dir"]
    results = []
    for spec in specs:
        trainer = Trainer(spec.config, train, test)
        trainer.run()
        if ckpt_dir:
            Path(ckpt_dir).mkdir(parents=True, exist_ok=True)
            trainer.save_checkpoint(Path(ckpt_dir) / f"{spec.run_id}.ckpt")
        results.append((spec.run_id, spec.config.strategy.kind.value, trainer.metrics))
        m = trainer.metrics
        print(
            f"{spec.run_id}: test_acc={m.final_test_acc:.4f} bp_samples={m.bp_samples} "
            f"updates={m.updates} seconds={m.total_seconds:.2f}",
            file=sys.stderr,
        )
    out = args.metrics or exp.output["metrics_csv"]
    timing = exp.output["timing"] if args.timing is None else args.timing == "on"
    write_metrics_csv(out, results, timing=bool(timing))
    return 0


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {args.axis!r} (expected one of {', '.join(SWEEP_AXES)})")
    exp = load_experiment(args.config, args.override)
    name = args.run or next(iter(exp.runs))
    if name not in exp.runs:
        raise ConfigError(f"no run named {name!r}")
    train, test = exp.load_data()
    spec = exp.model_spec(train)
    base = exp.runs[name]
    seeds = base["seeds"] if base["seeds"] is not None else [base["seed"]]
    configs = []
    for value in args.values:
        settings = sweep_settings(base, args.axis, value)
        configs.append([build_train_config(settings, spec, s, f"runs.{name}") for s in seeds])

    def run_one(cfgs):
        metrics = [Trainer(cfg, train, test).run().metrics for cfg in cfgs]
        return (
            float(np.mean([m.final_test_acc for m in metrics])),
            metrics[0].bp_samples,
            sum(m.total_seconds for m in metrics),
        )

    workers = max(1, int(os.environ.get("ESWP_THREADS", "1") or 1))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(run_one, configs))
    rows = [
        [repr(float(v)), repr(acc), str(bp), repr(secs)]
        for v, (acc, bp, secs) in zip(args.values, outcomes)
    ]
    _emit(_csv_text(["axis_value", "final_test_acc", "cum_bp_samples", "total_seconds"], rows), args.out)
    return 0


def cmd_freq(args) -> int:
    rows = []
    for r in analysis.gain_table(args.beta1, args.beta2, args.omegas, args.cycles):
        rows.append([repr(r[k]) for k in ("omega", "continuous_gain", "discrete_gain", "empirical_gain")])
    _emit(_csv_text(["omega", "continuous_gain", "discrete_gain", "empirical_gain"], rows), args.out)
    return 0


def cmd_oracle(args) -> int:
    if args.trace_len < 1:
        raise UsageError("--trace-len must be positive")
    rng = np.random.default_rng(args.seed)
    losses = rng.uniform(0.0, 2.0, args.trace_len)
    s0 = 1.0 / args.n
    rec = analysis.recursion_weights(losses, args.beta1, args.beta2, s0)
    exp = analysis.expansion_weights(losses, args.beta1, args.beta2, s0)
    gap = np.abs(rec - exp)
    rows = [[str(t + 1), repr(float(rec[t])), repr(float(exp[t])), repr(float(gap[t]))]
            for t in range(losses.size)]
    _emit(_csv_text(["t", "recursion_w", "expansion_w", "gap"], rows), args.out)
    print(f"max gap {gap.max():.3e}", file=sys.stderr)
    return 0


def cmd_plot(args) -> int:
    try:
        text = Path(args.metrics_csv).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"no such file: {args.metrics_csv}") from None
    svg = render_svg(read_metrics(text))
    Path(args.out_svg).write_text(svg, encoding="utf-8", newline="")
    return 0


def cmd_bpcount(args) -> int:
    baseline, es = bp_pass_count(args.B, args.b, args.b_micro)
    sys.stdout.write(_csv_text(["baseline_passes", "es_passes"], [[baseline, es]]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="eswp", description=__doc__, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run every configured training run", formatter_class=fmt)
    p.add_argument("config", help="experiment TOML file")
    p.add_argument("override", nargs="*", default=[], help="key=value overrides (e.g. seed=7, runs.es.beta1=0.3)")
    p.add_argument("--run", action="append", default=None, help="only run these named runs (repeatable)")
    p.add_argument("--metrics", default=None, help="metrics CSV path (default: output.metrics_csv)")
    p.add_argument("--checkpoint-dir", default=None, help="write <run_id>.ckpt here after training")
    p.add_argument("--timing", choices=("on", "off"), default=None,
                   help="record epoch wall-clock seconds (default: output.timing)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="rerun one run across values of one parameter", formatter_class=fmt)
    p.add_argument("config", help="experiment TOML file")
    p.add_argument("override", nargs="*", default=[], help="key=value overrides")
    p.add_argument("--axis", required=True, help=f"one of: {', '.join(SWEEP_AXES)}")
    p.add_argument("--values", required=True, type=_float_list, help="comma-separated values")
    p.add_argument("--run", default=None, help="run to sweep (default: first run)")
    p.add_argument("--out", default=None, help="aggregate CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("freq", help="gain of the weight filter at given frequencies", formatter_class=fmt)
    p.add_argument("--beta1", type=float, default=0.2, help="beta1")
    p.add_argument("--beta2", type=float, default=0.9, help="beta2")
    p.add_argument("--omegas", type=_float_list, required=True, help="comma-separated angular frequencies in (0, pi]")
    p.add_argument("--cycles", type=int, default=20, help="periods fitted per frequency")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_freq)

    p = sub.add_parser("oracle", help="recursion vs explicit expansion on a random trace", formatter_class=fmt)
    p.add_argument("--beta1", type=float, default=0.2, help="beta1")
    p.add_argument("--beta2", type=float, default=0.9, help="beta2 (must be < 1)")
    p.add_argument("--trace-len", type=int, required=True, help="number of steps")
    p.add_argument("--seed", type=int, default=0, help="seed for the Uniform[0, 2] loss trace")
    p.add_argument("--n", type=int, default=1000, help="dataset size; initial score is 1/n")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plot", help="SVG of test accuracy vs cumulative BP samples", formatter_class=fmt)
    p.add_argument("metrics_csv", help="metrics CSV written by train")
    p.add_argument("out_svg", help="output SVG path")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("bpcount", help="backward passes per update under gradient accumulation",
                       formatter_class=fmt)
    p.add_argument("--B", type=int, required=True, help="meta-batch size")
    p.add_argument("--b", type=int, required=True, help="mini-batch size")
    p.add_argument("--b-micro", type=int, required=True, help="micro-batch size per pass")
    p.set_defaults(func=cmd_bpcount)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"eswp: numeric error: {exc}", file=sys.stderr)
        return 3
    except FloatingPointError as exc:
        print(f"eswp: numeric error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FormatError, UsageError, ValueError, OSError) as exc:
        print(f"eswp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
