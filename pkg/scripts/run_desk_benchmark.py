"""Uniform vs ES vs ESWP at desk scale: metrics CSV, summary table and an SVG plot.

Set ESWP_MNIST_DIR to a directory holding the four MNIST IDX files to use MNIST;
otherwise a seeded 10-class Gaussian mixture stands in.
"""

import argparse
from pathlib import Path

from evolved_sampling.benchmark import desk_benchmark, desk_datasets, summarize
from evolved_sampling.plot import read_metrics, render_svg
from evolved_sampling.trainer import metrics_csv_text


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--out-dir", default="results/desk", help="where to write metrics.csv and accuracy.svg")
    parser.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    parser.add_argument("--epochs", type=int, default=20, help="training epochs")
    parser.add_argument("--timing", action="store_true", help="record wall-clock seconds per epoch")
    args = parser.parse_args()

    train, test, source = desk_datasets()
    seeds = [int(s) for s in args.seeds.split(",")]
    runs = desk_benchmark(train, test, seeds=seeds, epochs=args.epochs)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = metrics_csv_text([(r.run_id, r.strategy, r.metrics) for r in runs], timing=args.timing)
    (out / "metrics.csv").write_text(text, encoding="utf-8", newline="")
    (out / "accuracy.svg").write_text(render_svg(read_metrics(text)), encoding="utf-8", newline="")

    print(f"dataset: {source} ({train.n} train / {test.n} test), seeds {seeds}")
    print(f"{'strategy':<10}{'acc %':>8}{'BP ratio':>10}{'BP samples':>12}")
    for kind, row in summarize(runs).items():
        print(f"{kind:<10}{row['accuracy']:>8.2f}{row['bp_ratio']:>10.4f}{row['bp_samples']:>12.0f}")
    print(f"wrote {out / 'metrics.csv'} and {out / 'accuracy.svg'}")


if __name__ == "__main__":
    main()
