import csv
import io
import xml.etree.ElementTree as ET

import pytest

from evolved_sampling.cli import build_parser, main
from evolved_sampling.trainer import METRICS_COLUMNS

CONFIG = """
schema = "eswp-experiment/1"
[dataset]
n = 720
d = 8
classes = 3
separation = 2.0
[output]
timing = false
[defaults]
epochs = 3
meta_batch = 64
[runs.uniform]
strategy = "Uniform"
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(CONFIG)
    return path


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_train_writes_csv(config, tmp_path):
    out = tmp_path / "m.csv"
    assert main(["train", str(config), "--metrics", str(out)]) == 0
    data = rows(out.read_text())
    assert len(data) == 3
    assert list(data[0]) == list(METRICS_COLUMNS)
    assert out.read_bytes().count(b"\r") == 0


def test_train_deterministic_with_override(config, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["train", str(config), "seed=7", "--metrics", str(a)]) == 0
    assert main(["train", str(config), "seed=7", "--metrics", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_train_checkpoint(config, tmp_path):
    ckpt = tmp_path / "ck"
    assert main(["train", str(config), "--metrics", str(tmp_path / "m.csv"), "--checkpoint-dir", str(ckpt)]) == 0
    assert (ckpt / "uniform.ckpt").read_bytes().startswith(b"ESWP1")


def test_train_validation_exit_codes(config, tmp_path, capsys):
    assert main(["train", str(config), "mini_batch=100", "--metrics", str(tmp_path / "m.csv")]) == 2
    assert "mini_batch" in capsys.readouterr().err
    assert main(["train", str(config), "runs.uniform.colour=1"]) == 2
    assert "runs.uniform.colour" in capsys.readouterr().err
    assert main(["train", str(tmp_path / "absent.toml")]) == 2


def test_train_numeric_failure_exit_3(config, tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert main(["train", str(config), "lr=1e300", "momentum=0.0", "--metrics", str(out)]) == 3
    assert "numeric" in capsys.readouterr().err


def test_sweep(config, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", str(config), "strategy=ESWP", "--axis", "prune_ratio",
                 "--values", "0,0.2,0.3,0.5", "--out", str(out)]) == 0
    data = rows(out.read_text())
    assert [float(r["axis_value"]) for r in data] == [0.0, 0.2, 0.3, 0.5]
    assert list(data[0]) == ["axis_value", "final_test_acc", "cum_bp_samples", "total_seconds"]
    bp = [int(r["cum_bp_samples"]) for r in data]
    assert bp == sorted(bp, reverse=True)


def test_sweep_beta2_one_runs(config, tmp_path, monkeypatch):
    monkeypatch.setenv("ESWP_THREADS", "2")
    out = tmp_path / "s.csv"
    assert main(["sweep", str(config), "strategy=ES", "--axis", "beta2", "--values", "0.9,1.0",
                 "--out", str(out)]) == 0
    assert len(rows(out.read_text())) == 2


def test_sweep_unknown_axis(config):
    assert main(["sweep", str(config), "--axis", "lr", "--values", "0.1"]) == 2


def test_freq(capsys):
    assert main(["freq", "--beta1", "0.2", "--beta2", "0.9", "--omegas", "0.001"]) == 0
    (row,) = rows(capsys.readouterr().out)
    for key in ("continuous_gain", "discrete_gain", "empirical_gain"):
        assert float(row[key]) == pytest.approx(1.0, abs=0.05)


def test_oracle(capsys):
    assert main(["oracle", "--trace-len", "1000", "--seed", "3"]) == 0
    data = rows(capsys.readouterr().out)
    assert len(data) == 1000 and data[0]["t"] == "1"
    assert max(float(r["gap"]) for r in data) <= 1e-10


@pytest.mark.parametrize(
    "argv",
    [["oracle"], ["freq"], ["bpcount", "--B", "4"], ["freq", "--omegas", "x,y"], ["train"], ["nosuch"]],
)
def test_bad_flags_exit_2(argv, capsys):
    assert main(argv) == 2


def test_oracle_beta2_one_rejected():
    assert main(["oracle", "--trace-len", "5", "--beta2", "1.0"]) == 2


def test_bpcount(capsys):
    assert main(["bpcount", "--B", "32", "--b", "8", "--b-micro", "8"]) == 0
    assert capsys.readouterr().out == "baseline_passes,es_passes\n4,1\n"


def two_run_csv(tmp_path):
    text = ",".join(METRICS_COLUMNS) + "\n"
    for run in ("a", "b"):
        for e in range(3):
            text += f"{run},Uniform,{e},0.5,{0.5 + 0.1 * e},nan,{100 * (e + 1)},{100 * (e + 1)},{e + 1}\n"
    path = tmp_path / "m.csv"
    path.write_text(text)
    return path


def test_plot(tmp_path):
    src = two_run_csv(tmp_path)
    assert main(["plot", str(src), str(tmp_path / "a.svg")]) == 0
    assert main(["plot", str(src), str(tmp_path / "b.svg")]) == 0
    svg = (tmp_path / "a.svg").read_bytes()
    assert svg == (tmp_path / "b.svg").read_bytes()
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == 2
    labels = [t.text for t in root.iter(f"{ns}text")]
    assert "a" in labels and "b" in labels


def test_plot_rejects_bad_csv(tmp_path, capsys):
    empty = tmp_path / "e.csv"
    empty.write_text(",".join(METRICS_COLUMNS) + "\n")
    assert main(["plot", str(empty), str(tmp_path / "o.svg")]) == 2
    bad = two_run_csv(tmp_path)
    lines = bad.read_text().splitlines()
    lines[3] = lines[3].replace(",0.7,", ",oops,")
    bad.write_text("\n".join(lines) + "\n")
    assert main(["plot", str(bad), str(tmp_path / "o.svg")]) == 2
    assert "row 4" in capsys.readouterr().err
    assert main(["plot", str(tmp_path / "missing.csv"), str(tmp_path / "o.svg")]) == 2


@pytest.mark.parametrize("command", ["train", "sweep", "freq", "oracle", "plot", "bpcount"])
def test_help_lists_flags_with_defaults(command):
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[command]
    text = sub.format_help()
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
        if action.option_strings and action.default is not None and action.help and action.dest != "help":
            assert "default:" in text


def test_missing_idx_files_exit_2(tmp_path, capsys):
    cfg = tmp_path / "idx.toml"
    cfg.write_text('[dataset]\nkind = "idx"\ntrain_images = "a"\ntrain_labels = "b"\n'
                   'test_images = "c"\ntest_labels = "d"\n')
    assert main(["train", str(cfg)]) == 2
    assert "dataset" in capsys.readouterr().err
