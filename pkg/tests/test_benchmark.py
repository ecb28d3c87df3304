import numpy as np

from evolved_sampling.benchmark import MNIST_FILES, desk_config, desk_datasets, summarize, desk_benchmark
from evolved_sampling.data import IndexedDataset, write_idx
from evolved_sampling.sampler import StrategyKind


def fake_mnist(root, n):
    rng = np.random.default_rng(0)
    ds = IndexedDataset(rng.integers(0, 256, (n, 784)) / 255.0, rng.integers(0, 10, n), classes=10)
    write_idx(ds, root / MNIST_FILES[0], root / MNIST_FILES[1], shape=(28, 28))
    write_idx(ds, root / MNIST_FILES[2], root / MNIST_FILES[3], shape=(28, 28))


def test_mnist_used_when_present(tmp_path, monkeypatch):
    fake_mnist(tmp_path, 300)
    monkeypatch.setenv("ESWP_MNIST_DIR", str(tmp_path))
    train, test, source = desk_datasets()
    assert source == "mnist" and (train.n, train.d, train.classes) == (300, 784, 10)


def test_fallback_mixture(tmp_path, monkeypatch):
    monkeypatch.setenv("ESWP_MNIST_DIR", str(tmp_path))
    train, test, source = desk_datasets()
    assert source == "gaussian_mixture"
    assert (train.n, test.n, train.d, train.classes) == (10_000, 2_000, 50, 10)


def test_desk_config_defaults(tmp_path):
    train, _, _ = desk_datasets(mnist_dir="")
    es = desk_config(StrategyKind.ES, train, seed=1)
    assert (es.epochs, es.meta_batch, es.mini_batch, es.anneal_ratio) == (20, 128, 32, 0.05)
    eswp = desk_config(StrategyKind.ESWP, train, seed=1)
    assert eswp.prune.ratio == 0.2 and eswp.strategy.betas.beta2 == 0.8


def test_summary_ratios(tmp_path):
    fake_mnist(tmp_path, 400)
    train, test, _ = desk_datasets(str(tmp_path))
    s = summarize(desk_benchmark(train, test, seeds=(0,), epochs=2))
    assert s["Uniform"]["bp_ratio"] == 1.0
    assert s["ES"]["bp_ratio"] < 1.0 and s["ESWP"]["bp_ratio"] < s["ES"]["bp_ratio"]
