import pytest

from evolved_sampling.experiment import (
    RUN_DEFAULTS,
    ConfigError,
    apply_overrides,
    build_train_config,
    load_experiment,
    parse_experiment,
    parse_override,
    sweep_settings,
)
from evolved_sampling.models import ModelSpec
from evolved_sampling.sampler import BetaParams, StrategyKind

SPEC = ModelSpec("logistic", d=4, classes=3)

TOML = """
schema = "eswp-experiment/1"
[dataset]
n = 600
d = 4
classes = 3
[defaults]
epochs = 2
[runs.base]
strategy = "Uniform"
[runs.es]
strategy = "ES"
seeds = [1, 2]
"""


def settings(**kw):
    out = dict(RUN_DEFAULTS)
    out.update(kw)
    return out


def test_load_and_expand_runs(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(TOML)
    exp = load_experiment(path)
    specs = exp.run_specs()
    assert [s.run_id for s in specs] == ["base", "es-s1", "es-s2"]
    assert specs[1].config.strategy.betas == BetaParams(0.2, 0.9)
    assert specs[2].config.seed == 2
    assert all(s.config.epochs == 2 for s in specs)
    assert [s.run_id for s in exp.run_specs(["es"])] == ["es-s1", "es-s2"]
    train, test = exp.load_data()
    assert (train.n, test.n) == (500, 100)


def test_strategy_defaults():
    es = build_train_config(settings(strategy="ES"), SPEC, 0)
    assert (es.meta_batch, es.mini_batch, es.anneal_ratio, es.prune.ratio) == (128, 32, 0.05, 0.0)
    eswp = build_train_config(settings(strategy="ESWP"), SPEC, 0)
    assert eswp.prune.ratio == 0.2 and eswp.strategy.betas == BetaParams(0.2, 0.8)
    uni = build_train_config(settings(), SPEC, 0)
    assert uni.anneal_ratio == 0.0
    nondif = build_train_config(settings(strategy="NonDif", beta1=0.7, beta2=0.7), SPEC, 0)
    assert nondif.strategy.betas == BetaParams(0.7, 0.7)


@pytest.mark.parametrize(
    "text,match",
    [
        ('bogus = 1', "unknown key bogus"),
        ('[runs.a]\nstrategy = "ES"\nbeta3 = 0.1', "unknown key runs.a.beta3"),
        ('[dataset]\nkind = "cifar"', "dataset.kind"),
        ('schema = "eswp-experiment/9"', "schema"),
        ('[output]\nplot = true', "unknown key output.plot"),
    ],
)
def test_rejections(text, match):
    import sys

    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with pytest.raises(ConfigError, match=match):
        parse_experiment(tomllib.loads(text))


def test_bad_values_name_the_key():
    with pytest.raises(ConfigError, match="mini_batch"):
        build_train_config(settings(mini_batch=300), SPEC, 0, where="runs.x")
    with pytest.raises(ConfigError, match="runs.x.strategy"):
        build_train_config(settings(strategy="Greedy"), SPEC, 0, where="runs.x")
    with pytest.raises(ConfigError, match="prune_ratio"):
        build_train_config(settings(strategy="ESWP", prune_ratio=1.5), SPEC, 0, where="runs.x")


def test_overrides():
    assert parse_override("seed=7") == (["seed"], 7)
    assert parse_override("runs.es.strategy=ESWP") == (["runs", "es", "strategy"], "ESWP")
    assert parse_override("seeds=[1, 2]") == (["seeds"], [1, 2])
    doc = {"runs": {"a": {"seed": 1}, "b": {}}}
    out = apply_overrides(doc, ["seed=9", "runs.a.epochs=3"])
    assert out["runs"]["a"] == {"seed": 9, "epochs": 3}
    assert out["runs"]["b"] == {"seed": 9}
    assert out["defaults"] == {"seed": 9}
    assert doc == {"runs": {"a": {"seed": 1}, "b": {}}}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["nokey"])
    with pytest.raises(ConfigError, match="unknown key colour"):
        apply_overrides({}, ["colour=red"])


def test_sweep_settings():
    base = settings(strategy="ES", mini_batch=16)
    assert sweep_settings(base, "b_over_B", 0.5)["mini_batch"] is None
    nd = sweep_settings(settings(strategy="NonDif"), "beta2", 0.3)
    assert nd["beta1"] == nd["beta2"] == 0.3
    cfg = build_train_config(sweep_settings(base, "beta2", 1.0), SPEC, 0)
    assert cfg.strategy.kind is StrategyKind.ES and cfg.strategy.betas.beta2 == 1.0
    with pytest.raises(ConfigError):
        sweep_settings(base, "lr", 0.1)


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_experiment("/nonexistent/exp.toml")
