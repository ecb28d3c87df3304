import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evolved_sampling import analysis
from evolved_sampling.errors import NumericError
from evolved_sampling.sampler import (
    DEFAULT_BETAS,
    BetaParams,
    SamplerState,
    Strategy,
    StrategyKind,
    init_state,
    probability_snapshot,
    set_current_losses,
    update_sample,
    update_samples,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
loss_values = st.floats(0.0, 10.0, allow_nan=False)


def test_init_state_uniform():
    st4 = init_state(4)
    assert st4.scores.tolist() == [0.25] * 4
    assert st4.weights.tolist() == [0.25] * 4
    assert init_state(1).weights.tolist() == [1.0]


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_init_state_rejects_bad_size(n):
    with pytest.raises(ValueError):
        init_state(n)


def test_update_hand_value():
    state = init_state(4)
    w, s = update_sample(state, 2, 1.0, BetaParams(0.2, 0.9), step=5)
    assert w == pytest.approx(0.85, abs=1e-15)
    assert s == pytest.approx(0.325, abs=1e-15)
    assert state.weights[2] == w and state.scores[2] == s
    assert state.last_update_step[2] == 5
    # untouched samples keep their state
    assert state.weights[[0, 1, 3]].tolist() == [0.25] * 3


def test_loss_and_frozen_limits():
    state = init_state(4)
    state.scores[0] = 123.0
    assert update_sample(state, 0, 0.5, BetaParams(0.0, 0.0)) == (0.5, 0.5)
    state = init_state(4)
    assert update_sample(state, 1, 7.3, BetaParams(1.0, 1.0)) == (0.25, 0.25)


def test_update_errors():
    state = init_state(3)
    betas = BetaParams(0.2, 0.9)
    with pytest.raises(NumericError):
        update_sample(state, 0, float("nan"), betas)
    with pytest.raises(NumericError):
        update_samples(state, [0, 1], [1.0, float("inf")], betas)
    with pytest.raises(ValueError):
        update_sample(state, 3, 1.0, betas)
    with pytest.raises(ValueError):
        update_sample(state, 0, -1.0, betas)
    # a rejected update leaves the state alone
    assert state.weights.tolist() == [1 / 3] * 3


@pytest.mark.parametrize("b1,b2", [(-0.1, 0.5), (0.5, 1.1), (float("nan"), 0.5)])
def test_beta_range(b1, b2):
    with pytest.raises(ValueError):
        BetaParams(b1, b2)


def test_expansion_needs_beta2_below_one():
    with pytest.raises(ValueError):
        BetaParams(0.2, 1.0).require_expandable()
    BetaParams(0.2, 0.999).require_expandable()


def test_strategy_defaults_and_flags():
    assert Strategy(StrategyKind.ES).betas == DEFAULT_BETAS[StrategyKind.ES] == BetaParams(0.2, 0.9)
    assert Strategy(StrategyKind.ESWP).betas == BetaParams(0.2, 0.8)
    assert Strategy(StrategyKind.ESWP).prunes and Strategy(StrategyKind.RANDOM_PRUNE).prunes
    assert not Strategy(StrategyKind.UNIFORM).selects_minibatch
    assert not Strategy(StrategyKind.RANDOM_PRUNE).uses_sampler
    with pytest.raises(ValueError):
        Strategy(StrategyKind.NONDIF, BetaParams(0.2, 0.9))
    assert StrategyKind.parse("eswp") is StrategyKind.ESWP
    assert StrategyKind.parse("nondif") is StrategyKind.NONDIF
    with pytest.raises(ValueError):
        StrategyKind.parse("greedy")


def test_snapshot_examples():
    state = SamplerState(3, np.zeros(3), np.array([1.0, 1.0, 2.0]))
    assert probability_snapshot(state, [0, 1, 2]).tolist() == [0.25, 0.25, 0.5]
    state = SamplerState(2, np.zeros(2), np.zeros(2))
    assert probability_snapshot(state, [0, 1]).tolist() == [0.5, 0.5]
    state = SamplerState(1, np.zeros(1), np.array([3.0]))
    assert probability_snapshot(state, [0]).tolist() == [1.0]


def test_snapshot_rejects_bad_floor():
    with pytest.raises(ValueError):
        probability_snapshot(init_state(2), [0, 1], floor=0.0)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(3)
    betas = BetaParams(0.3, 0.7)
    a, b = init_state(10), init_state(10)
    for step in range(20):
        ids = rng.choice(10, size=4, replace=False)
        losses = rng.uniform(0, 2, 4)
        update_samples(a, ids, losses, betas, step)
        for i, loss in zip(ids, losses):
            update_sample(b, i, loss, betas, step)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.scores, b.scores)
    assert np.array_equal(a.last_update_step, b.last_update_step)


@settings(max_examples=50, deadline=None)
@given(st.lists(loss_values, min_size=1, max_size=40))
def test_zero_betas_reduce_to_loss_scheme(trace):
    es, loss = init_state(2), init_state(2)
    for t, value in enumerate(trace):
        update_sample(es, 1, value, BetaParams(0.0, 0.0), t)
        set_current_losses(loss, [1], [value], t)
    assert np.array_equal(es.weights, loss.weights)
    assert es.weights[1] == trace[-1]


@settings(max_examples=50, deadline=None)
@given(st.lists(loss_values, min_size=1, max_size=40), st.integers(1, 50))
def test_unit_betas_freeze_weights(trace, n):
    state = init_state(n)
    for t, value in enumerate(trace):
        update_sample(state, t % n, value, BetaParams(1.0, 1.0), t)
    assert np.all(np.abs(state.weights - 1.0 / n) <= 1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(loss_values, min_size=1, max_size=30), unit, unit)
def test_nonnegativity_closure(trace, b1, b2):
    state = init_state(3)
    for t, value in enumerate(trace):
        update_sample(state, t % 3, value, BetaParams(b1, b2), t)
    assert (state.weights >= 0).all() and (state.scores >= 0).all()


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), loss_values, loss_values, unit, unit)
def test_monotone_in_loss(s_old, lo, hi, b1, b2):
    lo, hi = sorted((lo, hi))
    betas = BetaParams(b1, b2)
    a, b = init_state(1), init_state(1)
    a.scores[0] = b.scores[0] = s_old
    assert update_sample(a, 0, lo, betas)[0] <= update_sample(b, 0, hi, betas)[0]


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0.0, 2.0), min_size=1, max_size=200),
    st.floats(0.0, 0.999),
    st.floats(0.0, 0.999),
    st.integers(1, 1000),
)
def test_recursion_matches_expansion(trace, b1, b2, n):
    state = init_state(n)
    betas = BetaParams(b1, b2)
    got = [update_sample(state, 0, v, betas, t)[0] for t, v in enumerate(trace)]
    exact = analysis.expansion_weights(trace, b1, b2, s0=1.0 / n)
    assert np.max(np.abs(np.array(got) - exact)) <= 1e-10
    # without the initialization term the gap is the geometric remainder only
    loose = analysis.expansion_weights(trace, b1, b2, s0=1.0 / n, exact=False)
    t = np.arange(len(trace))
    bound = b2**t * (b1 / n + abs(b2 - b1) * trace[0])
    assert np.all(np.abs(np.array(got) - loose) <= bound + 1e-10)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0.0, 1e6), min_size=1, max_size=50),
    st.sampled_from([1e-12, 1e-6, 1e-3]),
)
def test_snapshot_is_distribution(weights, floor):
    n = len(weights)
    state = SamplerState(n, np.zeros(n), np.array(weights))
    p = probability_snapshot(state, np.arange(n), floor)
    assert (p >= 0).all()
    assert abs(p.sum() - 1.0) <= 1e-12
