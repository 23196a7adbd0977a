import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sokoshape.agent import (A2CHyper, RolloutBatch, a2c_loss, clip_grad_norm, desk_architecture,
                             forward, greedy_actions, init_params, load_checkpoint,
                             n_step_returns, rmsprop_step, sample_actions, save_checkpoint,
                             softmax)
from sokoshape.core import ContractError

from oracles import finite_difference_grads

TINY = {"in_shape": [2, 4, 4], "convs": [[3, 3, 1, 1], [2, 2, 2, 0]], "fc": 5, "n_actions": 5}


def tiny_batch(rng, T=2, N=2, shape=(2, 4, 4)):
    return RolloutBatch(
        obs=rng.random((T, N) + shape), actions=rng.integers(0, 5, (T, N)),
        rewards=rng.normal(size=(T, N)), values=rng.normal(size=(T, N)),
        terminals=rng.random((T, N)) < 0.2, truncateds=rng.random((T, N)) < 0.2,
        truncation_values=rng.normal(size=(T, N)), bootstrap_values=rng.normal(size=N))


def relative_errors(analytic, numeric):
    out = []
    for name in analytic:
        a, n = analytic[name].ravel(), numeric[name].ravel()
        out.append(np.abs(a - n) / np.maximum(1e-8, np.maximum(np.abs(a), np.abs(n))))
    return np.concatenate(out)


def test_hyper_defaults():
    h = A2CHyper()
    assert (h.learning_rate, h.gamma, h.entropy_coef, h.value_loss_coef) == (7e-4, 0.99, 0.1, 0.5)
    assert (h.rmsprop_eps, h.rmsprop_alpha, h.rollout_len, h.n_envs) == (1e-5, 0.99, 5, 30)


def test_bad_hyper():
    with pytest.raises(ValueError):
        A2CHyper(gamma=1.5)
    with pytest.raises(ValueError):
        A2CHyper(n_envs=0)


def test_zero_heads_give_uniform_policy():
    params = init_params(desk_architecture((7, 7, 7)), np.random.default_rng(0), head_gain=0.0)
    logits, value = forward(params, np.random.default_rng(1).random((3, 7, 7, 7)))
    assert np.allclose(softmax(logits), 0.2)
    assert np.allclose(value, 0.0)


def test_forward_is_pure_and_deterministic():
    params = init_params(TINY, np.random.default_rng(0), head_gain=0.5)
    x = np.random.default_rng(1).random((4, 2, 4, 4))
    before = params.copy()
    a, b = forward(params, x), forward(params, x)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert all(np.array_equal(params.weights[k], before.weights[k]) for k in params.weights)


def test_single_observation_gets_batch_axis():
    params = init_params(TINY, np.random.default_rng(0))
    logits, value = forward(params, np.zeros((2, 4, 4)))
    assert logits.shape == (1, 5) and value.shape == (1,)


def test_wrong_shape_rejected():
    params = init_params(TINY, np.random.default_rng(0))
    with pytest.raises(ContractError):
        forward(params, np.zeros((1, 3, 4, 4)))


def test_n_step_returns_by_hand():
    batch = RolloutBatch(
        obs=np.zeros((3, 1, 1)), actions=np.zeros((3, 1), int),
        rewards=np.array([[1.0], [2.0], [3.0]]), values=np.zeros((3, 1)),
        terminals=np.array([[False], [True], [False]]),
        truncateds=np.zeros((3, 1), bool), truncation_values=np.zeros((3, 1)),
        bootstrap_values=np.array([10.0]))
    ret = n_step_returns(batch, 0.5)
    assert ret[:, 0] == pytest.approx([1 + 0.5 * 2, 2.0, 3 + 0.5 * 10])


def test_truncation_bootstraps_from_final_state():
    batch = RolloutBatch(
        obs=np.zeros((2, 1, 1)), actions=np.zeros((2, 1), int),
        rewards=np.array([[1.0], [1.0]]), values=np.zeros((2, 1)),
        terminals=np.zeros((2, 1), bool), truncateds=np.array([[True], [False]]),
        truncation_values=np.array([[4.0], [0.0]]), bootstrap_values=np.array([8.0]))
    ret = n_step_returns(batch, 0.5)
    assert ret[:, 0] == pytest.approx([1 + 0.5 * 4, 1 + 0.5 * 8])


@pytest.mark.parametrize("arch", [TINY, dict(TINY, separate_critic=True)])
def test_gradients_match_finite_differences(arch):
    rng = np.random.default_rng(7)
    params = init_params(arch, rng, head_gain=0.5)
    batch = tiny_batch(rng)
    hyper = A2CHyper()
    _, grads, _ = a2c_loss(params, batch, hyper)
    numeric = finite_difference_grads(lambda: a2c_loss(params, batch, hyper)[0], params.weights)
    assert set(grads) == set(params.weights)
    err = relative_errors(grads, numeric)
    assert np.mean(err < 1e-4) >= 0.99
    for name in grads:
        assert np.allclose(grads[name], numeric[name], atol=1e-7)


def test_rmsprop_by_hand():
    params = init_params(TINY, np.random.default_rng(0))
    hyper = A2CHyper()
    grads = {k: np.full_like(v, 0.5) for k, v in params.weights.items()}
    new = rmsprop_step(params, grads, hyper)
    acc = 0.01 * 0.25
    for k in params.weights:
        assert np.allclose(new.accumulators[k], acc)
        assert np.allclose(new.weights[k], params.weights[k] - 7e-4 * 0.5 / (np.sqrt(acc) + 1e-5))


def test_rmsprop_zero_gradient_decays_accumulators():
    params = init_params(TINY, np.random.default_rng(0))
    params.accumulators = {k: np.ones_like(v) for k, v in params.weights.items()}
    new = rmsprop_step(params, {k: np.zeros_like(v) for k, v in params.weights.items()}, A2CHyper())
    for k in params.weights:
        assert np.array_equal(new.weights[k], params.weights[k])
        assert np.allclose(new.accumulators[k], 0.99)


def test_rmsprop_second_identical_step_is_smaller():
    params = init_params(TINY, np.random.default_rng(0))
    grads = {k: np.full_like(v, 0.3) for k, v in params.weights.items()}
    one = rmsprop_step(params, grads, A2CHyper())
    two = rmsprop_step(one, grads, A2CHyper())
    for k in params.weights:
        first = np.abs(one.weights[k] - params.weights[k])
        second = np.abs(two.weights[k] - one.weights[k])
        assert np.all(second < first)


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = clip_grad_norm(grads, 0.5)
    assert norm == pytest.approx(5.0)
    assert np.sqrt(clipped["a"] ** 2 + clipped["b"] ** 2)[0] == pytest.approx(0.5, rel=1e-5)
    same, _ = clip_grad_norm(grads, None)
    assert same is grads


def test_non_finite_loss_aborts():
    rng = np.random.default_rng(0)
    params = init_params(TINY, rng)
    batch = tiny_batch(rng)
    batch.rewards[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        a2c_loss(params, batch, A2CHyper())


def test_greedy_tie_break_lowest_index():
    assert list(greedy_actions(np.array([[1.0, 2.0, 2.0, 0.0, 2.0]]))) == [1]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_sampling_respects_distribution_support(seed):
    rng = np.random.default_rng(seed)
    logits = np.log(np.array([[0.0, 0.5, 0.5, 0.0, 0.0]]) + 1e-300)
    actions = [int(sample_actions(logits, rng)[0]) for _ in range(20)]
    assert set(actions) <= {1, 2}


def test_checkpoint_round_trip(tmp_path):
    params = init_params(dict(TINY, separate_critic=True), np.random.default_rng(3))
    params.accumulators = {k: np.abs(v) for k, v in params.weights.items()}
    path = tmp_path / "p.npz"
    save_checkpoint(params, path, meta={"seed": 3})
    loaded, meta = load_checkpoint(path)
    assert meta == {"seed": 3}
    assert loaded.arch == params.arch
    for k in params.weights:
        assert np.array_equal(loaded.weights[k], params.weights[k])
        assert np.array_equal(loaded.accumulators[k], params.accumulators[k])


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, header=np.array('{"format": "other", "version": 1}'))
    with pytest.raises(ValueError):
        load_checkpoint(path)
