import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from champrec.ratings import Dataset, RatingTriple
from champrec.svd import (
    DivergenceError,
    FactorModel,
    Hyperparams,
    ModelError,
    ModelFormatError,
    _sgd_pass,
    dumps_model,
    fold_in,
    fold_in_objective,
    init_model,
    load_model,
    loads_model,
    model_objective,
    objective,
    objective_gradient,
    predict,
    preset,
    save_model,
    sgd_epoch,
    train,
)


def one_rating_model(p, q, r, gamma, lam):
    d = Dataset.from_triples([RatingTriple("u", 0, r)])
    h = Hyperparams(f=len(p), gamma=gamma, lam=lam)
    m = FactorModel(np.array([p], float), np.array([q], float), h, d.user_ids, d.item_ids)
    return m, d


def random_instance(rng, f=None, n_ratings=None):
    f = f or int(rng.integers(1, 5))
    n_users, n_items = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    n = n_ratings or int(rng.integers(1, 11))
    users = rng.integers(0, n_users, n)
    items = rng.integers(0, n_items, n)
    ratings = rng.uniform(1, 5, n)
    P = rng.normal(0, 1, (n_users, f))
    Q = rng.normal(0, 1, (n_items, f))
    return P, Q, users, items, ratings, float(rng.uniform(0, 0.5))


def test_presets_match_literal_values():
    assert preset("paper-default") == Hyperparams(epochs=20, lam=0.005, gamma=0.02)
    assert preset("paper-tuned").epochs == 20
    assert (preset("paper-tuned").lam, preset("paper-tuned").gamma) == (0.4, 0.0005)
    assert Hyperparams().f == 100
    with pytest.raises(ValueError):
        preset("nope")


@pytest.mark.parametrize("kw", [dict(gamma=0), dict(lam=-1), dict(f=0), dict(epochs=0)])
def test_invalid_hyperparams(kw):
    with pytest.raises(ValueError):
        Hyperparams(**kw)


def test_init_deterministic_and_seeded(small_data):
    h = Hyperparams(f=8, seed=5)
    a, b = init_model(small_data, h), init_model(small_data, h)
    assert a.same_as(b)
    c = init_model(small_data, h.replace(seed=6))
    assert not np.array_equal(a.P, c.P)
    assert a.P.shape == (small_data.n_users, 8) and a.Q.shape == (small_data.n_items, 8)


def test_init_spread(small_data):
    m = init_model(small_data, Hyperparams(f=100, init_std=0.1))
    assert abs(np.std(np.concatenate([m.P.ravel(), m.Q.ravel()])) - 0.1) < 0.01


def test_zero_init_predicts_floor(small_data):
    m = init_model(small_data, Hyperparams(f=4, init_std=0))
    assert not m.P.any() and not m.Q.any()
    assert predict(m, m.P[0], small_data.item_ids[0]) == 1.0


def test_sgd_update_by_hand():
    m, d = one_rating_model([1.0], [1.0], 2, 0.1, 0.0)
    m1 = sgd_epoch(m, d)
    assert m1.P[0, 0] == pytest.approx(1.1, abs=1e-15)
    assert m1.Q[0, 0] == pytest.approx(1.1, abs=1e-15)


def test_sgd_update_with_regularization_by_hand():
    m, d = one_rating_model([1.0], [1.0], 2, 0.1, 0.1)
    m1 = sgd_epoch(m, d)
    assert m1.P[0, 0] == pytest.approx(1.09, abs=1e-15)
    assert m1.Q[0, 0] == pytest.approx(1.09, abs=1e-15)
    # input model untouched
    assert m.P[0, 0] == 1.0


def test_zero_learning_rate_kernel_leaves_factors():
    rng = np.random.default_rng(0)
    P, Q, users, items, ratings, lam = random_instance(rng)
    P0, Q0 = P.copy(), Q.copy()
    _sgd_pass(P, Q, users, items, ratings, np.arange(len(ratings)), 0.0, lam)
    assert np.array_equal(P, P0) and np.array_equal(Q, Q0)


def test_sgd_step_is_half_gamma_times_gradient():
    rng = np.random.default_rng(3)
    P, Q, users, items, ratings, lam = random_instance(rng, n_ratings=1)
    gamma = 0.01
    dP, dQ = objective_gradient(P, Q, users, items, ratings, lam)
    P1, Q1 = P.copy(), Q.copy()
    _sgd_pass(P1, Q1, users, items, ratings, np.arange(1), gamma, lam)
    np.testing.assert_allclose(P1 - P, -gamma / 2 * dP, atol=1e-14)
    np.testing.assert_allclose(Q1 - Q, -gamma / 2 * dQ, atol=1e-14)


def central_difference(fn, X, eps=1e-6):
    g = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        orig = X[idx]
        X[idx] = orig + eps
        hi = fn()
        X[idx] = orig - eps
        lo = fn()
        X[idx] = orig
        g[idx] = (hi - lo) / (2 * eps)
    return g


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    P, Q, users, items, ratings, lam = random_instance(rng)
    dP, dQ = objective_gradient(P, Q, users, items, ratings, lam)
    J = lambda: objective(P, Q, users, items, ratings, lam)
    np.testing.assert_allclose(dP, central_difference(J, P), rtol=1e-5, atol=1e-7)
    np.testing.assert_allclose(dQ, central_difference(J, Q), rtol=1e-5, atol=1e-7)


def test_objective_by_hand():
    P = np.array([[1.0, 2.0]])
    Q = np.array([[3.0, 0.5]])
    # e = 5 - 4 = 1; penalty 0.1 * (5 + 9.25)
    J = objective(P, Q, np.array([0]), np.array([0]), np.array([5.0]), 0.1)
    assert J == pytest.approx(1 + 0.1 * 14.25)


def test_train_epochs1_is_init_plus_one_epoch(small_data):
    h = Hyperparams(f=10, epochs=1, gamma=0.002, lam=0.02, seed=4)
    m, trace = train(small_data, h)
    ref = sgd_epoch(init_model(small_data, h), small_data)
    assert m.same_as(ref)
    assert trace == [model_objective(ref, small_data)]


def test_train_composes_epochs(small_data):
    h = Hyperparams(f=10, epochs=3, gamma=0.002, lam=0.02, seed=4)
    m, _ = train(small_data, h)
    ref = init_model(small_data, h)
    for _ in range(3):
        ref = sgd_epoch(ref, small_data)
    assert m.same_as(ref)


def test_train_descends_and_is_deterministic(small_data):
    h = preset("paper-tuned", seed=2)
    (m1, t1), (m2, t2) = train(small_data, h), train(small_data, h)
    assert t1 == t2 and m1.same_as(m2)
    assert t1[-1] < t1[0]


def test_descent_with_small_learning_rates(small_data):
    for gamma in (0.005, 0.001):
        _, trace = train(small_data, Hyperparams(gamma=gamma, lam=0.02, seed=0))
        assert trace[-1] < trace[0]


def test_divergence_is_reported(small_data):
    with pytest.raises(DivergenceError):
        train(small_data, Hyperparams(gamma=0.05, lam=0.005))


def test_sgd_epoch_unknown_user(small_data):
    m = init_model(small_data, Hyperparams(f=3))
    other = Dataset.from_triples([RatingTriple("stranger", small_data.item_ids[0], 50)])
    with pytest.raises(ModelError):
        sgd_epoch(m, other)


def test_sgd_epoch_accepts_reindexed_subset(small_data):
    m = init_model(small_data, Hyperparams(f=3, gamma=0.001))
    sub = small_data.subset(np.arange(len(small_data))[::-1])
    assert np.isfinite(sgd_epoch(m, sub).P).all()


def test_predict_examples():
    d = Dataset.from_triples([RatingTriple("u", 0, 5)])
    h = Hyperparams(f=2)
    m = FactorModel(np.zeros((1, 2)), np.array([[2.0, 3.0]]), h, d.user_ids, d.item_ids)
    assert predict(m, [0.5, -1.0], 0) == 1.0
    assert predict(m, [0.0, 0.0], 0) == 1.0
    assert predict(m, [10.0, 30.0], 0) == 100.0
    m1 = FactorModel(np.zeros((1, 1)), np.array([[3.0]]), Hyperparams(f=1), d.user_ids, d.item_ids)
    assert predict(m1, [2.0], 0) == 6.0
    with pytest.raises(ModelError):
        predict(m1, [2.0], 99)


def test_predictions_bounded(two_arch_data):
    m, _ = train(two_arch_data, preset("paper-tuned", f=20))
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = rng.normal(0, 50, 20)
        for c in two_arch_data.item_ids[:5]:
            assert 1.0 <= predict(m, p, c) <= 100.0


def _fixed_q_model(Q):
    n, f = Q.shape
    return FactorModel(np.zeros((1, f)), Q, Hyperparams(f=f), ("u",), tuple(range(n)))


def test_fold_in_exact_interpolation():
    m = _fixed_q_model(np.array([[2.0]]))
    p = fold_in(m, [(0, 50)], reg=0.0)
    assert p[0] == pytest.approx(25.0)
    assert predict(m, p, 0) == pytest.approx(50.0)


def test_fold_in_heavy_regularization():
    m = _fixed_q_model(np.random.default_rng(1).normal(size=(6, 3)))
    p = fold_in(m, [(0, 80), (3, 20)], reg=1e9)
    assert np.abs(p).max() < 1e-5


def test_fold_in_errors():
    m = _fixed_q_model(np.ones((2, 2)))
    with pytest.raises(ModelError):
        fold_in(m, [])
    with pytest.raises(ModelError):
        fold_in(m, [(7, 10)])


def gradient_descent_fold_in(Qp, r, reg, max_iters=200_000, tol=1e-12):
    """Independent oracle: plain gradient descent on the ridge objective."""
    A = Qp.T @ Qp + reg * np.eye(Qp.shape[1])
    b = Qp.T @ r
    step = 1.0 / np.linalg.eigvalsh(A).max()
    p = np.zeros(Qp.shape[1])
    for _ in range(max_iters):
        delta = step * (A @ p - b)
        p -= delta
        if np.abs(delta).max() < tol:
            break
    return p


@pytest.mark.parametrize("seed", range(5))
def test_fold_in_matches_iterative_oracle(seed):
    rng = np.random.default_rng(seed)
    f, n = int(rng.integers(1, 5)), int(rng.integers(1, 6))
    Q = rng.normal(0, 1, (8, f))
    m = _fixed_q_model(Q)
    prof = [(int(c), float(rng.uniform(1, 100))) for c in rng.choice(8, n, replace=False)]
    reg = float(rng.uniform(0.1, 2.0))
    p = fold_in(m, prof, reg=reg)
    ref = gradient_descent_fold_in(Q[[c for c, _ in prof]], np.array([r for _, r in prof]), reg)
    np.testing.assert_allclose(p, ref, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_fold_in_is_a_minimum(seed):
    rng = np.random.default_rng(seed)
    f = int(rng.integers(1, 6))
    Q = rng.normal(0, 1, (10, f))
    m = _fixed_q_model(Q)
    prof = [(int(c), float(rng.uniform(1, 100))) for c in rng.choice(10, 5, replace=False)]
    reg = float(rng.uniform(0.001, 1.0))
    p = fold_in(m, prof, reg=reg)
    Qp, r = Q[[c for c, _ in prof]], np.array([v for _, v in prof])
    base = fold_in_objective(Qp, r, p, reg)
    for _ in range(100):
        v = rng.normal(size=f)
        v *= 1e-3 / np.linalg.norm(v)
        assert fold_in_objective(Qp, r, p + v, reg) > base - 1e-9


def test_fold_in_defaults_to_training_lambda():
    Q = np.random.default_rng(2).normal(size=(5, 3))
    m = dataclasses.replace(_fixed_q_model(Q), hyperparams=Hyperparams(f=3, lam=0.7))
    prof = [(0, 40.0), (1, 90.0)]
    np.testing.assert_array_equal(fold_in(m, prof), fold_in(m, prof, reg=0.7))
    m2 = dataclasses.replace(m, hyperparams=Hyperparams(f=3, lam=0.7, fold_in_lambda=0.1))
    np.testing.assert_array_equal(fold_in(m2, prof), fold_in(m2, prof, reg=0.1))


def test_model_roundtrip(tmp_path, small_data):
    m, _ = train(small_data, preset("paper-tuned", f=7, seed=9))
    path = tmp_path / "m.bin"
    save_model(m, path)
    back = load_model(path)
    assert back.same_as(m)
    assert dumps_model(back) == path.read_bytes()


def test_model_truncated(small_data):
    blob = dumps_model(init_model(small_data, Hyperparams(f=3)))
    for cut in (5, 30, len(blob) // 2, len(blob) - 1):
        with pytest.raises(ModelFormatError):
            loads_model(blob[:cut])


def test_model_corrupted_byte(small_data):
    blob = bytearray(dumps_model(init_model(small_data, Hyperparams(f=3))))
    blob[len(blob) // 2] ^= 0xFF
    with pytest.raises(ModelFormatError, match="checksum"):
        loads_model(bytes(blob))


def test_model_unknown_version(small_data):
    blob = bytearray(dumps_model(init_model(small_data, Hyperparams(f=3))))
    blob[8:12] = (99).to_bytes(4, "little")
    with pytest.raises(ModelFormatError, match="version 99"):
        loads_model(bytes(blob))


def test_model_not_a_model():
    with pytest.raises(ModelFormatError):
        loads_model(b"hello world, this is not a model file at all......")
