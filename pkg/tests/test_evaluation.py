import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from statsmodels.stats.weightstats import ztest

from champrec.data import generate_synthetic, skewed_config
from champrec.evaluation import (
    EvalError,
    EvalReport,
    HyperGrid,
    fold_assignment,
    grid_search,
    grid_table_csv,
    histogram,
    histogram_csv,
    hit_rate_at_k,
    kfold_cv,
    normal_sf,
    popular_items,
    popularity_share,
    random_hit_rate,
    rmse,
    z_test_one_sided,
)
from champrec.ratings import Dataset, MasteryRecord, RatingTriple, build_training_set
from champrec.recommender import RecommendationList
from champrec.svd import Hyperparams, preset


def test_rmse_examples():
    assert rmse([1, 2, 3], [1, 2, 3]) == 0
    assert rmse([2, 0], [1, 1]) == 1
    assert rmse([2, 4], [1, 2]) == pytest.approx(math.sqrt(2.5))
    assert rmse([2, 4], [1, 2]) == pytest.approx(1.58114, abs=1e-5)
    with pytest.raises(EvalError):
        rmse([1], [1, 2])
    with pytest.raises(EvalError):
        rmse([], [])


def test_fold_sizes_and_determinism():
    parts = fold_assignment(10, 2, seed=3)
    assert sorted(len(p) for p in parts) == [5, 5]
    assert sorted(np.concatenate(parts).tolist()) == list(range(10))
    again = fold_assignment(10, 2, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(parts, again))
    with pytest.raises(EvalError):
        fold_assignment(10, 1, 0)
    with pytest.raises(EvalError):
        fold_assignment(3, 5, 0)


def test_kfold_deterministic(small_data):
    h = preset("paper-tuned", f=10, epochs=5)
    a, b = kfold_cv(small_data, h, 3, seed=1), kfold_cv(small_data, h, 3, seed=1)
    assert a.fold_rmse == b.fold_rmse and a.skipped == b.skipped
    assert sum(a.fold_sizes) == len(small_data)


def test_kfold_counts_unseen_rows():
    # user "z" has one row: whichever fold holds it, it cannot be predicted from training
    recs = [MasteryRecord(f"u{u}", c, 10 + (u * c) % 7) for u in range(8) for c in range(6)]
    recs.append(MasteryRecord("z", 0, 5))
    d = build_training_set(recs)
    res = kfold_cv(d, Hyperparams(f=4, gamma=0.001, epochs=3), 4, seed=0)
    assert sum(res.skipped) >= 1


def test_kfold_constant_ratings_beat_init():
    recs = [MasteryRecord(f"u{u}", c, 10) for u in range(30) for c in range(10)]
    d = build_training_set(recs)
    assert set(d.ratings.tolist()) == {100.0}
    res = kfold_cv(d, Hyperparams(f=10, gamma=0.005, lam=0.02, seed=2), 3, seed=5)
    for trained, init in zip(res.fold_rmse, res.init_rmse):
        assert trained <= init


def test_grid_order_and_singleton(small_data):
    g = HyperGrid((5,), (0.1,), (0.001,))
    best, table = grid_search(small_data, g, 2, seed=0, base=Hyperparams(f=5))
    assert (best.epochs, best.lam, best.gamma) == (5, 0.1, 0.001)
    assert len(table) == 1
    pts = HyperGrid((1, 2), (0.1, 0.2), (0.01,)).points(Hyperparams())
    assert [(p.epochs, p.lam) for p in pts] == [(1, 0.1), (1, 0.2), (2, 0.1), (2, 0.2)]
    with pytest.raises(EvalError):
        HyperGrid((), (0.1,), (0.1,))


def test_grid_best_is_table_minimum_and_divergence_recorded(small_data):
    g = HyperGrid((3, 6), (0.02, 0.4), (0.0005, 0.05))
    best, table = grid_search(small_data, g, 2, seed=1, base=Hyperparams(f=8))
    assert len(table) == 8
    finite = [r for r in table if not r["diverged"]]
    low = min(finite, key=lambda r: r["mean_rmse"])
    assert (best.epochs, best.lam, best.gamma) == (low["epochs"], low["lam"], low["gamma"])
    assert any(r["diverged"] for r in table)
    lines = grid_table_csv(table).splitlines()
    assert lines[0] == "epochs,lam,gamma,mean_rmse,fold_rmse,diverged"
    assert len(lines) == 9


def _ds(counts):
    """Dataset where champion k is rated by counts[k] distinct users."""
    triples = [RatingTriple(f"u{u}", k, 50) for k, n in enumerate(counts) for u in range(n)]
    return Dataset.from_triples(triples)


def test_popular_items_and_share():
    d = _ds([9, 8, 7, 6, 5, 4, 3, 2, 1, 1])
    assert popular_items(d, 0.1) == {0}
    assert popular_items(d, 0.2) == {0, 1}
    lists = [RecommendationList("a", ((0, 9.0),), 1)] * 4
    assert popularity_share(lists, d) == 1.0
    mixed = [RecommendationList("a", ((0, 9.0), (5, 1.0)), 2)]
    assert popularity_share(mixed, d) == 0.5
    assert popularity_share([], d) == 0.0


def test_share_of_random_recommendations_near_decile():
    d = _ds(list(range(100, 0, -1)))
    rng = np.random.default_rng(0)
    lists = [RecommendationList(str(k), tuple((int(c), 1.0) for c in rng.choice(100, 5, replace=False)), 5)
             for k in range(200)]
    share = popularity_share(lists, d, 0.10)
    assert abs(share - 0.10) <= 0.05


def test_hit_rate_full_catalog(two_arch_data):
    res = hit_rate_at_k(two_arch_data, preset("paper-tuned", f=10, epochs=2), k=two_arch_data.n_items,
                        seed=0, n_users=30)
    assert res.rate == 1.0 and res.trials == 30


def test_untrained_hit_rate_near_random():
    # one random model scores every similar player alike, so average over models too
    d = build_training_set(generate_synthetic(skewed_config(n_users=300, n_items=140, seed=3)))
    assert d.n_items == 140
    rates = [
        hit_rate_at_k(d, Hyperparams(f=20, seed=s), k=5, seed=s, n_users=100, untrained=True).rate
        for s in range(20)
    ]
    # 20 x 100 trials; observed spread of the per-model rate ~0.02, so SE of the mean ~0.005
    assert abs(np.mean(rates) - random_hit_rate(140, 5, 5)) < 0.015


def test_trained_hit_rate_beats_untrained(two_arch_data):
    h = preset("paper-tuned", seed=1)
    trained = hit_rate_at_k(two_arch_data, h, 5, seed=2, n_users=100)
    untrained = hit_rate_at_k(two_arch_data, h, 5, seed=2, n_users=100, untrained=True)
    assert trained.rate > untrained.rate
    assert 0 <= untrained.rate <= 1 and 0 <= trained.rate <= 1


def test_random_hit_rate():
    assert random_hit_rate(140, 1, 5) == pytest.approx(5 / 139)
    assert random_hit_rate(10, 5, 8) == 1.0


def test_z_examples():
    assert z_test_one_sided([1, 2, 3], [1, 2, 3]) == (0.0, 0.5)
    z, p = z_test_one_sided([5, 6, 7, 8], [1, 2, 3, 4])
    assert z == pytest.approx(4.38178, abs=1e-5)
    assert p == pytest.approx(5.89e-6, rel=1e-3)


def test_z_reference_oracle():
    rng = np.random.default_rng(8)
    for _ in range(10):
        a = rng.normal(6.5, 2, int(rng.integers(2, 40)))
        b = rng.normal(5.2, 2, int(rng.integers(2, 40)))
        z_ref, p_ref = ztest(a, b, alternative="larger", usevar="unequal")
        z, p = z_test_one_sided(a, b)
        assert z == pytest.approx(z_ref, abs=1e-6)
        assert p == pytest.approx(p_ref, abs=1e-8)


def test_z_errors():
    with pytest.raises(EvalError):
        z_test_one_sided([1], [1, 2])
    with pytest.raises(EvalError):
        z_test_one_sided([2, 2], [1, 1])


@given(
    st.lists(st.floats(1, 10), min_size=2, max_size=30),
    st.lists(st.floats(1, 10), min_size=2, max_size=30),
)
def test_z_antisymmetry(a, b):
    try:
        z1, p1 = z_test_one_sided(a, b)
    except EvalError:
        return
    z2, p2 = z_test_one_sided(b, a)
    assert z1 == pytest.approx(-z2)
    assert p1 + p2 == pytest.approx(1.0)


def test_normal_sf_at_reported_p():
    assert abs(normal_sf(2.239) - 0.01257) <= 1e-4
    assert normal_sf(0) == 0.5


def test_histogram_examples():
    assert histogram([1, 1, 2], [1, 2, 3]).tolist() == [2, 1]
    assert histogram([], [0, 1, 2]).tolist() == [0, 0]
    # last bin closed, out of range ignored
    assert histogram([3, 3.5, -1], [1, 2, 3]).tolist() == [0, 1]
    with pytest.raises(EvalError):
        histogram([1], [2, 1])
    with pytest.raises(EvalError):
        histogram([1], [1])


def test_histogram_uniform_monte_carlo():
    v = np.random.default_rng(12).uniform(0, 10, 10_000)
    counts = histogram(v, np.arange(11))
    assert counts.sum() == 10_000
    assert np.all(np.abs(counts - 1000) <= 150)


@given(st.lists(st.floats(-5, 15), max_size=50))
def test_histogram_conservation(values):
    edges = [0, 2.5, 5, 10]
    in_range = sum(0 <= v <= 10 for v in values)
    assert histogram(values, edges).sum() == in_range


def test_histogram_csv():
    text = histogram_csv([2, 1], [1, 2, 3])
    assert text == "bin_low,bin_high,count\n1,2,2\n2,3,1\n"


def test_report_json():
    r = EvalReport(rmse=1.5, z=2.0, p=0.02)
    assert '"rmse": 1.5' in r.to_json() and "histogram" not in r.to_json()
