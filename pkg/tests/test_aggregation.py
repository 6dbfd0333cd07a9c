import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_series
from storax.aggregation import (
    Aggregation,
    aggregate,
    aggregate_crh,
    aggregate_full,
    aggregate_rd,
    aggregate_rh,
    aggregation_error,
    crh_segments,
    cut_tree_labels,
    normalized_rmse,
    ward_tree,
)
from storax.errors import InvalidCount, NotDayDivisible, ValidationError
from storax.timeseries import FullTimeSeries


def _sse(x, labels):
    return sum(((x[labels == k] - x[labels == k].mean(axis=0)) ** 2).sum() for k in np.unique(labels))


def _canonical(labels):
    """Relabel by first occurrence so partitions compare structurally."""
    mapping = {}
    return np.array([mapping.setdefault(v, len(mapping) + 1) for v in labels])


def naive_ward(x, k):
    """O(n^3) agglomeration: merge the pair with the smallest SSE increase."""
    clusters = [[i] for i in range(len(x))]
    while len(clusters) > k:
        best = None
        for a, b in itertools.combinations(range(len(clusters)), 2):
            ca, cb = x[clusters[a]], x[clusters[b]]
            na, nb = len(ca), len(cb)
            d = ca.mean(axis=0) - cb.mean(axis=0)
            cost = na * nb / (na + nb) * float(d @ d)
            if best is None or cost < best[0]:
                best = (cost, a, b)
        _, a, b = best
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    labels = np.empty(len(x), dtype=int)
    for c, members in enumerate(clusters):
        labels[members] = c
    return _canonical(labels)


def naive_adjacent_merge(x, k):
    segs = [[i] for i in range(len(x))]
    while len(segs) > k:
        costs = []
        for a in range(len(segs) - 1):
            ca, cb = x[segs[a]], x[segs[a + 1]]
            d = ca.mean(axis=0) - cb.mean(axis=0)
            costs.append(len(ca) * len(cb) / (len(ca) + len(cb)) * float(d @ d))
        a = int(np.argmin(costs))
        segs[a] = segs[a] + segs[a + 1]
        del segs[a + 1]
    return np.concatenate([[j + 1] * len(s) for j, s in enumerate(segs)])


def optimal_segmentation(x, k):
    """Dynamic program over segment ends minimizing total within-segment SSE."""
    n = len(x)

    def cost(i, j):
        seg = x[i:j]
        return float(((seg - seg.mean(axis=0)) ** 2).sum())

    best = {(0, 0): (0.0, [])}
    for m in range(1, k + 1):
        for j in range(m, n + 1):
            cands = [
                (best[(i, m - 1)][0] + cost(i, j), best[(i, m - 1)][1] + [j])
                for i in range(m - 1, j)
                if (i, m - 1) in best
            ]
            best[(j, m)] = min(cands, key=lambda c: c[0])
    ends = best[(n, k)][1]
    labels = np.empty(n, dtype=int)
    start = 0
    for seg, end in enumerate(ends):
        labels[start:end] = seg + 1
        start = end
    return labels


# -------------------------------------------------------------------- RH


def test_rh_identity(small_series):
    agg = aggregate_rh(small_series, small_series.horizon)
    np.testing.assert_array_equal(agg.sequence, np.arange(1, small_series.horizon + 1))
    assert np.all(agg.weights == 1)


def test_rh_single_step_is_mean(small_series):
    agg = aggregate_rh(small_series, 1)
    assert agg.weights.tolist() == [small_series.horizon]
    for c in small_series.columns:
        assert agg.rep_values[c][0] == pytest.approx(small_series[c].mean(), rel=1e-12)


def test_rh_toy_matches_brute_force():
    x = np.array([0.2, 0.2, 0.2, 0.9, 0.9, 0.9, 0.2])
    ts = FullTimeSeries.from_columns({"cf@a": x, "demand@a": 10 * x})
    feats = np.column_stack([x, x])
    # brute force over all two-cluster labelings (hour 1 fixed in cluster 1)
    best = min(
        ((np.array((1,) + bits), _sse(feats, np.array((1,) + bits))) for bits in itertools.product((1, 2), repeat=6) if 2 in bits),
        key=lambda c: c[1],
    )
    agg = aggregate_rh(ts, 2)
    assert agg.sequence.tolist() == [1, 1, 1, 2, 2, 2, 1]
    assert agg.sequence.tolist() == best[0].tolist()
    assert agg.weights.tolist() == [4, 3]


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("k", [1, 3, 7])
def test_ward_cut_matches_naive_agglomeration(seed, k):
    x = np.random.default_rng(seed).uniform(size=(14, 2))
    labels = cut_tree_labels(ward_tree(x), len(x), k)
    assert _canonical(labels).tolist() == naive_ward(x, k).tolist()


def test_rh_invalid_count(small_series):
    for bad in (0, small_series.horizon + 1):
        with pytest.raises(InvalidCount):
            aggregate_rh(small_series, bad)


def test_rh_deterministic(small_series):
    a, b = aggregate_rh(small_series, 9), aggregate_rh(small_series, 9)
    assert a.to_dict() == b.to_dict()


# -------------------------------------------------------------------- RD


def test_rd_identity(small_series):
    agg = aggregate_rd(small_series, small_series.horizon // 24)
    assert agg.n_steps == small_series.horizon
    np.testing.assert_array_equal(agg.sequence, np.arange(1, small_series.horizon + 1))


def test_rd_single_day_is_day_mean(small_series):
    agg = aggregate_rd(small_series, 1)
    D = small_series.horizon // 24
    assert np.all(agg.weights == D)
    for c in small_series.columns:
        np.testing.assert_allclose(agg.rep_values[c], small_series[c].reshape(D, 24).mean(axis=0), rtol=1e-12)


def test_rd_duplicate_days():
    day = np.linspace(0, 1, 24)
    ts = FullTimeSeries.from_columns({"cf@a": np.concatenate([day, day])})
    agg = aggregate_rd(ts, 1)
    np.testing.assert_array_equal(agg.rep_values["cf@a"], day)
    assert agg.sequence.tolist() == list(range(1, 25)) * 2


def test_rd_needs_whole_days():
    ts = FullTimeSeries.from_columns({"cf@a": np.zeros(30)})
    with pytest.raises(NotDayDivisible):
        aggregate_rd(ts, 1)
    with pytest.raises(InvalidCount):
        aggregate(random_series(0), "RD", 30)


def test_rd_invalid_count(small_series):
    with pytest.raises(InvalidCount):
        aggregate_rd(small_series, 0)
    with pytest.raises(InvalidCount):
        aggregate_rd(small_series, small_series.horizon // 24 + 1)


# -------------------------------------------------------------------- CRH


def test_crh_identity_and_single(small_series):
    T = small_series.horizon
    assert aggregate_crh(small_series, T).sequence.tolist() == list(range(1, T + 1))
    one = aggregate_crh(small_series, 1)
    assert one.weights.tolist() == [T]
    for c in small_series.columns:
        assert one.rep_values[c][0] == pytest.approx(small_series[c].mean(), rel=1e-12)


def test_crh_plateaus_match_optimal_segmentation():
    levels = [0.1, 0.8, 0.4, 0.9, 0.0]
    lengths = [5, 3, 7, 2, 4]
    x = np.repeat(levels, lengths)
    y = np.repeat([0.5, 0.2, 0.2, 0.7, 0.3], lengths)
    ts = FullTimeSeries.from_columns({"cf@a": x, "cf2@a": y})
    agg = aggregate_crh(ts, len(levels))
    oracle = optimal_segmentation(np.column_stack([x, y]), len(levels))
    np.testing.assert_array_equal(agg.sequence, np.repeat(np.arange(1, 6), lengths))
    np.testing.assert_array_equal(agg.sequence, oracle)
    single = FullTimeSeries.from_columns({"cf@a": x})
    np.testing.assert_array_equal(aggregate_crh(single, 5).sequence, optimal_segmentation(x[:, None], 5))
    assert aggregation_error(single, aggregate_crh(single, 5))["cf@a"] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_crh_heap_matches_naive_merging(seed):
    x = np.random.default_rng(seed).uniform(size=(40, 3))
    for k in (1, 5, 17, 40):
        np.testing.assert_array_equal(crh_segments(x, k), naive_adjacent_merge(x, k))


def test_crh_rejects_bad_count(small_series):
    with pytest.raises(InvalidCount):
        aggregate_crh(small_series, 0)


# -------------------------------------------------------------------- errors


def test_error_examples(small_series):
    full = aggregate_full(small_series)
    assert all(v == 0.0 for v in aggregation_error(small_series, full).values())
    ts = FullTimeSeries.from_columns({"x@a": [0.0, 2.0]})
    agg = aggregate_rh(ts, 1)
    assert agg.rep_values["x@a"][0] == 1.0
    assert aggregation_error(ts, agg)["x@a"] == pytest.approx(1.0)


def test_error_horizon_mismatch(small_series):
    other = random_series(0, days=2)
    with pytest.raises(ValidationError):
        aggregation_error(small_series, aggregate_full(other))


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("level", [24, 48])
def test_rh_not_worse_than_rd_on_random_series(seed, level):
    ts = random_series(seed, days=6)
    rh, rd = aggregate(ts, "RH", level), aggregate(ts, "RD", level)
    assert normalized_rmse(ts, rh) <= normalized_rmse(ts, rd) + 1e-12


# -------------------------------------------------------------------- invariants


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["RH", "RD", "CRH"]), st.integers(1, 4))
def test_aggregation_invariants(seed, mode, k):
    ts = random_series(seed, days=4)
    n = 24 * k if mode == "RD" else 7 * k
    agg = aggregate(ts, mode, n)
    T = ts.horizon
    assert agg.sequence.size == T and agg.weights.sum() == T
    assert set(agg.sequence.tolist()) == set(range(1, agg.n_steps + 1))
    for c in ts.columns:
        total = (agg.rep_values[c] * agg.weights).sum()
        assert total == pytest.approx(ts[c].sum(), rel=1e-9, abs=1e-9)
    if mode == "RD":
        d, h = np.divmod(np.arange(T), 24)
        np.testing.assert_array_equal(agg.sequence, 24 * (agg.day_sequence[d] - 1) + h + 1)
    if mode == "CRH":
        assert np.all(np.diff(agg.sequence) >= 0)
        assert np.count_nonzero(np.diff(agg.sequence)) == agg.n_steps - 1
    again = Aggregation.from_dict(agg.to_dict())
    np.testing.assert_array_equal(again.sequence, agg.sequence)


def test_json_round_trip(tmp_path, small_series):
    agg = aggregate_rd(small_series, 2)
    agg.save(tmp_path / "a.json")
    back = Aggregation.load(tmp_path / "a.json")
    assert back.to_dict() == agg.to_dict()
    assert set(agg.to_dict()) >= {"mode", "I", "sequence", "weights", "rep_values"}


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(mode="RH", sequence=[1, 3], weights=[1, 0, 1], rep_values={}),
        dict(mode="RH", sequence=[1, 2], weights=[2, 0], rep_values={}),
        dict(mode="CRH", sequence=[2, 1], weights=[1, 1], rep_values={}),
        dict(mode="Full", sequence=[2, 1], weights=[1, 1], rep_values={}),
        dict(mode="XX", sequence=[1], weights=[1], rep_values={}),
        dict(mode="RH", sequence=[1], weights=[1], rep_values={"a@b": [1.0, 2.0]}),
    ],
)
def test_aggregation_rejects_bad_input(kwargs):
    with pytest.raises(ValidationError):
        Aggregation(**kwargs)
