"""Tests for exact 1-D k-means, the elbow rule and silhouette scores."""
import time
from functools import lru_cache

import numpy as np
import pytest

from src.config.settings import ElbowParams
from src.errors import EgoSkippedError, InvalidArgumentError, UndefinedSilhouetteError
from src.models import AlterFreq, Direction, EgoNetwork
from src.services.cluster_service import (
    Clustering,
    analyze_ego,
    analyze_egos,
    cross_check_lloyd,
    elbow_optimal_k,
    kmeans_1d_exact,
    kmeans_1d_lloyd,
    silhouette,
    wcss_curve,
)


def make_ego(frequencies, ego_id="ego"):
    alters = sorted((AlterFreq(f"a{i:03d}", float(f)) for i, f in enumerate(frequencies)),
                    key=lambda a: (-a.frequency, a.alter_id))
    return EgoNetwork(ego_id=ego_id, direction=Direction.OUTGOING, alters=tuple(alters))


def set_partitions(n, k):
    """Every assignment of n labelled points to exactly k non-empty unlabelled blocks."""
    def grow(i, labels, used):
        if i == n:
            if used == k:
                yield tuple(labels)
            return
        if k - used > n - i:
            return
        for label in range(min(used + 1, k)):
            labels.append(label)
            yield from grow(i + 1, labels, max(used, label + 1))
            labels.pop()
    yield from grow(0, [], 0)


@lru_cache(maxsize=None)
def partition_masks(n, k):
    """Membership masks of shape (k, partitions, n) and block sizes of shape (k, partitions)."""
    labels = np.array(list(set_partitions(n, k)), dtype=np.int64).reshape(-1, n)
    masks = np.stack([(labels == c) for c in range(k)]).astype(np.float64)
    return masks, masks.sum(axis=2)


def brute_force_wcss(x, k):
    """Minimum WCSS over every set partition of x into k non-empty blocks."""
    x = np.asarray(x, dtype=np.float64)
    masks, sizes = partition_masks(x.size, k)
    centred = x - x.mean()
    s1 = masks @ centred
    s2 = masks @ (centred * centred)
    return float((s2 - s1 * s1 / sizes).sum(axis=0).min())


def reference_silhouette(x, labels):
    """Rousseeuw's silhouette coded point by point, singleton clusters scoring 0."""
    x = list(x)
    labels = list(labels)
    scores = []
    for i, xi in enumerate(x):
        own = [x[j] for j in range(len(x)) if labels[j] == labels[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = sum(abs(xi - v) for v in own) / len(own)
        b = min(
            sum(abs(xi - x[j]) for j in range(len(x)) if labels[j] == c) / labels.count(c)
            for c in set(labels) if c != labels[i]
        )
        scores.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return sum(scores) / len(scores)


class TestKMeansExact:
    def test_perfectly_separated(self):
        result = kmeans_1d_exact([1, 1, 1, 8, 8, 8], 2)
        assert result.centroids == (8.0, 1.0)
        assert result.wcss == 0.0
        assert result.assignments == (1, 1, 1, 0, 0, 0)

    def test_single_point(self):
        result = kmeans_1d_exact([5], 1)
        assert result.centroids == (5.0,)
        assert result.wcss == 0.0

    def test_split_between_groups(self):
        result = kmeans_1d_exact([0.5, 1.0, 1.5, 7.0, 8.0, 9.0], 2)
        assert result.centroids == pytest.approx((8.0, 1.0))
        assert result.wcss == pytest.approx(2.5)
        assert result.sizes == (3, 3)

    @pytest.mark.parametrize("weights,k", [([], 1), ([1.0, 2.0], 3), ([1.0, 2.0], 0), ([1.0, -2.0], 1), ([1.0, np.nan], 1)])
    def test_invalid_arguments(self, weights, k):
        with pytest.raises(InvalidArgumentError):
            kmeans_1d_exact(weights, k)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2024)
        for _ in range(400):
            n = int(rng.integers(1, 9))
            k = int(rng.integers(1, min(n, 4) + 1))
            x = rng.uniform(0.01, 20.0, size=n)
            if rng.random() < 0.3:
                x = np.round(x)
                x[x == 0] = 1.0
            assert kmeans_1d_exact(x, k).wcss == pytest.approx(brute_force_wcss(x, k), abs=1e-9)

    @pytest.mark.slow
    def test_matches_brute_force_on_ten_thousand_vectors(self):
        rng = np.random.default_rng(10_000)
        elapsed = 0.0
        for _ in range(10_000):
            n = int(rng.integers(1, 11))
            k = int(rng.integers(1, min(n, 4) + 1))
            x = 20.0 - rng.uniform(0.0, 20.0, size=n)
            start = time.perf_counter()
            exact = kmeans_1d_exact(x, k).wcss
            elapsed += time.perf_counter() - start
            assert abs(exact - brute_force_wcss(x, k)) <= 1e-9
        assert elapsed < 60

    def test_clusters_are_contiguous_and_ordered(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            x = rng.lognormal(0.5, 1.0, size=40)
            result = kmeans_1d_exact(x, 4)
            labels = np.asarray(result.assignments)[np.argsort(x, kind="stable")]
            assert np.all(np.diff(labels) <= 0)
            assert list(result.centroids) == sorted(result.centroids, reverse=True)
            for c, centre in enumerate(result.centroids):
                assert centre == pytest.approx(x[np.asarray(result.assignments) == c].mean())

    def test_scale_equivariance(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0.1, 10, size=30)
        for c in (2.0, 4.0, 0.5):
            base = kmeans_1d_exact(x, 3)
            scaled = kmeans_1d_exact(x * c, 3)
            assert scaled.assignments == base.assignments
            assert scaled.wcss == pytest.approx(base.wcss * c * c, rel=1e-9)
            assert silhouette(x * c, scaled) == pytest.approx(silhouette(x, base), abs=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(13)
        x = rng.uniform(0.1, 10, size=25)
        base = kmeans_1d_exact(x, 3)
        order = rng.permutation(x.size)
        shuffled = kmeans_1d_exact(x[order], 3)
        assert shuffled.assignments == tuple(base.assignments[i] for i in order)
        assert shuffled.wcss == pytest.approx(base.wcss)


class TestWcssCurve:
    def test_two_groups(self):
        # k = 1 is the sum of (x - 4.5) ** 2
        assert wcss_curve([1, 1, 8, 8], k_max=3) == pytest.approx([49.0, 0.0, 0.0])

    def test_constant_weights(self):
        assert wcss_curve([3, 3, 3, 3]) == [0.0, 0.0, 0.0, 0.0]

    def test_capped_at_point_count(self):
        assert len(wcss_curve([1.0, 2.0, 3.0], k_max=20)) == 3

    def test_non_increasing(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            curve = wcss_curve(rng.lognormal(0, 1.5, size=50), k_max=20)
            assert all(b <= a for a, b in zip(curve, curve[1:]))

    def test_matches_single_k_solutions(self):
        x = np.random.default_rng(19).uniform(0.5, 12, size=18)
        curve = wcss_curve(x, k_max=6)
        assert curve == pytest.approx([kmeans_1d_exact(x, k).wcss for k in range(1, 7)], abs=1e-9)

    def test_empty_weights(self):
        with pytest.raises(InvalidArgumentError):
            wcss_curve([])


class TestElbow:
    def test_sharp_elbow_at_two(self):
        assert elbow_optimal_k([100, 10, 8, 7]) == 2

    def test_elbow_at_three(self):
        assert elbow_optimal_k([100, 60, 12, 10, 9.5]) == 3

    @pytest.mark.parametrize("curve", [[0.0], [1e-15, 0.0, 0.0]])
    def test_zero_variance(self, curve):
        assert elbow_optimal_k(curve) == 1

    def test_every_gain_clears_threshold(self):
        assert elbow_optimal_k([100, 50, 20]) == 3

    def test_threshold_is_configurable(self):
        curve = [100, 10, 8, 7]
        assert elbow_optimal_k(curve, ElbowParams(marginal_gain_threshold=0.015)) == 3

    def test_increasing_curve_rejected(self):
        with pytest.raises(InvalidArgumentError):
            elbow_optimal_k([10, 5, 6])

    def test_tiny_increase_tolerated(self):
        assert elbow_optimal_k([10.0, 1.0, 1.0 + 1e-12]) == 2

    def test_tolerance_is_absolute(self):
        with pytest.raises(InvalidArgumentError):
            elbow_optimal_k([1e6, 1e5, 1e5 + 1e-6])

    def test_empty_curve_rejected(self):
        with pytest.raises(InvalidArgumentError):
            elbow_optimal_k([])


class TestSilhouette:
    def test_zero_intra_distance(self):
        x = [1, 1, 8, 8]
        assert silhouette(x, kmeans_1d_exact(x, 2)) == pytest.approx(1.0)

    def test_hand_evaluated(self):
        x = [1, 2, 8, 9]
        assert silhouette(x, kmeans_1d_exact(x, 2)) == pytest.approx(0.8564, abs=1e-4)

    def test_singleton_scores_zero(self):
        clustering = Clustering(k=2, assignments=(0, 1, 1), centroids=(5.0, 1.0), wcss=0.0)
        # s(5) = 0 and both 1s score 1
        assert silhouette([5, 1, 1], clustering) == pytest.approx(2 / 3)

    def test_single_cluster_undefined(self):
        with pytest.raises(UndefinedSilhouetteError):
            silhouette([1, 2], kmeans_1d_exact([1, 2], 1))

    def test_matches_reference(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            k = int(rng.integers(2, min(n, 5) + 1))
            x = rng.uniform(0.1, 20, size=n)
            if rng.random() < 0.25:
                labels = rng.permutation(np.arange(n) % k)
                clustering = Clustering(k=k, assignments=tuple(int(v) for v in labels),
                                        centroids=tuple(float(x[labels == c].mean()) for c in range(k)), wcss=0.0)
            else:
                clustering = kmeans_1d_exact(x, k)
            assert silhouette(x, clustering) == pytest.approx(reference_silhouette(x, clustering.assignments), abs=1e-9)


class TestAnalyzeEgo:
    def test_three_separated_groups(self):
        ego = make_ego([9.0, 8.5, 8.8, 3.2, 3.0, 3.4, 3.1, 1.0, 0.9, 1.1, 0.95, 1.05])
        result = analyze_ego(ego, fixed_ks=(2, 3))
        assert result.optimal_k == 3
        assert result.clustering_at_optimal.sizes == (3, 4, 5)
        assert 0.6 < result.silhouette_at_optimal <= 1.0
        assert set(result.clusterings_at_fixed) == {2, 3}
        assert len(result.wcss_curve) == 12

    def test_two_alters_never_errors(self):
        for pair in ([1.0, 1.0], [1.0, 9.0], [3.0, 3.1]):
            assert analyze_ego(make_ego(pair)).optimal_k in (1, 2)

    def test_equal_frequencies(self):
        result = analyze_ego(make_ego([2.0] * 30), fixed_ks=(2, 3))
        assert result.optimal_k == 1
        assert result.silhouette_at_optimal is None
        assert result.clusterings_at_fixed == {}

    def test_k_max_one(self):
        result = analyze_ego(make_ego([1.0, 5.0, 9.0]), k_max=1)
        assert result.optimal_k == 1
        assert result.wcss_curve == pytest.approx((32.0,))
        assert result.silhouette_at_optimal is None

    def test_fixed_k_beyond_scan(self):
        result = analyze_ego(make_ego([1.0, 2.0, 5.0, 9.0, 14.0]), k_max=1, fixed_ks=(3,))
        assert result.clusterings_at_fixed[3].k == 3

    def test_degree_below_two_skipped(self):
        with pytest.raises(EgoSkippedError):
            analyze_ego(make_ego([4.0]))

    def test_record_fields(self):
        record = analyze_ego(make_ego([1.0, 1.2, 8.0, 8.3]), fixed_ks=(2,)).to_record()
        assert list(record)[:8] == ["ego_id", "direction", "degree", "wcss_curve", "optimal_k",
                                    "centroids", "layer_sizes", "silhouette"]
        assert record["direction"] == "outgoing"
        assert record["fixed"]["2"]["layer_sizes"] == [2, 2]


class TestAnalyzeEgos:
    def population(self):
        rng = np.random.default_rng(29)
        egos = [make_ego(rng.lognormal(0.5, 1.0, size=int(rng.integers(3, 40))), ego_id=f"e{i}") for i in range(40)]
        egos.append(make_ego([3.0], ego_id="lonely"))
        return egos

    def test_order_and_skips(self):
        egos = self.population()
        outcomes = list(analyze_egos(egos, fixed_ks=(2, 3)))
        assert [o.ego_id for o in outcomes] == [e.ego_id for e in egos]
        assert isinstance(outcomes[-1], EgoSkippedError)

    def test_parallel_matches_sequential(self):
        egos = self.population()
        sequential = list(analyze_egos(egos, fixed_ks=(2, 3)))
        parallel = list(analyze_egos(egos, fixed_ks=(2, 3), parallelism=4, chunksize=3))
        for a, b in zip(sequential, parallel):
            if isinstance(a, EgoSkippedError):
                assert isinstance(b, EgoSkippedError)
            else:
                assert a.to_record() == b.to_record()


class TestLloydCrossCheck:
    def test_lloyd_never_beats_exact(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            x = rng.lognormal(0.5, 1.0, size=30)
            exact, lloyd = cross_check_lloyd(x, 3, seed=42)
            assert exact <= lloyd + 1e-9

    def test_lloyd_relabels_by_descending_centroid(self):
        result = kmeans_1d_lloyd([1, 1, 1, 8, 8, 8], 2, seed=0)
        assert result.centroids == (8.0, 1.0)
        assert result.assignments == (1, 1, 1, 0, 0, 0)
