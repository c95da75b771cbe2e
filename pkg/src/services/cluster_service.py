"""Service for exact one-dimensional k-means over contact frequencies.

Optimal 1-D k-means clusters are contiguous ranges of the sorted weights, so
the global optimum for every k up to ``k_max`` comes out of one dynamic
programming pass over prefix sums. Cluster 0 is always the cluster with the
highest centroid.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.cluster import KMeans

from src.config.settings import ElbowParams
from src.errors import EgoSkippedError, InvalidArgumentError, InvariantViolation, UndefinedSilhouetteError
from src.models import Direction, EgoNetwork

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 20
MONOTONE_TOLERANCE = 1e-9

# Above this many points the cost matrix is not materialised.
_DENSE_LIMIT = 2048


@dataclass(frozen=True)
class Clustering:
    """A partition of an ego's weights into ``k`` clusters, ordered by descending centroid."""

    k: int
    assignments: Tuple[int, ...]
    centroids: Tuple[float, ...]
    wcss: float

    @property
    def sizes(self) -> Tuple[int, ...]:
        counts = [0] * self.k
        for label in self.assignments:
            counts[label] += 1
        return tuple(counts)


@dataclass(frozen=True)
class ClusteringResult:
    """Per-ego outcome of the layer analysis."""

    ego_id: str
    direction: Direction
    degree: int
    wcss_curve: Tuple[float, ...]
    optimal_k: int
    clustering_at_optimal: Clustering
    silhouette_at_optimal: Optional[float]
    clusterings_at_fixed: Dict[int, Clustering] = field(default_factory=dict)

    def to_record(self) -> dict:
        """Line-JSON record with stable field names."""
        return {
            "ego_id": self.ego_id,
            "direction": self.direction.value,
            "degree": self.degree,
            "wcss_curve": list(self.wcss_curve),
            "optimal_k": self.optimal_k,
            "centroids": list(self.clustering_at_optimal.centroids),
            "layer_sizes": list(self.clustering_at_optimal.sizes),
            "silhouette": self.silhouette_at_optimal,
            "fixed": {
                str(k): {
                    "centroids": list(c.centroids),
                    "layer_sizes": list(c.sizes),
                    "wcss": c.wcss,
                }
                for k, c in sorted(self.clusterings_at_fixed.items())
            },
        }


def _validate_weights(weights: Sequence[float]) -> np.ndarray:
    x = np.asarray(weights, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidArgumentError("weights must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise InvalidArgumentError("weights must be finite and positive")
    return x


class _KMeansTables:
    """DP tables of optimal costs and split points for k = 1..k_max."""

    def __init__(self, weights: Sequence[float], k_max: int):
        self.x = _validate_weights(weights)
        self.n = self.x.size
        if k_max < 1:
            raise InvalidArgumentError(f"k_max must be at least 1, got {k_max}")
        self.k_max = min(k_max, self.n)
        self.order = np.argsort(self.x, kind="stable")
        self.xs = self.x[self.order]
        self._solve()

    def _solve(self) -> None:
        n, k_max = self.n, self.k_max
        # WCSS is shift invariant; centring keeps the prefix-sum formula well conditioned
        centred = self.xs - self.xs.mean()
        s1 = np.concatenate(([0.0], np.cumsum(centred)))
        s2 = np.concatenate(([0.0], np.cumsum(centred * centred)))

        cost = np.full((k_max + 1, n + 1), np.inf)
        cost[0, 0] = 0.0
        back = np.zeros((k_max + 1, n + 1), dtype=np.int64)

        if n <= _DENSE_LIMIT:
            starts = np.arange(n)[:, None]
            ends = np.arange(1, n + 1)[None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                seg = (s2[ends] - s2[starts]) - (s1[ends] - s1[starts]) ** 2 / (ends - starts)
            seg = np.where(ends > starts, np.maximum(seg, 0.0), np.inf)
            columns = np.arange(n)
            for m in range(1, k_max + 1):
                # cand[i, j-1]: best m-1 clusters over xs[:i] plus one cluster xs[i:j]
                cand = cost[m - 1, :n, None] + seg
                best = np.argmin(cand, axis=0)
                cost[m, 1:] = cand[best, columns]
                back[m, 1:] = best
        else:
            for m in range(1, k_max + 1):
                prev = cost[m - 1, :n]
                for j in range(m, n + 1):
                    starts = np.arange(j)
                    seg = (s2[j] - s2[:j]) - (s1[j] - s1[:j]) ** 2 / (j - starts)
                    cand = prev[:j] + np.maximum(seg, 0.0)
                    best = int(np.argmin(cand))
                    cost[m, j] = cand[best]
                    back[m, j] = best

        self._cost = cost
        self._back = back

    def curve(self, k_max: Optional[int] = None) -> List[float]:
        upto = self.k_max if k_max is None else min(k_max, self.k_max)
        values = np.minimum.accumulate(self._cost[1:upto + 1, self.n])
        return [float(v) for v in values]

    def clustering(self, k: int) -> Clustering:
        if not 1 <= k <= self.k_max:
            raise InvalidArgumentError(f"k={k} outside 1..{self.k_max}")
        bounds = []
        end = self.n
        for m in range(k, 0, -1):
            start = int(self._back[m, end])
            bounds.append((start, end))
            end = start
        if end != 0:
            raise InvariantViolation("k-means backtrack did not cover every point")

        # bounds runs from the highest segment down, which is the cluster order we want
        assignments = np.empty(self.n, dtype=np.int64)
        centroids = []
        wcss = 0.0
        for label, (start, stop) in enumerate(bounds):
            members = self.xs[start:stop]
            centre = float(members.mean())
            centroids.append(centre)
            wcss += float(((members - centre) ** 2).sum())
            assignments[self.order[start:stop]] = label

        result = Clustering(
            k=k,
            assignments=tuple(int(a) for a in assignments),
            centroids=tuple(centroids),
            wcss=wcss,
        )
        _check_contiguous(self.xs, assignments[self.order], result)
        return result


def _check_contiguous(sorted_weights: np.ndarray, sorted_labels: np.ndarray, clustering: Clustering) -> None:
    # ascending weights must map to non-increasing labels, with every label used
    if np.any(np.diff(sorted_labels) > 0):
        raise InvariantViolation("clusters are not contiguous in sorted order")
    if set(sorted_labels.tolist()) != set(range(clustering.k)):
        raise InvariantViolation("empty cluster in k-means output")
    if any(a < b for a, b in zip(clustering.centroids, clustering.centroids[1:])):
        raise InvariantViolation("centroids are not in descending order")


def kmeans_1d_exact(weights: Sequence[float], k: int) -> Clustering:
    """
    Globally optimal k-means partition of scalar weights.

    Args:
        weights: finite positive values
        k: number of clusters, 1 <= k <= len(weights)

    Returns:
        Clustering with centroids in descending order

    Raises:
        InvalidArgumentError: empty weights or k out of range
    """
    x = _validate_weights(weights)
    if not 1 <= k <= x.size:
        raise InvalidArgumentError(f"k={k} must be between 1 and the number of points ({x.size})")
    return _KMeansTables(x, k).clustering(k)


def wcss_curve(weights: Sequence[float], k_max: int = DEFAULT_K_MAX) -> List[float]:
    """Optimal WCSS for k = 1..min(k_max, len(weights)); element j-1 is the value at k = j."""
    return _KMeansTables(weights, k_max).curve()


def elbow_optimal_k(curve: Sequence[float], params: ElbowParams = ElbowParams()) -> int:
    """
    Per-ego optimal cluster count by the marginal explained-variance rule.

    With total variance ``W1 = curve[0]`` and ``E(k) = 1 - W(k) / W1``, returns the
    smallest k whose gain ``E(k+1) - E(k)`` falls below the threshold, or the
    largest k in the curve when every gain clears it. A zero-variance curve gives 1.

    Raises:
        InvalidArgumentError: empty curve, or the curve increases anywhere
    """
    values = np.asarray(curve, dtype=np.float64)
    if values.size == 0:
        raise InvalidArgumentError("curve must not be empty")
    if np.any(np.diff(values) > MONOTONE_TOLERANCE):
        raise InvalidArgumentError("WCSS curve must be non-increasing")

    total = float(values[0])
    if total <= params.zero_tol:
        return 1
    explained = 1.0 - values / total
    for k in range(1, values.size):
        if explained[k] - explained[k - 1] < params.marginal_gain_threshold:
            return k
    return int(values.size)


def silhouette(weights: Sequence[float], clustering: Clustering) -> float:
    """
    Mean silhouette over all points, absolute difference as distance.

    Points in singleton clusters score 0. Per-cluster distance sums use sorted
    prefix sums, so memory stays linear in the number of points.

    Raises:
        UndefinedSilhouetteError: fewer than two clusters
    """
    if clustering.k < 2:
        raise UndefinedSilhouetteError("silhouette requires at least two clusters")
    x = _validate_weights(weights)
    labels = np.asarray(clustering.assignments, dtype=np.int64)
    if labels.size != x.size:
        raise InvalidArgumentError("assignments do not match weights")

    k = clustering.k
    sizes = np.bincount(labels, minlength=k)
    if np.any(sizes == 0):
        raise InvalidArgumentError("every cluster must be non-empty")

    # dist_sum[i, c] = sum over members j of cluster c of |x_i - x_j|
    dist_sum = np.empty((x.size, k))
    for c in range(k):
        members = np.sort(x[labels == c])
        prefix = np.concatenate(([0.0], np.cumsum(members)))
        below = np.searchsorted(members, x, side="left")
        left = x * below - prefix[below]
        right = (prefix[-1] - prefix[below]) - x * (members.size - below)
        dist_sum[:, c] = left + right

    own = labels
    own_sizes = sizes[own]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(own_sizes > 1, dist_sum[np.arange(x.size), own] / (own_sizes - 1), 0.0)
        mean_to = dist_sum / sizes[None, :]
    mean_to[np.arange(x.size), own] = np.inf
    b = mean_to.min(axis=1)

    denom = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s = np.where(own_sizes > 1, s, 0.0)
    return float(s.mean())


def analyze_ego(
    ego: EgoNetwork,
    k_max: int = DEFAULT_K_MAX,
    elbow: ElbowParams = ElbowParams(),
    fixed_ks: Iterable[int] = (),
) -> ClusteringResult:
    """
    Cluster one ego: WCSS curve, elbow choice, optimal clustering, silhouette.

    Fixed-k clusterings are added for every requested k that does not exceed the
    number of distinct frequencies (beyond that, optimal centroids cannot be distinct).

    Raises:
        EgoSkippedError: fewer than two alters
    """
    if ego.degree < 2:
        raise EgoSkippedError(ego.ego_id, f"degree {ego.degree} < 2")

    weights = np.asarray(ego.frequencies, dtype=np.float64)
    distinct = int(np.unique(weights).size)
    usable_fixed = sorted(k for k in set(fixed_ks) if 1 <= k <= distinct)
    scan = min(k_max, ego.degree)
    tables = _KMeansTables(weights, max([scan] + usable_fixed))

    curve = tables.curve(scan)
    optimal_k = elbow_optimal_k(curve, elbow)
    if optimal_k > distinct:
        raise InvariantViolation(f"elbow chose k={optimal_k} with {distinct} distinct weights")
    best = tables.clustering(optimal_k)
    score = silhouette(weights, best) if optimal_k >= 2 else None

    return ClusteringResult(
        ego_id=ego.ego_id,
        direction=ego.direction,
        degree=ego.degree,
        wcss_curve=tuple(curve),
        optimal_k=optimal_k,
        clustering_at_optimal=best,
        silhouette_at_optimal=score,
        clusterings_at_fixed={k: tables.clustering(k) for k in usable_fixed},
    )


def kmeans_1d_lloyd(weights: Sequence[float], k: int, seed: int = 0, n_init: int = 10) -> Clustering:
    """Lloyd's k-means with seeded restarts, relabelled by descending centroid. Cross-checking only."""
    x = _validate_weights(weights)
    if not 1 <= k <= x.size:
        raise InvalidArgumentError(f"k={k} must be between 1 and the number of points ({x.size})")
    model = KMeans(n_clusters=k, n_init=n_init, random_state=seed).fit(x.reshape(-1, 1))
    centres = model.cluster_centers_.ravel()
    rank = np.empty(k, dtype=np.int64)
    rank[np.argsort(-centres, kind="stable")] = np.arange(k)
    labels = rank[model.labels_]
    present = sorted(set(labels.tolist()))
    centroids = tuple(float(x[labels == c].mean()) for c in present)
    wcss = float(sum(((x[labels == c] - x[labels == c].mean()) ** 2).sum() for c in present))
    return Clustering(k=k, assignments=tuple(int(v) for v in labels), centroids=centroids, wcss=wcss)


def cross_check_lloyd(weights: Sequence[float], k: int, seed: int = 0) -> Tuple[float, float]:
    """
    Compare exact and Lloyd's WCSS at ``k``.

    Returns:
        ``(exact_wcss, lloyd_wcss)``

    Raises:
        InvariantViolation: Lloyd's found a strictly better partition
    """
    exact = kmeans_1d_exact(weights, k)
    lloyd = kmeans_1d_lloyd(weights, k, seed=seed)
    if lloyd.wcss < exact.wcss - MONOTONE_TOLERANCE * max(1.0, exact.wcss):
        raise InvariantViolation(f"Lloyd's WCSS {lloyd.wcss} beats exact WCSS {exact.wcss} at k={k}")
    return exact.wcss, lloyd.wcss


AnalysisOutcome = Union[ClusteringResult, EgoSkippedError]


def _analyze_or_skip(ego: EgoNetwork, k_max: int, elbow: ElbowParams, fixed_ks: Tuple[int, ...]) -> AnalysisOutcome:
    try:
        return analyze_ego(ego, k_max=k_max, elbow=elbow, fixed_ks=fixed_ks)
    except EgoSkippedError as e:
        return e


def analyze_egos(
    egos: Iterable[EgoNetwork],
    k_max: int = DEFAULT_K_MAX,
    elbow: ElbowParams = ElbowParams(),
    fixed_ks: Iterable[int] = (),
    parallelism: int = 1,
    chunksize: int = 64,
) -> Iterator[AnalysisOutcome]:
    """
    Run :func:`analyze_ego` over many egos.

    Outcomes come back in input order whatever the worker count, so downstream
    folds see the same sequence at any parallelism. Skipped egos are yielded as
    their :class:`EgoSkippedError`.
    """
    task = partial(_analyze_or_skip, k_max=k_max, elbow=elbow, fixed_ks=tuple(sorted(set(fixed_ks))))
    if parallelism <= 1:
        yield from map(task, egos)
        return
    logger.info(f"Analysing egos with {parallelism} worker processes")
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        yield from pool.map(task, egos, chunksize=chunksize)
