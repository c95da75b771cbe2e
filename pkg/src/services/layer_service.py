"""Service for ordered layers, population statistics and ego-network export."""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import networkx as nx
from pydantic import BaseModel

from src.errors import EmptyPopulationError, InvalidArgumentError, InvariantViolation
from src.models import Direction, EgoNetwork
from src.services.cluster_service import Clustering, ClusteringResult

logger = logging.getLogger(__name__)

DEFAULT_K_STAR_MASS = 0.66

# Reference values reported for a large fan-fiction review corpus. Documentation only:
# the corpus is private, so none of these are test oracles.
REFERENCE_LAYER_TABLES = {
    # (direction, k): [(alters mean, alters sd, frequency mean, frequency sd) per layer]
    (Direction.OUTGOING, 2): [(9.08, 9.10, 7.01, 7.50), (50.30, 59.34, 1.26, 0.65)],
    (Direction.OUTGOING, 3): [(3.89, 3.52, 8.66, 8.04), (14.76, 13.98, 3.25, 2.92), (40.73, 51.82, 0.97, 0.58)],
    (Direction.INCOMING, 2): [(11.48, 12.39, 6.77, 8.36), (59.40, 89.79, 1.26, 0.72)],
    (Direction.INCOMING, 3): [(4.72, 4.57, 8.38, 8.82), (17.997, 19.45, 3.11, 3.32), (48.16, 78.86, 1.02, 0.70)],
}
REFERENCE_MEAN_OPTIMAL_K = {Direction.OUTGOING: 2.39, Direction.INCOMING: 2.36}
REFERENCE_MEAN_SILHOUETTE = {Direction.OUTGOING: 0.6952, Direction.INCOMING: 0.6857}
REFERENCE_K_STAR = (2, 3)
# (update encouragement, targeted) share per layer, reviewer as ego, k = 3
REFERENCE_REVIEW_MIX = [(0.176, 0.553), (0.243, 0.531), (0.279, 0.498)]
REFERENCE_OUTER_LAYER_FREQUENCY = {"fanfiction": 1.26, "facebook": 1.37, "twitter": 2.54}
REFERENCE_CORPUS = {
    "relationships": 53_202_307,
    "reviewers": 2_580_411,
    "authors": 1_373_910,
    "active_reviewer_egos": 62_869,
    "active_author_egos": 66_798,
}
REFERENCE_CLASSIFIER_ACCURACY = {"update_encouragement": 0.87, "targeted": 0.75}


@dataclass(frozen=True)
class Layer:
    index: int
    alter_ids: Tuple[str, ...]
    mean_frequency: float

    @property
    def size(self) -> int:
        return len(self.alter_ids)


@dataclass(frozen=True)
class LayerAssignment:
    """An ego's alters split into layers; layer 0 has the highest mean frequency."""

    ego_id: str
    k: int
    layers: Tuple[Layer, ...]

    @cached_property
    def _layer_of(self) -> Dict[str, int]:
        return {alter_id: layer.index for layer in self.layers for alter_id in layer.alter_ids}

    def layer_of(self, alter_id: str) -> Optional[int]:
        return self._layer_of.get(alter_id)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(layer.size for layer in self.layers)


def assign_layers(clustering: Clustering, ego: EgoNetwork) -> LayerAssignment:
    """
    Turn a clustering of ``ego``'s weights into ordered layers.

    Layers are ranked by the mean frequency of their members, so the result does
    not depend on how the clusterer numbered its clusters.

    Raises:
        InvalidArgumentError: the clustering does not match the ego
        InvariantViolation: two clusters share a mean frequency
    """
    if len(clustering.assignments) != ego.degree:
        raise InvalidArgumentError("clustering does not match the ego network")
    members: Dict[int, List[int]] = {}
    for position, label in enumerate(clustering.assignments):
        members.setdefault(label, []).append(position)

    groups = []
    for positions in members.values():
        freqs = [ego.alters[p].frequency for p in positions]
        groups.append((sum(freqs) / len(freqs), tuple(ego.alters[p].alter_id for p in positions)))
    groups.sort(key=lambda g: -g[0])
    for (upper, _), (lower, _) in zip(groups, groups[1:]):
        if not upper > lower:
            raise InvariantViolation(f"ego {ego.ego_id}: tied layer means {upper}")

    layers = tuple(Layer(index=i, alter_ids=ids, mean_frequency=mean) for i, (mean, ids) in enumerate(groups))
    return LayerAssignment(ego_id=ego.ego_id, k=len(layers), layers=layers)


class LayerStats(BaseModel):
    """Mean and population SD of layer size and layer mean frequency across egos."""

    layer: int
    egos: int
    alters_mean: float
    alters_sd: float
    frequency_mean: float
    frequency_sd: float


class PopulationSummary(BaseModel):
    direction: Direction
    ego_count: int
    p_of_x: Dict[int, float]
    mean_optimal_k: float
    k_star: List[int]
    mean_silhouette: Optional[float]
    silhouette_egos: int
    layer_tables: Dict[int, List[LayerStats]]
    restricted_to_optimal: bool = False


class _Moments:
    """Count, sum and sum of squares; merges by addition."""

    __slots__ = ("n", "total", "squares")

    def __init__(self):
        self.n = 0
        self.total = 0.0
        self.squares = 0.0

    def add(self, value: float) -> None:
        self.n += 1
        self.total += value
        self.squares += value * value

    def merge(self, other: "_Moments") -> None:
        self.n += other.n
        self.total += other.total
        self.squares += other.squares

    def mean(self) -> float:
        return self.total / self.n

    def sd(self) -> float:
        # population SD
        mean = self.mean()
        return math.sqrt(max(0.0, self.squares / self.n - mean * mean))


def select_k_star(p_of_x: Mapping[int, float], mass: float = DEFAULT_K_STAR_MASS) -> List[int]:
    """
    Shortest run of consecutive k values holding at least ``mass`` of p(x).

    Ties go to the run with more mass, then to the smaller k. Only k values with
    non-zero probability are reported.
    """
    observed = sorted(k for k, p in p_of_x.items() if p > 0)
    if not observed:
        return []
    lo, hi = observed[0], observed[-1]
    best: Optional[Tuple[int, float, int]] = None
    for start in range(lo, hi + 1):
        captured = 0.0
        for stop in range(start, hi + 1):
            captured += p_of_x.get(stop, 0.0)
            if captured >= mass - 1e-12:
                candidate = (stop - start, -captured, start)
                if best is None or candidate < best:
                    best = candidate
                break
    length, _, start = best
    return [k for k in range(start, start + length + 1) if p_of_x.get(k, 0.0) > 0]


class PopulationAccumulator:
    """Commutative-monoid fold over ClusteringResults of one direction."""

    def __init__(self, fixed_ks: Iterable[int] = (2, 3), restrict_fixed_to_optimal: bool = False):
        self.fixed_ks = tuple(sorted(set(fixed_ks)))
        self.restrict_fixed_to_optimal = restrict_fixed_to_optimal
        self.direction: Optional[Direction] = None
        self.ego_count = 0
        self.k_counts: Dict[int, int] = {}
        self.silhouette = _Moments()
        self.sizes: Dict[Tuple[int, int], _Moments] = {}
        self.freqs: Dict[Tuple[int, int], _Moments] = {}

    def _check_direction(self, direction: Optional[Direction]) -> None:
        if direction is None:
            return
        if self.direction is None:
            self.direction = direction
        elif self.direction is not direction:
            raise InvalidArgumentError("results mix ego directions")

    def add(self, result: ClusteringResult) -> None:
        self._check_direction(result.direction)
        self.ego_count += 1
        self.k_counts[result.optimal_k] = self.k_counts.get(result.optimal_k, 0) + 1
        if result.optimal_k >= 2 and result.silhouette_at_optimal is not None:
            self.silhouette.add(result.silhouette_at_optimal)
        for k in self.fixed_ks:
            clustering = result.clusterings_at_fixed.get(k)
            if clustering is None:
                continue
            if self.restrict_fixed_to_optimal and result.optimal_k != k:
                continue
            for layer, (size, centroid) in enumerate(zip(clustering.sizes, clustering.centroids)):
                self.sizes.setdefault((k, layer), _Moments()).add(size)
                self.freqs.setdefault((k, layer), _Moments()).add(centroid)

    def merge(self, other: "PopulationAccumulator") -> "PopulationAccumulator":
        if other.fixed_ks != self.fixed_ks or other.restrict_fixed_to_optimal != self.restrict_fixed_to_optimal:
            raise InvalidArgumentError("cannot merge accumulators with different settings")
        self._check_direction(other.direction)
        self.ego_count += other.ego_count
        for k, count in other.k_counts.items():
            self.k_counts[k] = self.k_counts.get(k, 0) + count
        self.silhouette.merge(other.silhouette)
        for target, source in ((self.sizes, other.sizes), (self.freqs, other.freqs)):
            for key, moments in source.items():
                target.setdefault(key, _Moments()).merge(moments)
        return self

    def summary(self, k_star_mass: float = DEFAULT_K_STAR_MASS) -> PopulationSummary:
        """
        Raises:
            EmptyPopulationError: nothing was added
        """
        if self.ego_count == 0:
            raise EmptyPopulationError("no clustering results to summarise")
        p_of_x = {k: self.k_counts[k] / self.ego_count for k in sorted(self.k_counts)}
        mean_k = sum(k * count for k, count in self.k_counts.items()) / self.ego_count
        tables = {}
        for k in self.fixed_ks:
            rows = []
            for layer in range(k):
                sizes = self.sizes.get((k, layer))
                if sizes is None or sizes.n == 0:
                    continue
                freqs = self.freqs[(k, layer)]
                rows.append(LayerStats(
                    layer=layer,
                    egos=sizes.n,
                    alters_mean=sizes.mean(),
                    alters_sd=sizes.sd(),
                    frequency_mean=freqs.mean(),
                    frequency_sd=freqs.sd(),
                ))
            tables[k] = rows
        return PopulationSummary(
            direction=self.direction,
            ego_count=self.ego_count,
            p_of_x=p_of_x,
            mean_optimal_k=mean_k,
            k_star=select_k_star(p_of_x, k_star_mass),
            mean_silhouette=self.silhouette.mean() if self.silhouette.n else None,
            silhouette_egos=self.silhouette.n,
            layer_tables=tables,
            restricted_to_optimal=self.restrict_fixed_to_optimal,
        )


def population_summary(
    results: Iterable[ClusteringResult],
    fixed_ks: Iterable[int] = (2, 3),
    restrict_fixed_to_optimal: bool = False,
    k_star_mass: float = DEFAULT_K_STAR_MASS,
) -> PopulationSummary:
    """
    Fold per-ego results into p(x), mean optimal k, k*, mean silhouette and layer tables.

    Raises:
        EmptyPopulationError: the stream is empty
        InvalidArgumentError: results mix directions
    """
    accumulator = PopulationAccumulator(fixed_ks, restrict_fixed_to_optimal)
    for result in results:
        accumulator.add(result)
    return accumulator.summary(k_star_mass)


def render_layer_table(summary: PopulationSummary) -> str:
    """Aligned text table shaped like the per-layer alters/frequency table."""
    role = "Reviewer" if summary.direction is Direction.OUTGOING else "Author"
    widest = max([len(rows) for rows in summary.layer_tables.values()] + [1])
    header = ["", "", *[f"Layer {i}" for i in range(widest)]]
    lines = [header]
    for k, rows in summary.layer_tables.items():
        alters = [f"{r.alters_mean:.2f} ± {r.alters_sd:.2f}" for r in rows]
        freqs = [f"{r.frequency_mean:.2f} ± {r.frequency_sd:.2f}" for r in rows]
        pad = ["-"] * (widest - len(rows))
        lines.append([f"{role} as ego (k={k})", "Number of Alters", *alters, *pad])
        lines.append(["", "Contact Frequency", *freqs, *pad])
    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    text = "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in lines)

    footer = [
        f"egos: {summary.ego_count}",
        f"mean optimal k: {summary.mean_optimal_k:.4f}",
        "k*: {" + ", ".join(str(k) for k in summary.k_star) + "}",
        "mean silhouette: " + ("n/a" if summary.mean_silhouette is None else f"{summary.mean_silhouette:.4f}"),
        "p(x): " + ", ".join(f"{k}:{p:.4f}" for k, p in summary.p_of_x.items()),
    ]
    return text + "\n\n" + "\n".join(footer) + "\n"


def render_p_of_x_csv(summary: PopulationSummary) -> str:
    """``k,proportion`` rows for plotting the optimal-k distribution."""
    rows = ["k,proportion"] + [f"{k},{p:.9f}" for k, p in summary.p_of_x.items()]
    return "\n".join(rows) + "\n"


def _layer_colors(k: int) -> List[str]:
    # black for layer 0, lightening towards light gray for the outermost layer
    if k == 1:
        return ["#000000"]
    return ["#{0:02x}{0:02x}{0:02x}".format(round(0xC8 * i / (k - 1))) for i in range(k)]


def ego_graph(assignment: LayerAssignment, ego: EgoNetwork, max_penwidth: float = 5.0) -> nx.DiGraph:
    """Star graph of an ego and its alters with layer colours and frequency-scaled pens."""
    if assignment.ego_id != ego.ego_id:
        raise InvalidArgumentError("assignment belongs to another ego")
    colors = _layer_colors(assignment.k)
    top = max((a.frequency for a in ego.alters), default=1.0)

    graph = nx.DiGraph(name=ego.ego_id)
    graph.add_node(ego.ego_id, style="filled", fillcolor="#d62728", shape="doublecircle")
    for alter in ego.alters:
        layer = assignment.layer_of(alter.alter_id)
        if layer is None:
            raise InvalidArgumentError(f"alter {alter.alter_id} has no layer")
        graph.add_node(alter.alter_id, style="filled", fillcolor=colors[layer], tooltip=f"layer {layer}")
        source, target = (ego.ego_id, alter.alter_id) if ego.direction is Direction.OUTGOING \
            else (alter.alter_id, ego.ego_id)
        graph.add_edge(
            source, target,
            penwidth=f"{max_penwidth * alter.frequency / top:.3f}",
            weight=f"{alter.frequency:.6f}",
        )
    return graph


def _escape_dot(value: str) -> str:
    return value.replace("\\", "\\\\").replace('"', '\\"')


def export_ego_dot(assignment: LayerAssignment, ego: EgoNetwork) -> str:
    """Graphviz DOT text for one ego network, layer 0 darkest."""
    graph = ego_graph(assignment, ego)
    # pre-quoted ids keep ":" from being read as a port
    quoted = nx.relabel_nodes(graph, {node: f'"{_escape_dot(node)}"' for node in graph}, copy=True)
    quoted.graph["name"] = _escape_dot(ego.ego_id)
    return nx.nx_pydot.to_pydot(quoted).to_string()
