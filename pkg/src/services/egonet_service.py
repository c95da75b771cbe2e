"""Service for the relationship graph and per-ego weight vectors."""
import logging
import struct
from pathlib import Path
from types import MappingProxyType
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from src.config.settings import InclusionCriteria
from src.errors import DataError, EgoNotFoundError
from src.models import AlterFreq, Direction, EgoNetwork, Relationship
from src.utils.date_utils import MONTH_DAYS, SECONDS_PER_DAY

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"DUNBARG\x00"
SNAPSHOT_VERSION = 2


class InteractionGraph:
    """Immutable directed graph of qualifying relationships.

    Every edge is indexed once by source (forward) and once by target
    (reverse). Nothing mutates after construction, so any number of workers
    may read it concurrently.
    """

    def __init__(self, relationships: Iterable[Relationship], month_days: float = MONTH_DAYS):
        forward: Dict[str, List[Relationship]] = {}
        reverse: Dict[str, List[Relationship]] = {}
        self_edges = 0
        for rel in relationships:
            if rel.source_id == rel.target_id:
                self_edges += 1
                continue
            forward.setdefault(rel.source_id, []).append(rel)
            reverse.setdefault(rel.target_id, []).append(rel)

        self.month_days = month_days
        self.self_edges_dropped = self_edges
        self._forward: Mapping[str, Tuple[Relationship, ...]] = MappingProxyType(
            {node: tuple(edges) for node, edges in forward.items()}
        )
        self._reverse: Mapping[str, Tuple[Relationship, ...]] = MappingProxyType(
            {node: tuple(edges) for node, edges in reverse.items()}
        )
        self._nodes: FrozenSet[str] = frozenset(forward) | frozenset(reverse)
        self._edge_count = sum(len(edges) for edges in forward.values())

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return self._edge_count

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def nodes(self) -> List[str]:
        return sorted(self._nodes)

    def edges(self, ego_id: str, direction: Direction) -> Tuple[Relationship, ...]:
        """Outgoing edges of a source (OUTGOING) or incoming edges of a target (INCOMING)."""
        index = self._forward if direction is Direction.OUTGOING else self._reverse
        return index.get(ego_id, ())

    def egos(self, direction: Direction) -> List[str]:
        """Nodes with at least one edge in ``direction``, sorted."""
        index = self._forward if direction is Direction.OUTGOING else self._reverse
        return sorted(index)

    def relationships(self) -> List[Relationship]:
        """All edges sorted by (source_id, target_id)."""
        return sorted(
            (rel for edges in self._forward.values() for rel in edges),
            key=lambda rel: rel.key,
        )


def assemble_graph(relationships: Iterable[Relationship], month_days: float = MONTH_DAYS) -> InteractionGraph:
    """Index qualifying relationships both ways, dropping self-edges."""
    graph = InteractionGraph(relationships, month_days=month_days)
    if graph.self_edges_dropped:
        logger.warning(f"Dropped {graph.self_edges_dropped} self-edges")
    logger.info(f"Assembled graph: {graph.node_count} nodes, {graph.edge_count} edges")
    return graph


def ego_activity_rate(graph: InteractionGraph, ego_id: str, direction: Direction) -> float:
    """
    Events per month given (OUTGOING) or received (INCOMING) by an ego.

    The activity span runs from the earliest first event to the latest last event
    over the ego's edges in that direction and is floored at one month.
    """
    edges = graph.edges(ego_id, direction)
    if not edges:
        return 0.0
    total = sum(rel.event_count for rel in edges)
    first = min(rel.first_ts for rel in edges)
    last = max(rel.last_ts for rel in edges)
    span_months = max(1.0, (last - first) / SECONDS_PER_DAY / graph.month_days)
    return total / span_months


def select_active_egos(
    graph: InteractionGraph,
    direction: Direction,
    criteria: InclusionCriteria = InclusionCriteria(),
) -> FrozenSet[str]:
    """
    Egos meeting both the activity-rate and the connection-count thresholds.

    Connections are counted on the qualifying (post-filter) graph.
    """
    selected = frozenset(
        ego_id
        for ego_id in graph.egos(direction)
        if len(graph.edges(ego_id, direction)) >= criteria.min_connections
        and ego_activity_rate(graph, ego_id, direction) >= criteria.min_monthly_rate
    )
    logger.info(f"Selected {len(selected)} active {direction.value} egos")
    return selected


def extract_ego_network(graph: InteractionGraph, ego_id: str, direction: Direction) -> EgoNetwork:
    """
    Build an ego's weight vector in the requested direction.

    Alters are ordered by descending contact frequency, ties by ascending alter id.

    Raises:
        EgoNotFoundError: ego_id is not a node of the graph
    """
    if not graph.has_node(ego_id):
        raise EgoNotFoundError(f"unknown ego {ego_id}")
    alters = []
    for rel in graph.edges(ego_id, direction):
        _, alter_id = direction.ego_and_alter(rel.source_id, rel.target_id)
        alters.append(AlterFreq(alter_id, rel.frequency(graph.month_days)))
    alters.sort(key=lambda a: (-a.frequency, a.alter_id))
    return EgoNetwork(ego_id=ego_id, direction=direction, alters=tuple(alters))


class DatasetAccounting(BaseModel):
    """Raw counts describing the analysed subset of one direction."""

    direction: Direction
    active_egos: int
    distinct_alters: int
    relationships: int
    degree_mean: Optional[float]
    degree_sd: Optional[float]
    frequency_mean: Optional[float]
    frequency_sd: Optional[float]
    events_covered: int
    events_total: int


def dataset_accounting(graph: InteractionGraph, egos: Iterable[str], direction: Direction) -> DatasetAccounting:
    """Counts for the active subset; percentage definitions are left to the reader."""
    degrees = []
    frequencies = []
    alters = set()
    covered = 0
    for ego_id in sorted(egos):
        edges = graph.edges(ego_id, direction)
        degrees.append(len(edges))
        for rel in edges:
            alters.add(direction.ego_and_alter(rel.source_id, rel.target_id)[1])
            frequencies.append(rel.frequency(graph.month_days))
            covered += rel.event_count
    total = sum(rel.event_count for rel in graph.relationships())
    return DatasetAccounting(
        direction=direction,
        active_egos=len(degrees),
        distinct_alters=len(alters),
        relationships=len(frequencies),
        degree_mean=float(np.mean(degrees)) if degrees else None,
        degree_sd=float(np.std(degrees)) if degrees else None,
        frequency_mean=float(np.mean(frequencies)) if frequencies else None,
        frequency_sd=float(np.std(frequencies)) if frequencies else None,
        events_covered=covered,
        events_total=total,
    )


def save_snapshot(graph: InteractionGraph, path: Path) -> None:
    """
    Persist a graph as a compact binary snapshot.

    Layout: 8-byte magic, little-endian uint16 version, little-endian float64
    month convention, then ``.npy`` blocks for the node table and the edge
    arrays (source index, target index, count, first_ts, last_ts). Node ids are
    stored as one UTF-8 byte block plus offsets, so any string survives intact.
    """
    nodes = graph.nodes()
    index = {node: i for i, node in enumerate(nodes)}
    rels = graph.relationships()
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<Hd", SNAPSHOT_VERSION, graph.month_days))
        encoded = [node.encode("utf-8") for node in nodes]
        offsets = np.concatenate(([0], np.cumsum([len(b) for b in encoded], dtype=np.int64)))
        np.save(fh, np.frombuffer(b"".join(encoded), dtype=np.uint8), allow_pickle=False)
        np.save(fh, offsets.astype(np.int64), allow_pickle=False)
        np.save(fh, np.array([index[r.source_id] for r in rels], dtype=np.int64), allow_pickle=False)
        np.save(fh, np.array([index[r.target_id] for r in rels], dtype=np.int64), allow_pickle=False)
        np.save(fh, np.array([r.event_count for r in rels], dtype=np.int64), allow_pickle=False)
        np.save(fh, np.array([r.first_ts for r in rels], dtype=np.int64), allow_pickle=False)
        np.save(fh, np.array([r.last_ts for r in rels], dtype=np.int64), allow_pickle=False)
    logger.info(f"Saved graph snapshot to {path}: {len(nodes)} nodes, {len(rels)} edges")


def load_snapshot(path: Path) -> InteractionGraph:
    """
    Reload a graph written by :func:`save_snapshot`.

    Raises:
        DataError: wrong magic, unsupported version or truncated file
    """
    header_size = struct.calcsize("<Hd")
    with open(path, "rb") as fh:
        if fh.read(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
            raise DataError(f"{path} is not a graph snapshot")
        header = fh.read(header_size)
        if len(header) != header_size:
            raise DataError(f"{path} is truncated")
        version, month_days = struct.unpack("<Hd", header)
        if version != SNAPSHOT_VERSION:
            raise DataError(f"unsupported snapshot version {version}")
        try:
            blob = np.load(fh, allow_pickle=False).tobytes()
            offsets = np.load(fh, allow_pickle=False)
            src, dst, counts, firsts, lasts = (np.load(fh, allow_pickle=False) for _ in range(5))
        except (ValueError, EOFError) as e:
            raise DataError(f"{path} is corrupt: {e}") from e
    try:
        nodes = [blob[offsets[i]:offsets[i + 1]].decode("utf-8") for i in range(offsets.size - 1)]
    except UnicodeDecodeError as e:
        raise DataError(f"{path} has an unreadable node table: {e}") from e

    rels = [
        Relationship(
            source_id=nodes[s], target_id=nodes[t],
            event_count=int(c), first_ts=int(f), last_ts=int(l),
        )
        for s, t, c, f, l in zip(src, dst, counts, firsts, lasts)
    ]
    return InteractionGraph(rels, month_days=month_days)
