"""Command handlers, one module per CLI subcommand."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

from src.config.settings import RunConfig
from src.errors import DataError
from src.models import Direction
from src.services.egonet_service import InteractionGraph, assemble_graph, load_snapshot
from src.services.ingest_service import read_edge_list

logger = logging.getLogger(__name__)

EDGE_LIST_FILE = "edges.tsv"
SNAPSHOT_FILE = "graph.snapshot"
INGEST_STATS_FILE = "ingest_stats.json"


@dataclass(frozen=True)
class Command:
    """Name and help text of a subcommand."""

    name: str
    description: str


def results_path(output_dir: Path, direction: Direction) -> Path:
    return Path(output_dir) / f"results-{direction.value}.jsonl"


def load_graph(config: RunConfig) -> Tuple[InteractionGraph, Path]:
    """
    Load the graph written by ingest from ``config.output_dir``.

    The binary snapshot is preferred when its month convention matches the
    config; otherwise the edge list is read.

    Returns:
        The graph and the file it was loaded from

    Raises:
        DataError: neither file exists
    """
    output_dir = Path(config.output_dir)
    snapshot = output_dir / SNAPSHOT_FILE
    edges = output_dir / EDGE_LIST_FILE
    if snapshot.exists():
        graph = load_snapshot(snapshot)
        if graph.month_days == config.month_days:
            logger.info(f"Loaded graph snapshot {snapshot}")
            return graph, snapshot
        logger.warning(
            f"Snapshot month convention {graph.month_days} differs from {config.month_days}; reading edge list"
        )
    if not edges.exists():
        raise DataError(f"no edge list at {edges}; run ingest first")
    with open(edges, "r", encoding="utf-8", newline="") as fh:
        return assemble_graph(read_edge_list(fh), month_days=config.month_days), edges
