"""Command for turning raw event logs into a qualifying edge list."""
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator

from src.config.settings import RunConfig
from src.errors import ConfigError, DataError
from src.models import InteractionEvent
from src.services.egonet_service import assemble_graph, save_snapshot
from src.services.ingest_service import EventParser, build_relationships, filter_relationships, write_edge_list
from src.tools import EDGE_LIST_FILE, INGEST_STATS_FILE, SNAPSHOT_FILE, Command
from src.utils.json_utils import write_json
from src.utils.manifest import write_manifest

logger = logging.getLogger(__name__)


INGEST_COMMAND = Command(
    name="ingest",
    description="Parse raw interaction logs, aggregate directed relationships and write the qualifying edge list.",
)


def iter_input_events(paths: Iterable[Path], parser: EventParser) -> Iterator[InteractionEvent]:
    """
    Stream accepted events from every input file through one parser.

    Raises:
        DataError: an input file cannot be opened
    """
    for path in paths:
        try:
            fh = open(path, "r", encoding="utf-8", newline="")
        except OSError as e:
            raise DataError(f"cannot read input {path}: {e}") from e
        with fh:
            logger.info(f"Reading events from {path}")
            yield from parser.parse(fh)


def handle_ingest(config: RunConfig) -> Dict[str, Any]:
    """
    Handle the ingest command.

    Writes ``edges.tsv``, a graph snapshot, ``ingest_stats.json`` and the run manifest.

    Args:
        config: run configuration; ``input_paths`` must be set

    Returns:
        The ingest statistics as written to ``ingest_stats.json``
    """
    if not config.input_paths:
        raise ConfigError("ingest needs at least one input path")
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    parser = EventParser(config.ingest)
    relationships = build_relationships(iter_input_events(config.input_paths, parser), shards=config.parallelism)
    qualifying = filter_relationships(relationships, config.relationship, config.month_days)
    graph = assemble_graph(qualifying, month_days=config.month_days)
    if parser.stats.accepted == 0:
        logger.warning("No events accepted; the edge list is empty")

    edge_path = output_dir / EDGE_LIST_FILE
    with open(edge_path, "w", encoding="utf-8", newline="\n") as fh:
        written = write_edge_list(graph.relationships(), fh, month_days=config.month_days)
    save_snapshot(graph, output_dir / SNAPSHOT_FILE)

    stats = {
        **parser.stats.model_dump(),
        "relationships_built": len(relationships),
        "relationships_qualifying": written,
        "self_edges_dropped": graph.self_edges_dropped,
        "nodes": graph.node_count,
    }
    write_json(output_dir / INGEST_STATS_FILE, stats)
    write_manifest(output_dir, INGEST_COMMAND.name, config.manifest_echo(), config.input_paths)
    logger.info(f"Wrote {written} edges to {edge_path}")
    return stats
