"""Command for exporting one ego network as a Graphviz DOT file."""
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from src.config.settings import RunConfig
from src.errors import InvalidArgumentError
from src.models import Direction
from src.services.cluster_service import analyze_ego, kmeans_1d_exact
from src.services.egonet_service import extract_ego_network
from src.services.layer_service import assign_layers, export_ego_dot
from src.tools import Command, load_graph
from src.utils.manifest import write_manifest

logger = logging.getLogger(__name__)


EXPORT_DOT_COMMAND = Command(
    name="export-dot",
    description="Write one ego network as DOT text, alters coloured by layer and edges scaled by contact frequency.",
)


def handle_export_dot(
    config: RunConfig,
    ego_id: str,
    direction: Direction = Direction.OUTGOING,
    k: Optional[int] = None,
    output: Optional[Path] = None,
) -> Dict[str, Any]:
    """
    Handle the export-dot command.

    Args:
        config: run configuration; the graph is read from ``output_dir``
        ego_id: ego to export
        direction: which side of its relationships the ego plays
        k: layer count; the ego's own optimal k when omitted
        output: DOT file path, default ``<output_dir>/ego-<ego_id>-<direction>.dot``

    Raises:
        EgoNotFoundError: unknown ego
        InvalidArgumentError: empty ego network or k out of range
    """
    graph, source = load_graph(config)
    ego = extract_ego_network(graph, ego_id, direction)
    if ego.degree == 0:
        raise InvalidArgumentError(f"ego {ego_id} has no {direction.value} relationships")

    if k is None:
        if ego.degree < 2:
            clustering = kmeans_1d_exact(ego.frequencies, 1)
        else:
            clustering = analyze_ego(ego, k_max=config.k_max, elbow=config.elbow).clustering_at_optimal
    else:
        if k > len(set(ego.frequencies)):
            raise InvalidArgumentError(f"k={k} exceeds the {len(set(ego.frequencies))} distinct frequencies of {ego_id}")
        clustering = kmeans_1d_exact(ego.frequencies, k)
    assignment = assign_layers(clustering, ego)

    path = Path(output) if output is not None else Path(config.output_dir) / f"ego-{ego_id}-{direction.value}.dot"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(export_ego_dot(assignment, ego), encoding="utf-8")
    write_manifest(path.parent, EXPORT_DOT_COMMAND.name, config.manifest_echo(), [source])
    logger.info(f"Wrote {ego.degree}-alter ego network of {ego_id} with {assignment.k} layers to {path}")
    return {"ego_id": ego_id, "direction": direction.value, "k": assignment.k, "alters": ego.degree, "path": str(path)}
