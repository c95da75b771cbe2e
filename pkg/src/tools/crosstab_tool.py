"""Command for the review-type crosstab over network layers."""
import logging
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List

import numpy as np

from src.config.settings import RunConfig
from src.errors import ConfigError, DataError, MissingLabelsError
from src.models import Direction, InteractionEvent
from src.services.cluster_service import kmeans_1d_exact
from src.services.egonet_service import InteractionGraph, extract_ego_network
from src.services.ingest_service import EventParser
from src.services.layer_service import LayerAssignment, assign_layers
from src.services.review_service import (
    HeuristicReviewClassifier,
    layer_review_crosstab,
    load_labels,
    render_crosstab_table,
)
from src.tools import Command, load_graph, results_path
from src.tools.ingest_tool import iter_input_events
from src.utils.json_utils import iter_json_lines, write_json
from src.utils.manifest import write_manifest

logger = logging.getLogger(__name__)


CROSSTAB_COMMAND = Command(
    name="crosstab",
    description="Count update-encouragement and targeted reviews in each layer of the analysed ego networks.",
)


def read_analysed_egos(path: Path) -> List[str]:
    """
    Ego ids listed in an analyze results file, in file order.

    Raises:
        DataError: the file is missing or holds a bad line
    """
    if not path.exists():
        raise DataError(f"no analysis results at {path}; run analyze first")
    ego_ids = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, record in iter_json_lines(fh):
            if record is None or not isinstance(record.get("ego_id"), str):
                raise DataError(f"{path} line {line_number}: not an analysis result")
            ego_ids.append(record["ego_id"])
    return ego_ids


def layer_assignments(graph: InteractionGraph, ego_ids: Iterable[str], direction: Direction, k: int) -> Dict[str, LayerAssignment]:
    """
    Recluster each ego at ``k`` and rank its layers.

    Egos with fewer than ``k`` distinct frequencies get no assignment, so their
    events are reported as unassigned.
    """
    assignments = {}
    for ego_id in ego_ids:
        ego = extract_ego_network(graph, ego_id, direction)
        if np.unique(ego.frequencies).size < k:
            logger.warning(f"Ego {ego_id} has fewer than {k} distinct frequencies; its events stay unassigned")
            continue
        assignments[ego_id] = assign_layers(kmeans_1d_exact(ego.frequencies, k), ego)
    return assignments


def _events_of(events: Iterable[InteractionEvent], egos: FrozenSet[str], direction: Direction) -> Iterator[InteractionEvent]:
    for event in events:
        if direction.ego_and_alter(event.source_id, event.target_id)[0] in egos:
            yield event


def handle_crosstab(config: RunConfig) -> Dict[str, Any]:
    """
    Handle the crosstab command.

    Events are re-read from ``input_paths`` and restricted to egos present in the
    analyze results for ``crosstab_direction``.

    Raises:
        ConfigError: no label source configured, or no input paths
        MissingLabelsError: the label file does not exist
    """
    if config.label_source == "none":
        raise ConfigError("crosstab needs label_source 'file' or 'heuristic'")
    if not config.input_paths:
        raise ConfigError("crosstab needs the input event logs in input_paths")

    output_dir = Path(config.output_dir)
    direction = config.crosstab_direction
    labels = None
    classifier = None
    inputs = list(config.input_paths)
    if config.label_source == "file":
        if not config.label_path.exists():
            raise MissingLabelsError(f"label file {config.label_path} does not exist")
        with open(config.label_path, "r", encoding="utf-8", newline="") as fh:
            labels, label_stats = load_labels(fh, strict=config.ingest.strict)
        logger.info(f"Loaded {label_stats.loaded} labels from {config.label_path}")
        inputs.append(config.label_path)
    else:
        classifier = HeuristicReviewClassifier(config.lexicon)

    graph, source = load_graph(config)
    results = results_path(output_dir, direction)
    ego_ids = read_analysed_egos(results)
    assignments = layer_assignments(graph, ego_ids, direction, config.crosstab_k)

    events = _events_of(iter_input_events(config.input_paths, EventParser(config.ingest)), frozenset(ego_ids), direction)
    crosstab = layer_review_crosstab(
        events, labels, assignments, direction,
        k=config.crosstab_k, unlabeled_policy=config.unlabeled_policy, classifier=classifier,
    )
    if crosstab.unlabeled and all(r.total == 0 for r in crosstab.layers):
        logger.warning("No event carried a label; the crosstab is empty")

    report = crosstab.model_dump(mode="json")
    write_json(output_dir / f"crosstab-{direction.value}.json", report)
    (output_dir / f"crosstab-{direction.value}.txt").write_text(render_crosstab_table(crosstab), encoding="utf-8")
    write_manifest(output_dir, CROSSTAB_COMMAND.name, config.manifest_echo(), [*inputs, source, results])
    return report
