"""Command for the per-ego layer analysis and its population reports."""
import logging
from pathlib import Path
from typing import Any, Dict, List

from src.config.settings import RunConfig
from src.errors import EmptyPopulationError, EgoSkippedError
from src.models import Direction, EgoNetwork
from src.services.cluster_service import analyze_egos, cross_check_lloyd
from src.services.egonet_service import (
    InteractionGraph,
    dataset_accounting,
    extract_ego_network,
    select_active_egos,
)
from src.services.layer_service import PopulationAccumulator, render_layer_table, render_p_of_x_csv
from src.tools import Command, load_graph, results_path
from src.utils.json_utils import dumps_line, write_json
from src.utils.manifest import write_manifest

logger = logging.getLogger(__name__)


ANALYZE_COMMAND = Command(
    name="analyze",
    description="Cluster every active ego's contact frequencies and write per-ego results and population reports.",
)


def analyze_direction(graph: InteractionGraph, direction: Direction, config: RunConfig) -> Dict[str, Any]:
    """
    Analyse one direction and write its reports into ``config.output_dir``.

    Files: ``results-<direction>.jsonl``, ``summary-<direction>.json``,
    ``layers-<direction>.txt`` and ``px-<direction>.csv``.

    Raises:
        EmptyPopulationError: no ego meets the inclusion criteria, or none could be clustered
    """
    output_dir = Path(config.output_dir)
    active = select_active_egos(graph, direction, config.inclusion)
    if not active:
        raise EmptyPopulationError(
            f"no active {direction.value} egos: none has at least {config.inclusion.min_connections} "
            f"qualifying connections and {config.inclusion.min_monthly_rate} events per month "
            f"among {len(graph.egos(direction))} candidates"
        )

    egos: List[EgoNetwork] = [extract_ego_network(graph, ego_id, direction) for ego_id in sorted(active)]
    accumulator = PopulationAccumulator(config.fixed_ks, config.restrict_fixed_to_optimal)
    skipped = 0
    checked = 0
    outcomes = analyze_egos(
        egos, k_max=config.k_max, elbow=config.elbow, fixed_ks=config.fixed_ks, parallelism=config.parallelism,
    )
    with open(results_path(output_dir, direction), "w", encoding="utf-8", newline="\n") as fh:
        for ego, outcome in zip(egos, outcomes):
            if isinstance(outcome, EgoSkippedError):
                logger.warning(str(outcome))
                skipped += 1
                continue
            fh.write(dumps_line(outcome.to_record()))
            fh.write("\n")
            accumulator.add(outcome)
            if config.cross_check_lloyd and outcome.optimal_k >= 2:
                cross_check_lloyd(ego.frequencies, outcome.optimal_k, seed=config.seed)
                checked += 1

    summary = accumulator.summary(config.k_star_mass)
    logger.info(
        f"{direction.value}: {summary.ego_count} egos analysed, {skipped} skipped, "
        f"mean optimal k {summary.mean_optimal_k:.4f}, k* {summary.k_star}"
    )
    report = {
        **summary.model_dump(mode="json"),
        "skipped_egos": skipped,
        "lloyd_cross_checks": checked,
        "accounting": dataset_accounting(graph, active, direction).model_dump(mode="json"),
    }
    write_json(output_dir / f"summary-{direction.value}.json", report)
    (output_dir / f"layers-{direction.value}.txt").write_text(render_layer_table(summary), encoding="utf-8")
    (output_dir / f"px-{direction.value}.csv").write_text(render_p_of_x_csv(summary), encoding="utf-8")
    return report


def handle_analyze(config: RunConfig) -> Dict[str, Any]:
    """
    Handle the analyze command for every configured direction.

    Returns:
        Summary report per direction value
    """
    graph, source = load_graph(config)
    Path(config.output_dir).mkdir(parents=True, exist_ok=True)
    reports = {direction.value: analyze_direction(graph, direction, config) for direction in config.directions}
    write_manifest(config.output_dir, ANALYZE_COMMAND.name, config.manifest_echo(), [source])
    return reports
