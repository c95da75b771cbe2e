"""Command-line driver for the layered ego-network toolkit."""
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click

from src import __version__
from src.config.settings import RunConfig, load_run_config
from src.errors import DataError, DunbarError, InvariantViolation
from src.models import Direction
from src.tools.analyze_tool import ANALYZE_COMMAND, handle_analyze
from src.tools.crosstab_tool import CROSSTAB_COMMAND, handle_crosstab
from src.tools.export_dot_tool import EXPORT_DOT_COMMAND, handle_export_dot
from src.tools.ingest_tool import INGEST_COMMAND, handle_ingest
from src.tools.synth_tool import SYNTH_COMMAND, handle_synth

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

_DIRECTIONS = click.Choice([d.value for d in Direction])


def configure_logging(verbose: bool = False) -> None:
    """Log to stderr so stdout and report files stay clean."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def _compact(values: Dict[str, Any]) -> Dict[str, Any]:
    # drop flags that were not given so file values survive
    compacted = {}
    for key, value in values.items():
        if isinstance(value, dict):
            value = _compact(value)
        elif isinstance(value, tuple):
            value = list(value)
        if value is None or value == [] or value == {}:
            continue
        compacted[key] = value
    return compacted


def _load_config(ctx: click.Context, overrides: Dict[str, Any]) -> RunConfig:
    obj = ctx.find_root().obj
    return load_run_config(obj["config_path"], _compact({**obj["overrides"], **overrides}))


class ExitCodeGroup(click.Group):
    """Maps failures to exit codes: 1 usage or config, 2 data, 3 internal invariant."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                              standalone_mode=False, **extra)
        except click.exceptions.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)
        except click.ClickException as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except OSError as e:
            logger.error(f"I/O failure: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(DataError.exit_code)
        except DunbarError as e:
            logger.error(f"{type(e).__name__}: {e}", exc_info=isinstance(e, InvariantViolation))
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)
        except Exception as e:
            logger.error(f"Unexpected failure: {e}", exc_info=True)
            click.echo(f"Internal error: {e}", err=True)
            sys.exit(InvariantViolation.exit_code)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


@click.group(cls=ExitCodeGroup)
@click.version_option(__version__, prog_name="dunbar")
@click.option("--config", "config_path", type=click.Path(path_type=Path, dir_okay=False),
              help="YAML run configuration.")
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
@click.option("--output-dir", type=click.Path(path_type=Path, file_okay=False), help="Directory for every output file.")
@click.option("--parallelism", type=int, help="Worker processes for per-ego analysis.")
@click.option("--seed", type=int, help="Seed for synthesis and Lloyd cross-checks.")
@click.option("--month-days", type=float, help="Days per month in durations and frequencies.")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[Path], verbose: bool, output_dir: Optional[Path],
        parallelism: Optional[int], seed: Optional[int], month_days: Optional[float]) -> None:
    """Layered ego-network analysis of time-stamped interaction logs."""
    configure_logging(verbose)
    ctx.obj = {
        "config_path": config_path,
        "overrides": {"output_dir": output_dir, "parallelism": parallelism, "seed": seed, "month_days": month_days},
    }


@cli.command(INGEST_COMMAND.name, help=INGEST_COMMAND.description)
@click.argument("inputs", nargs=-1, type=click.Path(path_type=Path, dir_okay=False))
@click.option("--format", "input_format", type=click.Choice(["csv", "jsonl"]), help="Input record format.")
@click.option("--delimiter", help="Field delimiter for delimited text.")
@click.option("--timestamp-format", type=click.Choice(["iso", "unix"]), help="How timestamps are written.")
@click.option("--strict/--lenient", default=None, help="Fail on the first malformed record.")
@click.pass_context
def ingest(ctx: click.Context, inputs, input_format, delimiter, timestamp_format, strict) -> None:
    config = _load_config(ctx, {
        "input_paths": inputs,
        "ingest": {"format": input_format, "delimiter": delimiter,
                   "timestamp_format": timestamp_format, "strict": strict},
    })
    stats = handle_ingest(config)
    click.echo(json.dumps(stats, indent=2), err=True)


@cli.command(ANALYZE_COMMAND.name, help=ANALYZE_COMMAND.description)
@click.option("--k-max", type=int, help="Largest k scanned per ego.")
@click.option("--elbow-threshold", type=float, help="Marginal explained-variance gain below which k stops growing.")
@click.option("--fixed-k", "fixed_ks", type=int, multiple=True, help="Fixed k for layer tables (repeatable).")
@click.option("--direction", "directions", type=_DIRECTIONS, multiple=True, help="Ego direction (repeatable).")
@click.option("--restrict-fixed-to-optimal/--all-egos-at-fixed-k", default=None,
              help="Layer tables only from egos whose optimal k equals the fixed k.")
@click.option("--cross-check-lloyd/--no-cross-check-lloyd", default=None, help="Compare each optimum with Lloyd's k-means.")
@click.pass_context
def analyze(ctx: click.Context, k_max, elbow_threshold, fixed_ks, directions, restrict_fixed_to_optimal,
            cross_check_lloyd) -> None:
    config = _load_config(ctx, {
        "k_max": k_max,
        "elbow": {"marginal_gain_threshold": elbow_threshold},
        "fixed_ks": fixed_ks,
        "directions": directions,
        "restrict_fixed_to_optimal": restrict_fixed_to_optimal,
        "cross_check_lloyd": cross_check_lloyd,
    })
    reports = handle_analyze(config)
    for direction, report in reports.items():
        click.echo(
            f"{direction}: {report['ego_count']} egos, mean optimal k {report['mean_optimal_k']:.4f}, "
            f"k* {report['k_star']}"
        )


@cli.command(CROSSTAB_COMMAND.name, help=CROSSTAB_COMMAND.description)
@click.argument("inputs", nargs=-1, type=click.Path(path_type=Path, dir_okay=False))
@click.option("--label-source", type=click.Choice(["file", "heuristic", "none"]), help="Where labels come from.")
@click.option("--label-path", type=click.Path(path_type=Path, dir_okay=False), help="Label file for --label-source file.")
@click.option("--k", "crosstab_k", type=int, help="Layer count the egos are reclustered at.")
@click.option("--direction", "crosstab_direction", type=_DIRECTIONS, help="Ego direction.")
@click.option("--unlabeled-policy", type=click.Choice(["excluded", "in_denominator"]),
              help="Whether unlabeled events count in layer totals.")
@click.pass_context
def crosstab(ctx: click.Context, inputs, label_source, label_path, crosstab_k, crosstab_direction, unlabeled_policy) -> None:
    config = _load_config(ctx, {
        "input_paths": inputs,
        "label_source": label_source,
        "label_path": label_path,
        "crosstab_k": crosstab_k,
        "crosstab_direction": crosstab_direction,
        "unlabeled_policy": unlabeled_policy,
    })
    report = handle_crosstab(config)
    for row in report["layers"]:
        click.echo(f"layer {row['layer']}: {row['total']} reviews, "
                   f"{row['update_encouragement']} update encouragement, {row['targeted']} targeted")


@cli.command(SYNTH_COMMAND.name, help=SYNTH_COMMAND.description)
@click.option("--n-egos", type=int, help="Number of egos to plant.")
@click.option("--frequency-model", type=click.Choice(["gaussian", "lognormal"]), help="Per-alter frequency distribution.")
@click.pass_context
def synth(ctx: click.Context, n_egos, frequency_model) -> None:
    config = _load_config(ctx, {"synth": {"n_egos": n_egos, "frequency_model": frequency_model}})
    counts = handle_synth(config)
    click.echo(f"{counts['egos']} egos, {counts['events']} events")


@cli.command(EXPORT_DOT_COMMAND.name, help=EXPORT_DOT_COMMAND.description)
@click.option("--ego", "ego_id", required=True, help="Ego id to export.")
@click.option("--direction", type=_DIRECTIONS, default=Direction.OUTGOING.value, show_default=True)
@click.option("--k", type=int, help="Layer count; the ego's optimal k when omitted.")
@click.option("--output", type=click.Path(path_type=Path, dir_okay=False), help="DOT file to write.")
@click.pass_context
def export_dot(ctx: click.Context, ego_id, direction, k, output) -> None:
    config = _load_config(ctx, {})
    result = handle_export_dot(config, ego_id, Direction(direction), k=k, output=output)
    click.echo(result["path"])


def main() -> None:
    """Main entry point."""
    cli(prog_name="dunbar")


if __name__ == "__main__":
    main()
