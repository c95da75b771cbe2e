"""Command for generating a synthetic corpus with a ground-truth ledger."""
import logging
from pathlib import Path
from typing import Any, Dict

from src.config.settings import RunConfig
from src.services.review_service import write_labels
from src.services.synth_service import generate_event_log, write_events_csv
from src.tools import Command
from src.utils.manifest import write_manifest

logger = logging.getLogger(__name__)

EVENTS_FILE = "events.csv"
LABELS_FILE = "labels.csv"
LEDGER_FILE = "ledger.jsonl"


SYNTH_COMMAND = Command(
    name="synth",
    description="Generate an event log with planted layers, its label file and the ground-truth ledger.",
)


def handle_synth(config: RunConfig) -> Dict[str, Any]:
    """
    Handle the synth command.

    Writes ``events.csv`` in the default ingest format, ``labels.csv`` in the
    label file format and ``ledger.jsonl``.

    Returns:
        Counts of generated egos, events and ledger lines
    """
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    corpus = generate_event_log(config.synth, seed=config.seed, month_days=config.month_days)

    with open(output_dir / EVENTS_FILE, "w", encoding="utf-8", newline="") as fh:
        events = write_events_csv(corpus.events, fh)
    with open(output_dir / LABELS_FILE, "w", encoding="utf-8", newline="") as fh:
        write_labels(((e.event_id, e.label) for e in corpus.ledger.events), fh)
    with open(output_dir / LEDGER_FILE, "w", encoding="utf-8", newline="\n") as fh:
        ledger_lines = corpus.ledger.write(fh)

    write_manifest(output_dir, SYNTH_COMMAND.name, config.manifest_echo(), [])
    logger.info(f"Wrote {events} events for {len(corpus.egos)} egos to {output_dir}")
    return {"egos": len(corpus.egos), "events": events, "ledger_lines": ledger_lines}
