"""Service for review labels and their distribution over network layers.

The keyword heuristic is a low-fidelity fallback for corpora without labels;
externally classified label files are the primary source.
"""
import csv
import logging
import re
from typing import Dict, Iterable, List, Literal, Mapping, Optional, TextIO, Tuple

from pydantic import BaseModel

from src.config.settings import ReviewLexicon
from src.errors import DataError, MalformedRecordError
from src.models import Direction, InteractionEvent, ReviewLabel
from src.services.layer_service import LayerAssignment
from src.utils.json_utils import parse_bool

logger = logging.getLogger(__name__)

LABEL_COLUMNS = ("event_id", "update_encouragement", "targeted")
UnlabeledPolicy = Literal["excluded", "in_denominator"]


class HeuristicReviewClassifier:
    """Case-insensitive regex lexicons for update encouragement and targeted reviews."""

    def __init__(self, lexicon: ReviewLexicon = ReviewLexicon()):
        self.lexicon = lexicon
        self._update = [re.compile(p, re.IGNORECASE) for p in lexicon.update_patterns]
        self._targeted = [re.compile(p, re.IGNORECASE) for p in lexicon.targeted_patterns]

    def classify(self, text: str) -> ReviewLabel:
        return ReviewLabel(
            update_encouragement=any(p.search(text) for p in self._update),
            targeted=any(p.search(text) for p in self._targeted),
        )


_default_classifier = HeuristicReviewClassifier()


def classify_review_heuristic(text: str, lexicon: Optional[ReviewLexicon] = None) -> ReviewLabel:
    """Label one review text with the default (or a given) lexicon. Empty text gets no labels."""
    classifier = _default_classifier if lexicon is None else HeuristicReviewClassifier(lexicon)
    return classifier.classify(text or "")


class LabelStats(BaseModel):
    records: int = 0
    loaded: int = 0
    duplicates: int = 0
    malformed: int = 0


def load_labels(stream: TextIO, delimiter: str = ",", strict: bool = False) -> Tuple[Dict[str, ReviewLabel], LabelStats]:
    """
    Read a label file with header ``event_id, update_encouragement, targeted``.

    Booleans may be 0/1 or true/false. A repeated event_id replaces the earlier
    label and is counted as a duplicate.

    Raises:
        DataError: the header lacks a required column
        MalformedRecordError: a bad row under the strict policy
    """
    reader = csv.DictReader(stream, delimiter=delimiter)
    labels: Dict[str, ReviewLabel] = {}
    stats = LabelStats()
    if reader.fieldnames is None:
        return labels, stats
    missing = set(LABEL_COLUMNS) - set(reader.fieldnames)
    if missing:
        raise DataError(f"label file is missing columns: {sorted(missing)}")

    for row in reader:
        stats.records += 1
        try:
            event_id = (row["event_id"] or "").strip()
            if not event_id:
                raise ValueError("missing event_id")
            label = ReviewLabel(
                update_encouragement=parse_bool(row["update_encouragement"]),
                targeted=parse_bool(row["targeted"]),
            )
        except (ValueError, AttributeError) as e:
            if strict:
                raise MalformedRecordError(str(e), reader.line_num) from e
            stats.malformed += 1
            logger.warning(f"Skipping malformed label row {reader.line_num}: {e}")
            continue
        if event_id in labels:
            stats.duplicates += 1
        labels[event_id] = label

    stats.loaded = len(labels)
    if stats.duplicates:
        logger.warning(f"{stats.duplicates} duplicate event ids in label file; last occurrence kept")
    return labels, stats


def write_labels(labels: Iterable[Tuple[str, ReviewLabel]], fh: TextIO) -> int:
    """Write ``(event_id, label)`` pairs in the label file format."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(LABEL_COLUMNS)
    count = 0
    for event_id, label in labels:
        writer.writerow([event_id, int(label.update_encouragement), int(label.targeted)])
        count += 1
    return count


class LayerReviewCounts(BaseModel):
    layer: int
    total: int
    update_encouragement: int
    update_encouragement_proportion: Optional[float]
    targeted: int
    targeted_proportion: Optional[float]


class LayerCrosstab(BaseModel):
    """Review-type counts per layer. Proportions are None where a layer has no reviews."""

    direction: Direction
    k: int
    unlabeled_policy: UnlabeledPolicy
    layers: List[LayerReviewCounts]
    unassigned: int
    unlabeled: int


class CrosstabAccumulator:
    """Mergeable fold of events into per-layer review counts.

    An event whose (ego, alter) pair has no layer goes to ``unassigned``. An
    assigned event without a label counts in ``unlabeled``, and in the layer
    total only under the ``in_denominator`` policy.
    """

    def __init__(self, direction: Direction, k: int, unlabeled_policy: UnlabeledPolicy = "excluded"):
        self.direction = direction
        self.k = k
        self.unlabeled_policy = unlabeled_policy
        self.totals = [0] * k
        self.update = [0] * k
        self.targeted = [0] * k
        self.unassigned = 0
        self.unlabeled = 0

    def add(self, event: InteractionEvent, label: Optional[ReviewLabel], assignments: Mapping[str, LayerAssignment]) -> None:
        ego_id, alter_id = self.direction.ego_and_alter(event.source_id, event.target_id)
        assignment = assignments.get(ego_id)
        layer = assignment.layer_of(alter_id) if assignment is not None else None
        if layer is None or layer >= self.k:
            self.unassigned += 1
            return
        if label is None:
            self.unlabeled += 1
            if self.unlabeled_policy == "in_denominator":
                self.totals[layer] += 1
            return
        self.totals[layer] += 1
        self.update[layer] += int(label.update_encouragement)
        self.targeted[layer] += int(label.targeted)

    def merge(self, other: "CrosstabAccumulator") -> "CrosstabAccumulator":
        if (other.direction, other.k, other.unlabeled_policy) != (self.direction, self.k, self.unlabeled_policy):
            raise DataError("cannot merge crosstabs with different settings")
        for i in range(self.k):
            self.totals[i] += other.totals[i]
            self.update[i] += other.update[i]
            self.targeted[i] += other.targeted[i]
        self.unassigned += other.unassigned
        self.unlabeled += other.unlabeled
        return self

    def result(self) -> LayerCrosstab:
        rows = []
        for i in range(self.k):
            total = self.totals[i]
            rows.append(LayerReviewCounts(
                layer=i,
                total=total,
                update_encouragement=self.update[i],
                update_encouragement_proportion=self.update[i] / total if total else None,
                targeted=self.targeted[i],
                targeted_proportion=self.targeted[i] / total if total else None,
            ))
        return LayerCrosstab(
            direction=self.direction,
            k=self.k,
            unlabeled_policy=self.unlabeled_policy,
            layers=rows,
            unassigned=self.unassigned,
            unlabeled=self.unlabeled,
        )


def resolve_label(
    event: InteractionEvent,
    labels: Optional[Mapping[str, ReviewLabel]] = None,
    classifier: Optional[HeuristicReviewClassifier] = None,
) -> Optional[ReviewLabel]:
    """Label lookup order: label file, inline label, heuristic on non-empty text."""
    if labels is not None and event.event_id in labels:
        return labels[event.event_id]
    if event.label is not None:
        return event.label
    if classifier is not None and event.text:
        return classifier.classify(event.text)
    return None


def layer_review_crosstab(
    events: Iterable[InteractionEvent],
    labels: Optional[Mapping[str, ReviewLabel]],
    assignments: Mapping[str, LayerAssignment],
    direction: Direction,
    k: int = 3,
    unlabeled_policy: UnlabeledPolicy = "excluded",
    classifier: Optional[HeuristicReviewClassifier] = None,
) -> LayerCrosstab:
    """
    Attribute each event to the layer its (ego, alter) relationship occupies and count review types.

    Args:
        events: events to attribute
        labels: event_id -> label; events absent here fall back to inline labels
        assignments: ego_id -> layers computed at one fixed k
        direction: which side of each event is the ego
        k: number of layers in ``assignments``
        unlabeled_policy: whether unlabeled events enter the per-layer totals
        classifier: heuristic used for events with text and no other label
    """
    accumulator = CrosstabAccumulator(direction, k, unlabeled_policy)
    for event in events:
        accumulator.add(event, resolve_label(event, labels, classifier), assignments)
    crosstab = accumulator.result()
    logger.info(f"Crosstab: {sum(r.total for r in crosstab.layers)} events in layers, "
                f"{crosstab.unassigned} unassigned, {crosstab.unlabeled} unlabeled")
    return crosstab


def render_crosstab_table(crosstab: LayerCrosstab) -> str:
    """Aligned text table of counts (percentages) per layer."""

    def cell(count: int, proportion: Optional[float]) -> str:
        if proportion is None:
            return f"{count:,} (n/a)"
        return f"{count:,} ({proportion * 100:.1f}%)"

    rows = [
        ["", *[f"Layer {r.layer}" for r in crosstab.layers]],
        ["Reviews", *[f"{r.total:,}" for r in crosstab.layers]],
        ["Update Encouragement", *[cell(r.update_encouragement, r.update_encouragement_proportion) for r in crosstab.layers]],
        ["Targeted", *[cell(r.targeted, r.targeted_proportion) for r in crosstab.layers]],
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    table = "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)
    return (
        f"{table}\n\n"
        f"direction: {crosstab.direction.value}, k: {crosstab.k}, unlabeled policy: {crosstab.unlabeled_policy}\n"
        f"unassigned: {crosstab.unassigned:,}, unlabeled: {crosstab.unlabeled:,}\n"
    )
