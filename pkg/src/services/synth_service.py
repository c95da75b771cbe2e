"""Service for synthetic corpora with planted layer structure.

Every generated ego, alter and event is recorded in a :class:`PlantedLedger`
that serves as ground truth when validating the pipeline end to end.
"""
import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from src.config.settings import LayerSpec, SynthConfig
from src.errors import InvalidArgumentError
from src.models import AlterFreq, Direction, EgoNetwork, InteractionEvent, ReviewLabel
from src.services.layer_service import REFERENCE_LAYER_TABLES, REFERENCE_REVIEW_MIX
from src.utils.date_utils import MONTH_DAYS, SECONDS_PER_DAY, format_timestamp, parse_timestamp
from src.utils.json_utils import dumps_line

logger = logging.getLogger(__name__)

FREQUENCY_FLOOR = 0.05
MIN_EVENTS_PER_ALTER = 2
EVENT_COLUMNS = ("event_id", "source", "target", "timestamp")

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class PlantedAlter:
    alter_id: str
    layer: int
    frequency: float


@dataclass(frozen=True)
class EgoLedgerEntry:
    """Ground truth for one ego: planted layer count and each alter's layer and frequency."""

    ego_id: str
    planted_k: int
    alters: Tuple[PlantedAlter, ...]
    component: int = 0

    def to_record(self) -> dict:
        return {
            "kind": "ego",
            "ego_id": self.ego_id,
            "component": self.component,
            "planted_k": self.planted_k,
            "alters": [
                {"alter_id": a.alter_id, "layer": a.layer, "frequency": a.frequency}
                for a in self.alters
            ],
        }


@dataclass(frozen=True)
class EventLedgerEntry:
    event_id: str
    ego_id: str
    alter_id: str
    layer: int
    label: ReviewLabel

    def to_record(self) -> dict:
        return {
            "kind": "event",
            "event_id": self.event_id,
            "ego_id": self.ego_id,
            "alter_id": self.alter_id,
            "layer": self.layer,
            "update_encouragement": self.label.update_encouragement,
            "targeted": self.label.targeted,
        }


@dataclass
class PlantedLedger:
    """Every generated ego and event, each recorded exactly once, in canonical order."""

    egos: List[EgoLedgerEntry] = field(default_factory=list)
    events: List[EventLedgerEntry] = field(default_factory=list)

    def records(self) -> Iterator[dict]:
        for entry in self.egos:
            yield entry.to_record()
        for entry in self.events:
            yield entry.to_record()

    def write(self, fh: TextIO) -> int:
        """Write the ledger as line-JSON, egos first. Returns the number of lines."""
        count = 0
        for record in self.records():
            fh.write(dumps_line(record))
            fh.write("\n")
            count += 1
        return count


@dataclass
class SyntheticCorpus:
    events: List[InteractionEvent]
    ledger: PlantedLedger
    egos: List[EgoNetwork]


def validate_layers(layers: Sequence[LayerSpec], frequency_model: str = "gaussian") -> None:
    """
    Raises:
        InvalidArgumentError: no layers, or a Gaussian layer whose mean is within 3 SD of zero
    """
    if not layers:
        raise InvalidArgumentError("at least one layer is required")
    if frequency_model == "gaussian":
        for index, spec in enumerate(layers):
            if spec.frequency_mean - 3 * spec.frequency_sd <= 0:
                raise InvalidArgumentError(
                    f"layer {index}: frequency_mean - 3 * frequency_sd must be positive "
                    f"({spec.frequency_mean} - 3 * {spec.frequency_sd})"
                )
    elif frequency_model != "lognormal":
        raise InvalidArgumentError(f"unknown frequency model {frequency_model}")


def _draw_frequency(rng: np.random.Generator, spec: LayerSpec, frequency_model: str) -> float:
    if spec.frequency_sd == 0:
        return float(spec.frequency_mean)
    # log-normal parameters are moment-matched to the layer's mean and SD
    sigma2 = np.log1p((spec.frequency_sd / spec.frequency_mean) ** 2)
    mu = np.log(spec.frequency_mean) - sigma2 / 2
    while True:
        if frequency_model == "lognormal":
            value = float(rng.lognormal(mu, np.sqrt(sigma2)))
        else:
            value = float(rng.normal(spec.frequency_mean, spec.frequency_sd))
        if value > FREQUENCY_FLOOR:
            return value


def _draw_alter_count(rng: np.random.Generator, spec: LayerSpec) -> int:
    if spec.alter_count_dispersion == 0:
        return max(1, int(np.rint(spec.alter_count_mean)))
    return max(1, int(np.rint(rng.normal(spec.alter_count_mean, spec.alter_count_dispersion))))


def generate_ego(
    layers: Sequence[LayerSpec],
    seed: SeedLike,
    ego_id: str = "u000000",
    direction: Direction = Direction.OUTGOING,
    frequency_model: str = "gaussian",
    component: int = 0,
) -> Tuple[EgoNetwork, EgoLedgerEntry]:
    """
    Draw one ego with planted layers.

    Per layer the alter count is a rounded Gaussian floored at 1 and each alter's
    frequency a Gaussian (or log-normal) truncated above 0.05. The returned ego
    carries the planted frequencies themselves.

    Raises:
        InvalidArgumentError: invalid layer specs
    """
    validate_layers(layers, frequency_model)
    rng = np.random.default_rng(seed)
    planted = []
    for layer, spec in enumerate(layers):
        for _ in range(_draw_alter_count(rng, spec)):
            alter_id = f"{ego_id}a{len(planted):04d}"
            planted.append(PlantedAlter(alter_id, layer, _draw_frequency(rng, spec, frequency_model)))

    alters = sorted((AlterFreq(a.alter_id, a.frequency) for a in planted), key=lambda a: (-a.frequency, a.alter_id))
    ego = EgoNetwork(ego_id=ego_id, direction=direction, alters=tuple(alters))
    entry = EgoLedgerEntry(ego_id=ego_id, planted_k=len(layers), alters=tuple(planted), component=component)
    return ego, entry


def allocate_mixture(weights: Sequence[float], n_egos: int) -> List[int]:
    """Ego count per mixture component by largest remainder; ties go to the earlier component."""
    quotas = [w * n_egos for w in weights]
    counts = [int(np.floor(q)) for q in quotas]
    remainders = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in remainders[: n_egos - sum(counts)]:
        counts[i] += 1
    return counts


def events_per_alter(frequency: float, span_months: float) -> int:
    return max(MIN_EVENTS_PER_ALTER, int(np.rint(frequency * span_months)))


def _event_times(start: int, span_seconds: int, count: int) -> List[int]:
    # evenly spaced, first at start and last at start + span
    return [start + (span_seconds * j) // (count - 1) for j in range(count)]


def generate_event_log(
    config: SynthConfig = SynthConfig(),
    seed: int = 42,
    month_days: float = MONTH_DAYS,
) -> SyntheticCorpus:
    """
    Generate raw events whose per-relationship counts and spans reproduce the planted frequencies.

    Egos are reviewers (event sources). Each alter receives
    ``max(2, round(frequency * span_months))`` events spread evenly over exactly
    ``span_months``, and each event's labels are drawn from its layer's
    probabilities. Each ego draws from its own child of ``SeedSequence(seed)``,
    so output is canonical in (ego index, alter index, event index).

    Raises:
        InvalidArgumentError: invalid layer specs in the mixture
    """
    for component in config.mixture:
        validate_layers(component.layers, config.frequency_model)

    start = parse_timestamp(config.start, "iso")
    span_seconds = int(round(config.span_months * month_days * SECONDS_PER_DAY))
    counts = allocate_mixture([c.weight for c in config.mixture], config.n_egos)
    children = np.random.SeedSequence(seed).spawn(config.n_egos)

    corpus = SyntheticCorpus(events=[], ledger=PlantedLedger(), egos=[])
    index = 0
    for component_index, (component, count) in enumerate(zip(config.mixture, counts)):
        for _ in range(count):
            rng = np.random.default_rng(children[index])
            ego_id = f"u{index:06d}"
            ego, entry = generate_ego(
                component.layers, rng, ego_id=ego_id,
                frequency_model=config.frequency_model, component=component_index,
            )
            corpus.egos.append(ego)
            corpus.ledger.egos.append(entry)
            for alter in entry.alters:
                spec = component.layers[alter.layer]
                n_events = events_per_alter(alter.frequency, config.span_months)
                for j, timestamp in enumerate(_event_times(start, span_seconds, n_events)):
                    label = ReviewLabel(
                        update_encouragement=bool(rng.random() < spec.update_prob),
                        targeted=bool(rng.random() < spec.targeted_prob),
                    )
                    event_id = f"{alter.alter_id}e{j:04d}"
                    corpus.events.append(InteractionEvent(
                        source_id=ego_id, target_id=alter.alter_id,
                        timestamp=timestamp, event_id=event_id, label=label,
                    ))
                    corpus.ledger.events.append(EventLedgerEntry(
                        event_id=event_id, ego_id=ego_id, alter_id=alter.alter_id,
                        layer=alter.layer, label=label,
                    ))
            index += 1

    logger.info(f"Generated {len(corpus.egos)} egos and {len(corpus.events)} events")
    return corpus


def write_events_csv(events: Iterable[InteractionEvent], fh: TextIO) -> int:
    """Write events in the default delimited ingest format, without labels or text."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(EVENT_COLUMNS)
    count = 0
    for event in events:
        writer.writerow([event.event_id, event.source_id, event.target_id, format_timestamp(event.timestamp)])
        count += 1
    return count


def reference_layers(direction: Direction = Direction.OUTGOING, k: int = 3, cv: float = 0.1,
                  label_probs: Optional[Sequence[Tuple[float, float]]] = None) -> List[LayerSpec]:
    """
    Layer specs from the published per-layer means for ``direction`` and ``k``.

    Dispersions are ``cv`` times the means. Label probabilities default to the
    published reviewer-as-ego proportions (outer layers take the outermost value).

    Raises:
        InvalidArgumentError: no published parameterization for (direction, k)
    """
    rows = REFERENCE_LAYER_TABLES.get((direction, k))
    if rows is None:
        raise InvalidArgumentError(f"no reference layers for {direction.value} k={k}")
    if label_probs is None:
        label_probs = [REFERENCE_REVIEW_MIX[0], REFERENCE_REVIEW_MIX[-1]] if k == 2 else REFERENCE_REVIEW_MIX
    return [
        LayerSpec(
            alter_count_mean=alters_mean,
            alter_count_dispersion=cv * alters_mean,
            frequency_mean=frequency_mean,
            frequency_sd=cv * frequency_mean,
            update_prob=update,
            targeted_prob=targeted,
        )
        for (alters_mean, _, frequency_mean, _), (update, targeted) in zip(rows, label_probs)
    ]
