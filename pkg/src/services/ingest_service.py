"""Service for turning raw event logs into qualifying relationships."""
import csv
import logging
import zlib
from typing import Dict, Iterable, Iterator, List, Optional, TextIO, Tuple

from pydantic import BaseModel

from src.config.settings import IngestConfig, RelationshipCriteria
from src.errors import DataError, MalformedRecordError
from src.models import InteractionEvent, Relationship, ReviewLabel
from src.utils.date_utils import MONTH_DAYS, format_timestamp, parse_timestamp
from src.utils.json_utils import iter_json_lines, parse_bool

logger = logging.getLogger(__name__)

EDGE_LIST_COLUMNS = ("source", "target", "event_count", "first_ts", "last_ts", "contact_frequency")


class IngestStats(BaseModel):
    """Record accounting for one parse pass.

    ``total == accepted + anonymous_dropped + malformed_dropped``.
    """

    total: int = 0
    accepted: int = 0
    anonymous_dropped: int = 0
    malformed_dropped: int = 0

    def merge(self, other: "IngestStats") -> "IngestStats":
        return IngestStats(
            total=self.total + other.total,
            accepted=self.accepted + other.accepted,
            anonymous_dropped=self.anonymous_dropped + other.anonymous_dropped,
            malformed_dropped=self.malformed_dropped + other.malformed_dropped,
        )


class _Malformed(Exception):
    pass


def _field(record: Dict, name: str) -> Optional[str]:
    value = record.get(name)
    if value is None:
        return None
    if isinstance(value, str):
        value = value.strip()
        return value or None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    raise _Malformed(f"field {name} has unsupported type {type(value).__name__}")


class EventParser:
    """Streaming parser for delimited-text or line-JSON event records.

    The parser counts every record it sees in :attr:`stats`. Anonymous events
    are dropped before any other validation. Under the default policy a
    malformed record is skipped and counted; with ``config.strict`` it raises
    :class:`MalformedRecordError`.
    """

    def __init__(self, config: IngestConfig = IngestConfig()):
        self.config = config
        self.stats = IngestStats()
        self._ordinal = 0

    def _records(self, stream: TextIO) -> Iterator[Tuple[int, Optional[Dict]]]:
        if self.config.format == "jsonl":
            yield from iter_json_lines(stream)
            return
        reader = csv.DictReader(stream, delimiter=self.config.delimiter)
        for row in reader:
            # Short rows leave trailing fields None, long rows park extras under the None key
            if None in row or any(value is None for value in row.values()):
                yield reader.line_num, None
            else:
                yield reader.line_num, row

    def _label(self, record: Dict) -> Optional[ReviewLabel]:
        cfg = self.config
        update_raw = record.get(cfg.label_update_field)
        targeted_raw = record.get(cfg.label_targeted_field)
        if _blank(update_raw) and _blank(targeted_raw):
            return None
        try:
            return ReviewLabel(
                update_encouragement=parse_bool(update_raw),
                targeted=parse_bool(targeted_raw),
            )
        except ValueError as e:
            raise _Malformed(str(e)) from e

    def _to_event(self, record: Dict) -> Optional[InteractionEvent]:
        cfg = self.config
        try:
            anonymous = parse_bool(record.get(cfg.anonymous_field))
        except ValueError as e:
            raise _Malformed(str(e)) from e
        if anonymous:
            return None

        source = _field(record, cfg.source_field)
        target = _field(record, cfg.target_field)
        if source is None or target is None:
            raise _Malformed("missing source or target")

        raw_ts = record.get(cfg.timestamp_field)
        if _blank(raw_ts):
            raise _Malformed("missing timestamp")
        try:
            timestamp = parse_timestamp(raw_ts, cfg.timestamp_format)
        except (ValueError, OverflowError) as e:
            raise _Malformed(f"bad timestamp: {e}") from e

        event_id = _field(record, cfg.event_id_field) or f"r{self._ordinal}"
        text = record.get(cfg.text_field)
        if text is not None and not isinstance(text, str):
            raise _Malformed("text must be a string")
        return InteractionEvent(
            source_id=source,
            target_id=target,
            timestamp=timestamp,
            event_id=event_id,
            text=text or None,
            label=self._label(record),
        )

    def parse(self, stream: TextIO) -> Iterator[InteractionEvent]:
        """Yield accepted events from ``stream``, updating :attr:`stats` as it goes."""
        for record_number, record in self._records(stream):
            self._ordinal += 1
            self.stats.total += 1
            try:
                if record is None:
                    raise _Malformed("unparseable record")
                event = self._to_event(record)
            except _Malformed as e:
                if self.config.strict:
                    raise MalformedRecordError(str(e), record_number) from e
                self.stats.malformed_dropped += 1
                logger.warning(f"Skipping malformed record {record_number}: {e}")
                continue
            if event is None:
                self.stats.anonymous_dropped += 1
                continue
            self.stats.accepted += 1
            yield event


def _blank(value) -> bool:
    return value is None or (isinstance(value, str) and not value.strip())


def parse_events(stream: TextIO, config: IngestConfig = IngestConfig()) -> Tuple[List[InteractionEvent], IngestStats]:
    """
    Parse a whole record stream.

    Args:
        stream: delimited text with a header row, or line-delimited JSON
        config: field names, format and malformed-record policy

    Returns:
        Accepted events in input order, and the record accounting
    """
    parser = EventParser(config)
    events = list(parser.parse(stream))
    logger.info(
        f"Parsed {parser.stats.total} records: {parser.stats.accepted} accepted, "
        f"{parser.stats.anonymous_dropped} anonymous, {parser.stats.malformed_dropped} malformed"
    )
    return events, parser.stats


class RelationshipAccumulator:
    """Mergeable per-pair aggregate of events: count, first and last timestamp."""

    def __init__(self):
        self._pairs: Dict[Tuple[str, str], List[int]] = {}

    def add(self, event: InteractionEvent) -> None:
        key = (event.source_id, event.target_id)
        entry = self._pairs.get(key)
        if entry is None:
            self._pairs[key] = [1, event.timestamp, event.timestamp]
        else:
            entry[0] += 1
            if event.timestamp < entry[1]:
                entry[1] = event.timestamp
            if event.timestamp > entry[2]:
                entry[2] = event.timestamp

    def merge(self, other: "RelationshipAccumulator") -> "RelationshipAccumulator":
        for key, (count, first, last) in other._pairs.items():
            entry = self._pairs.get(key)
            if entry is None:
                self._pairs[key] = [count, first, last]
            else:
                entry[0] += count
                entry[1] = min(entry[1], first)
                entry[2] = max(entry[2], last)
        return self

    def relationships(self) -> List[Relationship]:
        """Relationships sorted by (source_id, target_id)."""
        return [
            Relationship(source_id=s, target_id=t, event_count=count, first_ts=first, last_ts=last)
            for (s, t), (count, first, last) in sorted(self._pairs.items())
        ]


def _shard_of(event: InteractionEvent, shards: int) -> int:
    key = f"{event.source_id}\x1f{event.target_id}".encode("utf-8")
    return zlib.crc32(key) % shards


def build_relationships(events: Iterable[InteractionEvent], shards: int = 1) -> List[Relationship]:
    """
    Aggregate events into one directed relationship per ordered (source, target) pair.

    Reciprocal pairs stay separate. With ``shards > 1`` pairs are partitioned by a
    CRC32 hash into independent accumulators which are merged at the end; the
    result is identical to the sequential aggregation.

    Args:
        events: accepted events, in any order
        shards: number of hash partitions

    Returns:
        Relationships sorted by (source_id, target_id)
    """
    if shards < 1:
        raise DataError(f"shards must be positive, got {shards}")
    partials = [RelationshipAccumulator() for _ in range(shards)]
    for event in events:
        partials[_shard_of(event, shards) if shards > 1 else 0].add(event)
    merged = partials[0]
    for partial in partials[1:]:
        merged.merge(partial)
    relationships = merged.relationships()
    logger.info(f"Built {len(relationships)} relationships")
    return relationships


def filter_relationships(
    relationships: Iterable[Relationship],
    criteria: RelationshipCriteria = RelationshipCriteria(),
    month_days: float = MONTH_DAYS,
) -> List[Relationship]:
    """Keep relationships with at least ``min_events`` events spanning at least ``min_duration_months``."""
    kept = []
    for rel in relationships:
        months = rel.duration_in_months(month_days)
        # zero-length spans have no frequency even when the duration threshold is 0
        if rel.event_count >= criteria.min_events and months >= criteria.min_duration_months and months > 0:
            kept.append(rel)
    logger.info(f"{len(kept)} relationships qualify")
    return kept


def write_edge_list(relationships: Iterable[Relationship], fh: TextIO, month_days: float = MONTH_DAYS) -> int:
    """
    Write relationships as a tab-separated edge list with a header row.

    ``contact_frequency`` is printed with 6 decimals and is informational: readers
    recompute it from the exact counts and timestamps.

    Returns:
        Number of edges written
    """
    writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
    writer.writerow(EDGE_LIST_COLUMNS)
    count = 0
    for rel in relationships:
        frequency = rel.frequency(month_days)
        writer.writerow([
            rel.source_id, rel.target_id, rel.event_count,
            format_timestamp(rel.first_ts), format_timestamp(rel.last_ts),
            "" if frequency is None else f"{frequency:.6f}",
        ])
        count += 1
    return count


def read_edge_list(fh: TextIO) -> List[Relationship]:
    """
    Read an edge list written by :func:`write_edge_list`.

    Raises:
        DataError: missing header columns or an unparseable row
    """
    reader = csv.DictReader(fh, delimiter="\t")
    missing = set(EDGE_LIST_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise DataError(f"edge list is missing columns: {sorted(missing)}")
    relationships = []
    for row in reader:
        try:
            relationships.append(Relationship(
                source_id=row["source"],
                target_id=row["target"],
                event_count=int(row["event_count"]),
                first_ts=parse_timestamp(row["first_ts"], "iso"),
                last_ts=parse_timestamp(row["last_ts"], "iso"),
            ))
        except (TypeError, ValueError) as e:
            raise DataError(f"edge list line {reader.line_num}: {e}") from e
    logger.info(f"Read {len(relationships)} relationships from edge list")
    return relationships
