"""Shared fixtures."""
import io
from pathlib import Path
from typing import Iterable, List

import pytest

from src.models import InteractionEvent, Relationship
from src.utils.date_utils import MONTH_DAYS, SECONDS_PER_DAY

FIXTURES = Path(__file__).parent / "fixtures"

T0 = 1577836800  # 2020-01-01T00:00:00Z
MONTH = int(MONTH_DAYS * SECONDS_PER_DAY)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def golden_events_path() -> Path:
    return FIXTURES / "events.csv"


def csv_stream(header: str, rows: Iterable[str]) -> io.StringIO:
    return io.StringIO("\n".join([header, *rows]) + "\n")


def star_relationships(ego: str, frequencies: Iterable[float], months: int = 12, outgoing: bool = True) -> List[Relationship]:
    """Relationships giving ``ego`` one alter per frequency, each spanning ``months`` months."""
    span = months * MONTH
    rels = []
    for i, f in enumerate(frequencies):
        alter = f"{ego}-alter{i:03d}"
        count = max(2, round(f * months))
        source, target = (ego, alter) if outgoing else (alter, ego)
        rels.append(Relationship(source_id=source, target_id=target, event_count=count, first_ts=T0, last_ts=T0 + span))
    return rels


def events_between(source: str, target: str, timestamps: Iterable[int], prefix: str = "e") -> List[InteractionEvent]:
    return [
        InteractionEvent(source_id=source, target_id=target, timestamp=ts, event_id=f"{prefix}{source}{target}{i}")
        for i, ts in enumerate(timestamps)
    ]
