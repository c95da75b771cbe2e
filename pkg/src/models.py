"""Domain value types shared across services."""
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Tuple

from src.errors import InvalidArgumentError
from src.utils.date_utils import MONTH_DAYS, SECONDS_PER_DAY, months_between


class Direction(str, Enum):
    """Which side of a relationship plays the ego."""

    OUTGOING = "outgoing"  # reviewer as ego
    INCOMING = "incoming"  # author as ego

    def ego_and_alter(self, source_id: str, target_id: str) -> Tuple[str, str]:
        """Map a directed (source, target) pair to (ego, alter) for this direction."""
        if self is Direction.OUTGOING:
            return source_id, target_id
        return target_id, source_id


@dataclass(frozen=True)
class ReviewLabel:
    """Non-exclusive review categories."""

    update_encouragement: bool = False
    targeted: bool = False


@dataclass(frozen=True)
class InteractionEvent:
    """One review: ``source_id`` reviewed ``target_id`` at ``timestamp`` (Unix seconds)."""

    source_id: str
    target_id: str
    timestamp: int
    event_id: str = ""
    text: Optional[str] = None
    label: Optional[ReviewLabel] = None
    anonymous: bool = False

    def __post_init__(self):
        if not self.anonymous and (not self.source_id or not self.target_id):
            raise InvalidArgumentError("non-anonymous events need both source_id and target_id")


@dataclass(frozen=True)
class Relationship:
    """Aggregated directed edge between a reviewer and an author."""

    source_id: str
    target_id: str
    event_count: int
    first_ts: int
    last_ts: int

    def __post_init__(self):
        if self.event_count < 1:
            raise InvalidArgumentError(f"event_count must be positive, got {self.event_count}")
        if self.first_ts > self.last_ts:
            raise InvalidArgumentError("first_ts must not exceed last_ts")

    @property
    def key(self) -> Tuple[str, str]:
        return self.source_id, self.target_id

    @property
    def duration_days(self) -> float:
        return (self.last_ts - self.first_ts) / SECONDS_PER_DAY

    def duration_in_months(self, month_days: float = MONTH_DAYS) -> float:
        return months_between(self.first_ts, self.last_ts, month_days)

    def frequency(self, month_days: float = MONTH_DAYS) -> Optional[float]:
        """Events per month, or None for a zero-length relationship."""
        months = self.duration_in_months(month_days)
        if months <= 0:
            return None
        return self.event_count / months

    @property
    def duration_months(self) -> float:
        return self.duration_in_months()

    @property
    def contact_frequency(self) -> Optional[float]:
        return self.frequency()


class AlterFreq(NamedTuple):
    alter_id: str
    frequency: float


@dataclass(frozen=True)
class EgoNetwork:
    """An ego's weight vector, sorted by descending contact frequency."""

    ego_id: str
    direction: Direction
    alters: Tuple[AlterFreq, ...] = field(default_factory=tuple)

    def __post_init__(self):
        seen = set()
        for alter in self.alters:
            if alter.frequency <= 0:
                raise InvalidArgumentError(f"alter {alter.alter_id} has non-positive frequency")
            if alter.alter_id == self.ego_id:
                raise InvalidArgumentError(f"ego {self.ego_id} listed as its own alter")
            if alter.alter_id in seen:
                raise InvalidArgumentError(f"alter {alter.alter_id} listed twice")
            seen.add(alter.alter_id)

    @property
    def degree(self) -> int:
        return len(self.alters)

    @property
    def alter_ids(self) -> Tuple[str, ...]:
        return tuple(a.alter_id for a in self.alters)

    @property
    def frequencies(self) -> Tuple[float, ...]:
        return tuple(a.frequency for a in self.alters)
