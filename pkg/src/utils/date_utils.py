"""Date utility functions and the month convention."""
import re
from datetime import datetime, timezone
from typing import Union

# Mean Gregorian month. Durations are measured in fractional days and divided.
MONTH_DAYS = 30.44
SECONDS_PER_DAY = 86400

_ISO_PATTERN = re.compile(
    r'^\d{4}-\d{2}-\d{2}([T\s]\d{2}:\d{2}(:\d{2}(\.\d+)?)?)?(Z|[+-]\d{2}:\d{2})?$'
)


def is_iso_date_string(value: str) -> bool:
    """Check if a string looks like an ISO date string.

    Accepts ``YYYY-MM-DD``, ``YYYY-MM-DDTHH:mm[:ss[.sss]]`` and the same with a
    space instead of ``T``, optionally followed by ``Z`` or a UTC offset.
    """
    return bool(_ISO_PATTERN.match(value.strip()))


def parse_iso_date_string(date_str: str) -> datetime:
    """Parse ISO date string to an aware datetime. Naive values are taken as UTC."""
    date_str = date_str.strip()
    # Normalize: replace space with T for ISO format
    if ' ' in date_str and 'T' not in date_str:
        date_str = date_str.replace(' ', 'T', 1)

    # Handle Z suffix (UTC)
    if date_str.endswith('Z'):
        date_str = date_str[:-1] + '+00:00'

    parsed = datetime.fromisoformat(date_str)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed


def parse_timestamp(value: Union[str, int, float], timestamp_format: str = "iso") -> int:
    """
    Parse a raw timestamp field into integer Unix seconds.

    Args:
        value: Field value as read from the record
        timestamp_format: ``"iso"`` for ISO-8601 strings, ``"unix"`` for integer seconds

    Returns:
        Unix seconds (UTC), truncated to whole seconds

    Raises:
        ValueError: if the value cannot be parsed in the requested format
    """
    if value is None or isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")

    if timestamp_format == "unix":
        if isinstance(value, float):
            if not value.is_integer():
                raise ValueError(f"unix timestamp must be integral: {value!r}")
            return int(value)
        if isinstance(value, int):
            return value
        text = str(value).strip()
        if not re.fullmatch(r'-?\d+', text):
            raise ValueError(f"unix timestamp must be integral: {value!r}")
        return int(text)

    if timestamp_format == "iso":
        text = str(value)
        if not is_iso_date_string(text):
            raise ValueError(f"not an ISO-8601 timestamp: {value!r}")
        return int(parse_iso_date_string(text).timestamp())

    raise ValueError(f"unknown timestamp format: {timestamp_format}")


def format_timestamp(seconds: int) -> str:
    """Render Unix seconds as ``YYYY-MM-DDTHH:MM:SSZ``."""
    return datetime.fromtimestamp(seconds, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def months_between(first_ts: int, last_ts: int, month_days: float = MONTH_DAYS) -> float:
    """Fractional months between two instants given in Unix seconds."""
    return (last_ts - first_ts) / SECONDS_PER_DAY / month_days
