"""
Functions for interacting with timestamps and datetime objects
"""
import datetime
from typing import Optional


def utc_now() -> datetime.datetime:
    """
    Current time as a timezone-aware UTC datetime
    """
    return datetime.datetime.now(datetime.timezone.utc)


def to_iso(dt: datetime.datetime) -> Optional[str]:
    """
    ISO-8601 representation in UTC, second resolution
    """
    if dt is None:
        return None
    return dt.astimezone(datetime.timezone.utc).replace(microsecond=0).isoformat()
