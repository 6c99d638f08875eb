"""Exception types raised by the engine.

Argument validation uses plain ValueError; the classes here mark failures
tied to external data (OSM extracts, GTFS feeds, cache files) so callers
can tell bad input apart from bad code.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for data-dependent failures."""


class OsmParseError(EngineError):
    """Malformed OSM XML, with line/column context where available."""


class IngestionError(EngineError):
    """Structurally broken extract: dangling refs, empty routable graph."""


class FeedError(EngineError):
    """GTFS directory is missing files or internally inconsistent."""


class EstimationError(EngineError):
    """A timetable could not be estimated for a line."""

    def __init__(self, line_id: str, message: str):
        super().__init__(f"line {line_id}: {message}")
        self.line_id = line_id


class CacheFormatError(EngineError):
    """A cache file has the wrong format or version."""
