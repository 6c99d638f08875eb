"""Travel mode names shared across modules."""

from __future__ import annotations

from typing import Literal

TravelMode = Literal["foot", "bike", "car", "public_transport"]

STREET_MODES: tuple[str, ...] = ("foot", "bike", "car")
ALL_MODES: tuple[str, ...] = STREET_MODES + ("public_transport",)


def check_mode(mode: str, street_only: bool = False) -> str:
    allowed = STREET_MODES if street_only else ALL_MODES
    if mode not in allowed:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(allowed)}")
    return mode
