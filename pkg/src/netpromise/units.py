"""Unit conventions.

Internally volumes are bytes, rates are bits per second and times are
seconds.  File formats use decimal gigabytes / gigabits with explicit
suffixes, converted here and nowhere else.
"""

from __future__ import annotations

import math

BITS_PER_BYTE = 8
GB = 10**9  # bytes
GBPS = 10**9  # bits per second

# Returned for "no constraint" minima (identity path bottleneck, idle flow ETA).
UNBOUNDED = math.inf


def gbps(value: float) -> float:
    return float(value) * GBPS


def to_gbps(rate: float) -> float:
    return rate / GBPS


def gigabytes(value: float) -> float:
    return float(value) * GB


def to_gigabytes(volume: float) -> float:
    return volume / GB


def bits(volume_bytes: float) -> float:
    return volume_bytes * BITS_PER_BYTE
