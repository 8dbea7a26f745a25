"""Edge-coverage accumulation with hit-count bucketing.

Per-iteration edge hit counts are coarsened into 8 frequency buckets
(1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+). The cumulative map remembers,
per edge, every bucket ever seen; one "coverage unit" is a first-seen
(edge, bucket) pair, and the per-iteration count of fresh pairs is the
feedback signal handed to the fuzzer.
"""

from __future__ import annotations

from enum import Enum

from attachfuzz.packets import Direction

# Upper bounds (inclusive) of buckets 0..6; anything larger is bucket 7.
_BUCKET_TOPS = (1, 2, 3, 7, 15, 31, 127)

EdgeHits = dict  # edge id -> hit count for one iteration


def bucketize(hits: int) -> int:
    """Bucket index of a per-iteration hit count (hits must be >= 1)."""
    if hits < 1:
        raise ValueError("absent edges are not bucketized")
    for bucket, top in enumerate(_BUCKET_TOPS):
        if hits <= top:
            return bucket
    return 7


class CoverageMap:
    """Cumulative edge -> bucket-set accumulator; grows monotonically."""

    def __init__(self):
        self._buckets: dict[object, set[int]] = {}
        self._units = 0

    def merge_iteration(self, hits: EdgeHits) -> int:
        """Fold one iteration's hit counts in; returns the number of
        (edge, bucket) pairs that were not present before."""
        new_units = 0
        buckets = self._buckets
        for edge, count in hits.items():
            bucket = bucketize(count)
            seen = buckets.get(edge)
            if seen is None:
                buckets[edge] = {bucket}
                new_units += 1
            elif bucket not in seen:
                seen.add(bucket)
                new_units += 1
        self._units += new_units
        return new_units

    def total_units(self) -> int:
        """Cumulative (edge, bucket) pairs; equals the sum of all
        merge_iteration returns since construction."""
        return self._units

    def edges(self) -> int:
        return len(self._buckets)

    def buckets_for(self, edge) -> set[int]:
        return set(self._buckets.get(edge, ()))


class Component(Enum):
    """The two coverage-bearing machines of the simulated deployment."""

    UE_MACHINE = "UE"
    ENB_MACHINE = "ENB"


class FeedbackMode(Enum):
    GREY = "grey"
    BLACK = "black"


def dut_component(direction: Direction) -> Component:
    """The machine whose crashes and coverage are the fuzzing objective."""
    return Component.UE_MACHINE if direction is Direction.DL else Component.ENB_MACHINE


def peer_component(direction: Direction) -> Component:
    """The benign-generator machine opposite the device under test."""
    return Component.ENB_MACHINE if direction is Direction.DL else Component.UE_MACHINE


def feedback_source(mode: FeedbackMode, direction: Direction) -> Component:
    """Which machine's coverage guides the fuzzer.

    Grey-box reads the device under test directly; black-box estimates it
    from the peer that generates the benign traffic.
    """
    return dut_component(direction) if mode is FeedbackMode.GREY else peer_component(direction)
