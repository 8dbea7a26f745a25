"""Per-field mutation probabilities and their coverage-feedback update.

Each (packet type, field name, field index) key carries a probability of
being mutated. Keys start at ``k / field_count`` for their packet type and
are clamped to [0.005, 0.90] at all times, so no field is ever certainly
mutated or certainly skipped.

After an iteration that mutated n fields and discovered c new coverage
units, every mutated key moves by

    sign(c) * weight(i) / n / log2(value_space + 1)

where ``weight`` grows linearly over the campaign when coverage was found
and is its reciprocal when it was not: late discoveries count for more,
and wide fields (large value spaces) move more slowly because they need
more trials to judge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

from attachfuzz.packets import Packet

PROB_FLOOR = 0.005
PROB_CEIL = 0.90

FieldKey = tuple[str, str, int]  # (packet_type, field_name, field_index)


def clamp(p: float) -> float:
    return min(PROB_CEIL, max(PROB_FLOOR, p))


def coverage_sign(new_units: int) -> float:
    """+1 when the iteration discovered any new coverage, else -1."""
    if new_units < 0:
        raise ValueError("coverage units cannot be negative")
    return 1.0 if new_units > 0 else -1.0


def schedule_weight(iteration: int, new_units: int, beta: float, max_iterations: int) -> float:
    """Magnitude schedule for the probability update.

    Grows linearly in the iteration number when new coverage was found
    (beta * i / max_iterations), and is the reciprocal of that otherwise.
    Iterations are 1-based so the reciprocal is always finite.
    """
    if iteration < 1:
        raise ValueError("iterations are 1-based")
    if beta <= 0:
        raise ValueError("beta must be positive")
    ramp = beta * iteration / max_iterations
    return ramp if new_units > 0 else 1.0 / ramp


@dataclass
class IterationLedger:
    """What one iteration mutated: every (key, value_space) event.

    A field mutated in two packets of the same iteration counts twice in
    ``mutated_count`` but still receives a single probability update.
    """

    events: list[tuple[FieldKey, int]] = dc_field(default_factory=list)

    def record(self, key: FieldKey, value_space: int) -> None:
        self.events.append((key, value_space))

    @property
    def mutated_count(self) -> int:
        return len(self.events)

    def mutated_keys(self) -> dict[FieldKey, int]:
        """Unique mutated keys with their value-space sizes."""
        return dict(self.events)

    def clear(self) -> None:
        self.events.clear()


class ProbabilityTable:
    """Lazily populated map from field keys to mutation probabilities."""

    def __init__(self, k: float, beta: float = 4.0, max_iterations: int = 2000):
        if k <= 0:
            raise ValueError("k must be positive")
        self.k = k
        self.beta = beta
        self.max_iterations = max_iterations
        self.probs: dict[FieldKey, float] = {}

    def ensure_packet(self, packet: Packet) -> None:
        """Create entries for any fields of this packet type not seen yet,
        all at clamp(k / field_count). Existing entries are untouched."""
        initial = clamp(self.k / len(packet.fields))
        for f in packet.fields:
            key = (packet.packet_type, f.name, f.index)
            if key not in self.probs:
                self.probs[key] = initial

    def get(self, key: FieldKey) -> float:
        return self.probs[key]

    def update(self, ledger: IterationLedger, iteration: int, new_units: int) -> None:
        """Apply the feedback rule to every key mutated this iteration.

        Skipped entirely when the iteration mutated nothing. Non-mutated
        keys never move.
        """
        n = ledger.mutated_count
        if n == 0:
            return
        step = coverage_sign(new_units) * schedule_weight(
            iteration, new_units, self.beta, self.max_iterations) / n
        for key, value_space in ledger.mutated_keys().items():
            if value_space < 1:
                raise ValueError(f"field {key} has empty value space")
            self.probs[key] = clamp(self.probs[key] + step / math.log2(value_space + 1))

    def rows(self) -> list[tuple[str, str, int, float]]:
        """(packet_type, field, index, p) rows for diagnostics dumps."""
        return [(pt, name, idx, p) for (pt, name, idx), p in self.probs.items()]
