"""Per-packet fuzzing strategies.

Three strategies share one per-iteration shape:

* no-fuzz passes every packet through (the zero-coverage baseline),
* random draws field mutations from fixed probabilities,
* coverage-guided behaves like random within an iteration and shifts the
  probabilities between iterations from the coverage feedback.

For each intercepted packet a single uniform draw picks replay, mutation,
or pass-through by cumulative thresholds: replay below ``replay_prob``,
mutation below ``replay_prob + mut_prob``. An empty replay bucket falls
back to the mutation path so early iterations stay productive.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from random import Random

from attachfuzz.coverage import FeedbackMode
from attachfuzz.mutation import (MutationPatch, Patch, ReplayBuffer, ReplayPatch,
                                 make_mutation)
from attachfuzz.packets import Packet
from attachfuzz.probability import IterationLedger, ProbabilityTable


class FuzzerKind(Enum):
    NOFUZZ = "nofuzz"
    RANDOM = "random"
    COVERAGE = "coverage"


@dataclass
class FuzzerConfig:
    kind: FuzzerKind
    k: float = 0.5
    beta: float = 4.0
    replay_prob: float = 0.0
    mut_prob: float | None = None  # defaults to 1 - replay_prob
    feedback: FeedbackMode = FeedbackMode.GREY
    max_iterations: int = 2000
    rng_seed: int = 1

    def __post_init__(self):
        if self.mut_prob is None:
            self.mut_prob = 1.0 - self.replay_prob
        if not 0.0 <= self.replay_prob <= 1.0 or not 0.0 <= self.mut_prob <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.replay_prob + self.mut_prob > 1.0 + 1e-12:
            raise ValueError("replay_prob + mut_prob must not exceed 1")
        if self.k <= 0 or self.beta <= 0:
            raise ValueError("k and beta must be positive")


class Fuzzer:
    """Base strategy: owns the probability table, the iteration ledger and
    the replay buffer; passes packets through unchanged."""

    def __init__(self, config: FuzzerConfig):
        self.config = config
        self.table = ProbabilityTable(config.k, config.beta, config.max_iterations)
        self.ledger = IterationLedger()
        self.buffer = ReplayBuffer()
        self.iteration = 1

    def prepare(self, packet: Packet) -> None:
        self.table.ensure_packet(packet)

    def fuzz(self, packet: Packet, rng: Random) -> tuple[Packet, Patch | None]:
        return packet, None

    def end_iteration(self, new_units: int) -> None:
        """Hook run once per iteration after coverage collection."""
        self.ledger.clear()
        self.iteration += 1

    def needs_finish(self) -> bool:
        return self.iteration > self.config.max_iterations


class NoFuzzFuzzer(Fuzzer):
    pass


class RandomFuzzer(Fuzzer):
    """Fixed-probability fuzzing; no feedback of any kind."""

    def fuzz(self, packet: Packet, rng: Random) -> tuple[Packet, Patch | None]:
        cfg = self.config
        r1 = rng.random()
        if r1 < cfg.replay_prob:
            stored = self.buffer.select(packet.channel, packet.layer, rng)
            if stored is not None:
                patch = ReplayPatch(stored.channel, stored.data)
                return patch.apply(packet, rng), patch
            # empty bucket: fall back to the mutation path
        elif r1 >= cfg.replay_prob + cfg.mut_prob:
            return packet, None
        mutations = []
        for fld in packet.fields:
            key = (packet.packet_type, fld.name, fld.index)
            if rng.random() < self.table.get(key):
                mutations.append(make_mutation(packet.packet_type, fld, rng))
                self.ledger.record(key, fld.capacity)
        if not mutations:
            return packet, None
        patch = MutationPatch(mutations)
        return patch.apply(packet, rng), patch


class CoverageFuzzer(RandomFuzzer):
    """Random per-iteration behavior plus the between-iteration
    probability update driven by new-coverage units."""

    def end_iteration(self, new_units: int) -> None:
        self.table.update(self.ledger, self.iteration, new_units)
        super().end_iteration(new_units)


def make_fuzzer(config: FuzzerConfig) -> Fuzzer:
    cls = {FuzzerKind.NOFUZZ: NoFuzzFuzzer,
           FuzzerKind.RANDOM: RandomFuzzer,
           FuzzerKind.COVERAGE: CoverageFuzzer}[config.kind]
    return cls(config)
