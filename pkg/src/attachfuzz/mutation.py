"""Mutators, patches, seeds and the replay buffer.

A Mutation rewrites one field through a Mutator; a MutationPatch bundles the
mutations applied to one packet; a ReplayPatch swaps the whole packet for a
previously captured one. The Seed records everything an iteration did so the
iteration can be replicated later: the iteration RNG seed, the patches (with
mutators resolved to SET values), and a byte snapshot of every packet that
left the fuzzer.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field as dc_field
from enum import Enum
from pathlib import Path
from random import Random

from attachfuzz.dissect import dissect
from attachfuzz.packets import Channel, Layer, Packet, apply_field, extract_field

logger = logging.getLogger(__name__)

REPLAY_CAPACITY = 64   # stored packets per (channel, layer) bucket, FIFO
REPLAY_RECENCY = 0.5   # geometric weight: entry j of n gets REPLAY_RECENCY**(n-1-j)


class MutatorKind(Enum):
    RAND = "RAND"
    MAX = "MAX"
    MIN = "MIN"
    ADD = "ADD"
    SUB = "SUB"
    SET = "SET"


# SET is only produced by resolution, never drawn.
DRAWABLE_KINDS = (MutatorKind.RAND, MutatorKind.MAX, MutatorKind.MIN,
                  MutatorKind.ADD, MutatorKind.SUB)


class SeedFormatError(Exception):
    """A seed file failed to parse; the message carries the line number."""


@dataclass
class Mutator:
    kind: MutatorKind
    set_value: int | None = None


@dataclass
class Mutation:
    """One field rewrite: the field reference plus the mutator to apply."""

    packet_type: str
    field_name: str
    field_index: int
    mutator: Mutator

    @property
    def resolved(self) -> bool:
        return self.mutator.kind is MutatorKind.SET


def apply_mutator(mutator: Mutator, current: int, capacity: int, rng: Random) -> int:
    """New field value under the mutator. ADD/SUB wrap modulo the field
    capacity so results always stay in-domain."""
    kind = mutator.kind
    if kind is MutatorKind.RAND:
        return rng.randrange(capacity)
    if kind is MutatorKind.MAX:
        return capacity - 1
    if kind is MutatorKind.MIN:
        return 0
    if kind is MutatorKind.ADD:
        return (current + 1) % capacity
    if kind is MutatorKind.SUB:
        return (current - 1) % capacity
    if mutator.set_value is None or not 0 <= mutator.set_value < capacity:
        raise ValueError(f"SET value {mutator.set_value} outside field capacity {capacity}")
    return mutator.set_value


def make_mutation(packet_type: str, field, rng: Random) -> Mutation:
    """Fresh mutation for a selected field with a uniformly drawn mutator."""
    kind = DRAWABLE_KINDS[rng.randrange(len(DRAWABLE_KINDS))]
    return Mutation(packet_type, field.name, field.index, Mutator(kind))


@dataclass
class MutationPatch:
    mutations: list[Mutation] = dc_field(default_factory=list)

    def apply(self, packet: Packet, rng: Random) -> Packet:
        """Apply each mutation in order, rewriting its mutator to the
        resolved SET value so a later replay lands on the same bytes.

        Mutations whose field is absent from the packet (type drift between
        the recording and the replayed flow) are skipped and logged.
        """
        for mutation in self.mutations:
            if (mutation.packet_type != packet.packet_type
                    or not packet.has_field(mutation.field_name, mutation.field_index)):
                logger.warning("skipping mutation of %s.%s#%d: packet is %s",
                               mutation.packet_type, mutation.field_name,
                               mutation.field_index, packet.packet_type)
                continue
            fld = packet.field(mutation.field_name, mutation.field_index)
            current = extract_field(packet, fld)
            value = apply_mutator(mutation.mutator, current, fld.capacity, rng)
            mutation.mutator = Mutator(MutatorKind.SET, value)
            packet = apply_field(packet, fld, value)
        return packet


@dataclass
class ReplayPatch:
    """Replaces the intercepted packet with a previously captured one from
    the same logical channel."""

    channel: Channel
    data: bytes

    def apply(self, packet: Packet, rng: Random) -> Packet:
        if self.channel is not packet.channel:
            logger.warning("replay across channels (%s -> %s); skipping",
                           self.channel.value, packet.channel.value)
            return packet
        return dissect(self.data, packet.channel, packet.direction, packet.layer)


Patch = MutationPatch | ReplayPatch


def apply_patch(patch: Patch, packet: Packet, rng: Random) -> Packet:
    return patch.apply(packet, rng)


class ReplayBuffer:
    """Bounded FIFO store of previously intercepted packets, keyed by
    (channel, layer), with recency-weighted selection."""

    def __init__(self, capacity: int = REPLAY_CAPACITY):
        self.capacity = capacity
        self._store: dict[tuple[Channel, Layer], deque[Packet]] = {}

    def insert(self, packet: Packet) -> None:
        key = (packet.channel, packet.layer)
        bucket = self._store.get(key)
        if bucket is None:
            bucket = deque(maxlen=self.capacity)
            self._store[key] = bucket
        bucket.append(packet)

    def size(self, channel: Channel, layer: Layer) -> int:
        return len(self._store.get((channel, layer), ()))

    def select(self, channel: Channel, layer: Layer, rng: Random) -> Packet | None:
        """Entry j (0 oldest) is chosen with probability proportional to
        REPLAY_RECENCY**(n-1-j). Returns None when the bucket is empty."""
        bucket = self._store.get((channel, layer))
        if not bucket:
            return None
        n = len(bucket)
        total = sum(REPLAY_RECENCY ** age for age in range(n))
        r = rng.random() * total
        cum = 0.0
        for age in range(n):  # newest first
            cum += REPLAY_RECENCY ** age
            if r < cum:
                return bucket[n - 1 - age]
        return bucket[0]


class BugEffect(Enum):
    CRASH = "CRASH"
    HANG = "HANG"


@dataclass
class Seed:
    """Reproduction record of one fuzzing iteration.

    ``patches`` holds (packet ordinal, patch) ordered by ordinal; ordinals
    count every delivered packet in the iteration, starting at 0.
    ``snapshots`` holds the post-fuzz bytes of every intercepted packet, the
    raw material for replay-style reproduction. ``bug`` names the planted
    bug that fired, if any.
    """

    rng_seed: int
    patches: list[tuple[int, Patch]] = dc_field(default_factory=list)
    snapshots: list[tuple[int, bytes]] = dc_field(default_factory=list)
    bug: tuple[str, BugEffect] | None = None

    def patch_map(self) -> dict[int, Patch]:
        return dict(self.patches)

    def snapshot_map(self) -> dict[int, bytes]:
        return dict(self.snapshots)


def serialize_seed(seed: Seed) -> str:
    lines = [f"seed {seed.rng_seed & 0xFFFFFFFFFFFFFFFF:016x}"]
    if seed.bug is not None:
        lines.append(f"bug {seed.bug[0]} {seed.bug[1].value}")
    for ordinal, patch in seed.patches:
        if isinstance(patch, ReplayPatch):
            lines.append(f"R {ordinal} {patch.channel.value} {patch.data.hex()}")
            continue
        for m in patch.mutations:
            if not m.resolved:
                raise ValueError(
                    f"mutation of {m.packet_type}.{m.field_name} is unresolved; "
                    "seeds store applied patches only")
            lines.append(f"M {ordinal} {m.packet_type} "
                         f"{m.field_name}#{m.field_index} SET {m.mutator.set_value}")
    for ordinal, data in seed.snapshots:
        lines.append(f"B {ordinal} {data.hex()}")
    return "\n".join(lines) + "\n"


def record_seed(seed: Seed, path: str | Path) -> None:
    Path(path).write_text(serialize_seed(seed))


def parse_seed(text: str) -> Seed:
    rng_seed = None
    bug = None
    mutation_groups: dict[int, MutationPatch] = {}
    replays: dict[int, ReplayPatch] = {}
    snapshots: list[tuple[int, bytes]] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        parts = line.split()
        try:
            tag = parts[0]
            if tag == "seed":
                rng_seed = int(parts[1], 16)
            elif tag == "bug":
                bug = (parts[1], BugEffect(parts[2]))
            elif tag == "M":
                ordinal = int(parts[1])
                if ordinal in replays:
                    raise ValueError("ordinal already has a replay patch")
                name, index = parts[3].rsplit("#", 1)
                if parts[4] != "SET":
                    raise ValueError("mutation lines carry resolved SET values")
                mutation = Mutation(parts[2], name, int(index),
                                    Mutator(MutatorKind.SET, int(parts[5])))
                mutation_groups.setdefault(ordinal, MutationPatch()).mutations.append(mutation)
            elif tag == "R":
                ordinal = int(parts[1])
                if ordinal in mutation_groups:
                    raise ValueError("ordinal already has a mutation patch")
                replays[ordinal] = ReplayPatch(Channel(parts[2]), bytes.fromhex(parts[3]))
            elif tag == "B":
                snapshots.append((int(parts[1]), bytes.fromhex(parts[2])))
            else:
                raise ValueError(f"unknown line tag {tag!r}")
        except (IndexError, ValueError, KeyError) as exc:
            raise SeedFormatError(f"line {lineno}: {exc}") from exc
    if rng_seed is None:
        raise SeedFormatError("line 1: missing 'seed' header")
    patches: list[tuple[int, Patch]] = sorted(
        list(mutation_groups.items()) + list(replays.items()), key=lambda kv: kv[0])
    return Seed(rng_seed, patches, sorted(snapshots), bug)


def load_seed(path: str | Path) -> Seed:
    return parse_seed(Path(path).read_text())
