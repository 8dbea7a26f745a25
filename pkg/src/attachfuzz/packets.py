"""Packet and field model with bit-exact value extraction and insertion.

A field is a named bit-region of a packet, located by byte offset, byte
length and a big-endian bit mask over that span. Masks need not be
byte-aligned and need not be contiguous; extraction compacts the masked
bits from most- to least-significant.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

MAX_FIELD_BYTES = 8  # keeps field values inside a 64-bit integer


class Layer(Enum):
    RRC = "RRC"
    MAC = "MAC"


class Direction(Enum):
    DL = "DL"
    UL = "UL"


class Channel(Enum):
    CCCH = "CCCH"
    DCCH = "DCCH"


class FieldLayoutError(Exception):
    """Field geometry does not fit the packet bytes (dissector/model drift)."""


class FieldCapacityError(Exception):
    """A value does not fit in the field's masked bit width."""


@dataclass(frozen=True)
class Field:
    """Named bit-region of a packet.

    ``index`` disambiguates repeated names within one packet. ``mask`` is
    written over the full ``length``-byte span, big-endian.
    """

    name: str
    offset: int
    length: int
    mask: int
    index: int = 0

    def __post_init__(self):
        if not 1 <= self.length <= MAX_FIELD_BYTES:
            raise FieldLayoutError(f"field {self.name}: length {self.length} outside 1..{MAX_FIELD_BYTES}")
        if self.mask == 0:
            raise FieldLayoutError(f"field {self.name}: empty mask")
        if self.mask >> (8 * self.length):
            raise FieldLayoutError(f"field {self.name}: mask wider than {self.length} bytes")
        if self.offset < 0 or self.index < 0:
            raise FieldLayoutError(f"field {self.name}: negative offset or index")

    @property
    def width_bits(self) -> int:
        return self.mask.bit_count()

    @property
    def capacity(self) -> int:
        """Number of distinct values the field can carry: 2**popcount(mask)."""
        return 1 << self.width_bits

    @property
    def key(self) -> tuple[str, int]:
        return (self.name, self.index)


@dataclass(frozen=True)
class Packet:
    """An intercepted message: raw bytes plus interception metadata and
    the dissected field list."""

    data: bytes
    layer: Layer
    direction: Direction
    channel: Channel
    packet_type: str
    fields: tuple[Field, ...]

    def field(self, name: str, index: int = 0) -> Field:
        for f in self.fields:
            if f.name == name and f.index == index:
                return f
        raise KeyError(f"{self.packet_type} has no field {name}#{index}")

    def has_field(self, name: str, index: int = 0) -> bool:
        return any(f.name == name and f.index == index for f in self.fields)

    def summary(self) -> str:
        """One-line hex dump form used in logs and trace files."""
        return (f"{self.packet_type} {self.direction.value} {self.channel.value} "
                f"{self.layer.value} : {self.data.hex()}")


def _span_value(data: bytes, field: Field) -> int:
    if field.offset + field.length > len(data):
        raise FieldLayoutError(
            f"field {field.name}#{field.index} spans [{field.offset}, "
            f"{field.offset + field.length}) but packet has {len(data)} bytes")
    return int.from_bytes(data[field.offset:field.offset + field.length], "big")


def _mask_shift(mask: int) -> int | None:
    """Trailing-zero count when the mask is one contiguous run, else None."""
    shift = (mask & -mask).bit_length() - 1
    run = mask >> shift
    return shift if run & (run + 1) == 0 else None


def extract_field(packet: Packet, field: Field) -> int:
    """Value of the masked bits, compacted so the least-significant masked
    bit becomes bit 0. Pure; the packet is unchanged."""
    span = _span_value(packet.data, field)
    shift = _mask_shift(field.mask)
    if shift is not None:
        return (span & field.mask) >> shift
    value = 0
    for bit in range(8 * field.length - 1, -1, -1):
        if field.mask >> bit & 1:
            value = (value << 1) | (span >> bit & 1)
    return value


def apply_field(packet: Packet, field: Field, value: int) -> Packet:
    """New packet with ``value`` scattered into the field's masked bits.

    Bits outside the mask are untouched. The value must already fit the
    field: callers reduce modulo ``field.capacity`` first.
    """
    if value < 0 or value >= field.capacity:
        raise FieldCapacityError(
            f"value {value} does not fit field {field.name}#{field.index} "
            f"({field.width_bits} bits)")
    span = _span_value(packet.data, field)
    shift = _mask_shift(field.mask)
    if shift is not None:
        span = (span & ~field.mask) | (value << shift)
    else:
        span &= ~field.mask
        vbit = field.width_bits - 1
        for bit in range(8 * field.length - 1, -1, -1):
            if field.mask >> bit & 1:
                if value >> vbit & 1:
                    span |= 1 << bit
                vbit -= 1
    out = bytearray(packet.data)
    out[field.offset:field.offset + field.length] = span.to_bytes(field.length, "big")
    return replace(packet, data=bytes(out))
