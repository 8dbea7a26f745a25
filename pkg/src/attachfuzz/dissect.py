"""Dissection of the simulated attach-procedure wire format.

Every message type has a fixed binary layout, so the value space of each
field is static. Message types are recognized by a discriminator nibble
(offset 0, mask 0xF0). Unknown discriminators never fail: they degrade to
an UNKNOWN packet with a single full-span "raw" field so fuzzing can keep
going on arbitrary bytes.

MAC-layer interception wraps the same payloads in a two-byte framing
header (logical channel id + payload length); dissection at MAC exposes
the two header fields plus the shifted payload fields.
"""

from __future__ import annotations

from dataclasses import dataclass

from attachfuzz.packets import Channel, Direction, Field, Layer, Packet, apply_field

UNKNOWN_TYPE = "UNKNOWN"
MAC_HEADER_LEN = 2

MAC_LCID_FIELD = Field("mac_lcid", offset=0, length=1, mask=0xF8)
MAC_LEN_FIELD = Field("mac_frame_len", offset=1, length=1, mask=0xFF)


@dataclass(frozen=True)
class MessageSchema:
    """Fixed layout of one message type.

    ``discriminator`` is (offset, mask, expected value); schemas sharing a
    channel carry pairwise distinct expected values under the same mask, so
    dissection is never ambiguous.
    """

    packet_type: str
    channel: Channel
    direction: Direction
    total_length: int
    fields: tuple[Field, ...]
    discriminator: tuple[int, int, int]

    def matches(self, data: bytes) -> bool:
        off, mask, expected = self.discriminator
        if len(data) != self.total_length:
            return False
        return (data[off] & mask) == expected


def _schema(code, name, channel, direction, total_length, specs):
    fields = tuple(Field(n, offset=o, length=l, mask=m) for n, o, l, m in specs)
    return MessageSchema(name, channel, direction, total_length, fields,
                         discriminator=(0, 0xF0, code << 4))


_SCHEMAS = (
    _schema(0x1, "ConnRequest", Channel.CCCH, Direction.UL, 5, (
        ("msg_type", 0, 1, 0xF0),
        ("est_cause", 0, 1, 0x0E),
        ("spare", 0, 1, 0x01),
        ("ue_identity", 1, 4, 0xFFFFFFFF),
    )),
    _schema(0x2, "ConnSetup", Channel.CCCH, Direction.DL, 4, (
        ("msg_type", 0, 1, 0xF0),
        ("txn_id", 0, 1, 0x0C),
        ("srb_config", 1, 1, 0xFF),
        ("harq_max_tx", 2, 1, 0x70),
        ("sr_resource_idx", 2, 2, 0x0FF0),
        ("power_ctrl", 3, 1, 0x0F),
    )),
    _schema(0x3, "ConnSetupComplete", Channel.DCCH, Direction.UL, 3, (
        ("msg_type", 0, 1, 0xF0),
        ("txn_id", 0, 1, 0x0C),
        ("selected_plmn", 0, 1, 0x03),
        ("attach_type", 1, 1, 0xE0),
        ("ue_caps", 1, 2, 0x1FFE),
        ("ksi", 2, 1, 0x01),
    )),
    _schema(0x4, "AuthRequest", Channel.DCCH, Direction.DL, 13, (
        ("msg_type", 0, 1, 0xF0),
        ("ksi_asme", 0, 1, 0x0E),
        ("spare", 0, 1, 0x01),
        ("rand_token", 1, 8, 0xFFFFFFFFFFFFFFFF),
        ("autn_tag", 9, 4, 0xFFFFFFFF),
    )),
    _schema(0x5, "AuthResponse", Channel.DCCH, Direction.UL, 10, (
        ("msg_type", 0, 1, 0xF0),
        ("res_len", 0, 1, 0x0F),
        ("res_token", 1, 8, 0xFFFFFFFFFFFFFFFF),
        ("seq_num", 9, 1, 0xFE),
    )),
    _schema(0x6, "SecModeCommand", Channel.DCCH, Direction.DL, 6, (
        ("msg_type", 0, 1, 0xF0),
        ("cipher_algo", 0, 1, 0x0E),
        ("integrity_algo", 0, 2, 0x01C0),
        ("nonce", 1, 1, 0x3F),
        ("mac_tag", 2, 4, 0xFFFFFFFF),
    )),
    _schema(0x7, "SecModeComplete", Channel.DCCH, Direction.UL, 6, (
        ("msg_type", 0, 1, 0xF0),
        ("status", 0, 1, 0x0C),
        ("mac_res", 1, 4, 0xFFFFFFFF),
        ("seq_num", 5, 1, 0xFE),
    )),
    _schema(0x8, "AttachAccept", Channel.DCCH, Direction.DL, 10, (
        ("msg_type", 0, 1, 0xF0),
        ("attach_result", 0, 1, 0x0E),
        ("t3412_timer", 1, 1, 0xFF),
        ("tai_list", 2, 3, 0xFFFFFF),
        ("guti", 5, 4, 0xFFFFFFFF),
        ("bearer_id", 9, 1, 0xF0),
    )),
    _schema(0x9, "AttachComplete", Channel.DCCH, Direction.UL, 4, (
        ("msg_type", 0, 1, 0xF0),
        ("status", 0, 1, 0x0F),
        ("esm_container", 1, 2, 0x0FFF),
        ("seq_num", 3, 1, 0xFF),
    )),
)

_BY_TYPE = {s.packet_type: s for s in _SCHEMAS}


def schema_registry() -> tuple[MessageSchema, ...]:
    """All message schemas of the simulated attach flow, in flow order."""
    return _SCHEMAS


def schema_for(packet_type: str) -> MessageSchema:
    return _BY_TYPE[packet_type]


def _unknown(data: bytes, channel: Channel, direction: Direction, layer: Layer) -> Packet:
    span = min(len(data), 8)
    raw = Field("raw", offset=0, length=span, mask=(1 << (8 * span)) - 1)
    return Packet(bytes(data), layer, direction, channel, UNKNOWN_TYPE, (raw,))


def _shift(field: Field, delta: int) -> Field:
    return Field(field.name, offset=field.offset + delta, length=field.length,
                 mask=field.mask, index=field.index)


def dissect(data: bytes, channel: Channel, direction: Direction,
            layer: Layer = Layer.RRC) -> Packet:
    """Map raw bytes to a typed packet with its field list.

    Total: any byte sequence of length >= 1 dissects; inputs that match no
    schema come back as UNKNOWN with one raw field.
    """
    if len(data) < 1:
        raise ValueError("cannot dissect an empty byte sequence")
    if layer is Layer.MAC:
        payload = data[MAC_HEADER_LEN:]
        if len(payload) >= 1:
            for schema in _SCHEMAS:
                if schema.channel is channel and schema.matches(payload):
                    fields = (MAC_LCID_FIELD, MAC_LEN_FIELD) + tuple(
                        _shift(f, MAC_HEADER_LEN) for f in schema.fields)
                    return Packet(bytes(data), layer, direction, channel,
                                  schema.packet_type, fields)
        return _unknown(data, channel, direction, layer)
    for schema in _SCHEMAS:
        if schema.channel is channel and schema.matches(data):
            return Packet(bytes(data), layer, direction, channel,
                          schema.packet_type, schema.fields)
    return _unknown(data, channel, direction, layer)


def encode_message(packet_type: str, values: dict[str, int]) -> bytes:
    """Serialize benign field values into the schema's fixed layout.

    ``msg_type`` is filled from the discriminator; other missing fields
    default to zero.
    """
    schema = _BY_TYPE[packet_type]
    blank = Packet(bytes(schema.total_length), Layer.RRC, schema.direction,
                   schema.channel, packet_type, schema.fields)
    packet = apply_field(blank, blank.field("msg_type"), schema.discriminator[2] >> 4)
    for name, value in values.items():
        packet = apply_field(packet, packet.field(name), value)
    return packet.data


def wrap_mac(payload: bytes, channel: Channel) -> bytes:
    """Prepend the two-byte MAC framing header used at the MAC hook point."""
    lcid = 0x01 if channel is Channel.CCCH else 0x02
    return bytes([lcid << 3, len(payload) & 0xFF]) + payload


def dump_schema_table() -> str:
    """Text table of the registry (one row per field) for docs and the CLI."""
    rows = ["schema name | channel | field | offset | len | mask"]
    for schema in _SCHEMAS:
        for f in schema.fields:
            rows.append(f"{schema.packet_type} | {schema.channel.value} | "
                        f"{f.name} | {f.offset} | {f.length} | 0x{f.mask:X}")
    return "\n".join(rows)
