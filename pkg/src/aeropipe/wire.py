"""Compact operator telemetry: binary report messages and stream framing.

Wire layout, all little-endian:

    header (27 bytes)
        magic      u16   0xAE70
        version    u8    1
        flags      u8
        frame_id   u32
        timestamp  u64   milliseconds since epoch
        drone_lat  i32   fixed-point 1e-7 degrees
        drone_lon  i32   fixed-point 1e-7 degrees
        drone_alt  u16   decimeters
        count      u8    number of detection entries, at most 31
    entries (15 bytes each)
        box        4 x u16  (x0, y0, x1, y1)
        track_id   u32
        primary    u8    action vocabulary index
        secondary  u8
        confidence u8    round(value * 255)
    crc32 (4 bytes)  IEEE polynomial over all preceding bytes

Total size is 31 + 15 * count bytes, at most 496. Stream framing prefixes
each message with a u16 length; the unframer resynchronizes on the magic
after corrupt framing and reports how many bytes it skipped.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable

MAGIC = 0xAE70
VERSION = 1
MAX_ENTRIES = 31
HEADER_SIZE = 27
ENTRY_SIZE = 15
CRC_SIZE = 4

_HEADER = struct.Struct("<HBBIQiiHB")
_ENTRY = struct.Struct("<4HIBBB")
_MAGIC_BYTES = struct.pack("<H", MAGIC)


class WireError(ValueError):
    """Base class for report decode failures."""


class BadMagicError(WireError):
    pass


class BadVersionError(WireError):
    pass


class LengthMismatchError(WireError):
    pass


class ChecksumError(WireError):
    pass


@dataclass(frozen=True)
class ReportEntry:
    box: tuple[int, int, int, int]
    track_id: int
    primary_action: int
    secondary_action: int
    confidence_q: int

    def __post_init__(self) -> None:
        for coord in self.box:
            if not 0 <= coord <= 0xFFFF:
                raise ValueError(f"box coordinate {coord} does not fit u16")
        if not 0 <= self.track_id <= 0xFFFFFFFF:
            raise ValueError(f"track id {self.track_id} does not fit u32")
        for value in (self.primary_action, self.secondary_action, self.confidence_q):
            if not 0 <= value <= 0xFF:
                raise ValueError(f"byte field value {value} out of range")

    @property
    def confidence(self) -> float:
        return self.confidence_q / 255.0


@dataclass(frozen=True)
class ReportMessage:
    frame_id: int
    timestamp_ms: int
    drone_lat_e7: int
    drone_lon_e7: int
    drone_alt_dm: int
    entries: tuple[ReportEntry, ...] = field(default_factory=tuple)
    flags: int = 0

    def __post_init__(self) -> None:
        if len(self.entries) > MAX_ENTRIES:
            raise ValueError(f"{len(self.entries)} entries exceed the cap of {MAX_ENTRIES}")

    @property
    def encoded_size(self) -> int:
        return HEADER_SIZE + ENTRY_SIZE * len(self.entries) + CRC_SIZE


def message_size(count: int) -> int:
    """Encoded byte length for a given entry count: 31 + 15 * count."""
    return HEADER_SIZE + ENTRY_SIZE * count + CRC_SIZE


def encode_message(msg: ReportMessage) -> bytes:
    body = bytearray(
        _HEADER.pack(
            MAGIC,
            VERSION,
            msg.flags,
            msg.frame_id,
            msg.timestamp_ms,
            msg.drone_lat_e7,
            msg.drone_lon_e7,
            msg.drone_alt_dm,
            len(msg.entries),
        )
    )
    for e in msg.entries:
        body += _ENTRY.pack(*e.box, e.track_id, e.primary_action, e.secondary_action, e.confidence_q)
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    return bytes(body)


def decode_message(data: bytes) -> ReportMessage:
    """Strict decode: magic, version, exact length, then CRC."""
    if len(data) < HEADER_SIZE + CRC_SIZE:
        raise LengthMismatchError(f"{len(data)} bytes is shorter than any valid message")
    magic, version, flags, frame_id, ts, lat, lon, alt, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"magic 0x{magic:04X} != 0x{MAGIC:04X}")
    if version != VERSION:
        raise BadVersionError(f"version {version} unsupported")
    expected = message_size(count)
    if len(data) != expected:
        raise LengthMismatchError(f"{len(data)} bytes but count {count} implies {expected}")
    (crc_stored,) = struct.unpack_from("<I", data, expected - CRC_SIZE)
    crc_actual = zlib.crc32(data[: expected - CRC_SIZE])
    if crc_stored != crc_actual:
        raise ChecksumError(f"crc 0x{crc_stored:08X} != computed 0x{crc_actual:08X}")
    entries = []
    for k in range(count):
        x0, y0, x1, y1, track_id, primary, secondary, conf_q = _ENTRY.unpack_from(
            data, HEADER_SIZE + k * ENTRY_SIZE
        )
        entries.append(ReportEntry((x0, y0, x1, y1), track_id, primary, secondary, conf_q))
    return ReportMessage(
        frame_id=frame_id,
        timestamp_ms=ts,
        drone_lat_e7=lat,
        drone_lon_e7=lon,
        drone_alt_dm=alt,
        entries=tuple(entries),
        flags=flags,
    )


def build_report(
    frame_id: int,
    detections,
    timestamp_ms: int,
    drone_lat: float = 0.0,
    drone_lon: float = 0.0,
    drone_alt_m: float = 0.0,
) -> ReportMessage:
    """Convert pipeline detections into a report message.

    When a frame holds more than the 31-entry cap, only the
    highest-confidence detections are carried (flag bit 0 marks the
    truncation).
    """
    ordered = sorted(detections, key=lambda d: -d.confidence)
    truncated = len(ordered) > MAX_ENTRIES
    entries = tuple(
        ReportEntry(
            box=d.box.as_tuple(),
            track_id=max(d.track_id, 0),
            primary_action=max(d.primary_action, 0),
            secondary_action=max(d.secondary_action, 0),
            confidence_q=int(round(min(max(d.confidence, 0.0), 1.0) * 255)),
        )
        for d in ordered[:MAX_ENTRIES]
    )
    return ReportMessage(
        frame_id=frame_id,
        timestamp_ms=timestamp_ms,
        drone_lat_e7=int(round(drone_lat * 1e7)),
        drone_lon_e7=int(round(drone_lon * 1e7)),
        drone_alt_dm=min(max(int(round(drone_alt_m * 10)), 0), 0xFFFF),
        entries=entries,
        flags=1 if truncated else 0,
    )


# ---------------------------------------------------------------------------
# Stream framing
# ---------------------------------------------------------------------------


def frame_stream(messages: Iterable[ReportMessage]) -> bytes:
    """Concatenate messages, each prefixed with its u16 encoded length."""
    out = bytearray()
    for msg in messages:
        payload = encode_message(msg)
        out += struct.pack("<H", len(payload))
        out += payload
    return bytes(out)


def _try_raw_decode(data: bytes, pos: int) -> ReportMessage | None:
    """Attempt to decode a message starting exactly at `pos`."""
    if pos + HEADER_SIZE + CRC_SIZE > len(data):
        return None
    count = data[pos + HEADER_SIZE - 1]
    end = pos + message_size(count)
    if end > len(data):
        return None
    try:
        return decode_message(data[pos:end])
    except WireError:
        return None


def unframe_stream(data: bytes) -> tuple[list[ReportMessage], int]:
    """Recover framed messages; returns (messages, skipped byte count).

    After a framing error the parser scans forward for the message magic,
    validates the candidate message in place, and counts everything passed
    over as skipped. A matching length prefix directly before a recovered
    message is treated as framing, not garbage.
    """
    messages: list[ReportMessage] = []
    skipped = 0
    pos = 0
    n = len(data)
    while pos < n:
        framed = None
        if pos + 2 <= n:
            (length,) = struct.unpack_from("<H", data, pos)
            if pos + 2 + length <= n:
                try:
                    framed = decode_message(data[pos + 2 : pos + 2 + length])
                except WireError:
                    framed = None
        if framed is not None:
            messages.append(framed)
            pos += 2 + length
            continue
        # Resync: find the next decodable message by its magic bytes.
        scan = pos
        recovered = None
        while True:
            idx = data.find(_MAGIC_BYTES, scan)
            if idx < 0:
                break
            recovered = _try_raw_decode(data, idx)
            if recovered is not None:
                break
            scan = idx + 1
        if recovered is None:
            skipped += n - pos
            break
        count = data[idx + HEADER_SIZE - 1]
        end = idx + message_size(count)
        prefix_start = idx - 2
        if prefix_start >= pos and struct.unpack_from("<H", data, prefix_start)[0] == message_size(count):
            skipped += prefix_start - pos
        else:
            skipped += idx - pos
        messages.append(recovered)
        pos = end
    return messages, skipped


# ---------------------------------------------------------------------------
# Byte-stream endpoints
# ---------------------------------------------------------------------------


def send_stream(writer: BinaryIO, messages: Iterable[ReportMessage]) -> int:
    """Write framed messages to a reliable ordered byte stream."""
    payload = frame_stream(messages)
    writer.write(payload)
    writer.flush()
    return len(payload)


def receive_stream(reader: BinaryIO) -> tuple[list[ReportMessage], int]:
    """Drain a byte stream until EOF and unframe everything received."""
    return unframe_stream(reader.read())


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {addr!r}")
    return host, int(port)
