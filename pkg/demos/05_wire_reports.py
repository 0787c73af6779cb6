#!/usr/bin/env python3
"""Serialize operator reports and exercise the stream framing.

A report is 31 + 15 * count bytes: a 27-byte header (magic 0xAE70,
version, flags, frame id, timestamp, drone GPS fixed-point, altitude,
entry count), 15 bytes per detection, and a trailing CRC-32. Five to
thirty-one detections land inside a 100-500 byte budget per frame.
"""

from aeropipe.wire import (
    ReportEntry,
    ReportMessage,
    decode_message,
    encode_message,
    frame_stream,
    message_size,
    unframe_stream,
)

entries = tuple(
    ReportEntry(box=(100 + 30 * k, 80, 120 + 30 * k, 110), track_id=k,
                primary_action=k % 4, secondary_action=k % 5, confidence_q=200 + k)
    for k in range(5)
)
msg = ReportMessage(
    frame_id=1234,
    timestamp_ms=1_700_000_000_000,
    drone_lat_e7=int(35.3606 * 1e7),
    drone_lon_e7=int(138.7274 * 1e7),
    drone_alt_dm=352,
    entries=entries,
)

payload = encode_message(msg)
print(f"{len(entries)} detections -> {len(payload)} bytes (layout says {message_size(5)})")
print("header bytes:", payload[:27].hex(" "))
print("sizes for 0, 5, 31 detections:", message_size(0), message_size(5), message_size(31))

back = decode_message(payload)
print("roundtrip exact:", back == msg)

# framing with recovery: garbage before a valid stream is skipped
stream = frame_stream([msg, msg])
dirty = b"\xde\xad\xbe\xef" + stream
messages, skipped = unframe_stream(dirty)
print(f"recovered {len(messages)} messages after skipping {skipped} garbage bytes")

# single-byte corruption never decodes silently
broken = bytearray(payload)
broken[40] ^= 0x01
try:
    decode_message(bytes(broken))
except Exception as exc:
    print("corrupted byte rejected:", type(exc).__name__)
