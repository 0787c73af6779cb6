"""Shared annotation text format.

One record per line, space-separated:

    frame_id x0 y0 x1 y1 track_id primary_action secondary_action

Track and action fields use -1 as the "unknown" sentinel. Prediction files
may append a ninth column with the detection confidence; ground-truth files
omit it and readers default it to 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .geometry import BBox


@dataclass(frozen=True)
class AnnotationRecord:
    frame_id: int
    box: BBox
    track_id: int = -1
    primary_action: int = -1
    secondary_action: int = -1
    confidence: float = 1.0

    def to_line(self, with_confidence: bool = False) -> str:
        fields = [
            self.frame_id,
            self.box.x0,
            self.box.y0,
            self.box.x1,
            self.box.y1,
            self.track_id,
            self.primary_action,
            self.secondary_action,
        ]
        line = " ".join(str(v) for v in fields)
        if with_confidence:
            line += f" {self.confidence:.6f}"
        return line


def parse_line(line: str) -> AnnotationRecord:
    parts = line.split()
    if len(parts) not in (8, 9):
        raise ValueError(f"expected 8 or 9 fields, got {len(parts)}: {line!r}")
    ints = [int(p) for p in parts[:8]]
    conf = float(parts[8]) if len(parts) == 9 else 1.0
    return AnnotationRecord(
        frame_id=ints[0],
        box=BBox(ints[1], ints[2], ints[3], ints[4]),
        track_id=ints[5],
        primary_action=ints[6],
        secondary_action=ints[7],
        confidence=conf,
    )


def read_annotations(path: str) -> list[AnnotationRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            records.append(parse_line(line))
    return records


def write_annotations(
    path: str, records: Iterable[AnnotationRecord], with_confidence: bool = False
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_line(with_confidence=with_confidence) + "\n")


def group_by_frame(records: Iterable[AnnotationRecord]) -> dict[int, list[AnnotationRecord]]:
    frames: dict[int, list[AnnotationRecord]] = {}
    for rec in records:
        frames.setdefault(rec.frame_id, []).append(rec)
    return frames
