"""Deterministic synthetic scenes, sequences and crop datasets.

Everything here is driven by the counter-based generator in `rng`, so any
seed reproduces a fixture bit for bit. Scenes are sets of labeled,
non-overlapping boxes rasterized through the dense-map encoder; sequences
move the same tracks with per-track velocities and edge reflection; the
crop dataset draws class-separable feature vectors for head training.

Scenes meant for decode roundtrips carry one extra guarantee beyond the
minimum side and pairwise gap: no rectangle spanned by one box's top-left
corner and another box's bottom-right corner is filled with segmented
pixels beyond ``max_cross_fill``. Without it, two similar boxes that
happen to align can span a mostly-segmented rectangle that the corner
combiner legitimately keeps, and the roundtrip would not be bijective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .annotations import AnnotationRecord
from .densemaps import DenseMaps, encode
from .geometry import BBox, separation
from .rng import SplitMix64


class SceneGenerationError(RuntimeError):
    """Packing failed within the attempt budget."""


@dataclass
class SceneConfig:
    """Scene parameters; defaults model tiny aerial pedestrian footprints.

    aspect_range bounds height / width. Near-isotropic boxes match the
    overhead-view domain and keep the regression ramp along the short axis
    steeper than the decode noise floor; very elongated boxes would make
    the corner peaks unrecoverable under noise for any windowed decode.
    """

    grid: tuple[int, int] = (640, 360)
    box_count: tuple[int, int] = (1, 12)
    side_range: tuple[int, int] = (8, 48)
    aspect_range: tuple[float, float] = (0.6, 1.6)
    min_gap: int = 3
    velocity_range: tuple[float, float] = (-3.0, 3.0)
    noise_amplitude: float = 0.05
    flip_probability: float = 0.01
    max_cross_fill: float = 0.85
    n_primary: int = 4
    n_secondary: int = 5
    max_attempts: int = 10_000

    def __post_init__(self) -> None:
        if self.side_range[0] < 8 and self.max_cross_fill < 1.0:
            raise ValueError("roundtrip scenes need min side >= 8")
        if self.min_gap < 3 and self.max_cross_fill < 1.0:
            raise ValueError("roundtrip scenes need min gap >= 3")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must be in [0, 1]")


@dataclass
class Scene:
    frame_id: int
    records: list[AnnotationRecord]
    maps: DenseMaps

    @property
    def boxes(self) -> list[BBox]:
        return [r.box for r in self.records]


def _rect_overlap(box: BBox, x0: int, y0: int, x1: int, y1: int) -> int:
    """Inclusive pixel count of box ∩ rectangle."""
    w = min(box.x1, x1) - max(box.x0, x0) + 1
    h = min(box.y1, y1) - max(box.y0, y0) + 1
    return w * h if (w > 0 and h > 0) else 0


def _span_fill(boxes: list[BBox], x0: int, y0: int, x1: int, y1: int) -> float:
    total = (x1 - x0 + 1) * (y1 - y0 + 1)
    occupied = sum(_rect_overlap(b, x0, y0, x1, y1) for b in boxes)
    return occupied / total


def _cross_fill_ok(boxes: list[BBox], threshold: float) -> bool:
    """Check the decodability certificate over all ordered corner pairs."""
    if threshold >= 1.0:
        return True
    for i, a in enumerate(boxes):
        for j, b in enumerate(boxes):
            if i == j:
                continue
            if b.x1 - a.x0 >= 2 and b.y1 - a.y0 >= 2:
                if _span_fill(boxes, a.x0, a.y0, b.x1, b.y1) >= threshold:
                    return False
    return True


def _place_boxes(cfg: SceneConfig, rng: SplitMix64, count: int) -> list[BBox]:
    width, height = cfg.grid
    boxes: list[BBox] = []
    attempts = 0
    while len(boxes) < count:
        if attempts >= cfg.max_attempts:
            raise SceneGenerationError(
                f"failed to pack {count} boxes on {width}x{height} "
                f"after {attempts} attempts"
            )
        attempts += 1
        w = rng.randint(cfg.side_range[0], cfg.side_range[1])
        ratio = rng.uniform(cfg.aspect_range[0], cfg.aspect_range[1])
        h = min(cfg.side_range[1], max(cfg.side_range[0], int(round(w * ratio))))
        x0 = rng.randint(0, width - 1 - w)
        y0 = rng.randint(0, height - 1 - h)
        candidate = BBox(x0, y0, x0 + w, y0 + h)
        if any(separation(candidate, other) < cfg.min_gap for other in boxes):
            continue
        if not _cross_fill_ok(boxes + [candidate], cfg.max_cross_fill):
            continue
        boxes.append(candidate)
    return boxes


def generate_scene(cfg: SceneConfig, seed: int, frame_id: int = 0) -> Scene:
    """One labeled scene with clean encoded maps; deterministic per seed."""
    rng = SplitMix64(seed)
    count = rng.randint(cfg.box_count[0], cfg.box_count[1])
    boxes = _place_boxes(cfg, rng, count)
    records = [
        AnnotationRecord(
            frame_id=frame_id,
            box=box,
            track_id=k,
            primary_action=rng.randint(0, cfg.n_primary - 1),
            secondary_action=rng.randint(0, cfg.n_secondary - 1),
        )
        for k, box in enumerate(boxes)
    ]
    return Scene(frame_id=frame_id, records=records, maps=encode(boxes, cfg.grid))


@dataclass
class _MovingTrack:
    track_id: int
    fx: float
    fy: float
    w: int
    h: int
    vx: float
    vy: float
    primary: int
    secondary: int

    def box(self) -> BBox:
        x0 = int(round(self.fx))
        y0 = int(round(self.fy))
        return BBox(x0, y0, x0 + self.w, y0 + self.h)


def _valid_against(candidate: BBox, others: list[BBox], cfg: SceneConfig) -> bool:
    if any(separation(candidate, other) < cfg.min_gap for other in others):
        return False
    return _cross_fill_ok(others + [candidate], cfg.max_cross_fill)


def generate_sequence(cfg: SceneConfig, frames: int, seed: int) -> list[Scene]:
    """Frames of the same tracks moving at constant velocity.

    Boxes reflect off the frame edges. A move that would break the scene
    invariants against another track is resolved by reflecting the
    velocity, or skipped for one frame when even that collides; track ids,
    sizes and labels persist throughout.
    """
    rng = SplitMix64(seed)
    count = rng.randint(cfg.box_count[0], cfg.box_count[1])
    boxes = _place_boxes(cfg, rng, count)
    width, height = cfg.grid
    tracks = []
    for k, b in enumerate(boxes):
        tracks.append(
            _MovingTrack(
                track_id=k,
                fx=float(b.x0),
                fy=float(b.y0),
                w=b.width,
                h=b.height,
                vx=rng.uniform(cfg.velocity_range[0], cfg.velocity_range[1]),
                vy=rng.uniform(cfg.velocity_range[0], cfg.velocity_range[1]),
                primary=rng.randint(0, cfg.n_primary - 1),
                secondary=rng.randint(0, cfg.n_secondary - 1),
            )
        )

    scenes: list[Scene] = []
    for t in range(frames):
        if t > 0:
            for idx, track in enumerate(tracks):
                nfx, nvx = _reflect(track.fx + track.vx, track.vx, width - 1 - track.w)
                nfy, nvy = _reflect(track.fy + track.vy, track.vy, height - 1 - track.h)
                others = [o.box() for j, o in enumerate(tracks) if j != idx]
                moved = _MovingTrack(
                    track.track_id, nfx, nfy, track.w, track.h,
                    nvx, nvy, track.primary, track.secondary,
                )
                if _valid_against(moved.box(), others, cfg):
                    tracks[idx] = moved
                else:
                    bounced = _MovingTrack(
                        track.track_id, track.fx, track.fy, track.w, track.h,
                        -track.vx, -track.vy, track.primary, track.secondary,
                    )
                    tracks[idx] = bounced
        records = [
            AnnotationRecord(
                frame_id=t,
                box=track.box(),
                track_id=track.track_id,
                primary_action=track.primary,
                secondary_action=track.secondary,
            )
            for track in tracks
        ]
        scenes.append(
            Scene(frame_id=t, records=records, maps=encode([r.box for r in records], cfg.grid))
        )
    return scenes


def _reflect(pos: float, vel: float, limit: float) -> tuple[float, float]:
    """Reflect a coordinate into [0, limit], flipping velocity on contact."""
    if pos < 0.0:
        return -pos, -vel
    if pos > limit:
        return 2.0 * limit - pos, -vel
    return pos, vel


def corrupt_maps(maps: DenseMaps, amplitude: float, flip_probability: float, seed: int) -> DenseMaps:
    """Additive uniform regression noise (clamped to [0, 1]) plus
    independent segmentation bit flips; draw order is reg noise first."""
    rng = SplitMix64(seed)
    noise = (rng.random_array((2, maps.height, maps.width)) * 2.0 - 1.0) * amplitude
    reg = np.clip(maps.reg + noise, 0.0, 1.0)
    flips = rng.random_array((maps.height, maps.width)) < flip_probability
    seg = maps.seg.copy()
    seg[flips] = 1.0 - seg[flips]
    return DenseMaps(seg=seg, reg=reg, width=maps.width, height=maps.height)


def render_intensity(records: list[AnnotationRecord], grid: tuple[int, int]) -> np.ndarray:
    """Flat stand-in imagery: constant background, per-track box shading."""
    width, height = grid
    frame = np.full((height, width), 0.1, dtype=np.float64)
    for rec in records:
        shade = 0.3 + 0.6 * ((rec.track_id * 0.6180339887498949) % 1.0)
        frame[rec.box.y0 : rec.box.y1 + 1, rec.box.x0 : rec.box.x1 + 1] = shade
    return frame


# ---------------------------------------------------------------------------
# Crop dataset for head training
# ---------------------------------------------------------------------------


@dataclass
class CropDataset:
    features: np.ndarray
    primary_labels: np.ndarray
    secondary_labels: np.ndarray
    pedestrian: np.ndarray
    class_means: np.ndarray = field(repr=False, default=None)


def crop_dataset(
    seed: int,
    n_samples: int = 512,
    feature_shape: tuple[int, ...] = (10, 16, 16),
    n_primary: int = 4,
    n_secondary: int = 5,
    noise: float = 0.1,
    background_fraction: float = 0.25,
) -> CropDataset:
    """Class-separable synthetic crop features.

    Every (primary, secondary) class pair owns a mean pattern drawn once in
    [-1, 1]; samples add component-wise uniform noise bounded by ``noise``.
    Background (non-pedestrian) samples are noise around the zero pattern.
    With the default sizes the pairwise mean distances dwarf the noise
    radius, so a nearest-mean classifier is exact.
    """
    rng = SplitMix64(seed)
    dim = int(np.prod(feature_shape))
    means = rng.random_array((n_primary * n_secondary, dim)) * 2.0 - 1.0

    features = np.zeros((n_samples, dim), dtype=np.float64)
    primary = np.zeros(n_samples, dtype=np.int64)
    secondary = np.zeros(n_samples, dtype=np.int64)
    pedestrian = np.zeros(n_samples, dtype=bool)
    for i in range(n_samples):
        is_ped = rng.random() >= background_fraction
        sample_noise = (rng.random_array((dim,)) * 2.0 - 1.0) * noise
        if is_ped:
            p = rng.randint(0, n_primary - 1)
            s = rng.randint(0, n_secondary - 1)
            features[i] = means[p * n_secondary + s] + sample_noise
            primary[i], secondary[i], pedestrian[i] = p, s, True
        else:
            features[i] = sample_noise
            primary[i] = secondary[i] = -1
    return CropDataset(
        features=features.reshape((n_samples,) + feature_shape),
        primary_labels=primary,
        secondary_labels=secondary,
        pedestrian=pedestrian,
        class_means=means,
    )


# ---------------------------------------------------------------------------
# Manifest files
# ---------------------------------------------------------------------------


def write_manifest(path: str, seed: int, grid: tuple[int, int], entries: list[tuple[int, str, str]]) -> None:
    """Frame index for a generated sequence: annotation and map files."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"seed {seed}\n")
        fh.write(f"grid {grid[0]} {grid[1]}\n")
        for fid, ann, maps in entries:
            fh.write(f"frame {fid} {ann} {maps}\n")


def read_manifest(path: str) -> tuple[int, tuple[int, int], list[tuple[int, str, str]]]:
    seed = 0
    grid = (0, 0)
    entries: list[tuple[int, str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "seed":
                seed = int(parts[1])
            elif parts[0] == "grid":
                grid = (int(parts[1]), int(parts[2]))
            elif parts[0] == "frame":
                entries.append((int(parts[1]), parts[2], parts[3]))
    return seed, grid, entries
