"""Per-frame orchestration: features, decode, crops, temporal prediction,
suppression and report emission.

The trained backbone is deliberately absent. Detection consumes dense maps
supplied with the frame (encoded ground truth, corrupted variants, or any
external producer writing the map tensor format); crop features come from
a deterministic multiscale intensity stub so every downstream stage runs
on real data.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .attention import AttentionConfig, crop_and_resize
from .boxgen import BoxGeneratorConfig, box_generator
from .densemaps import DenseMaps
from .evaluate import Detection, nms
from .geometry import BBox
from .synth import SceneConfig, generate_sequence, render_intensity
from .temporal import ActivityModel, TrackStore, predict
from .wire import ReportMessage, build_report, encode_message

STAGES = ("features", "decode", "attention", "temporal", "nms", "wire")
BUDGET_STAGES = ("decode", "attention", "temporal", "nms", "wire")


@dataclass
class StubConfig:
    """Multiscale intensity-pyramid feature stub: per scale, the rescaled
    intensity plus its local mean and local variance."""

    scales: tuple[int, ...] = (1, 2, 4)
    local_window: int = 3

    @property
    def depth(self) -> int:
        return 3 * len(self.scales)


@dataclass
class PipelineConfig:
    boxgen: BoxGeneratorConfig = field(default_factory=BoxGeneratorConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    stub: StubConfig = field(default_factory=StubConfig)
    nms_iou: float = 0.5
    score_floor: float = 0.3
    max_dist: float = 40.0
    max_age: int = 5
    hidden_size: int = 64
    model_seed: int | None = None
    address: str | None = None
    frame_period_ms: int = 100

    @property
    def crop_input_size(self) -> int:
        return (self.stub.depth + 1) * self.attention.out_size**2


_CONFIG_KEYS = {
    "boxgen.delta": ("boxgen", "delta", float),
    "boxgen.max_filter_window": ("boxgen", "max_filter_window", int),
    "boxgen.min_patch_area": ("boxgen", "min_patch_area", int),
    "boxgen.max_box_diag": ("boxgen", "max_box_diag", float),
    "boxgen.peak_floor": ("boxgen", "peak_floor", float),
    "attention.expand_ratio": ("attention", "expand_ratio", float),
    "attention.sigma_scale": ("attention", "sigma_scale", float),
    "attention.out_size": ("attention", "out_size", int),
    "stub.local_window": ("stub", "local_window", int),
    "nms.iou_threshold": (None, "nms_iou", float),
    "nms.score_floor": (None, "score_floor", float),
    "associate.max_dist": (None, "max_dist", float),
    "associate.max_age": (None, "max_age", int),
    "temporal.hidden_size": (None, "hidden_size", int),
    "temporal.model_seed": (None, "model_seed", int),
    "wire.address": (None, "address", str),
    "pipeline.frame_period_ms": (None, "frame_period_ms", int),
}


def parse_config_file(path: str) -> dict[str, str]:
    """Flat `section.key = value` pairs; blank lines and # comments skipped."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'section.key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def config_from_mapping(values: dict[str, str]) -> PipelineConfig:
    cfg = PipelineConfig()
    for key, raw in values.items():
        if key == "stub.scales":
            cfg.stub.scales = tuple(int(v) for v in raw.split(",") if v.strip())
            continue
        if key not in _CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        section, attr, cast = _CONFIG_KEYS[key]
        target = cfg if section is None else getattr(cfg, section)
        setattr(target, attr, cast(raw))
    return cfg


@dataclass
class FrameRecord:
    """Input for one pipeline step.

    Dense maps must be present (the learned map producer is out of scope);
    intensity defaults to a zero frame when only maps are available.
    """

    frame_id: int
    maps: DenseMaps
    intensity: np.ndarray | None = None
    timestamp_ms: int | None = None
    drone_lat: float = 0.0
    drone_lon: float = 0.0
    drone_alt_m: float = 0.0


def _downsample(frame: np.ndarray, factor: int) -> np.ndarray:
    """Block-average by `factor`, edge-padding to a multiple first."""
    if factor == 1:
        return frame
    h, w = frame.shape
    pad_h = (-h) % factor
    pad_w = (-w) % factor
    padded = np.pad(frame, ((0, pad_h), (0, pad_w)), mode="edge")
    return padded.reshape(
        (h + pad_h) // factor, factor, (w + pad_w) // factor, factor
    ).mean(axis=(1, 3))


def _upsample(grid: np.ndarray, factor: int, shape: tuple[int, int]) -> np.ndarray:
    if factor == 1:
        return grid
    full = np.repeat(np.repeat(grid, factor, axis=0), factor, axis=1)
    return full[: shape[0], : shape[1]]


def feature_stub(intensity: np.ndarray, cfg: StubConfig) -> np.ndarray:
    """Deterministic (D, H, W) dense features from a grayscale frame.

    Per scale: the block-averaged intensity upsampled back to frame size,
    its local mean, and its local variance (window `local_window` at the
    downsampled resolution, nearest-edge handling).
    """
    frame = np.asarray(intensity, dtype=np.float64)
    shape = frame.shape
    channels: list[np.ndarray] = []
    for scale in cfg.scales:
        down = _downsample(frame, scale)
        mean = ndimage.uniform_filter(down, size=cfg.local_window, mode="nearest")
        sq_mean = ndimage.uniform_filter(down * down, size=cfg.local_window, mode="nearest")
        var = np.clip(sq_mean - mean * mean, 0.0, None)
        channels.append(_upsample(down, scale, shape))
        channels.append(_upsample(mean, scale, shape))
        channels.append(_upsample(var, scale, shape))
    return np.stack(channels)


@dataclass
class FrameResult:
    frame_id: int
    detections: list[Detection]
    message: ReportMessage
    payload: bytes
    timings_ms: dict[str, float]


class Pipeline:
    """Stateful frame-by-frame runner; frames must arrive in id order."""

    def __init__(self, cfg: PipelineConfig | None = None, model: ActivityModel | None = None) -> None:
        self.cfg = cfg or PipelineConfig()
        self.model = model or ActivityModel.build(
            input_size=self.cfg.crop_input_size,
            hidden_size=self.cfg.hidden_size,
            seed=self.cfg.model_seed,
        )
        if self.model.cell.input_size != self.cfg.crop_input_size:
            raise ValueError(
                f"model input size {self.model.cell.input_size} != "
                f"crop size {self.cfg.crop_input_size}"
            )
        self.store = TrackStore(
            hidden_size=self.model.cell.hidden_size,
            max_dist=self.cfg.max_dist,
            max_age=self.cfg.max_age,
        )
        self.last_frame_id: int | None = None

    def run_frame(self, frame: FrameRecord) -> FrameResult:
        """Decode, crop, predict, suppress and serialize one frame."""
        if self.last_frame_id is not None and frame.frame_id <= self.last_frame_id:
            raise ValueError(
                f"frame ids must increase: got {frame.frame_id} after {self.last_frame_id}"
            )
        self.last_frame_id = frame.frame_id
        timings: dict[str, float] = {}

        start = time.perf_counter()
        intensity = (
            frame.intensity
            if frame.intensity is not None
            else np.zeros((frame.maps.height, frame.maps.width))
        )
        features = feature_stub(intensity, self.cfg.stub)
        timings["features"] = (time.perf_counter() - start) * 1e3

        start = time.perf_counter()
        boxes = box_generator(frame.maps, self.cfg.boxgen)
        timings["decode"] = (time.perf_counter() - start) * 1e3

        start = time.perf_counter()
        crops = [
            crop_and_resize(features, b, self.cfg.attention, frame_index=frame.frame_id)
            for b in boxes
        ]
        timings["attention"] = (time.perf_counter() - start) * 1e3

        start = time.perf_counter()
        detections = self._predict(boxes, crops, frame.frame_id)
        timings["temporal"] = (time.perf_counter() - start) * 1e3

        start = time.perf_counter()
        kept = nms(detections, self.cfg.nms_iou, self.cfg.score_floor)
        timings["nms"] = (time.perf_counter() - start) * 1e3

        start = time.perf_counter()
        message = build_report(
            frame_id=frame.frame_id,
            detections=kept,
            timestamp_ms=(
                frame.timestamp_ms
                if frame.timestamp_ms is not None
                else frame.frame_id * self.cfg.frame_period_ms
            ),
            drone_lat=frame.drone_lat,
            drone_lon=frame.drone_lon,
            drone_alt_m=frame.drone_alt_m,
        )
        payload = encode_message(message)
        timings["wire"] = (time.perf_counter() - start) * 1e3

        return FrameResult(frame.frame_id, kept, message, payload, timings)

    def _predict(self, boxes: list[BBox], crops, frame_id: int) -> list[Detection]:
        tracks = self.store.step(boxes)
        if not tracks:
            return []
        x = np.stack([c.tensor.reshape(-1) for c in crops])
        h_prev = np.stack([t.h for t in tracks])
        c_prev = np.stack([t.c for t in tracks])
        a_primary, a_secondary, conf, h, c_state = predict(self.model, x, h_prev, c_prev)
        detections = []
        for i, track in enumerate(tracks):
            track.h = h[i]
            track.c = c_state[i]
            track.primary_dist = a_primary[i]
            track.secondary_dist = a_secondary[i]
            track.confidence = float(conf[i])
            detections.append(
                Detection(
                    box=boxes[i],
                    confidence=float(conf[i]),
                    primary_dist=a_primary[i],
                    secondary_dist=a_secondary[i],
                    track_id=track.track_id,
                    frame_id=frame_id,
                )
            )
        return detections


# ---------------------------------------------------------------------------
# Latency benchmark
# ---------------------------------------------------------------------------


@dataclass
class BenchReport:
    frames: int
    skipped: int
    stats: dict[str, tuple[float, float]]

    def csv_lines(self) -> list[str]:
        lines = ["stage,mean_ms,p95_ms"]
        for stage in (*STAGES, "total"):
            mean, p95 = self.stats[stage]
            lines.append(f"{stage},{mean:.3f},{p95:.3f}")
        return lines


def bench_frames(
    cfg: PipelineConfig,
    frames: int = 100,
    boxes: int = 10,
    grid: tuple[int, int] = (640, 360),
    seed: int = 0,
    warmup: int = 3,
    latest_only: bool = False,
) -> BenchReport:
    """Per-stage latency over a synthetic moving sequence.

    The `total` row sums the non-stub stages (decode through wire). With
    latest_only, frames whose nominal arrival passed while the previous
    frame was processing are dropped, mirroring a live-feed consumer that
    always grabs the newest frame.
    """
    scene_cfg = SceneConfig(grid=grid, box_count=(boxes, boxes))
    scenes = generate_sequence(scene_cfg, frames + warmup, seed)
    pipeline = Pipeline(cfg)
    rows: list[dict[str, float]] = []
    skipped = 0
    clock_ms = 0.0
    for idx, scene in enumerate(scenes):
        if latest_only and idx >= warmup:
            arrival = idx * cfg.frame_period_ms
            if arrival < clock_ms:
                skipped += 1
                continue
        record = FrameRecord(
            frame_id=scene.frame_id,
            maps=scene.maps,
            intensity=render_intensity(scene.records, grid),
        )
        result = pipeline.run_frame(record)
        if idx >= warmup:
            rows.append(result.timings_ms)
            clock_ms = max(clock_ms, idx * cfg.frame_period_ms) + sum(
                result.timings_ms[s] for s in STAGES
            )
    stats: dict[str, tuple[float, float]] = {}
    for stage in STAGES:
        xs = np.array([r[stage] for r in rows])
        stats[stage] = (float(xs.mean()), float(np.percentile(xs, 95)))
    totals = np.array([sum(r[s] for s in BUDGET_STAGES) for r in rows])
    stats["total"] = (float(totals.mean()), float(np.percentile(totals, 95)))
    return BenchReport(frames=len(rows), skipped=skipped, stats=stats)
