"""Deterministic synthetic plate videos with exact ground truth.

All randomness comes from numpy's PCG64 bit generator seeded through
``numpy.random.SeedSequence(seed)``; layout and pixel noise draw from two
independent child streams so changing ``noise_sigma`` never moves the plate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from . import videoio
from .errors import EmptyString, PlateOutOfBounds, StringTooLong, UnknownGlyph, ValidationError
from .font import DEFAULT_ALPHABET, GLYPH_HEIGHT, GLYPH_WIDTH, GLYPHS
from .types import GroundTruthRecord, QueryAnnotation, VideoSequence

PLATE_COLOR = (222, 222, 214)
GLYPH_COLOR = (24, 24, 28)
BACKGROUND_COLOR = (70, 90, 110)
PLATE_PADDING = 4
MIN_GLYPH_HEIGHT = 8


@dataclass(frozen=True)
class Linear:
    vx: float = 2.0
    vy: float = 0.0

    def offset(self, t):
        return self.vx * t, self.vy * t


@dataclass(frozen=True)
class Sinusoidal:
    """Horizontal oscillation ``amp * sin(2 pi t / period)``."""

    amp: float = 10.0
    period: float = 30.0

    def offset(self, t):
        return self.amp * math.sin(2 * math.pi * t / self.period), 0.0


@dataclass(frozen=True)
class Uniform:
    color: Tuple[int, int, int] = BACKGROUND_COLOR


@dataclass(frozen=True)
class Clutter:
    n_distractors: int = 4
    moving: bool = False
    color: Tuple[int, int, int] = BACKGROUND_COLOR


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    frames: int = 30
    frame_dims: Tuple[int, int] = (384, 288)
    plate_string: str = "ABC1234"
    plate_dims: Tuple[int, int] = (120, 40)
    motion: Union[Linear, Sinusoidal] = field(default_factory=Linear)
    noise_sigma: float = 0.0
    background: Union[Uniform, Clutter] = field(default_factory=Uniform)
    start: Optional[Tuple[float, float]] = None  # plate center in frame 0
    max_step: float = 20.0  # per-frame displacement budget (tracker search radius)
    instance_id: int = 0


@dataclass(frozen=True)
class SyntheticScene:
    config: SceneConfig
    video: VideoSequence
    truth: Tuple[GroundTruthRecord, ...]
    true_center: Tuple[Tuple[float, float], ...]

    @property
    def query(self) -> QueryAnnotation:
        x, y = self.true_center[0]
        return QueryAnnotation(self.config.instance_id, x, y)


def glyph_scale(n_chars: int, dims, pad: int = PLATE_PADDING) -> int:
    pw, ph = dims
    block_units = GLYPH_WIDTH * n_chars + (n_chars - 1)
    return min((pw - 2 * pad) // block_units, (ph - 2 * pad) // GLYPH_HEIGHT)


def render_plate(string: str, dims=(120, 40), alphabet: str = DEFAULT_ALPHABET,
                 pad: int = PLATE_PADDING) -> np.ndarray:
    """Render ``string`` as dark glyphs on a light plate of ``dims = (w, h)``.

    Glyphs are scaled by the largest integer factor that fits inside the
    padding, using nearest-neighbour replication, with a one-cell gap between
    characters. The glyph block is centered on the plate.
    """
    if not string:
        raise EmptyString("plate string is empty")
    for ch in string:
        if ch not in alphabet or ch not in GLYPHS:
            raise UnknownGlyph(f"no glyph for {ch!r}")
    pw, ph = dims
    s = glyph_scale(len(string), dims, pad)
    if s * GLYPH_HEIGHT < MIN_GLYPH_HEIGHT:
        raise StringTooLong(f"{string!r} does not fit {pw}x{ph} at >= {MIN_GLYPH_HEIGHT} px glyphs")
    plate = np.empty((ph, pw, 3), dtype=np.uint8)
    plate[:] = PLATE_COLOR
    cell = np.ones((s, s), dtype=bool)
    block_w = s * (GLYPH_WIDTH * len(string) + len(string) - 1)
    left = (pw - block_w) // 2
    top = (ph - s * GLYPH_HEIGHT) // 2
    for i, ch in enumerate(string):
        g = np.kron(GLYPHS[ch], cell)
        x0 = left + i * s * (GLYPH_WIDTH + 1)
        region = plate[top:top + g.shape[0], x0:x0 + g.shape[1]]
        region[g] = GLYPH_COLOR
    return plate


def _plate_corners(cfg: SceneConfig, start):
    pw, ph = cfg.plate_dims
    out = []
    for t in range(cfg.frames):
        dx, dy = cfg.motion.offset(t)
        cx, cy = start[0] + dx, start[1] + dy
        out.append((int(math.floor(cx - pw / 2 + 0.5)), int(math.floor(cy - ph / 2 + 0.5))))
    return out


def _choose_start(cfg: SceneConfig, rng):
    w, h = cfg.frame_dims
    pw, ph = cfg.plate_dims
    offs = [cfg.motion.offset(t) for t in range(cfg.frames)]
    dxs = [o[0] for o in offs]
    dys = [o[1] for o in offs]
    margin = 4
    lo_x = math.ceil(pw / 2 - min(dxs) + margin)
    hi_x = math.floor(w - pw / 2 - max(dxs) - margin)
    lo_y = math.ceil(ph / 2 - min(dys) + margin)
    hi_y = math.floor(h - ph / 2 - max(dys) - margin)
    if lo_x > hi_x or lo_y > hi_y:
        raise PlateOutOfBounds("no start position keeps the plate inside the frame")
    return float(rng.integers(lo_x, hi_x + 1)), float(rng.integers(lo_y, hi_y + 1))


def _overlaps(a, b, gap):
    return not (a[2] + gap <= b[0] or b[2] + gap <= a[0] or a[3] + gap <= b[1] or b[3] + gap <= a[1])


def _color_far(rng, avoid, min_dist=90.0):
    for _ in range(1000):
        c = rng.integers(0, 256, size=3)
        if all(np.linalg.norm(c - np.asarray(a, float)) > min_dist for a in avoid):
            return tuple(int(v) for v in c)
    raise ValidationError("could not draw a distractor color")


def _distractors(cfg: SceneConfig, boxes, rng):
    bg = cfg.background
    if not isinstance(bg, Clutter):
        return []
    w, h = cfg.frame_dims
    placed = []
    for _ in range(bg.n_distractors):
        for _attempt in range(1000):
            dw, dh = (int(v) for v in rng.integers(10, 61, size=2))
            x0 = int(rng.integers(0, w - dw + 1))
            y0 = int(rng.integers(0, h - dh + 1))
            vx, vy = (int(v) for v in rng.integers(-2, 3, size=2)) if bg.moving else (0, 0)
            track = [(x0 + vx * t, y0 + vy * t, x0 + vx * t + dw, y0 + vy * t + dh)
                     for t in range(cfg.frames)]
            if any(_overlaps(r, b, 3) for r, b in zip(track, boxes)):
                continue
            color = _color_far(rng, [PLATE_COLOR, bg.color])
            placed.append((track, color))
            break
        else:
            raise ValidationError("could not place distractor without touching the plate")
    return placed


def generate_scene(cfg: SceneConfig) -> SyntheticScene:
    w, h = cfg.frame_dims
    pw, ph = cfg.plate_dims
    if cfg.frames < 1:
        raise ValidationError("need at least one frame")
    if cfg.noise_sigma < 0:
        raise ValidationError("noise_sigma must be >= 0")
    layout_seq, noise_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    layout = np.random.Generator(np.random.PCG64(layout_seq))
    noise = np.random.Generator(np.random.PCG64(noise_seq))

    plate = render_plate(cfg.plate_string, cfg.plate_dims)
    start = cfg.start if cfg.start is not None else _choose_start(cfg, layout)
    corners = _plate_corners(cfg, start)
    for a, b in zip(corners, corners[1:]):
        if math.hypot(b[0] - a[0], b[1] - a[1]) > cfg.max_step:
            raise ValidationError(f"per-frame motion exceeds max_step={cfg.max_step}")
    boxes = [(x, y, x + pw, y + ph) for x, y in corners]
    for x0, y0, x1, y1 in boxes:
        if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
            raise PlateOutOfBounds(f"plate box {(x0, y0, x1, y1)} leaves the {w}x{h} frame")
    distractors = _distractors(cfg, boxes, layout)

    frames, truth, centers = [], [], []
    for t, (x0, y0, x1, y1) in enumerate(boxes):
        img = np.empty((h, w, 3), dtype=np.uint8)
        img[:] = cfg.background.color
        for track, color in distractors:
            dx0, dy0, dx1, dy1 = track[t]
            img[max(dy0, 0):max(dy1, 0), max(dx0, 0):max(dx1, 0)] = color
        img[y0:y1, x0:x1] = plate
        if cfg.noise_sigma > 0:
            noisy = img + noise.normal(0.0, cfg.noise_sigma, img.shape)
            img = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
        frames.append(img)
        truth.append(GroundTruthRecord(t, cfg.instance_id, (x0, y0, x1, y1), cfg.plate_string))
        centers.append(((x0 + x1) / 2, (y0 + y1) / 2))
    return SyntheticScene(cfg, VideoSequence.from_arrays(frames), tuple(truth), tuple(centers))


def random_plate_string(rng) -> str:
    letters = "".join(chr(ord("A") + int(i)) for i in rng.integers(0, 26, size=3))
    digits = "".join(str(int(i)) for i in rng.integers(0, 10, size=4))
    return letters + digits


def make_suite(n: int, seed: int = 0, noise_sigma: float = 0.0, max_speed: float = 3.0,
               frames: int = 30, clutter: int = 3, moving_clutter: bool = False) -> List[SceneConfig]:
    """Varied scene configs: random plate text, linear motion up to ``max_speed`` px/frame."""
    rng = np.random.Generator(np.random.PCG64(seed))
    configs = []
    for i in range(n):
        vx, vy = (int(v) for v in rng.integers(-int(max_speed), int(max_speed) + 1, size=2))
        while math.hypot(vx, vy) > max_speed:
            vx, vy = (int(v) for v in rng.integers(-int(max_speed), int(max_speed) + 1, size=2))
        bg = Clutter(clutter, moving_clutter) if clutter else Uniform()
        configs.append(SceneConfig(
            seed=int(rng.integers(0, 2**31)), frames=frames,
            plate_string=random_plate_string(rng), motion=Linear(vx, vy),
            noise_sigma=noise_sigma, background=bg))
    return configs


def write_scene(scene: SyntheticScene, out_dir) -> dict:
    """Write ``frames/``, ``annotations.json`` and ``truth.jsonl`` under ``out_dir``."""
    out = Path(out_dir)
    frames_dir = out / "frames"
    videoio.save_sequence(scene.video, frames_dir)
    ann_path = out / "annotations.json"
    truth_path = out / "truth.jsonl"
    videoio.save_annotations([scene.query], ann_path)
    videoio.save_ground_truth(scene.truth, truth_path)
    return {"frames": frames_dir, "annotations": ann_path, "truth": truth_path}
