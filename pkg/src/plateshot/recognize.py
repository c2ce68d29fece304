"""Plate patch extraction, recognizer prompts and backends, plate-string parsing."""

from __future__ import annotations

import base64
import enum
import functools
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from . import transport, videoio
from .errors import (BackendError, DegenerateBBox, NoGlyphs, NoPlateFound, NoPlateInSequence,
                     UnknownPrompt, ValidationError)
from .font import DEFAULT_ALPHABET, GLYPH_HEIGHT, GLYPH_WIDTH, GLYPHS, tight_glyph
from .types import BBox, Detection, Frame

PATCH_SIZE = 448
CONTEXT_SIZE = 256
NO_TEXT = "no text detected"
DEFAULT_PATTERN = r"(?<![A-Z0-9])[A-Z]{3}[-\s]?[0-9]{4}(?![0-9])"

PROMPTS = {
    "P1": "What is the license plate number?",
    "P2": "What is the text on this licesne plate?",
    "P3": "Please describe the texts in this image step-by-step, especially the license plate.",
    "P4": ("The license plates are always located at the bottom of vehicle. Please describe "
           "the texts in this image step-by-step, especially the license plate."),
    "P5": ("Please describe the texts in this image detailly, especially the license plate. "
           "When you read the texts, please read them step-by-step and consider the locations "
           "of all characters."),
    "P6": ("Please describe the texts in this image detailly, especially the license plate. "
           "The license plates are always located at the bottom of vehicle. When you read the "
           "texts, please read them step-by-step and consider the locations of all characters."),
}
DEFAULT_PROMPT = "P6"


class PatchStrategy(enum.Enum):
    RESIZE = "resize"
    CENTER_CROP = "center_crop"
    BACKGROUND_ADD = "background_add"


@dataclass(frozen=True, eq=False)
class PlatePatch:
    pixels: np.ndarray
    strategy: PatchStrategy
    source_bbox: BBox
    source_frame: int

    def __post_init__(self):
        if self.pixels.shape != (PATCH_SIZE, PATCH_SIZE, 3):
            raise ValidationError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}x3, got {self.pixels.shape}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str


@dataclass(frozen=True)
class RecognitionResult:
    frame_index: int
    instance_id: int
    caption: str
    plate: Optional[str]
    prompt_id: str
    confidence: float = 1.0


def get_prompt(prompt_id: str) -> PromptTemplate:
    try:
        return PromptTemplate(prompt_id, PROMPTS[prompt_id])
    except KeyError:
        raise UnknownPrompt(f"unknown prompt {prompt_id!r}; expected one of {sorted(PROMPTS)}") from None


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment (edge samples clamp)."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).reshape((-1, 1) + (1,) * (img.ndim - 2))
    fx = (xs - x0).reshape((1, -1) + (1,) * (img.ndim - 2))
    a = img.astype(np.float64)
    # separable: interpolate along rows, then along columns
    rows = a[y0] * (1 - fy) + a[y1] * fy
    out = rows[:, x0] * (1 - fx) + rows[:, x1] * fx
    if img.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


def _int_bbox(bbox, dims):
    w, h = dims
    x0, y0, x1, y1 = bbox
    x0, y0 = max(int(math.floor(x0)), 0), max(int(math.floor(y0)), 0)
    x1, y1 = min(int(math.ceil(x1)), w), min(int(math.ceil(y1)), h)
    if x1 <= x0 or y1 <= y0:
        raise DegenerateBBox(f"bbox {bbox} has zero area inside the frame")
    return x0, y0, x1, y1


def center_crop_window(centroid, dims, size: int = CONTEXT_SIZE):
    """Top-left corner of the ``size`` window centered on ``centroid``, clamped to the frame."""
    w, h = dims
    cx, cy = centroid
    left = int(math.floor(cx + 0.5)) - size // 2
    top = int(math.floor(cy + 0.5)) - size // 2
    left = max(min(left, w - size), 0)
    top = max(min(top, h - size), 0)
    return left, top


def background_canvas(crop: np.ndarray, size: int = CONTEXT_SIZE):
    """Paste ``crop`` centered on a black square; returns (canvas, top, left)."""
    h, w = crop.shape[:2]
    if h > size or w > size:
        scale = size / max(h, w)
        h, w = max(1, min(size, round(h * scale))), max(1, min(size, round(w * scale)))
        crop = resize_bilinear(crop, h, w)
    canvas = np.zeros((size, size, 3), dtype=np.uint8)
    top, left = (size - h) // 2, (size - w) // 2
    canvas[top:top + h, left:left + w] = crop
    return canvas, top, left


def extract_patch(frame: Frame, det: Detection, strategy=PatchStrategy.CENTER_CROP) -> PlatePatch:
    """Build the 448x448 recognizer input for one detection."""
    strategy = PatchStrategy(strategy)
    x0, y0, x1, y1 = _int_bbox(det.bbox, frame.dims)
    px = frame.pixels
    if strategy is PatchStrategy.RESIZE:
        out = resize_bilinear(px[y0:y1, x0:x1], PATCH_SIZE, PATCH_SIZE)
    elif strategy is PatchStrategy.CENTER_CROP:
        if det.mask is not None and det.mask.area:
            centroid = det.mask.centroid()
        else:
            centroid = ((det.bbox[0] + det.bbox[2] - 1) / 2, (det.bbox[1] + det.bbox[3] - 1) / 2)
        left, top = center_crop_window(centroid, frame.dims)
        window = np.zeros((CONTEXT_SIZE, CONTEXT_SIZE, 3), dtype=np.uint8)
        part = px[top:top + CONTEXT_SIZE, left:left + CONTEXT_SIZE]
        window[:part.shape[0], :part.shape[1]] = part  # frames smaller than the window pad black
        out = resize_bilinear(window, PATCH_SIZE, PATCH_SIZE)
    else:
        canvas, _, _ = background_canvas(px[y0:y1, x0:x1])
        out = resize_bilinear(canvas, PATCH_SIZE, PATCH_SIZE)
    return PlatePatch(out, strategy, tuple(float(v) for v in det.bbox), det.frame_index)


# --- built-in OCR -----------------------------------------------------------

_EIGHT = np.ones((3, 3), dtype=bool)


def otsu_threshold(gray: np.ndarray) -> float:
    hist = np.bincount(np.clip(gray, 0, 255).astype(np.uint8).ravel(), minlength=256).astype(float)
    p = hist / hist.sum()
    omega = np.cumsum(p)
    mu = np.cumsum(p * np.arange(256))
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu[-1] * omega - mu) ** 2 / (omega * (1 - omega))
    between[~np.isfinite(between)] = -1
    return float(np.argmax(between)) + 0.5


def _gray(pixels):
    a = np.asarray(pixels, dtype=np.float64)
    return a @ np.array([0.299, 0.587, 0.114]) if a.ndim == 3 else a


def _plate_region(light):
    """The light component holding the most glyph-sized holes, nearest the center on ties."""
    h, w = light.shape
    labels, n = ndimage.label(light)  # 4-connected light, dual of 8-connected dark
    cy, cx = h / 2, w / 2
    best, best_key = None, None
    for i, sl in enumerate(ndimage.find_objects(labels), 1):
        sub = labels[sl] == i
        filled = ndimage.binary_fill_holes(sub)
        holes = filled & ~sub
        if not holes.any():
            continue
        hole_labels, n = ndimage.label(holes, _EIGHT)
        # noise speckle near the threshold punches tiny holes; glyphs are bigger
        sizes = np.bincount(hole_labels.ravel())[1:]
        n_holes = int((sizes >= max(4.0, 0.005 * filled.sum())).sum())
        if n_holes == 0:
            continue
        ry, rx = int(cy) - sl[0].start, int(cx) - sl[1].start
        inside = 0 <= ry < sub.shape[0] and 0 <= rx < sub.shape[1] and bool(filled[ry, rx])
        by, bx = (sl[0].start + sl[0].stop) / 2, (sl[1].start + sl[1].stop) / 2
        key = (n_holes >= 2 and inside, n_holes, -math.hypot(by - cy, bx - cx))
        if best_key is None or key > best_key:
            best, best_key = (i, sl, sub, filled), key
    return best


def _glyph_boxes(dark):
    """Dark components merged along x, as ((row slice, col slice), crop) pairs.

    Font cells carry a blank spacing column one unit wide, so pieces of one
    glyph split by resampling (diagonal strokes touch only at corners) sit
    closer in x than distinct glyphs do. Pieces closer than a fraction of a
    font unit are merged.
    """
    labels, n = ndimage.label(dark, _EIGHT)
    spans = []
    for i, b in enumerate(ndimage.find_objects(labels), 1):
        if (labels[b] == i).sum() < 2:
            continue
        spans.append([b[1].start, b[1].stop, b[0].start, b[0].stop, [i]])
    if not spans:
        return []
    spans.sort()
    # patches may be stretched anisotropically, so the unit is measured along x
    unit = max(sp[1] - sp[0] for sp in spans) / GLYPH_WIDTH
    tol = max(1.0, 0.45 * unit)
    merged = []
    for sp in spans:
        if merged and sp[0] < merged[-1][1] + tol:
            m = merged[-1]
            m[1] = max(m[1], sp[1])
            m[2], m[3] = min(m[2], sp[2]), max(m[3], sp[3])
            m[4] += sp[4]
        else:
            merged.append(sp)
    out = []
    for x0, x1, y0, y1, ids in merged:
        box = (slice(y0, y1), slice(x0, x1))
        out.append((box, np.isin(labels[box], ids)))
    return out


@functools.lru_cache(maxsize=4096)
def _template(ch, bh, bw):
    """Zero-mean tight glyph stretched to ``bh`` x ``bw`` by nearest neighbour, and its width in font units."""
    tmpl = tight_glyph(ch)
    ri = np.minimum((np.arange(bh) * tmpl.shape[0]) // bh, tmpl.shape[0] - 1)
    ci = np.minimum((np.arange(bw) * tmpl.shape[1]) // bw, tmpl.shape[1] - 1)
    t = tmpl[np.ix_(ri, ci)].astype(np.float64)
    t -= t.mean()
    t.setflags(write=False)
    return t, tmpl.shape[1]


def _classify(crop: np.ndarray, sx: float, alphabet: str) -> str:
    bh, bw = crop.shape
    if bw >= 2.5 * bh:
        if "-" in alphabet:
            return "-"
    crop = crop.astype(np.float64)
    units = bw / sx
    best, best_score = None, -np.inf
    c0 = crop - crop.mean()
    cn = np.sqrt((c0 * c0).sum())
    for ch in alphabet:
        if ch == "-" or ch not in GLYPHS:
            continue
        t0, tw = _template(ch, bh, bw)
        if abs(units - tw) > 1.2:
            continue
        den = cn * np.sqrt((t0 * t0).sum())
        score = (c0 * t0).sum() / den if den > 0 else -1.0
        if score > best_score:
            best, best_score = ch, score
    if best is None:
        raise NoGlyphs(f"glyph of {bw}x{bh} px matches no template width")
    return best


def builtin_ocr(patch, alphabet: str = DEFAULT_ALPHABET) -> str:
    """Read the plate text from a patch by template matching against the built-in font.

    The image is binarized with Otsu's threshold; the light region with the
    most dark holes is taken as the plate, and the dark connected components
    inside it, ordered left to right, are the glyph candidates. Each glyph
    is matched by NCC against font templates resized to its box, restricted
    to templates of compatible width.
    """
    pixels = patch.pixels if isinstance(patch, PlatePatch) else patch
    gray = _gray(pixels)
    if gray.max() - gray.min() < 32:
        raise NoGlyphs("patch has no contrast")
    light = gray > otsu_threshold(gray)
    plate = _plate_region(light)
    if plate is None:
        raise NoGlyphs("no light plate region with glyph holes")
    _, sl, sub, filled = plate
    comps = _glyph_boxes(filled & ~light[sl])
    if not comps:
        raise NoGlyphs("no dark components on the plate")
    max_h = max(crop.shape[0] for _, crop in comps)
    glyphs = [(box, crop) for box, crop in comps
              if crop.shape[0] >= 0.5 * max_h
              or (crop.shape[1] >= 2.5 * crop.shape[0] and crop.shape[1] >= 0.3 * max_h)]
    tall = [crop.shape[0] for _, crop in glyphs if crop.shape[1] < 2.5 * crop.shape[0]]
    sy = (np.median(tall) if tall else max_h) / GLYPH_HEIGHT
    centers = [(box[1].start + box[1].stop) / 2 for box, _ in glyphs]
    # glyph boxes are centered in their cells, so the center pitch is one cell (6 font units)
    sx = float(np.median(np.diff(centers))) / 6.0 if len(centers) >= 2 else sy
    return "".join(_classify(crop, sx, alphabet) for _, crop in glyphs)


class RecognizerBackend:
    """Contract: ``recognize(patch, prompt) -> caption`` (non-empty text)."""

    max_concurrency: Optional[int] = None

    def recognize(self, patch: PlatePatch, prompt: PromptTemplate) -> str:
        raise NotImplementedError


class BuiltinRecognizer(RecognizerBackend):
    """Template OCR wrapped in a caption; the prompt text is ignored."""

    def __init__(self, alphabet: str = DEFAULT_ALPHABET):
        self.alphabet = alphabet

    def recognize(self, patch, prompt):
        try:
            text = builtin_ocr(patch, self.alphabet)
        except NoGlyphs:
            return NO_TEXT
        return f"The license plate reads {text}."


class ExternalRecognizer(RecognizerBackend):
    """Client for ``POST <endpoint>/recognize`` with ``{image_ppm_b64, prompt}`` -> ``{text}``."""

    def __init__(self, endpoint: str, timeout: float = 30.0, max_concurrency: Optional[int] = 4):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_concurrency = max_concurrency

    def recognize(self, patch, prompt):
        payload = {
            "image_ppm_b64": base64.b64encode(videoio.encode_ppm(patch.pixels)).decode("ascii"),
            "prompt": prompt.text,
        }
        reply = transport.post_json(self.endpoint + "/recognize", payload, self.timeout)
        text = reply.get("text")
        if not isinstance(text, str) or not text:
            raise BackendError("recognizer reply lacks a non-empty 'text' string")
        return text


def recognize(patch: PlatePatch, prompt: PromptTemplate,
              backend: Optional[RecognizerBackend] = None) -> str:
    return (backend or BuiltinRecognizer()).recognize(patch, prompt)


def parse_plate(caption: str, pattern: str = DEFAULT_PATTERN) -> str:
    """First plate-pattern match in the uppercased caption, separators stripped."""
    m = re.search(pattern, caption.upper())
    if m is None:
        raise NoPlateFound(f"no plate in caption {caption!r}")
    return re.sub(r"[-\s]", "", m.group(0))


def recognize_sequence(results: Iterable) -> str:
    """Majority vote over per-frame plates.

    Ties go to the string with the higher mean confidence, then to the
    lexicographically smaller string. Accepts :class:`RecognitionResult`
    objects or ``(plate, confidence)`` pairs; ``None`` plates are skipped.
    """
    votes = defaultdict(list)
    for r in results:
        plate, conf = (r.plate, r.confidence) if isinstance(r, RecognitionResult) else r
        if plate is not None:
            votes[plate].append(float(conf))
    if not votes:
        raise NoPlateInSequence("no frame produced a plate string")
    return min(votes, key=lambda p: (-len(votes[p]), -sum(votes[p]) / len(votes[p]), p))
