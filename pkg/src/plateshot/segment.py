"""Point-prompted segmentation: prompts on one frame -> object mask -> detection.

The built-in backend grows a region from every prompt pixel (8-connected,
admitting pixels whose RGB distance to the running region mean is below
``tau``), fills holes, and promotes a region to its enclosing region when the
prompt hit a part of an object (a glyph stroke inside a plate). Regions
larger than ``area_cap`` of the frame are treated as background bleed.
"""

from __future__ import annotations

import base64
import logging
from typing import Optional, Sequence

import numba
import numpy as np
from scipy import ndimage

from . import transport, videoio
from .errors import AreaCapExceeded, BackendError, BackendFailure, EmptyMask, PlateshotError, ValidationError
from .types import BBox, Detection, Frame, Mask, Point

logger = logging.getLogger(__name__)

_EIGHT = np.ones((3, 3), dtype=bool)


@numba.njit(cache=True, nogil=True)
def _grow(img, r0, c0, tau, limit):
    """Running-mean region growing; returns (region, overflowed)."""
    h, w, _ = img.shape
    region = np.zeros((h, w), dtype=np.bool_)
    queue_r = np.empty(h * w, dtype=np.int32)
    queue_c = np.empty(h * w, dtype=np.int32)
    region[r0, c0] = True
    queue_r[0] = r0
    queue_c[0] = c0
    head, tail = 0, 1
    s0 = float(img[r0, c0, 0])
    s1 = float(img[r0, c0, 1])
    s2 = float(img[r0, c0, 2])
    n = 1
    tau2 = tau * tau
    while head < tail:
        r = queue_r[head]
        c = queue_c[head]
        head += 1
        for dr in range(-1, 2):
            rr = r + dr
            if rr < 0 or rr >= h:
                continue
            for dc in range(-1, 2):
                cc = c + dc
                if (dr == 0 and dc == 0) or cc < 0 or cc >= w or region[rr, cc]:
                    continue
                d0 = img[rr, cc, 0] - s0 / n
                d1 = img[rr, cc, 1] - s1 / n
                d2 = img[rr, cc, 2] - s2 / n
                if d0 * d0 + d1 * d1 + d2 * d2 < tau2:
                    region[rr, cc] = True
                    s0 += img[rr, cc, 0]
                    s1 += img[rr, cc, 1]
                    s2 += img[rr, cc, 2]
                    n += 1
                    if n > limit:
                        return region, True
                    queue_r[tail] = rr
                    queue_c[tail] = cc
                    tail += 1
    return region, False


def grow_region(pixels: np.ndarray, row: int, col: int, tau: float, limit: int):
    """Grow from ``(row, col)``; ``limit`` caps the admitted pixel count."""
    return _grow(np.ascontiguousarray(pixels, dtype=np.float64), int(row), int(col),
                 float(tau), int(limit))


def _window(region, margin=1):
    rows = np.flatnonzero(region.any(axis=1))
    cols = np.flatnonzero(region.any(axis=0))
    h, w = region.shape
    return (slice(max(rows[0] - margin, 0), min(rows[-1] + margin + 1, h)),
            slice(max(cols[0] - margin, 0), min(cols[-1] + margin + 1, w)))


def fill_holes(region: np.ndarray) -> np.ndarray:
    out = np.zeros_like(region)
    win = _window(region, 1)
    out[win] = ndimage.binary_fill_holes(region[win])
    return out


def mask_to_bbox(mask) -> BBox:
    """Tight half-open bounds ``(x0, y0, x1, y1)`` of the foreground."""
    bits = mask.bits if isinstance(mask, Mask) else np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground")
    return float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1)


def _prompt_pixel(p, dims):
    w, h = dims
    x, y = p
    if not (0 <= x < w and 0 <= y < h):
        raise ValidationError(f"prompt ({x}, {y}) outside {w}x{h} frame")
    return min(int(np.floor(y + 0.5)), h - 1), min(int(np.floor(x + 0.5)), w - 1)


class SegmenterBackend:
    """Behavioral contract: ``segment(frame, prompts) -> Mask``.

    ``max_concurrency`` of 1 tells the pipeline to call the backend serially.
    """

    max_concurrency: Optional[int] = None

    def segment(self, frame: Frame, prompts: Sequence[Point]) -> Mask:
        raise NotImplementedError


class RegionGrowSegmenter(SegmenterBackend):
    def __init__(self, tau: float = 30.0, area_cap: float = 0.25, promote: bool = True,
                 max_promotions: int = 4):
        if tau <= 0:
            raise ValidationError("tau must be > 0")
        if not 0 < area_cap <= 1:
            raise ValidationError("area_cap must be in (0, 1]")
        self.tau = tau
        self.area_cap = area_cap
        self.promote = promote
        self.max_promotions = max_promotions

    def _limit(self, frame):
        return int(self.area_cap * frame.width * frame.height)

    def _promote(self, img, region, limit, cache):
        # climb from a part (glyph stroke) to the object that encloses it
        for _ in range(self.max_promotions):
            win = _window(region, 1)
            sub = region[win]
            ring = ndimage.binary_dilation(sub, _EIGHT) & ~sub
            if not ring.any():
                return region
            rr, cc = np.nonzero(ring)
            colors = img[win][rr, cc]
            med = np.median(colors, axis=0)
            k = int(np.argmin(((colors - med) ** 2).sum(axis=1)))
            seed = (int(rr[k] + win[0].start), int(cc[k] + win[1].start))
            if seed not in cache:
                grown, overflow = _grow(img, seed[0], seed[1], float(self.tau), limit)
                cache[seed] = None if overflow else fill_holes(grown)
            outer = cache[seed]
            if outer is None or not outer[region].all():
                return region
            region = outer
        return region

    def segment(self, frame: Frame, prompts: Sequence[Point]) -> Mask:
        if not prompts:
            raise ValidationError("segment() needs at least one prompt point")
        img = frame.pixels.astype(np.float64)
        limit = self._limit(frame)
        pixels = [_prompt_pixel(p, frame.dims) for p in prompts]
        union = np.zeros((frame.height, frame.width), dtype=bool)
        bled = 0
        grown_cache, promo_cache = {}, {}
        for rc in pixels:
            if rc in grown_cache:
                region = grown_cache[rc]
            else:
                grown, overflow = _grow(img, rc[0], rc[1], float(self.tau), limit)
                region = None if overflow else fill_holes(grown)
                if region is not None and self.promote:
                    region = self._promote(img, region, limit, promo_cache)
                grown_cache[rc] = region
            if region is None:
                bled += 1
            else:
                union |= region
        if not union.any():
            if bled:
                raise AreaCapExceeded(f"every prompt region exceeded area cap {self.area_cap}")
            raise EmptyMask("no admissible region")
        labels, n = ndimage.label(union, _EIGHT)
        hits = np.zeros(n + 1, dtype=int)
        for r, c in pixels:
            hits[labels[r, c]] += 1
        hits[0] = -1
        areas = np.bincount(labels.ravel(), minlength=n + 1)
        best = max(range(1, n + 1), key=lambda i: (hits[i], areas[i], -i))
        final = labels == best
        if final.sum() > limit:
            raise AreaCapExceeded(f"mask area {int(final.sum())} exceeds cap {limit}")
        score = sum(bool(final[r, c]) for r, c in pixels) / len(pixels)
        return Mask(final, score)


def detect_frame(frame: Frame, prompts: Sequence[Point], backend: SegmenterBackend,
                 instance_id: int = 0) -> Optional[Detection]:
    """Segment one frame from its visible prompt points.

    Returns ``None`` (a miss) when there are no prompts or segmentation
    fails. Backend transport failures propagate: they are not per-frame
    conditions.
    """
    if not prompts:
        return None
    try:
        mask = backend.segment(frame, list(prompts))
        bbox = mask_to_bbox(mask)
    except EmptyMask:
        return None
    except BackendFailure:
        raise
    except PlateshotError as exc:
        logger.warning("frame %d: segmentation failed: %s", frame.index, exc)
        return None
    return Detection(frame.index, instance_id, bbox, float(mask.score), mask=mask)


class ExternalSegmenter(SegmenterBackend):
    """Client for ``POST <endpoint>/segment``.

    Request ``{image_ppm_b64, prompts: [[x, y], ...]}``, reply
    ``{mask_pgm_b64, score}``.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, max_concurrency: Optional[int] = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_concurrency = max_concurrency

    def segment(self, frame, prompts):
        reply = transport.post_json(
            self.endpoint + "/segment",
            {"image_ppm_b64": base64.b64encode(videoio.encode_ppm(frame.pixels)).decode("ascii"),
             "prompts": [[float(x), float(y)] for x, y in prompts]},
            self.timeout)
        try:
            bits = videoio.decode_pgm(base64.b64decode(reply["mask_pgm_b64"]))
            score = float(reply["score"])
        except (KeyError, TypeError, ValueError, PlateshotError) as exc:
            raise BackendError(f"malformed segmenter reply: {exc}") from None
        if bits.shape != (frame.height, frame.width):
            raise BackendError("segmenter mask size does not match frame")
        if not bits.any():
            raise EmptyMask("external segmenter returned an empty mask")
        return Mask(bits, score)
