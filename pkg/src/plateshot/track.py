"""Point trajectories across a video: built-in NCC tracker and backward refinement."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, signal

from . import transport
from .errors import BackendError, BackendFailure, DegeneratePatch, LengthMismatch, ValidationError
from .types import Frame, Point, VideoSequence

_LUMA = np.array([0.299, 0.587, 0.114])


class Direction(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True)
class Trajectory:
    instance_id: int
    point_index: int
    positions: Tuple[Point, ...]
    visible: Tuple[bool, ...]

    def __post_init__(self):
        if len(self.positions) != len(self.visible):
            raise LengthMismatch("positions and visibility differ in length")
        object.__setattr__(self, "positions", tuple((float(x), float(y)) for x, y in self.positions))
        object.__setattr__(self, "visible", tuple(bool(v) for v in self.visible))

    def __len__(self):
        return len(self.positions)


def to_gray(pixels) -> np.ndarray:
    if isinstance(pixels, Frame):
        pixels = pixels.pixels
    return np.asarray(pixels, dtype=np.float64) @ _LUMA


def _sample_span(img, cy, cx, y0, y1, x0, x1):
    """Bilinear samples of ``img`` at ``(cy + i, cx + j)`` for integer offsets i, j."""
    ys = cy + np.arange(y0, y1 + 1, dtype=np.float64)
    xs = cx + np.arange(x0, x1 + 1, dtype=np.float64)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")


def _box_sum(a, k):
    c = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    c[1:, 1:] = a.cumsum(0).cumsum(1)
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


def _pick_peak(ncc, predicted, ambiguity):
    flat = int(np.argmax(ncc))
    best = np.unravel_index(flat, ncc.shape)
    if predicted is None:
        return best
    top = ncc[best]
    peaks = (ncc >= top - ambiguity) & (ncc == ndimage.maximum_filter(ncc, size=3, mode="nearest"))
    ys, xs = np.nonzero(peaks)
    if len(ys) <= 1:
        return best
    d2 = (ys - predicted[0]) ** 2 + (xs - predicted[1]) ** 2
    i = int(np.argmin(d2))
    return int(ys[i]), int(xs[i])


def _normalized(a):
    a = a - a.mean()
    sd = a.std()
    return a / sd if sd > 0 else a


def _lk_polish(tmpl_ext, img, cy, cx, p, ix, iy, x0, y0, iterations=10):
    """Inverse-compositional Lucas-Kanade refinement started at the integer peak.

    Falls back to ``(x0, y0)`` when the iteration leaves the unit box.
    """
    inner = tmpl_ext[1:-1, 1:-1]
    sd = inner.std()
    if sd <= 0:
        return x0, y0
    t = (inner - inner.mean()) / sd
    gy, gx = np.gradient(tmpl_ext / sd)
    gx, gy = gx[1:-1, 1:-1], gy[1:-1, 1:-1]
    hess = np.array([[(gx * gx).sum(), (gx * gy).sum()], [(gx * gy).sum(), (gy * gy).sum()]])
    if abs(np.linalg.det(hess)) < 1e-9:
        return x0, y0
    hinv = np.linalg.inv(hess)
    dx, dy = float(ix), float(iy)
    for _ in range(iterations):
        w = _normalized(_sample_span(img, cy + dy, cx + dx, -p, p, -p, p))
        e = w - t
        step = hinv @ np.array([(gx * e).sum(), (gy * e).sum()])
        dx, dy = dx - step[0], dy - step[1]
        if abs(dx - ix) > 1.0 or abs(dy - iy) > 1.0:
            return x0, y0
        if abs(step[0]) < 1e-4 and abs(step[1]) < 1e-4:
            break
    return float(dx), float(dy)


def _parabolic(left, mid, right):
    denom = left - 2.0 * mid + right
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


def ncc_track_point(prev, next, pos: Point, patch_radius: int = 7, search_radius: int = 20,
                    predicted: Optional[Point] = None, ambiguity: float = 0.1,
                    polish: bool = True) -> Tuple[Point, float]:
    """Find where the patch around ``pos`` in ``prev`` moved to in ``next``.

    Both frames may be :class:`Frame` objects or grayscale arrays. The patch
    center is clamped so the ``(2r+1)^2`` window lies inside ``prev``; the
    search covers integer displacements up to ``search_radius`` whose window
    stays inside ``next``, and the NCC peak is refined with a parabola per
    axis. A sub-pixel estimate then comes from Gauss-Newton steps on
    the zero-mean, unit-variance patch difference, started at the integer
    peak; the parabolic value is the fallback when that walks off by more
    than a pixel. Returns the new position and the peak NCC score.

    Without ``predicted`` the global NCC maximum wins. With a predicted
    displacement ``(dx, dy)``, local maxima scoring within ``ambiguity`` of
    the best are treated as ties and the one nearest the prediction wins;
    this resolves repeated texture such as identical adjacent glyphs.
    """
    a = prev if isinstance(prev, np.ndarray) and prev.ndim == 2 else to_gray(prev)
    b = next if isinstance(next, np.ndarray) and next.ndim == 2 else to_gray(next)
    h, w = a.shape
    p, s = int(patch_radius), int(search_radius)
    if w < 2 * p + 1 or h < 2 * p + 1:
        raise ValidationError("frame smaller than the tracking patch")
    x, y = pos
    cx = min(max(float(x), p), w - 1 - p)
    cy = min(max(float(y), p), h - 1 - p)

    tmpl_ext = _sample_span(a, cy, cx, -p - 1, p + 1, -p - 1, p + 1)
    tmpl = tmpl_ext[1:-1, 1:-1]
    t0 = tmpl - tmpl.mean()
    tnorm = math.sqrt(float((t0 * t0).sum()))
    if tnorm < 1e-9:
        raise DegeneratePatch(f"zero-variance patch at ({x:.2f}, {y:.2f})")

    # displacement range keeping the candidate window inside next
    ux0 = max(-s, math.ceil(p - cx)); ux1 = min(s, math.floor(w - 1 - p - cx))
    uy0 = max(-s, math.ceil(p - cy)); uy1 = min(s, math.floor(h - 1 - p - cy))
    region = _sample_span(b, cy, cx, uy0 - p, uy1 + p, ux0 - p, ux1 + p)

    k = 2 * p + 1
    num = signal.fftconvolve(region, t0[::-1, ::-1], mode="valid")
    wsum = _box_sum(region, k)
    wsq = _box_sum(region * region, k)
    var = np.maximum(wsq - wsum * wsum / (k * k), 0.0)
    ok = var > 1e-10 * wsq + 1e-12  # flat windows: cancellation residue only
    ncc = np.full(num.shape, -1.0)
    ncc[ok] = np.clip(num[ok] / (tnorm * np.sqrt(var[ok])), -1.0, 1.0)

    iy, ix = _pick_peak(ncc, None if predicted is None else
                        (predicted[1] - uy0, predicted[0] - ux0), ambiguity)
    score = float(ncc[iy, ix])
    oy = _parabolic(ncc[iy - 1, ix], score, ncc[iy + 1, ix]) if 0 < iy < ncc.shape[0] - 1 else 0.0
    ox = _parabolic(ncc[iy, ix - 1], score, ncc[iy, ix + 1]) if 0 < ix < ncc.shape[1] - 1 else 0.0
    dx, dy = ux0 + ix, uy0 + iy
    if polish:
        dx, dy = _lk_polish(tmpl_ext, b, cy, cx, p, dx, dy, dx + ox, dy + oy)
    else:
        dx, dy = dx + ox, dy + oy
    nx = min(max(float(x) + dx, 0.0), w - 1.0)
    ny = min(max(float(y) + dy, 0.0), h - 1.0)
    return (nx, ny), score



class TrackerBackend:
    """Contract: ``track()`` returns one :class:`Trajectory` per seed, in frame order."""

    supports_backward = True

    def track(self, video: VideoSequence, seeds: Sequence[Point], direction=Direction.FORWARD,
              instance_id: int = 0) -> List[Trajectory]:
        raise NotImplementedError


class NCCTracker(TrackerBackend):
    """Frame-to-frame NCC patch tracker.

    Each step prefers the match nearest the previous step's displacement when
    several are equally good. A point whose score stays below ``min_score``
    for ``lost_frames`` consecutive frames is declared lost: it turns invisible and its position
    freezes at the last confident estimate.
    """

    supports_backward = True

    def __init__(self, patch_radius: int = 7, search_radius: int = 20,
                 min_score: float = 0.5, lost_frames: int = 3):
        if patch_radius < 1 or search_radius < 1:
            raise ValidationError("patch and search radius must be >= 1")
        self.patch_radius = patch_radius
        self.search_radius = search_radius
        self.min_score = min_score
        self.lost_frames = lost_frames

    def track(self, video, seeds, direction=Direction.FORWARD, instance_id=0):
        direction = Direction(direction)
        n = len(video)
        order = list(range(n)) if direction is Direction.FORWARD else list(range(n - 1, -1, -1))
        w, h = video.dims
        for x, y in seeds:
            if not (0 <= x < w and 0 <= y < h):
                raise ValidationError(f"seed ({x}, {y}) outside {w}x{h} frame")
        gray = [to_gray(f) for f in video]
        same = [np.array_equal(video[a].pixels, video[b].pixels) for a, b in zip(order, order[1:])]
        return [self._track_one(gray, order, same, seed, instance_id, i)
                for i, seed in enumerate(seeds)]

    def _track_one(self, gray, order, same, seed, instance_id, point_index):
        n = len(order)
        positions = [None] * n
        visible = [False] * n
        pos = (float(seed[0]), float(seed[1]))
        positions[order[0]] = pos
        visible[order[0]] = True
        confident = pos
        velocity = (0.0, 0.0)
        low = 0
        lost = False
        for k, (a, b) in enumerate(zip(order, order[1:])):
            if lost:
                positions[b] = confident
                continue
            if same[k]:
                new, score = pos, 1.0
            else:
                try:
                    new, score = ncc_track_point(gray[a], gray[b], pos, self.patch_radius,
                                                 self.search_radius, predicted=velocity)
                except DegeneratePatch:
                    new, score = pos, 0.0
            if score < self.min_score:
                low += 1
            else:
                low = 0
                confident = new
            if low >= self.lost_frames:
                lost = True
                positions[b] = confident
            else:
                positions[b] = new
                visible[b] = True
                if score >= self.min_score:
                    velocity = (new[0] - pos[0], new[1] - pos[1])
                pos = new
        return Trajectory(instance_id, point_index, tuple(positions), tuple(visible))


def track(video: VideoSequence, seeds: Sequence[Point], direction=Direction.FORWARD,
          backend: Optional[TrackerBackend] = None, instance_id: int = 0) -> List[Trajectory]:
    backend = backend or NCCTracker()
    direction = Direction(direction)
    if direction is Direction.BACKWARD and not backend.supports_backward:
        raise BackendFailure("tracker backend cannot run backward")
    trajs = backend.track(video, list(seeds), direction, instance_id)
    if len(trajs) != len(seeds) or any(len(t) != len(video) for t in trajs):
        raise BackendFailure("tracker returned trajectories that do not cover the video")
    return trajs


def round_trip_error(forward: Trajectory, backward: Trajectory) -> float:
    """Distance between the forward seed and where the backward pass ends at frame 0."""
    if len(forward) != len(backward):
        raise LengthMismatch(f"lengths {len(forward)} and {len(backward)} differ")
    (fx, fy), (bx, by) = forward.positions[0], backward.positions[0]
    return math.hypot(fx - bx, fy - by)


def backward_refine(video: VideoSequence, forward: Sequence[Trajectory],
                    backend: Optional[TrackerBackend] = None,
                    drop_threshold: float = 8.0) -> List[Trajectory]:
    """Second pass from the last frame back to the first, merged with ``forward``.

    Positions are averaged where both passes see the point; a point whose
    round-trip error exceeds ``drop_threshold`` pixels becomes invisible in
    every frame. Visibility never grows: a frame is visible only if the
    forward pass saw it.
    """
    forward = list(forward)
    if not forward:
        return []
    n = len(video)
    if any(len(t) != n for t in forward):
        raise LengthMismatch("forward trajectories must cover every frame")
    seeds = [t.positions[-1] for t in forward]
    backward = track(video, seeds, Direction.BACKWARD, backend, forward[0].instance_id)
    refined = []
    for f, b in zip(forward, backward):
        if round_trip_error(f, b) > drop_threshold:
            refined.append(Trajectory(f.instance_id, f.point_index, f.positions, (False,) * n))
            continue
        positions = []
        for (fp, fv), (bp, bv) in zip(zip(f.positions, f.visible), zip(b.positions, b.visible)):
            if fv and bv:
                positions.append(((fp[0] + bp[0]) / 2.0, (fp[1] + bp[1]) / 2.0))
            else:
                positions.append(fp)
        refined.append(Trajectory(f.instance_id, f.point_index, tuple(positions), f.visible))
    return refined


class ExternalTracker(TrackerBackend):
    """Client for ``POST <endpoint>/track``.

    Request ``{frames_ref, seeds: [[x, y], ...], direction}`` where
    ``frames_ref`` is the on-disk frame directory; reply
    ``{trajectories: [{positions: [[x, y], ...], visible: [bool, ...]}, ...]}``.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, supports_backward: bool = True):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.supports_backward = supports_backward

    def track(self, video, seeds, direction=Direction.FORWARD, instance_id=0):
        if video.source is None:
            raise BackendFailure("external tracker needs a video loaded from a frame directory")
        reply = transport.post_json(
            self.endpoint + "/track",
            {"frames_ref": str(video.source), "seeds": [[float(x), float(y)] for x, y in seeds],
             "direction": Direction(direction).value},
            self.timeout)
        try:
            return [Trajectory(instance_id, i, tuple(tuple(p) for p in t["positions"]), tuple(t["visible"]))
                    for i, t in enumerate(reply["trajectories"])]
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed tracker reply: {exc}") from None
