"""Expand the single annotated query point into a set of tracking points."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import EmptyMask, InvalidOffset, MaskTooSmall, SegmentationError, ValidationError
from .types import Frame, Mask, Point, QueryAnnotation


class Strategy(enum.Enum):
    SINGLE = "single"
    CROSSHAIRS = "crosshairs"
    RANDOM = "random"
    KMEDOIDS = "kmedoids"


@dataclass(frozen=True)
class PointSet:
    points: Tuple[Point, ...]
    strategy: Strategy
    instance_id: int = 0

    def __post_init__(self):
        if not self.points:
            raise ValidationError("a point set cannot be empty")
        object.__setattr__(self, "points", tuple((float(x), float(y)) for x, y in self.points))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def select_single(q: QueryAnnotation) -> PointSet:
    return PointSet(((q.x, q.y),), Strategy.SINGLE, q.instance_id)


def select_crosshairs(q: QueryAnnotation, offset_px: float = 8.0, per_arm: int = 1,
                      frame_dims=None) -> PointSet:
    """Query point plus ``per_arm`` points on each of the four axis arms.

    Order is the center, then for each level ``k``: left, right, top, bottom.
    Points falling off the frame are clamped to its border.
    """
    if offset_px <= 0:
        raise InvalidOffset(f"offset must be > 0, got {offset_px}")
    if per_arm < 1:
        raise InvalidOffset(f"per_arm must be >= 1, got {per_arm}")
    pts = [(q.x, q.y)]
    if frame_dims is not None:
        w, h = frame_dims
        if offset_px * per_arm >= min(w, h) / 2:
            raise InvalidOffset(f"arm length {offset_px * per_arm} too long for a {w}x{h} frame")
    for k in range(1, per_arm + 1):
        d = k * offset_px
        for dx, dy in ((-d, 0.0), (d, 0.0), (0.0, -d), (0.0, d)):
            x, y = q.x + dx, q.y + dy
            if frame_dims is not None:
                x = min(max(x, 0.0), w - 1.0)
                y = min(max(y, 0.0), h - 1.0)
            pts.append((x, y))
    return PointSet(tuple(pts), Strategy.CROSSHAIRS, q.instance_id)


def bootstrap_mask(frame0: Frame, q: QueryAnnotation, segmenter) -> Mask:
    """Segment frame 0 with the query point as the only prompt."""
    try:
        mask = segmenter.segment(frame0, [(q.x, q.y)])
    except SegmentationError as exc:
        raise EmptyMask(f"no plate mask at query point: {exc}") from None
    if mask.area == 0:
        raise EmptyMask("segmenter returned an empty mask")
    return mask


def _foreground(mask) -> np.ndarray:
    bits = mask.bits if isinstance(mask, Mask) else np.asarray(mask, dtype=bool)
    rows, cols = np.nonzero(bits)
    return np.column_stack([cols, rows]).astype(np.float64)


def select_random(mask, k: int, seed: int, query: Optional[QueryAnnotation] = None) -> PointSet:
    """``k`` distinct foreground pixels drawn uniformly without replacement.

    When ``query`` is given it counts toward ``k``: the query point is kept
    and ``k - 1`` further pixels are drawn from the rest of the mask.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    fg = _foreground(mask)
    instance = 0
    chosen = []
    if query is not None:
        instance = query.instance_id
        chosen.append((query.x, query.y))
        qc, qr = int(np.floor(query.x + 0.5)), int(np.floor(query.y + 0.5))
        fg = fg[~((fg[:, 0] == qc) & (fg[:, 1] == qr))]
    need = k - len(chosen)
    if need > len(fg):
        raise MaskTooSmall(f"mask has {len(fg)} candidate pixels, need {need}")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.choice(len(fg), size=need, replace=False)
    chosen.extend(map(tuple, fg[np.sort(idx)]))
    return PointSet(tuple(chosen), Strategy.RANDOM, instance)


def medoid_cost(coords: np.ndarray, medoids) -> float:
    """Sum over points of the Euclidean distance to the nearest medoid."""
    d = np.linalg.norm(coords[:, None, :] - coords[None, list(medoids), :], axis=2)
    return float(d.min(axis=1).sum())


def _exact_medoids(d, k):
    best, best_cost = None, np.inf
    for combo in itertools.combinations(range(len(d)), k):
        c = d[:, combo].min(axis=1).sum()
        if c < best_cost - 1e-9:
            best, best_cost = list(combo), c
    return best


def kmedoids(coords: np.ndarray, k: int, max_iter: int = 100, exact_limit: int = 2000):
    """Indices of ``k`` medoids of ``coords`` (n x 2).

    Instances with at most ``exact_limit`` candidate k-subsets are solved
    exactly. Larger ones use Park-Jun seeding (the ``k`` points with the
    smallest summed normalized distance), alternating assign/update steps to
    a fixed point, then best-improvement single swaps until no swap lowers
    the total cost, so the result is at least swap-locally optimal.
    Deterministic; ties resolve to the lowest index.
    """
    n = len(coords)
    if k > n:
        raise MaskTooSmall(f"{n} points cannot hold {k} medoids")
    if k == n:
        return list(range(n))
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    if math.comb(n, k) <= exact_limit:
        return _exact_medoids(d, k)
    rowsum = d.sum(axis=1, keepdims=True)
    rowsum[rowsum == 0] = 1.0
    v = (d / rowsum).sum(axis=0)
    medoids = list(np.argsort(v, kind="stable")[:k])

    def cost_of(ms):
        return float(d[:, ms].min(axis=1).sum())

    cost = cost_of(medoids)
    for _ in range(max_iter):
        labels = np.argmin(d[:, medoids], axis=1)
        new = []
        for j in range(k):
            members = np.flatnonzero(labels == j)
            within = d[np.ix_(members, members)].sum(axis=1)
            new.append(int(members[np.argmin(within)]))
        new_cost = cost_of(new)
        if new_cost >= cost - 1e-12:
            break
        medoids, cost = new, new_cost

    for _ in range(max_iter * k):
        dm = d[:, medoids]
        order = np.argsort(dm, axis=1, kind="stable")
        nearest = dm[np.arange(n), order[:, 0]]
        second = dm[np.arange(n), order[:, 1]] if k > 1 else np.full(n, np.inf)
        best_cost, best_swap = cost, None
        for j in range(k):
            # distance to the closest medoid once medoid j is removed
            other = np.where(order[:, 0] == j, second, nearest)
            trial = np.minimum(d, other[:, None]).sum(axis=0)
            trial[medoids] = np.inf
            o = int(np.argmin(trial))
            if trial[o] < best_cost - 1e-9:
                best_cost, best_swap = float(trial[o]), (j, o)
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        cost = best_cost
    return sorted(int(m) for m in medoids)


def select_kmedoids(mask, k: int, max_points: int = 2000,
                    instance_id: int = 0) -> PointSet:
    """``k`` medoid pixels of the mask foreground.

    Masks with more than ``max_points`` pixels are thinned to a regular
    raster-order subsample first so the distance matrix stays small.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    fg = _foreground(mask)
    if len(fg) < k:
        raise MaskTooSmall(f"mask area {len(fg)} < k={k}")
    if len(fg) > max_points:
        step = int(np.ceil(len(fg) / max_points))
        fg = fg[::step]
    idx = kmedoids(fg, k)
    return PointSet(tuple(map(tuple, fg[idx])), Strategy.KMEDOIDS, instance_id)
