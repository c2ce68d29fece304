"""Core value types passed between pipeline stages.

Coordinates follow one convention everywhere: ``x`` is the column, ``y`` the
row, and integer coordinates address pixel centers. Bounding boxes are
half-open ``(x0, y0, x1, y1)`` so a single pixel at ``(5, 7)`` has the box
``(5, 7, 6, 8)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, MissingFrame, ValidationError

BBox = Tuple[float, float, float, float]
Point = Tuple[float, float]


def _frozen_array(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """One RGB raster, stored as a read-only ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray
    index: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError(f"frame pixels must be (h, w, 3), got {px.shape}")
        if self.index < 0:
            raise ValidationError("frame index must be >= 0")
        object.__setattr__(self, "pixels", _frozen_array(px, np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def dims(self) -> Tuple[int, int]:
        return self.width, self.height

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class VideoSequence:
    frames: Tuple[Frame, ...]
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValidationError("a video sequence needs at least one frame")
        w, h = frames[0].dims
        for i, f in enumerate(frames):
            if f.index != i:
                raise MissingFrame(i)
            if f.dims != (w, h):
                raise DimensionMismatch(
                    f"frame {i} is {f.width}x{f.height}, expected {w}x{h}")
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], source=None) -> "VideoSequence":
        return cls(tuple(Frame(a, i) for i, a in enumerate(arrays)), source)

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def dims(self) -> Tuple[int, int]:
        return self.frames[0].dims


@dataclass(frozen=True)
class QueryAnnotation:
    instance_id: int
    x: float
    y: float


@dataclass(frozen=True)
class GroundTruthRecord:
    frame_index: int
    instance_id: int
    bbox: BBox
    plate_string: str

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValidationError(f"ground-truth bbox {self.bbox} is degenerate")
        if not self.plate_string:
            raise ValidationError("ground-truth plate string is empty")
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary foreground mask with a confidence score in [0, 1]."""

    bits: np.ndarray
    score: float = 1.0

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValidationError("mask bits must be 2-D")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"mask score {self.score} outside [0, 1]")
        object.__setattr__(self, "bits", _frozen_array(bits, bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def contains(self, x, y) -> bool:
        c, r = int(round(x)), int(round(y))
        return 0 <= r < self.height and 0 <= c < self.width and bool(self.bits[r, c])

    def centroid(self) -> Point:
        rows, cols = np.nonzero(self.bits)
        return float(cols.mean()), float(rows.mean())

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.score == other.score and np.array_equal(self.bits, other.bits)


@dataclass(frozen=True)
class Detection:
    frame_index: int
    instance_id: int
    bbox: BBox
    confidence: float
    plate: Optional[str] = None
    mask: Optional[Mask] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValidationError(f"detection bbox {self.bbox} is degenerate")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
