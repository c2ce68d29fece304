"""Netpbm frames, PGM masks and the JSON-lines record formats.

Frame directories hold ``frame_00000.ppm``, ``frame_00001.ppm``, ... as binary
P6 with maxval 255. Masks are binary P5 with values 0/255. Detections and
ground truth are JSON lines, one record per line.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from .errors import (DimensionMismatch, MalformedPPM, MissingFrame, OutOfBounds,
                     ParseError)
from .types import Detection, Frame, GroundTruthRecord, Mask, QueryAnnotation, VideoSequence

FRAME_PATTERN = "frame_{:05d}.ppm"
_FRAME_RE = re.compile(r"^frame_(\d{5})\.ppm$")


def _parse_netpbm(data: bytes, magic: bytes, channels: int) -> np.ndarray:
    if not data.startswith(magic):
        raise MalformedPPM(f"expected magic {magic!r}")
    fields = []
    pos = len(magic)
    while len(fields) < 3:
        if pos >= len(data):
            raise MalformedPPM("truncated header")
        c = data[pos:pos + 1]
        if c == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise MalformedPPM("unterminated comment")
            pos = end + 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            if start == pos:
                raise MalformedPPM(f"unexpected byte {c!r} in header")
            fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedPPM("missing whitespace after header")
    pos += 1
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedPPM(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise MalformedPPM(f"only maxval 255 is supported, got {maxval}")
    n = width * height * channels
    body = data[pos:pos + n]
    if len(body) != n:
        raise MalformedPPM(f"pixel data has {len(body)} bytes, expected {n}")
    shape = (height, width, channels) if channels > 1 else (height, width)
    return np.frombuffer(body, dtype=np.uint8).reshape(shape).copy()


def decode_ppm(data: bytes) -> np.ndarray:
    return _parse_netpbm(data, b"P6", 3)


def encode_ppm(pixels: np.ndarray) -> bytes:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = pixels.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def read_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


def write_ppm(path, pixels: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(pixels))


def encode_pgm(mask_bits: np.ndarray) -> bytes:
    data = np.where(np.asarray(mask_bits, dtype=bool), 255, 0).astype(np.uint8)
    h, w = data.shape
    return b"P5\n%d %d\n255\n" % (w, h) + data.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a P5 mask; any nonzero value is foreground."""
    return _parse_netpbm(data, b"P5", 1) > 0


def write_mask(path, mask: Mask) -> None:
    Path(path).write_bytes(encode_pgm(mask.bits))


def read_mask(path, score=1.0) -> Mask:
    return Mask(decode_pgm(Path(path).read_bytes()), score)


def load_sequence(dir_path) -> VideoSequence:
    """Load ``frame_%05d.ppm`` files from a directory, in index order."""
    d = Path(dir_path)
    indexed = {}
    for p in d.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            indexed[int(m.group(1))] = p
    if not indexed:
        raise MissingFrame(0)
    frames = []
    for i in range(max(indexed) + 1):
        if i not in indexed:
            raise MissingFrame(i)
        try:
            px = read_ppm(indexed[i])
        except MalformedPPM as exc:
            raise MalformedPPM(f"{indexed[i].name}: {exc}") from None
        if frames and px.shape != frames[0].pixels.shape:
            raise DimensionMismatch(
                f"{indexed[i].name} is {px.shape[1]}x{px.shape[0]}, expected "
                f"{frames[0].width}x{frames[0].height}")
        frames.append(Frame(px, i))
    return VideoSequence(tuple(frames), source=str(d))


def save_sequence(video: VideoSequence, dir_path) -> None:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    for f in video:
        write_ppm(d / FRAME_PATTERN.format(f.index), f.pixels)


def _check_point(x, y, dims, what):
    w, h = dims
    if not (0 <= x < w and 0 <= y < h):
        raise OutOfBounds(f"{what} ({x}, {y}) outside {w}x{h} frame")


def parse_annotations(text: str, dims=None) -> List[QueryAnnotation]:
    try:
        doc = json.loads(text)
        entries = doc["query_points"]
        anns = [QueryAnnotation(int(e["instance"]), float(e["x"]), float(e["y"]))
                for e in entries]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad annotation file: {exc}") from None
    if not anns:
        raise ParseError("no query points")
    ids = [a.instance_id for a in anns]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate instance ids")
    for a in anns:
        if a.instance_id < 0:
            raise ParseError(f"negative instance id {a.instance_id}")
        if a.x < 0 or a.y < 0:
            raise OutOfBounds(f"query point ({a.x}, {a.y}) has a negative coordinate")
        if dims is not None:
            _check_point(a.x, a.y, dims, "query point")
    return anns


def load_annotations(path, video: Optional[VideoSequence] = None) -> List[QueryAnnotation]:
    """Read an annotation file; bounds are checked against frame 0 when ``video`` is given."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_annotations(text, video.dims if video is not None else None)


def save_annotations(anns: Iterable[QueryAnnotation], path) -> None:
    doc = {"query_points": [{"instance": a.instance_id, "x": a.x, "y": a.y} for a in anns]}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def detection_to_record(d: Detection) -> dict:
    rec = {"frame": d.frame_index, "instance": d.instance_id,
           "bbox": list(d.bbox), "confidence": d.confidence}
    if d.plate is not None:
        rec["plate"] = d.plate
    return rec


def _dump_lines(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _load_lines(path, convert):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(convert(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(str(exc), line=lineno) from None
    return out


def _bbox(v):
    if len(v) != 4:
        raise ValueError(f"bbox needs 4 values, got {len(v)}")
    return tuple(float(c) for c in v)


def _record_to_detection(rec):
    plate = rec.get("plate")
    return Detection(int(rec["frame"]), int(rec["instance"]), _bbox(rec["bbox"]),
                     float(rec["confidence"]), None if plate is None else str(plate))


def save_detections(dets: Iterable[Detection], path) -> None:
    _dump_lines((detection_to_record(d) for d in dets), path)


def load_detections(path) -> List[Detection]:
    return _load_lines(path, _record_to_detection)


def _record_to_truth(rec):
    return GroundTruthRecord(int(rec["frame"]), int(rec["instance"]),
                             _bbox(rec["bbox"]), str(rec["plate"]))


def save_ground_truth(records: Iterable[GroundTruthRecord], path) -> None:
    _dump_lines(({"frame": g.frame_index, "instance": g.instance_id,
                  "bbox": list(g.bbox), "plate": g.plate_string} for g in records), path)


def load_ground_truth(path) -> List[GroundTruthRecord]:
    return _load_lines(path, _record_to_truth)
