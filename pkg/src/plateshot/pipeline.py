"""End-to-end orchestration: points -> tracks -> masks -> patches -> plates."""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import pointselect, videoio
from .config import PipelineConfig
from .errors import (AnnotationsEmpty, NoPlateFound, NoPlateInSequence, PlateshotError,
                     StageError, ValidationError)
from .pointselect import PointSet
from .recognize import (DEFAULT_PATTERN, BuiltinRecognizer, ExternalRecognizer, PatchStrategy,
                        RecognitionResult, extract_patch, get_prompt, parse_plate,
                        recognize_sequence)
from .segment import ExternalSegmenter, RegionGrowSegmenter, detect_frame
from .track import Direction, ExternalTracker, NCCTracker, Trajectory, backward_refine, track
from .types import Detection, QueryAnnotation, VideoSequence

logger = logging.getLogger(__name__)

STAGES = ("select", "track_forward", "track_backward", "segment", "recognize", "aggregate")


@dataclass
class PipelineOutput:
    detections: List[Detection]
    recognitions: List[RecognitionResult]
    final_plates: Dict[int, str]
    timing: Dict[str, float]
    point_sets: Dict[int, PointSet] = field(default_factory=dict)
    trajectories: Dict[int, List[Trajectory]] = field(default_factory=dict)
    patches: Dict[tuple, object] = field(default_factory=dict, repr=False)


def _endpoint(spec):
    return None if spec == "builtin" else spec.split(":", 1)[1]


def make_backends(cfg: PipelineConfig):
    """Instantiate (segmenter, tracker, recognizer) from the config."""
    ep = _endpoint(cfg["segment.backend"])
    segmenter = (RegionGrowSegmenter(cfg["segment.tau"], cfg["segment.area_cap"]) if ep is None
                 else ExternalSegmenter(ep, cfg["segment.timeout_s"]))
    ep = _endpoint(cfg["track.backend"])
    tracker = (NCCTracker(cfg["track.patch_radius"], cfg["track.search_radius"],
                          cfg["track.min_score"], cfg["track.lost_frames"]) if ep is None
               else ExternalTracker(ep, cfg["track.timeout_s"]))
    ep = _endpoint(cfg["recog.backend"])
    recognizer = (BuiltinRecognizer() if ep is None
                  else ExternalRecognizer(ep, cfg["recog.timeout_s"], cfg["recog.max_in_flight"]))
    return segmenter, tracker, recognizer


def select_points(video: VideoSequence, q: QueryAnnotation, cfg: PipelineConfig,
                  segmenter) -> PointSet:
    strategy = cfg["select.strategy"]
    if strategy == "single":
        return pointselect.select_single(q)
    if strategy == "crosshairs":
        return pointselect.select_crosshairs(q, cfg["select.offset_px"], cfg["select.per_arm"],
                                             video.dims)
    mask = pointselect.bootstrap_mask(video[0], q, segmenter)
    if strategy == "random":
        return pointselect.select_random(mask, cfg["select.k"], cfg["select.seed"], q)
    return pointselect.select_kmedoids(mask, cfg["select.k"], cfg["select.max_points"],
                                       q.instance_id)


class _Timer:
    def __init__(self):
        self.ms = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except PlateshotError as exc:
            raise StageError(name, exc) from exc
        finally:
            self.ms[name] = self.ms.get(name, 0.0) + 1000.0 * (time.perf_counter() - t0)


def _ordered_map(fn, items, workers, limit=None):
    """Map ``fn`` over ``items`` with a bounded pool; results keep input order."""
    items = list(items)
    if limit is not None:
        workers = min(workers, limit)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run(video: VideoSequence, annotations: Sequence[QueryAnnotation],
        cfg: Optional[PipelineConfig] = None, backends=None,
        keep_patches: bool = False) -> PipelineOutput:
    """Run every stage on one video.

    Per-frame misses (no visible points, empty masks, captions without a
    plate) are recorded by absence. Any other error aborts with
    :class:`StageError` naming the stage.
    """
    cfg = cfg or PipelineConfig()
    annotations = list(annotations)
    if not annotations:
        raise AnnotationsEmpty("no query points to track")
    if len({a.instance_id for a in annotations}) != len(annotations):
        raise ValidationError("one query point per instance expected")
    segmenter, tracker, recognizer = backends or make_backends(cfg)
    workers = cfg["pipeline.workers"] or (os.cpu_count() or 1)
    timer = _Timer()
    annotations.sort(key=lambda a: a.instance_id)

    with timer.stage("select"):
        point_sets = {a.instance_id: select_points(video, a, cfg, segmenter) for a in annotations}

    with timer.stage("track_forward"):
        trajectories = {i: track(video, ps.points, Direction.FORWARD, tracker, i)
                        for i, ps in point_sets.items()}

    timer.ms["track_backward"] = 0.0
    if cfg["track.backward_refine"]:
        with timer.stage("track_backward"):
            trajectories = {i: backward_refine(video, t, tracker, cfg["track.drop_threshold_px"])
                            for i, t in trajectories.items()}

    jobs = [(f, i) for f in range(len(video)) for i in sorted(trajectories)]

    def segment_one(job):
        f, i = job
        prompts = [t.positions[f] for t in trajectories[i] if t.visible[f]]
        return detect_frame(video[f], prompts, segmenter, i)

    with timer.stage("segment"):
        detections = [d for d in _ordered_map(segment_one, jobs, workers,
                                              getattr(segmenter, "max_concurrency", None))
                      if d is not None]

    recognitions, patches, final = [], {}, {}
    timer.ms["recognize"] = timer.ms["aggregate"] = 0.0
    if cfg["recog.enabled"]:
        prompt = get_prompt(cfg["recog.prompt"])
        strategy = PatchStrategy(cfg["recog.strategy"])
        pattern = DEFAULT_PATTERN if cfg["recog.pattern"] == "default" else cfg["recog.pattern"]

        def recognize_one(det):
            patch = extract_patch(video[det.frame_index], det, strategy)
            caption = recognizer.recognize(patch, prompt)
            try:
                plate = parse_plate(caption, pattern)
            except NoPlateFound:
                plate = None
            res = RecognitionResult(det.frame_index, det.instance_id, caption, plate,
                                    prompt.id, det.confidence)
            return res, (patch if keep_patches else None)

        with timer.stage("recognize"):
            pairs = _ordered_map(recognize_one, detections, workers,
                                 getattr(recognizer, "max_concurrency", None))
        recognitions = [r for r, _ in pairs]
        if keep_patches:
            patches = {(r.frame_index, r.instance_id): p for r, p in pairs}
        detections = [dataclasses.replace(d, plate=r.plate) for d, r in zip(detections, recognitions)]

        with timer.stage("aggregate"):
            for i in sorted(trajectories):
                try:
                    final[i] = recognize_sequence(r for r in recognitions if r.instance_id == i)
                except NoPlateInSequence:
                    logger.info("instance %d: no frame produced a plate", i)

    timing = {name: round(timer.ms.get(name, 0.0), 3) for name in STAGES}
    return PipelineOutput(detections, recognitions, final, timing, point_sets, trajectories, patches)


OUTPUT_FILES = ("detections.jsonl", "recognitions.jsonl", "plates.json", "timing.json")


def recognition_to_record(r: RecognitionResult) -> dict:
    return {"frame": r.frame_index, "instance": r.instance_id, "caption": r.caption,
            "plate": r.plate, "prompt": r.prompt_id, "confidence": r.confidence}


def write_outputs(out: PipelineOutput, out_dir, dump_masks=None, dump_patches=None) -> Dict[str, Path]:
    """Write the four fixed-name result files, plus optional mask/patch dumps."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: out_dir / name for name in OUTPUT_FILES}
    videoio.save_detections(out.detections, paths["detections.jsonl"])
    with open(paths["recognitions.jsonl"], "w", encoding="utf-8") as fh:
        for r in out.recognitions:
            fh.write(json.dumps(recognition_to_record(r)) + "\n")
    paths["plates.json"].write_text(
        json.dumps({str(k): v for k, v in sorted(out.final_plates.items())}, sort_keys=True) + "\n",
        encoding="utf-8")
    paths["timing.json"].write_text(json.dumps({"stage_ms": out.timing}, sort_keys=True) + "\n",
                                    encoding="utf-8")
    if dump_masks:
        d = Path(dump_masks)
        d.mkdir(parents=True, exist_ok=True)
        for det in out.detections:
            if det.mask is not None:
                videoio.write_mask(d / f"mask_{det.frame_index:05d}_{det.instance_id}.pgm", det.mask)
    if dump_patches:
        d = Path(dump_patches)
        d.mkdir(parents=True, exist_ok=True)
        for (f, i), patch in sorted(out.patches.items()):
            videoio.write_ppm(d / f"patch_{f:05d}_{i}.ppm", patch.pixels)
    return paths


def load_plates(path) -> Dict[int, str]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return {int(k): v for k, v in doc.items()}
