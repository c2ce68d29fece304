import json

import numpy as np
import pytest

from plateshot import pipeline, synthgen
from plateshot.config import PipelineConfig
from plateshot.errors import AnnotationsEmpty, BackendTimeout, StageError, ValidationError
from plateshot.evalkit import iou
from plateshot.segment import RegionGrowSegmenter
from plateshot.track import NCCTracker
from plateshot.types import QueryAnnotation, VideoSequence


@pytest.fixture(scope="module")
def scene():
    return synthgen.generate_scene(synthgen.SceneConfig(seed=3, frames=12,
                                                        background=synthgen.Clutter(3)))


@pytest.fixture(scope="module")
def output(scene):
    return pipeline.run(scene.video, [scene.query], PipelineConfig())


def test_empty_annotations_rejected(scene):
    with pytest.raises(AnnotationsEmpty):
        pipeline.run(scene.video, [])


def test_duplicate_instances_rejected(scene):
    with pytest.raises(ValidationError):
        pipeline.run(scene.video, [scene.query, scene.query])


def test_noiseless_run_tracks_and_reads(scene, output):
    by_frame = {d.frame_index: d for d in output.detections}
    good = sum(iou(by_frame[g.frame_index].bbox, g.bbox) >= 0.9
               for g in scene.truth if g.frame_index in by_frame)
    assert good >= 0.95 * len(scene.truth)
    assert output.final_plates == {0: "ABC1234"}
    assert all(d.plate == "ABC1234" for d in output.detections)
    assert list(output.timing) == list(pipeline.STAGES)


def test_recognition_can_be_disabled(scene):
    out = pipeline.run(scene.video, [scene.query], PipelineConfig({"recog.enabled": "false"}))
    assert len(out.detections) == len(scene.video)
    assert out.recognitions == [] and out.final_plates == {}
    assert all(d.plate is None for d in out.detections)


@pytest.mark.parametrize("strategy", ["single", "random", "kmedoids"])
def test_other_point_strategies(scene, strategy):
    cfg = PipelineConfig({"select.strategy": strategy, "recog.enabled": "false"})
    out = pipeline.run(scene.video, [scene.query], cfg)
    assert len(out.detections) == len(scene.video)
    expected = {"single": 1, "random": 5, "kmedoids": 5}[strategy]
    assert len(out.point_sets[0]) == expected


def test_outputs_round_trip(tmp_path, output):
    from plateshot import videoio
    paths = pipeline.write_outputs(output, tmp_path, tmp_path / "masks", None)
    assert set(paths) == set(pipeline.OUTPUT_FILES)
    dets = videoio.load_detections(paths["detections.jsonl"])
    assert [(d.frame_index, d.bbox) for d in dets] == \
           [(d.frame_index, d.bbox) for d in output.detections]
    assert pipeline.load_plates(paths["plates.json"]) == output.final_plates
    recs = [json.loads(line) for line in paths["recognitions.jsonl"].read_text().splitlines()]
    assert set(recs[0]) == {"frame", "instance", "caption", "plate", "prompt", "confidence"}
    assert set(json.loads(paths["timing.json"].read_text())["stage_ms"]) == set(pipeline.STAGES)
    masks = sorted((tmp_path / "masks").iterdir())
    assert len(masks) == len(output.detections)
    assert masks[0].name == "mask_00000_0.pgm"


def test_patch_dump(tmp_path, scene):
    out = pipeline.run(scene.video, [scene.query], keep_patches=True)
    pipeline.write_outputs(out, tmp_path, None, tmp_path / "patches")
    assert len(list((tmp_path / "patches").glob("patch_*_0.ppm"))) == len(out.recognitions)


def test_runs_are_deterministic(scene, output):
    again = pipeline.run(scene.video, [scene.query], PipelineConfig({"pipeline.workers": 1}))
    assert again.detections == output.detections
    assert again.recognitions == output.recognitions


def test_two_instances():
    a = synthgen.generate_scene(synthgen.SceneConfig(
        seed=1, frames=8, frame_dims=(400, 300), start=(100, 80), motion=synthgen.Linear(2, 1)))
    b = synthgen.generate_scene(synthgen.SceneConfig(
        seed=2, frames=8, frame_dims=(400, 300), plate_string="XYZ9876", start=(280, 210),
        motion=synthgen.Linear(-2, 0)))
    frames = []
    for t in range(8):
        img = a.video[t].pixels.copy()
        x0, y0, x1, y1 = (int(v) for v in b.truth[t].bbox)
        img[y0:y1, x0:x1] = b.video[t].pixels[y0:y1, x0:x1]
        frames.append(img)
    video = VideoSequence.from_arrays(frames)
    qs = [QueryAnnotation(0, *a.true_center[0]), QueryAnnotation(1, *b.true_center[0])]
    out = pipeline.run(video, qs)
    assert out.final_plates == {0: "ABC1234", 1: "XYZ9876"}
    assert len(out.detections) == 16


class _TimingOutRecognizer:
    max_concurrency = 1

    def recognize(self, patch, prompt):
        raise BackendTimeout("no answer")


def test_backend_failure_names_stage(scene):
    backends = (RegionGrowSegmenter(), NCCTracker(), _TimingOutRecognizer())
    with pytest.raises(StageError) as info:
        pipeline.run(scene.video, [scene.query], backends=backends)
    assert info.value.stage == "recognize"
    assert isinstance(info.value.cause, BackendTimeout)


def test_unreachable_external_backend(scene):
    cfg = PipelineConfig({"segment.backend": "external:http://127.0.0.1:9", "segment.timeout_s": 1})
    with pytest.raises(StageError) as info:
        pipeline.run(scene.video, [scene.query], cfg)
    assert info.value.stage == "segment"
