import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plateshot import videoio
from plateshot.errors import EmptyString, PlateOutOfBounds, StringTooLong, UnknownGlyph
from plateshot.font import DEFAULT_ALPHABET, GLYPHS, tight_glyph
from plateshot.recognize import builtin_ocr
from plateshot.synthgen import (GLYPH_COLOR, PLATE_COLOR, Clutter, Linear, SceneConfig,
                                Sinusoidal, Uniform, generate_scene, glyph_scale, make_suite,
                                random_plate_string, render_plate, write_scene)


def test_font_glyphs_are_distinct():
    assert set(DEFAULT_ALPHABET) <= set(GLYPHS)
    for a, b in [(a, b) for a in DEFAULT_ALPHABET for b in DEFAULT_ALPHABET if a < b]:
        assert (GLYPHS[a] != GLYPHS[b]).sum() >= 3, (a, b)
    assert tight_glyph("1").shape[1] == 3


def test_render_roundtrips_through_ocr():
    assert builtin_ocr(render_plate("ABC1234", (120, 40))) == "ABC1234"


def test_render_is_deterministic_and_two_toned():
    a = render_plate("XYZ-0987", (160, 40))
    assert np.array_equal(a, render_plate("XYZ-0987", (160, 40)))
    colors = {tuple(c) for c in a.reshape(-1, 3)}
    assert colors == {PLATE_COLOR, GLYPH_COLOR}


def test_render_errors():
    with pytest.raises(EmptyString):
        render_plate("", (120, 40))
    with pytest.raises(UnknownGlyph):
        render_plate("AB?1", (120, 40))
    with pytest.raises(UnknownGlyph):
        render_plate("abc", (120, 40))
    with pytest.raises(StringTooLong):
        render_plate("ABCDEFGHIJKLMNOP", (120, 40))


def test_glyph_height_at_least_eight():
    s = glyph_scale(7, (120, 40))
    assert 7 * s >= 8


@settings(max_examples=80, deadline=None)
@given(st.text(DEFAULT_ALPHABET, min_size=1, max_size=9), st.integers(2, 4))
def test_ocr_roundtrip_at_twelve_px_and_up(text, scale):
    w = scale * (6 * len(text) - 1) + 8
    h = 7 * scale + 8
    assert builtin_ocr(render_plate(text, (w, h))) == text


def test_linear_centers_arithmetic():
    cfg = SceneConfig(frames=30, frame_dims=(200, 80), plate_dims=(44, 24), plate_string="AB",
                      motion=Linear(2, 0), start=(50.0, 40.0))
    scene = generate_scene(cfg)
    assert [c[0] for c in scene.true_center] == list(range(50, 110, 2))
    assert scene.query.x == 50.0


def test_noiseless_plate_region_is_the_rendered_plate():
    scene = generate_scene(SceneConfig(seed=3, frames=5, background=Uniform()))
    plate = render_plate("ABC1234", (120, 40))
    for frame, gt in zip(scene.video, scene.truth):
        x0, y0, x1, y1 = (int(v) for v in gt.bbox)
        assert np.array_equal(frame.pixels[y0:y1, x0:x1], plate)


def test_truth_bbox_equals_painted_plate():
    scene = generate_scene(SceneConfig(seed=6, frames=4, background=Clutter(5)))
    for frame, gt in zip(scene.video, scene.truth):
        painted = np.all(frame.pixels == PLATE_COLOR, axis=2) | np.all(frame.pixels == GLYPH_COLOR, axis=2)
        rows, cols = np.nonzero(painted)
        assert (cols.min(), rows.min(), cols.max() + 1, rows.max() + 1) == gt.bbox
        assert gt.plate_string == "ABC1234"


def test_same_config_same_bytes():
    cfg = SceneConfig(seed=42, frames=6, noise_sigma=5, background=Clutter(4, moving=True),
                      motion=Sinusoidal(12, 10))
    a, b = generate_scene(cfg), generate_scene(cfg)
    assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a.video, b.video))
    assert a.truth == b.truth


def test_noise_does_not_move_the_plate():
    base = SceneConfig(seed=9, frames=4, background=Clutter(3))
    quiet = generate_scene(base)
    noisy = generate_scene(SceneConfig(seed=9, frames=4, background=Clutter(3), noise_sigma=8))
    assert quiet.truth == noisy.truth


def test_distractors_never_touch_the_plate():
    for seed in range(10):
        scene = generate_scene(SceneConfig(seed=seed, frames=10, background=Clutter(6, moving=True),
                                           motion=Linear(3, 2)))
        for frame, gt in zip(scene.video, scene.truth):
            x0, y0, x1, y1 = (int(v) for v in gt.bbox)
            ring = frame.pixels[max(y0 - 1, 0):y1 + 1, max(x0 - 1, 0):x1 + 1].copy()
            inner = np.zeros(ring.shape[:2], bool)
            inner[y0 - max(y0 - 1, 0):, x0 - max(x0 - 1, 0):][:y1 - y0, :x1 - x0] = True
            assert np.all(ring[~inner] == scene.config.background.color)


def test_plate_out_of_bounds():
    with pytest.raises(PlateOutOfBounds):
        generate_scene(SceneConfig(frames=30, motion=Linear(20, 0)))
    with pytest.raises(PlateOutOfBounds):
        generate_scene(SceneConfig(frames=3, start=(10.0, 10.0)))


def test_motion_budget_validated():
    with pytest.raises(ValueError):
        generate_scene(SceneConfig(frames=3, motion=Linear(25, 0), frame_dims=(600, 100),
                                   plate_dims=(40, 20)))


def test_suite_is_deterministic_and_varied():
    a = make_suite(10, seed=5)
    assert a == make_suite(10, seed=5)
    assert len({c.plate_string for c in a}) == 10
    assert all(abs(c.motion.vx) <= 3 and abs(c.motion.vy) <= 3 for c in a)


def test_random_plate_string_format():
    s = random_plate_string(np.random.default_rng(0))
    assert len(s) == 7 and s[:3].isalpha() and s[3:].isdigit()


def test_write_scene_layout(tmp_path):
    scene = generate_scene(SceneConfig(seed=1, frames=3))
    paths = write_scene(scene, tmp_path)
    video = videoio.load_sequence(paths["frames"])
    assert len(video) == 3
    assert videoio.load_annotations(paths["annotations"], video) == [scene.query]
    assert tuple(videoio.load_ground_truth(paths["truth"])) == scene.truth
