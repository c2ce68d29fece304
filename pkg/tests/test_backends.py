import json
import urllib.request

import numpy as np
import pytest

from plateshot import transport, videoio
from plateshot.errors import BackendError, BackendFailure
from plateshot.segment import ExternalSegmenter, RegionGrowSegmenter
from plateshot.stub import StubServer
from plateshot.synthgen import SceneConfig, generate_scene, write_scene
from plateshot.track import Direction, ExternalTracker, NCCTracker


def _post(url, body):
    req = urllib.request.Request(url, data=json.dumps(body).encode(), method="POST",
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status
    except urllib.error.HTTPError as exc:
        return exc.code


@pytest.mark.parametrize("body", [
    {"image_ppm_b64": "", "prompt": "x", "extra": 1},
    {"image_ppm_b64": ""},
    {"image_ppm_b64": 5, "prompt": "x"},
    ["not", "an", "object"],
])
def test_stub_rejects_wrong_schema(body):
    with StubServer() as stub:
        assert _post(stub.url + "/recognize", body) == 400
        assert stub.requests == []


def test_stub_unknown_route():
    with StubServer() as stub:
        assert _post(stub.url + "/nowhere", {}) == 404


def test_external_segmenter_matches_builtin():
    scene = generate_scene(SceneConfig(seed=4, frames=1))
    prompts = [scene.true_center[0]]
    with StubServer() as stub:
        remote = ExternalSegmenter(stub.url).segment(scene.video[0], prompts)
        (path, body), = stub.requests
    assert path == "/segment" and set(body) == {"image_ppm_b64", "prompts"}
    assert remote == RegionGrowSegmenter().segment(scene.video[0], prompts)


def test_external_tracker_matches_builtin(tmp_path):
    scene = generate_scene(SceneConfig(seed=4, frames=5))
    paths = write_scene(scene, tmp_path)
    video = videoio.load_sequence(paths["frames"])
    seeds = [scene.true_center[0]]
    with StubServer() as stub:
        remote = ExternalTracker(stub.url).track(video, seeds, Direction.FORWARD)
        (path, body), = stub.requests
    assert body == {"frames_ref": str(paths["frames"]), "seeds": [list(seeds[0])],
                    "direction": "forward"}
    assert remote == NCCTracker().track(video, seeds)


def test_external_tracker_needs_frame_directory():
    scene = generate_scene(SceneConfig(seed=4, frames=2))
    with pytest.raises(BackendFailure):
        ExternalTracker("http://127.0.0.1:1").track(scene.video, [scene.true_center[0]])


def test_transport_rejects_non_object_reply():
    import http.server
    import threading

    class Handler(http.server.BaseHTTPRequestHandler):
        def log_message(self, *a):
            pass

        def do_POST(self):
            self.rfile.read(int(self.headers["Content-Length"]))
            data = b"[1, 2]" if self.path == "/list" else b"{oops"
            self.send_response(200)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    server = http.server.HTTPServer(("127.0.0.1", 0), Handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        with pytest.raises(BackendError):
            transport.post_json(base + "/list", {}, 5)
        with pytest.raises(BackendError):
            transport.post_json(base + "/bad", {}, 5)
    finally:
        server.shutdown()
        server.server_close()
