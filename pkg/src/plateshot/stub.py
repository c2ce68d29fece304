"""Local HTTP stand-in for the external backends, for protocol tests and demos.

The stub answers the three wire protocols with the built-in algorithms:

- ``POST /recognize`` ``{image_ppm_b64, prompt}`` -> ``{text}``
- ``POST /segment`` ``{image_ppm_b64, prompts}`` -> ``{mask_pgm_b64, score}``
- ``POST /track`` ``{frames_ref, seeds, direction}`` -> ``{trajectories}``

Request bodies are checked against the exact key set; anything else gets a
400. ``status`` forces every reply to that HTTP status and ``delay`` sleeps
before replying, which is how tests reach the error and timeout paths.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from . import videoio
from .errors import PlateshotError
from .recognize import PATCH_SIZE, BuiltinRecognizer, PlatePatch, PatchStrategy, PromptTemplate
from .segment import RegionGrowSegmenter
from .track import Direction, NCCTracker
from .types import Frame

SCHEMAS = {
    "/recognize": {"image_ppm_b64": str, "prompt": str},
    "/segment": {"image_ppm_b64": str, "prompts": list},
    "/track": {"frames_ref": str, "seeds": list, "direction": str},
}


def _check(path, body):
    schema = SCHEMAS[path]
    if not isinstance(body, dict) or set(body) != set(schema):
        raise ValueError(f"expected keys {sorted(schema)}")
    for key, typ in schema.items():
        if not isinstance(body[key], typ):
            raise ValueError(f"{key} must be {typ.__name__}")


def _image(body):
    return videoio.decode_ppm(base64.b64decode(body["image_ppm_b64"], validate=True))


def handle_recognize(body):
    pixels = _image(body)
    if pixels.shape != (PATCH_SIZE, PATCH_SIZE, 3):
        raise ValueError(f"image must be {PATCH_SIZE}x{PATCH_SIZE}")
    patch = PlatePatch(pixels, PatchStrategy.RESIZE, (0.0, 0.0, 1.0, 1.0), 0)
    return {"text": BuiltinRecognizer().recognize(patch, PromptTemplate("stub", body["prompt"]))}


def handle_segment(body):
    frame = Frame(_image(body))
    mask = RegionGrowSegmenter().segment(frame, [tuple(p) for p in body["prompts"]])
    return {"mask_pgm_b64": base64.b64encode(videoio.encode_pgm(mask.bits)).decode("ascii"),
            "score": mask.score}


def handle_track(body):
    video = videoio.load_sequence(body["frames_ref"])
    trajs = NCCTracker().track(video, [tuple(p) for p in body["seeds"]], Direction(body["direction"]))
    return {"trajectories": [{"positions": [list(p) for p in t.positions], "visible": list(t.visible)}
                             for t in trajs]}


HANDLERS = {"/recognize": handle_recognize, "/segment": handle_segment, "/track": handle_track}


class StubServer:
    """Threaded stub bound to localhost; use as a context manager.

    ``requests`` records every decoded request body in arrival order.
    """

    def __init__(self, port: int = 0, status: Optional[int] = None, delay: float = 0.0):
        self.status = status
        self.delay = delay
        self.requests = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _reply(self, code, doc):
                data = json.dumps(doc).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                if stub.delay:
                    time.sleep(stub.delay)
                if self.path not in HANDLERS:
                    return self._reply(404, {"error": f"no route {self.path}"})
                try:
                    body = json.loads(raw)
                    _check(self.path, body)
                except ValueError as exc:
                    return self._reply(400, {"error": str(exc)})
                stub.requests.append((self.path, body))
                if stub.status is not None:
                    return self._reply(stub.status, {"error": "forced status"})
                try:
                    doc = HANDLERS[self.path](body)
                except (ValueError, PlateshotError) as exc:
                    return self._reply(422, {"error": str(exc)})
                self._reply(200, doc)

        self.server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
        self.server.daemon_threads = True
        self._thread = None

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.server.shutdown()
        self.server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
