"""
Swapping in HTTP backends
=========================

Every stage can be served over HTTP instead of in-process. The bundled stub
server speaks the same JSON protocols and answers with the built-in
algorithms, so the output here matches a plain local run.
"""

from plateshot import pipeline, synthgen
from plateshot.config import PipelineConfig
from plateshot.stub import StubServer

scene = synthgen.generate_scene(synthgen.SceneConfig(seed=5, frames=8, plate_string="MRQ0457"))

with StubServer() as stub:
    cfg = PipelineConfig({
        "segment.backend": f"external:{stub.url}",
        "recog.backend": f"external:{stub.url}",
    })
    remote = pipeline.run(scene.video, [scene.query], cfg)
    print(len(stub.requests), "requests, first few routes:",
          [path for path, _ in stub.requests[:4]])

local = pipeline.run(scene.video, [scene.query])
print("remote plate:", remote.final_plates[0], " local plate:", local.final_plates[0])
print("identical detections:", remote.detections == local.detections)
print("one caption:", remote.recognitions[0].caption)
