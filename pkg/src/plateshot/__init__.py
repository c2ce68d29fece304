"""Track a license plate through a video from one clicked point and read it.

The stages are plain functions over small value types, so each can be used
on its own:

>>> from plateshot import synthgen, pipeline
>>> scene = synthgen.generate_scene(synthgen.SceneConfig(seed=1, frames=5))
>>> out = pipeline.run(scene.video, [scene.query])
>>> out.final_plates[0]
'ABC1234'
"""

__version__ = "0.1.0"

from .config import PipelineConfig, load_config
from .errors import PlateshotError
from .pipeline import PipelineOutput, run
from .types import (Detection, Frame, GroundTruthRecord, Mask, QueryAnnotation,
                    VideoSequence)

__all__ = [
    "Detection", "Frame", "GroundTruthRecord", "Mask", "PipelineConfig", "PipelineOutput",
    "PlateshotError", "QueryAnnotation", "VideoSequence", "load_config", "run", "__version__",
]
