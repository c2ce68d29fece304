"""Flat ``key = value`` pipeline configuration.

One setting per line; lines starting with ``#`` and blank lines are ignored
(values may contain ``#``, so there are no trailing comments)::

    select.strategy = crosshairs
    track.backward_refine = true
    recog.backend = external:http://127.0.0.1:8080

Unknown keys and unparsable values are rejected with :class:`ConfigError`.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Iterable, Optional

from .errors import ConfigError

CONFIG_ENV = "ONESHOT_CONFIG"


def _bool(text):
    v = text.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _backend(text):
    if text == "builtin" or (text.startswith("external:") and len(text) > len("external:")):
        return text
    raise ValueError("expected 'builtin' or 'external:<endpoint>'")


def _workers(text):
    n = int(text)
    if n < 0:
        raise ValueError("must be >= 0 (0 means one per core)")
    return n


def _positive(cast):
    def parse(text):
        v = cast(text)
        if v <= 0:
            raise ValueError("must be > 0")
        return v
    return parse


# key -> (parser, default)
SCHEMA = {
    "select.strategy": (_choice("single", "crosshairs", "random", "kmedoids"), "crosshairs"),
    "select.offset_px": (_positive(float), 8.0),
    "select.per_arm": (_positive(int), 1),
    "select.k": (_positive(int), 5),
    "select.seed": (int, 0),
    "select.max_points": (_positive(int), 800),
    "track.backend": (_backend, "builtin"),
    "track.patch_radius": (_positive(int), 7),
    "track.search_radius": (_positive(int), 20),
    "track.min_score": (float, 0.5),
    "track.lost_frames": (_positive(int), 3),
    "track.backward_refine": (_bool, True),
    "track.drop_threshold_px": (_positive(float), 8.0),
    "track.timeout_s": (_positive(float), 30.0),
    "segment.backend": (_backend, "builtin"),
    "segment.tau": (_positive(float), 30.0),
    "segment.area_cap": (_positive(float), 0.25),
    "segment.timeout_s": (_positive(float), 30.0),
    "recog.enabled": (_bool, True),
    "recog.backend": (_backend, "builtin"),
    "recog.strategy": (_choice("resize", "center_crop", "background_add"), "center_crop"),
    "recog.prompt": (_choice("P1", "P2", "P3", "P4", "P5", "P6"), "P6"),
    "recog.pattern": (str, "default"),
    "recog.timeout_s": (_positive(float), 30.0),
    "recog.max_in_flight": (_positive(int), 4),
    "eval.iou": (float, 0.5),
    "eval.min_chars": (_positive(int), 7),
    "eval.ap_method": (_choice("all", "11"), "all"),
    "pipeline.workers": (_workers, 0),
}


class PipelineConfig:
    """Validated settings; read with ``cfg["track.patch_radius"]``."""

    def __init__(self, values: Optional[Dict[str, object]] = None):
        self._values = {k: default for k, (_, default) in SCHEMA.items()}
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parse = SCHEMA[key][0]
        try:
            self._values[key] = parse(value) if isinstance(value, str) else parse(str(value))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None

    def __getitem__(self, key):
        return self._values[key]

    def as_dict(self) -> Dict[str, object]:
        return dict(self._values)

    def updated(self, values: Dict[str, object]) -> "PipelineConfig":
        """Copy with ``values`` applied on top."""
        new = PipelineConfig()
        new._values = dict(self._values)
        for key, value in values.items():
            new.set(key, value)
        return new

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self._values.items())

    def __eq__(self, other):
        return isinstance(other, PipelineConfig) and self._values == other._values

    def __repr__(self):
        return f"PipelineConfig({self._values!r})"


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    cfg = PipelineConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            cfg.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return cfg


def load_config(path=None, overrides: Iterable[str] = ()) -> PipelineConfig:
    """Read ``path`` (or ``$ONESHOT_CONFIG`` when ``path`` is None), then apply
    ``key=value`` overrides in order."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        cfg = PipelineConfig()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        cfg = parse_config(text, str(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        cfg.set(key, value)
    return cfg
