"""Pipeline configuration and its key-value file format.

One setting per line, ``section.field = value``; ``#`` starts a comment.
Sections are ``view``, ``densifier``, ``suppression``, ``weights``; top-level
keys have no section. A field name ending in ``_deg`` sets the radian field
of the same stem (``view.rho_max_deg = 25``). Kernels take ``diamond:N`` or
``full:N``. Environment variables ``VMVS_<SECTION>__<FIELD>`` (or
``VMVS_<FIELD>`` for top-level keys) override file values, e.g.
``VMVS_VIEW__N_VIEWS=3``.
"""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

from .depth_completion import DensifierConfig, diamond_kernel, full_kernel
from .errors import ConfigError
from .evaluation.suppression import SuppressionConfig
from .orientation.losses import LossWeights
from .view_synthesis import ViewConfig

ENV_PREFIX = "VMVS_"
ESTIMATORS = ("toy", "oracle", "marker", "external-file")


@dataclass
class PipelineConfig:
    view: ViewConfig = field(default_factory=ViewConfig)
    densifier: DensifierConfig = field(default_factory=DensifierConfig)
    suppression: SuppressionConfig = field(default_factory=SuppressionConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    top_k_per_frame: int = 16
    estimator: str = "marker"
    estimator_frame: str = "local"  # or "global"
    fuse_normalized: bool = True
    suppress: bool = True
    oracle_sigma_deg: float = 0.0
    model_path: str = ""
    external_path: str = ""
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.top_k_per_frame < 1:
            raise ConfigError("top_k_per_frame must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if self.estimator_frame not in ("local", "global"):
            raise ConfigError("estimator_frame must be 'local' or 'global'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _kernel(text: str):
    kind, _, size = text.strip().partition(":")
    try:
        n = int(size)
    except ValueError:
        raise ConfigError(f"bad kernel spec {text!r}") from None
    if kind == "diamond":
        return diamond_kernel(n)
    if kind == "full":
        return full_kernel(n)
    raise ConfigError(f"unknown kernel kind {kind!r}")


def _coerce(current, text: str):
    text = text.strip()
    if isinstance(current, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    try:
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None
    return text


def _apply(values: dict, key: str, text: str) -> None:
    section, _, name = key.rpartition(".")
    target = values if not section else values.setdefault(section, {})
    if section and section not in ("view", "densifier", "suppression", "weights"):
        raise ConfigError(f"unknown section {section!r}")
    target[name] = text


def _build(values: dict) -> PipelineConfig:
    sections = {"view": ViewConfig, "densifier": DensifierConfig,
                "suppression": SuppressionConfig, "weights": LossWeights}
    kwargs = {}
    for sec, cls in sections.items():
        raw = values.pop(sec, {})
        defaults = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        sub = {}
        for name, text in raw.items():
            if name.endswith("_deg") and name[:-4] in known:
                sub[name[:-4]] = math.radians(_coerce(1.0, text))
            elif name.endswith("_kernel") and name in known:
                sub[name] = _kernel(text)
            elif name in known:
                sub[name] = _coerce(getattr(defaults, name), text)
            else:
                raise ConfigError(f"unknown setting {sec}.{name}")
        kwargs[sec] = cls(**sub)
    defaults = PipelineConfig()
    top = {f.name for f in dataclasses.fields(PipelineConfig)} - set(sections)
    for name, text in values.items():
        if name not in top:
            raise ConfigError(f"unknown setting {name}")
        kwargs[name] = _coerce(getattr(defaults, name), text)
    return PipelineConfig(**kwargs)


def parse_config(text: str, env: dict | None = None) -> PipelineConfig:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        _apply(values, key.strip(), value)
    env = os.environ if env is None else env
    for name, value in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        _apply(values, key, value)
    try:
        return _build(values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path=None, env: dict | None = None) -> PipelineConfig:
    text = ""
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, env)
