"""Run configuration: JSON file, environment overrides, flag overrides.

Precedence is flags > environment > file > defaults. The file is a single
JSON document (documented in the README); secrets never appear in it —
endpoints name the environment variable holding their API key instead.

Recognized environment variables (all prefixed CAPWEAVE_):
    CAPWEAVE_CACHE_DIR, CAPWEAVE_RATE_FPS, CAPWEAVE_WINDOW_S,
    CAPWEAVE_STRIDE_S, CAPWEAVE_MODE, CAPWEAVE_TEMPERATURE,
    CAPWEAVE_MAX_TOKENS
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .gateway import BackoffPolicy, Gateway, GenerationParams, ModelEndpoint
from .ingest import DEFAULT_EXTRACT_TEMPLATE, DEFAULT_IMAGE_QUALITY, DEFAULT_PROBE_TEMPLATE
from .prompts import load_templates
from .scoring import DEFAULT_BUCKET_EDGES
from .synthesis import MODES, SynthesisConfig

ENV_PREFIX = "CAPWEAVE_"

# env var suffix -> (settings key, parser)
_ENV_KEYS = {
    "CACHE_DIR": ("cache_dir", str),
    "RATE_FPS": ("rate_fps", float),
    "WINDOW_S": ("window_s", float),
    "STRIDE_S": ("stride_s", float),
    "MODE": ("mode", str),
    "TEMPERATURE": ("temperature", float),
    "MAX_TOKENS": ("max_tokens", int),
}

_DEFAULTS: dict[str, Any] = {
    "cache_dir": None,
    "rate_fps": 1.0,
    "window_s": 10.0,
    "stride_s": 5.0,
    "mode": "full",
    "temperature": 0.2,
    "max_tokens": 2048,
    "frame_parallelism": 4,
    "max_prompt_chars": None,
    "scoring_parallelism": 4,
    "bucket_edges": list(DEFAULT_BUCKET_EDGES),
    "integer_only_relevance": False,
    "extract_template": DEFAULT_EXTRACT_TEMPLATE,
    "probe_template": DEFAULT_PROBE_TEMPLATE,
    "image_quality": DEFAULT_IMAGE_QUALITY,
    "templates_dir": None,
    "endpoints": {},
    "backoff": {},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    settings: dict[str, Any] = field(default_factory=lambda: dict(_DEFAULTS))

    @property
    def cache_dir(self) -> Path | None:
        return Path(self.settings["cache_dir"]) if self.settings["cache_dir"] else None

    def backoff(self) -> BackoffPolicy:
        spec = self.settings.get("backoff") or {}
        policy = BackoffPolicy()
        for name in ("initial_s", "factor", "cap_s", "jitter_frac"):
            if name in spec:
                setattr(policy, name, float(spec[name]))
        if "max_attempts" in spec:
            policy.max_attempts = int(spec["max_attempts"])
        return policy

    def gateway(self) -> Gateway:
        return Gateway(backoff=self.backoff())

    def endpoint(self, role: str) -> ModelEndpoint:
        spec = self.settings["endpoints"].get(role)
        if spec is None:
            raise ConfigError(f"config defines no {role!r} endpoint")
        # In-process mock endpoints have no server to protect; don't let the
        # default rate limit throttle offline runs.
        is_mock = str(spec.get("base_url", "")).startswith("mock://")
        try:
            return ModelEndpoint(
                id=str(spec.get("id", role)),
                base_url=str(spec["base_url"]),
                model_name=str(spec.get("model_name", "default")),
                kind=str(spec.get("kind", role)),
                api_key_env=spec.get("api_key_env"),
                timeout_s=float(spec.get("timeout_s", 120.0)),
                max_inflight=int(spec.get("max_inflight", 64 if is_mock else 4)),
                requests_per_minute=int(
                    spec.get("requests_per_minute", 1_000_000 if is_mock else 60)
                ),
            )
        except KeyError as e:
            raise ConfigError(f"endpoint {role!r} is missing field {e}")

    def synthesis_config(self) -> SynthesisConfig:
        s = self.settings
        if s["mode"] not in MODES:
            raise ConfigError(f"unknown synthesis mode {s['mode']!r}")
        return SynthesisConfig(
            rate_fps=float(s["rate_fps"]),
            window_s=float(s["window_s"]),
            stride_s=float(s["stride_s"]),
            mode=s["mode"],
            templates=load_templates(Path(s["templates_dir"]) if s["templates_dir"] else None),
            params=GenerationParams(
                temperature=float(s["temperature"]), max_tokens=int(s["max_tokens"])
            ),
            frame_parallelism=int(s["frame_parallelism"]),
            max_prompt_chars=s["max_prompt_chars"],
            cache_dir=self.cache_dir,
            extract_template=s["extract_template"],
            probe_template=s["probe_template"],
            image_quality=int(s["image_quality"]),
        )


def load_config(
    path: Path | str | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Merge defaults <- file <- environment <- explicit overrides."""
    settings = dict(_DEFAULTS)
    settings["endpoints"] = {}

    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        unknown = set(loaded) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        settings.update(loaded)

    env = os.environ if env is None else env
    for suffix, (key, parse) in _ENV_KEYS.items():
        raw = env.get(ENV_PREFIX + suffix)
        if raw is not None:
            try:
                settings[key] = parse(raw)
            except ValueError:
                raise ConfigError(f"env {ENV_PREFIX + suffix}={raw!r} is not a {parse.__name__}")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown override {key!r}")
        settings[key] = value

    return RunConfig(settings=settings)
