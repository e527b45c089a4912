"""Flat ``key=value`` run configuration (``#`` starts a comment)."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


ENCODER_PRESETS = {"full": EncoderConfig(), "desk": EncoderConfig.desk(), "toy": EncoderConfig.toy()}

_RENDER_DEFAULTS = {"height": 64, "max_width": 512, "stroke_width": 2}
_MODEL_DEFAULTS = {"seed": 0}


def _known_keys() -> dict[str, type]:
    keys: dict[str, type] = {"encoder.preset": str}
    for prefix, cls in (("encoder", EncoderConfig), ("decoder", DecoderConfig), ("train", TrainConfig)):
        for f in fields(cls):
            keys[f"{prefix}.{f.name}"] = f.type
    for k in _RENDER_DEFAULTS:
        keys[f"render.{k}"] = "int"
    for k in _MODEL_DEFAULTS:
        keys[f"model.{k}"] = "int"
    return keys


KNOWN_KEYS = _known_keys()


def _convert(key: str, raw: str):
    kind = str(KNOWN_KEYS[key])
    if raw.lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config_text(text: str) -> dict:
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        values[key.strip()] = raw.strip()
    return values


@dataclass
class RunConfig:
    """Merged settings; unknown keys are rejected rather than ignored."""

    values: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> RunConfig:
        raw = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
        raw.update(overrides or {})
        unknown = sorted(set(raw) - set(KNOWN_KEYS))
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        values = {k: _convert(k, str(v)) for k, v in raw.items()}
        cfg = cls(values)
        cfg.encoder_config()
        cfg.decoder_config()
        cfg.train_config()
        return cfg

    def _section(self, prefix: str) -> dict:
        return {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def has_section(self, prefix: str) -> bool:
        return bool(self._section(prefix))

    def encoder_config(self) -> EncoderConfig:
        sec = self._section("encoder")
        preset = sec.pop("preset", "desk")
        if preset not in ENCODER_PRESETS:
            raise ConfigError(f"unknown encoder preset {preset!r}")
        try:
            return replace(ENCODER_PRESETS[preset], **sec)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def decoder_config(self) -> DecoderConfig:
        try:
            return DecoderConfig(**self._section("decoder"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(**self._section("train"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def render_options(self) -> dict:
        return {**_RENDER_DEFAULTS, **self._section("render")}

    def model_seed(self) -> int:
        return self._section("model").get("seed", _MODEL_DEFAULTS["seed"])
