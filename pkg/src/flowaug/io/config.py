"""Flat key=value run configuration covering every knob in the pipeline.

Every key has a typed default; parsing rejects unknown or duplicate keys
and `to_text` echoes the effective configuration in canonical form, so a
saved config file re-runs the experiment identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..augment import InterpolationSpec
from ..flows import FlowConfig
from ..harness.synthetic import ClassNoise, SyntheticSeismoConfig
from ..training import TrainConfig

_NOISE_FIELDS = ("background", "swell_columns", "swell_amplitude", "spike_rate", "dead_trace_prob")


def _noise_defaults() -> dict[str, float]:
    config = SyntheticSeismoConfig()
    out = {}
    for cls in ("good", "medium", "bad"):
        noise: ClassNoise = getattr(config, cls)
        for name in _NOISE_FIELDS:
            out[f"noise.{cls}.{name}"] = float(getattr(noise, name))
    return out


def _defaults() -> dict[str, object]:
    data = SyntheticSeismoConfig()
    flow = FlowConfig()
    train = TrainConfig()
    spec = InterpolationSpec(mode="spherical", t_low=0.35, t_high=0.65)
    values: dict[str, object] = {
        "seed": 0,
        "data.size": data.size,
        "data.total": data.total,
        "data.ratios": tuple(float(r) for r in data.ratios),
        "model.levels": flow.levels,
        "model.steps_per_level": flow.steps_per_level,
        "model.filters": flow.filters,
        "model.attention": flow.attention,
        "model.attention_heads": flow.attention_heads,
        "train.epochs": 40,
        "train.batch_size": train.batch_size,
        "train.warmup_steps": 100,
        "train.max_lr": train.max_lr,
        "train.lr_power": train.lr_power,
        "train.gradient_clip_norm": train.gradient_clip_norm,
        "augment.count": 250,
        "augment.mode": spec.mode,
        "augment.t_low": spec.t_low,
        "augment.t_high": spec.t_high,
        "augment.temperature": spec.temperature,
        "classifier.channels": (8, 16),
        "classifier.hidden": 32,
        "classifier.epochs": 100,
        "classifier.patience": 5,
        "classifier.batch_size": 64,
        "classifier.lr": 2e-3,
        "classifier.val_fraction": 0.15,
        "crossval.k": 10,
        "crossval.rare_class": 2,
        "sweep.sizes": (0, 100, 250, 500, 1000),
        "sweep.runs": 10,
    }
    values.update(_noise_defaults())
    return values


def _convert(key: str, raw: str, default) -> object:
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            element = type(default[0])
            return tuple(element(part) for part in raw.split(",") if part.strip() != "")
        return raw
    except ValueError:
        kind = "list" if isinstance(default, tuple) else type(default).__name__
        raise ValueError(f"config key {key} expects {kind}, got {raw!r}") from None


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_assignment(text: str) -> tuple[str, object]:
    """One 'key=value' override, converted to the key's declared type."""
    if "=" not in text:
        raise ValueError(f"expected key=value, got {text!r}")
    key, raw = (part.strip() for part in text.split("=", 1))
    defaults = _defaults()
    if key not in defaults:
        raise ValueError(f"unknown config key {key!r}")
    return key, _convert(key, raw, defaults[key])


@dataclass
class RunConfig:
    """Effective configuration: defaults merged with parsed overrides."""

    values: dict[str, object] = field(default_factory=_defaults)

    def __getitem__(self, key: str):
        if key not in self.values:
            raise KeyError(f"unknown config key {key!r}")
        return self.values[key]

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        defaults = _defaults()
        values = dict(defaults)
        seen: set[str] = set()
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"line {lineno}: expected key = value, got {line.strip()!r}")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in defaults:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            if key in seen:
                raise ValueError(f"line {lineno}: duplicate config key {key!r}")
            seen.add(key)
            values[key] = _convert(key, raw, defaults[key])
        return cls(values=values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def to_text(self) -> str:
        lines = [f"{key} = {_format(self.values[key])}" for key in _defaults()]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        from .pgm import atomic_write_bytes

        atomic_write_bytes(path, self.to_text().encode("utf-8"))

    def with_overrides(self, overrides: dict[str, object]) -> "RunConfig":
        values = dict(self.values)
        for key, value in overrides.items():
            if key not in values:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = value
        return RunConfig(values=values)

    # typed views over the flat keys

    def data_config(self) -> SyntheticSeismoConfig:
        noise = {}
        for cls in ("good", "medium", "bad"):
            noise[cls] = ClassNoise(
                **{name: self[f"noise.{cls}.{name}"] for name in _NOISE_FIELDS}
            )
        ratios = self["data.ratios"]
        if len(ratios) != 3:
            raise ValueError(f"data.ratios needs 3 entries, got {ratios}")
        return SyntheticSeismoConfig(
            size=self["data.size"],
            total=self["data.total"],
            ratios=ratios,
            seed=self["seed"],
            **noise,
        )

    def flow_config(self) -> FlowConfig:
        return FlowConfig(
            levels=self["model.levels"],
            steps_per_level=self["model.steps_per_level"],
            filters=self["model.filters"],
            attention=self["model.attention"],
            attention_heads=self["model.attention_heads"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self["train.epochs"],
            batch_size=self["train.batch_size"],
            warmup_steps=self["train.warmup_steps"],
            max_lr=self["train.max_lr"],
            lr_power=self["train.lr_power"],
            gradient_clip_norm=self["train.gradient_clip_norm"],
            seed=self["seed"],
        )

    def interpolation_spec(self) -> InterpolationSpec:
        return InterpolationSpec(
            mode=self["augment.mode"],
            t_low=self["augment.t_low"],
            t_high=self["augment.t_high"],
            temperature=self["augment.temperature"],
        )

    def classifier_params(self) -> dict[str, object]:
        return {
            "channels": self["classifier.channels"],
            "hidden": self["classifier.hidden"],
            "epochs": self["classifier.epochs"],
            "patience": self["classifier.patience"],
            "batch_size": self["classifier.batch_size"],
            "lr": self["classifier.lr"],
            "val_fraction": self["classifier.val_fraction"],
        }

    def augment_recipe(self):
        from ..harness.crossval import AugmentRecipe

        return AugmentRecipe(
            count=self["augment.count"],
            flow=self.flow_config(),
            train=TrainConfig(
                epochs=self["train.epochs"],
                batch_size=self["train.batch_size"],
                warmup_steps=self["train.warmup_steps"],
                max_lr=self["train.max_lr"],
                lr_power=self["train.lr_power"],
                gradient_clip_norm=self["train.gradient_clip_norm"],
            ),
            spec=self.interpolation_spec(),
        )
