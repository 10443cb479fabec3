"""Flat ``section.key = value`` experiment configuration.

Blank lines and lines starting with ``#`` are ignored. Lists are comma
separated. Unknown keys are rejected by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .fusion import FusionStrategy
from .mapping import MappingStrategy
from .toymodel import N_FINE, PipelineConfig, SyntheticConfig

__all__ = ["ExperimentConfig", "CONFIG_KEYS", "parse_config", "load_config", "config_help"]


# key -> (description, default rendered as text)
CONFIG_KEYS: dict[str, tuple[str, str]] = {
    "data.source": ("'synthetic' or 'csv'", "synthetic"),
    "data.csv": ("comma-separated per-view CSV paths (source = csv)", ""),
    "data.n_classes": ("number of classes in CSV data", str(N_FINE)),
    "data.n_features": ("synthetic features per view", "8"),
    "data.samples_per_class": ("synthetic samples per class", "200"),
    "data.noise_sigma": ("noise sigma, one value or one per view", "1.0"),
    "data.conflict_rate": ("fraction of samples with view v resampled from a wrong class, one value or one per view", "0.3"),
    "data.seed": ("generator seed", "0"),
    "data.test_fraction": ("held-out fraction", "0.3"),
    "data.split_seed": ("train/test split seed", "0"),
    "pipeline.layout": ("'hybrid' (four heads, two views) or 'flat' (one fine head per view)", "hybrid"),
    "pipeline.learning_rate": ("step size", "0.05"),
    "pipeline.momentum": ("heavy-ball momentum", "0.9"),
    "pipeline.epochs": ("training epochs", "40"),
    "pipeline.batch_size": ("mini-batch size", "32"),
    "pipeline.init_scale": ("std of initial weights", "0.01"),
    "pipeline.fusion": ("strategies to evaluate: cmam, average, harmonic", "cmam,average"),
    "pipeline.mapping": ("coarse-to-fine mapping: uniform or data_driven", "uniform"),
    "pipeline.seed": ("initialization and shuffling seed", "0"),
    "output.dir": ("report directory", "report"),
    "output.formats": ("csv, png or both", "csv,png"),
    "output.density_bins": ("bins of the uncertainty histograms", "20"),
}


def _split(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    source: str = "synthetic"
    csv_paths: tuple[str, ...] = ()
    n_classes: int = N_FINE
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    test_fraction: float = 0.3
    split_seed: int = 0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    out_dir: str = "report"
    formats: tuple[str, ...] = ("csv", "png")
    density_bins: int = 20

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source must be 'synthetic' or 'csv', got {self.source!r}")
        if self.source == "csv" and not self.csv_paths:
            raise ConfigError("data.csv is required when data.source = csv")
        bad = set(self.formats) - {"csv", "png"}
        if bad or not self.formats:
            raise ConfigError(f"output.formats: unknown format(s) {sorted(bad)}")
        if self.density_bins < 1:
            raise ConfigError("output.density_bins must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("data.test_fraction must lie in (0, 1)")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Override every seed at once (the CLI ``--seed`` flag)."""
        return replace(
            self,
            synthetic=replace(self.synthetic, seed=seed),
            pipeline=replace(self.pipeline, seed=seed),
            split_seed=seed,
        )

    def to_pairs(self) -> list[tuple[str, str]]:
        syn, pipe = self.synthetic, self.pipeline

        def seq(v):
            return ",".join(str(x) for x in v)

        return [
            ("data.source", self.source),
            ("data.csv", seq(self.csv_paths)),
            ("data.n_classes", str(self.n_classes)),
            ("data.n_features", str(syn.n_features)),
            ("data.samples_per_class", str(syn.samples_per_class)),
            ("data.noise_sigma", seq(syn.noise_sigma)),
            ("data.conflict_rate", seq(syn.conflict_rate)),
            ("data.seed", str(syn.seed)),
            ("data.test_fraction", repr(self.test_fraction)),
            ("data.split_seed", str(self.split_seed)),
            ("pipeline.layout", pipe.layout),
            ("pipeline.learning_rate", repr(pipe.learning_rate)),
            ("pipeline.momentum", repr(pipe.momentum)),
            ("pipeline.epochs", str(pipe.epochs)),
            ("pipeline.batch_size", str(pipe.batch_size)),
            ("pipeline.init_scale", repr(pipe.init_scale)),
            ("pipeline.fusion", seq(s.value for s in pipe.fusion)),
            ("pipeline.mapping", pipe.mapping.value),
            ("pipeline.seed", str(pipe.seed)),
            ("output.dir", self.out_dir),
            ("output.formats", seq(self.formats)),
            ("output.density_bins", str(self.density_bins)),
        ]

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_pairs())


def _parse_lines(text: str, origin: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{no}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{origin}:{no}: unknown key '{key}'")
        out[key] = value
    return out


def parse_config(values: Mapping[str, str] | str, origin: str = "<config>") -> ExperimentConfig:
    """Build a config from text or a ``{key: value}`` mapping; missing keys take defaults."""
    if isinstance(values, str):
        values = _parse_lines(values, origin)
    for key in values:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key '{key}'")
    merged = {k: d for k, (_, d) in CONFIG_KEYS.items()}
    merged.update({k: str(v) for k, v in values.items()})

    def get(key, conv):
        try:
            return conv(merged[key])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: invalid value {merged[key]!r} ({exc})") from None

    def floats(s):
        vals = tuple(float(x) for x in _split(s))
        if len(vals) not in (1, 2):
            raise ValueError("expected one value or one per view")
        return vals[0] if len(vals) == 1 else vals

    try:
        synthetic = SyntheticConfig(
            n_features=get("data.n_features", int),
            samples_per_class=get("data.samples_per_class", int),
            noise_sigma=get("data.noise_sigma", floats),
            conflict_rate=get("data.conflict_rate", floats),
            seed=get("data.seed", int),
        )
        pipeline = PipelineConfig(
            layout=merged["pipeline.layout"],
            learning_rate=get("pipeline.learning_rate", float),
            momentum=get("pipeline.momentum", float),
            epochs=get("pipeline.epochs", int),
            batch_size=get("pipeline.batch_size", int),
            init_scale=get("pipeline.init_scale", float),
            fusion=get("pipeline.fusion", lambda s: tuple(FusionStrategy.parse(x) for x in _split(s))),
            mapping=get("pipeline.mapping", MappingStrategy),
            seed=get("pipeline.seed", int),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(
        source=merged["data.source"],
        csv_paths=_split(merged["data.csv"]),
        n_classes=get("data.n_classes", int),
        synthetic=synthetic,
        test_fraction=get("data.test_fraction", float),
        split_seed=get("data.split_seed", int),
        pipeline=pipeline,
        out_dir=merged["output.dir"],
        formats=_split(merged["output.formats"]),
        density_bins=get("output.density_bins", int),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, origin=str(path))


def config_help() -> str:
    width = max(len(k) for k in CONFIG_KEYS)
    return "\n".join(f"  {k:<{width}}  {desc} [default: {d or 'none'}]" for k, (desc, d) in CONFIG_KEYS.items())

