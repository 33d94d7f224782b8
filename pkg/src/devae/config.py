"""Run configuration: flat key = value text with typed validation.

Every key has a default; unknown keys are rejected. The serialized form is
embedded into every artifact a run emits (checkpoints, CSVs, reports, image
comments) so any artifact can be reproduced from itself. The output directory
is deliberately not part of the serialized form: it locates a run, it does not
parameterize it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from devae.errors import ConfigurationError
from devae.hierarchy import HierarchyConfig
from devae.models import ArchitectureConfig, ModelVariant

__all__ = ["RunConfig", "parse_kv_text"]


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigurationError(f"expected a boolean, got {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


@dataclass
class RunConfig:
    """Everything one training run depends on, in one validated record."""

    variant: str = "devae"
    spaces: int = 2
    betas: tuple[float, ...] = (1.0, 40.0)
    arch_kind: str = "mlp"
    arch_widths: tuple[int, ...] = (128, 128)
    resolution: int = 16
    channels: int = 1
    latent_dim: int = 10
    data_spec: str = "pos_x:16,pos_y:16,scale:4"
    dataset: str = ""  # path to a dataset file; empty means generate data_spec
    loss: str = "bce"
    seed: int = 0
    iterations: int = 20_000
    batch_size: int = 64
    eval_every: int = 500
    eval_samples: int = 10_000
    track_samples: int = 2048
    recon_samples: int = 2048
    mi_bins: int = 20
    fv_votes: int = 800
    fv_batch: int = 100
    kl_prune_threshold: float = 0.01
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    shared_noise: bool = False
    resume: bool = False
    out_dir: str = field(default="", metadata={"artifact": False})

    def validate(self) -> "RunConfig":
        """Check cross-field consistency by building the typed sub-configs."""
        self.hierarchy()
        self.architecture()
        try:
            ModelVariant(self.variant)
        except ValueError:
            valid = ", ".join(v.value for v in ModelVariant)
            raise ConfigurationError(f"unknown variant {self.variant!r}; expected one of {valid}") from None
        if self.loss not in ("bce", "se"):
            raise ConfigurationError(f"loss must be bce or se, got {self.loss!r}")
        for name in ("iterations", "batch_size", "eval_every", "eval_samples", "track_samples"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if not self.dataset and not self.data_spec:
            raise ConfigurationError("either dataset path or data_spec must be set")
        return self

    def hierarchy(self) -> HierarchyConfig:
        return HierarchyConfig(self.spaces, tuple(self.betas))

    def architecture(self) -> ArchitectureConfig:
        return ArchitectureConfig(
            kind=self.arch_kind,
            widths=tuple(self.arch_widths),
            resolution=self.resolution,
            channels=self.channels,
            latent_dim=self.latent_dim,
        )

    # -- serialization ------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.metadata.get("artifact") is False:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                rendered = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            lines.append(f"{f.name} = {rendered}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_mapping(parse_kv_text(text))

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            try:
                kwargs[key] = _FIELD_PARSERS[key](raw)
            except ConfigurationError:
                raise
            except ValueError:
                raise ConfigurationError(f"bad value for {key}: {raw!r}") from None
        config = cls(**kwargs)
        return config.validate()

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())


_FIELD_PARSERS = {
    "variant": str.strip,
    "spaces": int,
    "betas": _parse_floats,
    "arch_kind": str.strip,
    "arch_widths": _parse_ints,
    "resolution": int,
    "channels": int,
    "latent_dim": int,
    "data_spec": str.strip,
    "dataset": str.strip,
    "loss": str.strip,
    "seed": int,
    "iterations": int,
    "batch_size": int,
    "eval_every": int,
    "eval_samples": int,
    "track_samples": int,
    "recon_samples": int,
    "mi_bins": int,
    "fv_votes": int,
    "fv_batch": int,
    "kl_prune_threshold": float,
    "lr": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_eps": float,
    "shared_noise": _parse_bool,
    "resume": _parse_bool,
    "out_dir": str.strip,
}


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping
