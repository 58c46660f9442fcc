"""Model configuration and the ``desk`` / ``paper`` presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .tensorcore import ConfigError


@dataclass(frozen=True)
class VisionConfig:
    image_size: int = 112
    patch_size: int = 14
    dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.dim % self.n_heads:
            raise ConfigError(f"vision dim {self.dim} not divisible by n_heads {self.n_heads}")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid * self.grid


@dataclass(frozen=True)
class ObjectEncoderConfig:
    mask_size: int = 56
    channels: tuple[int, int, int] = (8, 16, 32)
    dim: int = 64
    kernel: int = 3

    def __post_init__(self):
        if self.mask_size % 8:
            raise ConfigError(f"mask_size {self.mask_size} must be divisible by 8")
        if len(self.channels) != 3:
            raise ConfigError("object encoder has exactly three conv stages")

    @property
    def feature_size(self) -> int:
        return self.mask_size // 8

    @property
    def flat_dim(self) -> int:
        return self.channels[-1] * self.feature_size ** 2


@dataclass(frozen=True)
class DecoderConfig:
    n_layers: int = 2
    n_heads: int = 4
    dim: int = 64
    mlp_ratio: float = 4.0
    dropout: float = 0.1

    def __post_init__(self):
        if self.n_layers < 1:
            raise ConfigError("decoder needs at least one layer")
        if self.dim % self.n_heads:
            raise ConfigError(f"decoder dim {self.dim} not divisible by n_heads {self.n_heads}")


@dataclass(frozen=True)
class ModelConfig:
    vision: VisionConfig = field(default_factory=VisionConfig)
    objects: ObjectEncoderConfig = field(default_factory=ObjectEncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    n_types: int = 2
    n_pretrain_classes: int = 5

    def __post_init__(self):
        if self.objects.dim != self.decoder.dim:
            raise ConfigError("object tokens and decoder must share dim")

    @property
    def dim(self) -> int:
        return self.decoder.dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        obj = dict(d["objects"])
        obj["channels"] = tuple(obj["channels"])
        return cls(
            vision=VisionConfig(**d["vision"]),
            objects=ObjectEncoderConfig(**obj),
            decoder=DecoderConfig(**d["decoder"]),
            n_types=d.get("n_types", 2),
            n_pretrain_classes=d.get("n_pretrain_classes", 5),
        )


def _reject_leftovers(name: str, overrides: dict) -> None:
    if overrides:
        raise ConfigError(f"unknown {name} preset overrides: {sorted(overrides)}")


def desk_preset(**overrides) -> ModelConfig:
    dim = overrides.pop("dim", 64)
    cfg = ModelConfig(
        vision=VisionConfig(image_size=overrides.pop("image_size", 112), patch_size=14, dim=dim,
                            n_layers=overrides.pop("vision_layers", 2), n_heads=4),
        objects=ObjectEncoderConfig(mask_size=overrides.pop("mask_size", 56), channels=(8, 16, 32), dim=dim),
        decoder=DecoderConfig(n_layers=overrides.pop("decoder_layers", 2), n_heads=4, dim=dim),
    )
    _reject_leftovers("desk", overrides)
    return cfg


def paper_preset(**overrides) -> ModelConfig:
    dim = overrides.pop("dim", 768)
    cfg = ModelConfig(
        vision=VisionConfig(image_size=overrides.pop("image_size", 518), patch_size=14, dim=dim,
                            n_layers=overrides.pop("vision_layers", 12), n_heads=12),
        objects=ObjectEncoderConfig(mask_size=overrides.pop("mask_size", 224), channels=(32, 64, 128), dim=dim),
        decoder=DecoderConfig(n_layers=overrides.pop("decoder_layers", 2), n_heads=12, dim=dim),
    )
    _reject_leftovers("paper", overrides)
    return cfg


PRESETS = {"desk": desk_preset, "paper": paper_preset}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](**overrides)
