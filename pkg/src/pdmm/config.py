"""Run configuration: one JSON file holding every tunable the pipeline uses.

Unknown keys are rejected so typos fail loudly; the effective config is
echoed into every output artifact.
"""
from dataclasses import dataclass, field, asdict

from . import canonical


class ConfigError(ValueError):
    pass


@dataclass
class AugmentConfig:
    max_rotate_deg: float = 15.0
    crop_fraction: float = 0.9
    enabled: bool = True


@dataclass
class RunConfig:
    seed: int = 0
    image_side: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 16
    hidden_width: int = 64
    prune_threshold: float = 0.5
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    class_weights: bool = False
    backbone_frozen: bool = False
    test_ratio: float = 0.2

    def validate(self):
        checks = [
            ("image_side", self.image_side >= 32, ">= 32"),
            ("lr", self.lr > 0, "> 0"),
            ("momentum", 0 <= self.momentum < 1, "in [0, 1)"),
            ("epochs", self.epochs >= 0, ">= 0"),
            ("batch_size", self.batch_size >= 1, ">= 1"),
            ("hidden_width", self.hidden_width >= 1, ">= 1"),
            ("prune_threshold", self.prune_threshold > 0, "> 0"),
            ("augment.max_rotate_deg", self.augment.max_rotate_deg >= 0, ">= 0"),
            ("augment.crop_fraction", 0 < self.augment.crop_fraction <= 1, "in (0, 1]"),
            ("test_ratio", 0 < self.test_ratio < 1, "in (0, 1)"),
        ]
        for name, ok, valid_range in checks:
            if not ok:
                raise ConfigError(f"{name} out of range (must be {valid_range})")
        return self

    def to_json_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        kwargs = dict(raw)
        if "augment" in kwargs:
            aug_raw = kwargs["augment"]
            if not isinstance(aug_raw, dict):
                raise ConfigError("augment must be an object")
            aug_known = set(AugmentConfig.__dataclass_fields__)
            aug_unknown = set(aug_raw) - aug_known
            if aug_unknown:
                raise ConfigError(f"unknown config key(s): {', '.join('augment.' + k for k in sorted(aug_unknown))}")
            kwargs["augment"] = AugmentConfig(**aug_raw)
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cfg.validate()


def parse_config(path=None) -> RunConfig:
    """Load a RunConfig from a JSON file, or defaults when path is None."""
    if path is None:
        return RunConfig().validate()
    try:
        raw = canonical.load_file(path)
    except ValueError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    return RunConfig.from_dict(raw)
