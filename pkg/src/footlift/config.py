"""Model/training configuration, presets and the key=value config file format.

Config files hold one ``section.key = value`` pair per line; ``#`` starts a
comment.  Sections are ``model``, ``train``, ``noise`` and ``camera``; the
bare keys ``seed`` and ``skeleton`` are also accepted.  Tuples are written
comma-separated.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, replace

from footlift.camera import CameraIntrinsics
from footlift.errors import ConfigError
from footlift.synth import NoiseConfig

OUTPUT_MODES = ("relative", "global", "residual_relative", "residual_global")
JOINT_GROUPS = ("pelvis", "hip", "knee", "ankle")
SEED_ENV = "FOOTLIFT_SEED"


@dataclass(frozen=True)
class ModelConfig:
    d_h: int = 256
    layers: int = 6
    heads: int = 4
    window: int = 120
    output_mode: str = "residual_global"
    input_joints: tuple[str, ...] = ("knee", "ankle")
    ff_mult: int = 4
    # "half": attend iff |i - j| <= window; "total": the band spans `window` frames in all
    window_semantics: str = "half"

    def __post_init__(self):
        if self.d_h <= 0 or self.layers < 0 or self.heads <= 0:
            raise ConfigError("d_h, heads must be positive and layers non-negative")
        if self.d_h % self.heads:
            raise ConfigError(f"d_h={self.d_h} is not divisible by heads={self.heads}")
        if (self.d_h // self.heads) % 2:
            raise ConfigError("per-head width must be even for rotary embeddings")
        if self.output_mode not in OUTPUT_MODES:
            raise ConfigError(f"output_mode must be one of {OUTPUT_MODES}")
        unknown = set(self.input_joints) - set(JOINT_GROUPS)
        if unknown:
            raise ConfigError(f"unknown input joints {sorted(unknown)}")
        object.__setattr__(self, "input_joints",
                           tuple(j for j in JOINT_GROUPS if j in self.input_joints))
        if self.window_semantics not in ("half", "total"):
            raise ConfigError("window_semantics must be 'half' or 'total'")

    @property
    def half_window(self) -> int:
        return self.window if self.window_semantics == "half" else self.window // 2


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    lr_halving_epochs: tuple[int, ...] = (200, 350)
    batch_size: int = 256
    epochs: int = 500
    seq_len: int = 120
    lambda_theta: float = 1.0
    lambda_j3d: float = 500.0
    lambda_j2d: float = 1000.0
    lambda_v3d: float = 500.0
    lambda_v2d: float = 1000.0
    seed: int = 0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    augment: bool = True
    num_sequences: int = 512
    val_sequences: int = 32
    profile: str = "everyday"
    val_profile: str = "everyday"
    fps: float = 30.0
    weight_decay: float = 0.01
    # False freezes the synthesized examples after the first epoch
    resample_per_epoch: bool = True
    # condition validation on the simulated estimator's knees instead of ground truth
    val_estimated_knees: bool = True

    def __post_init__(self):
        if self.lr < 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ConfigError("lr must be >= 0; batch_size and epochs positive")
        if self.seq_len < 2:
            raise ConfigError("seq_len must be at least 2")
        object.__setattr__(self, "lr_halving_epochs", tuple(int(e) for e in self.lr_halving_epochs))

    @property
    def loss_weights(self) -> dict[str, float]:
        return {
            "theta": self.lambda_theta, "j3d": self.lambda_j3d, "j2d": self.lambda_j2d,
            "v3d": self.lambda_v3d, "v2d": self.lambda_v2d,
        }

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch; halved once per boundary reached."""
        return self.lr * 0.5 ** sum(epoch >= e for e in self.lr_halving_epochs)


@dataclass(frozen=True)
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    skeleton: str = ""

    @property
    def seed(self) -> int:
        return self.train.seed

    def with_seed(self, seed: int) -> "Config":
        train = replace(self.train, seed=seed, noise=replace(self.train.noise, seed=seed))
        return replace(self, train=train)


def paper_preset() -> Config:
    """Hyperparameters as published; the dataclass defaults already carry them."""
    return Config()


def desk_preset() -> Config:
    train = TrainConfig(batch_size=16, epochs=200, lr_halving_epochs=(80, 140), num_sequences=512)
    return Config(train=train)


def toy_preset() -> Config:
    model = ModelConfig(d_h=32, layers=2, heads=2, window=30)
    train = TrainConfig(batch_size=4, epochs=3, lr=1e-3, lr_halving_epochs=(2,), seq_len=32,
                        num_sequences=8, val_sequences=2)
    return Config(model=model, train=train)


def overfit_preset() -> Config:
    """The default model fitted to 8 fixed sequences (examples are not resampled)."""
    train = TrainConfig(lr=5e-4, lr_halving_epochs=(), batch_size=8, epochs=2000, num_sequences=8,
                        val_sequences=0, resample_per_epoch=False)
    return Config(train=train)


def ablate_preset() -> Config:
    """Small model trained on everyday motion, validated on held-out complex-foot motion."""
    model = ModelConfig(d_h=64, layers=2, heads=4, window=60)
    train = TrainConfig(lr=1e-3, lr_halving_epochs=(24, 34), batch_size=16, epochs=40, num_sequences=128,
                        val_sequences=32, profile="everyday", val_profile="complex-foot")
    return Config(model=model, train=train)


PRESETS = {"paper": paper_preset, "desk": desk_preset, "toy": toy_preset, "overfit": overfit_preset,
           "ablate": ablate_preset}


def preset(name: str) -> Config:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# --- key=value files ------------------------------------------------------

def _sections(cfg: Config) -> dict[str, object]:
    return {"model": cfg.model, "train": cfg.train, "noise": cfg.train.noise, "camera": cfg.camera}


def _parse_value(raw: str, current, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if (current and isinstance(current[0], int)) or key.endswith("_epochs"):
                return tuple(int(x) for x in items)
            return tuple(items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def apply_overrides(cfg: Config, pairs: dict[str, str]) -> Config:
    values = {name: {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
              for name, obj in _sections(cfg).items()}
    skeleton = cfg.skeleton
    seed = None
    for key, raw in pairs.items():
        if key == "seed":
            seed = _parse_value(raw, 0, key)
            continue
        if key == "skeleton":
            skeleton = raw.strip()
            continue
        section, _, name = key.partition(".")
        if section not in values or name not in values[section] or name in ("noise", "seed"):
            raise ConfigError(f"unknown config key {key!r}")
        values[section][name] = _parse_value(raw, values[section][name], key)
    try:
        noise = NoiseConfig(**values["noise"])
        train = TrainConfig(**{**values["train"], "noise": noise})
        out = Config(ModelConfig(**values["model"]), train, CameraIntrinsics(**values["camera"]), skeleton)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return out.with_seed(seed) if seed is not None else out


def parse_config_text(text: str, base: Config | None = None, source: str = "<config>") -> Config:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value
    return apply_overrides(base or desk_preset(), pairs)


def load_config(path=None, preset_name: str = "desk") -> Config:
    cfg = preset(preset_name)
    if path is not None:
        with open(path) as fh:
            cfg = parse_config_text(fh.read(), cfg, str(path))
    env_seed = os.environ.get(SEED_ENV)
    if env_seed:
        try:
            cfg = cfg.with_seed(int(env_seed))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    return cfg


def dump_config(cfg: Config) -> str:
    lines = []
    for section, obj in _sections(cfg).items():
        for f in dataclasses.fields(obj):
            if section == "train" and f.name in ("noise", "seed"):
                continue
            if section == "noise" and f.name == "seed":
                continue
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{section}.{f.name} = {value}")
    lines.append(f"seed = {cfg.seed}")
    if cfg.skeleton:
        lines.append(f"skeleton = {cfg.skeleton}")
    return "\n".join(lines) + "\n"
