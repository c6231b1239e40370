"""Experiment configuration: flat key=value files with section prefixes
(e.g. method.N=20), overridable by command-line flags of the same names."""

from dataclasses import dataclass, fields

from .errors import ConfigError


def _bool(text):
    if text in ("true", "True", "1", "yes"):
        return True
    if text in ("false", "False", "0", "no"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# key -> (attribute, type)
KEYS = {
    "model.path": ("model_path", str),
    "model.spec": ("model_spec", str),
    "data.path": ("data_path", str),
    "data.format": ("data_format", str),
    "method.name": ("method", str),
    "method.N": ("n_iter", int),
    "method.s_range": ("s_range", float),
    "method.k_targets": ("k_targets", int),
    "method.mode": ("mode", str),
    "method.eps_min": ("eps_min", float),
    "method.attack": ("attack", str),
    "method.ig_steps": ("ig_steps", int),
    "method.sg_sigma": ("sg_sigma", float),
    "method.sg_n": ("sg_n", int),
    "method.signed": ("signed", _bool),
    "metric.baseline": ("metric_baseline", str),
    "metric.n_points": ("n_points", int),
    "run.samples": ("samples", int),
    "run.seed": ("seed", int),
    "run.output_dir": ("output_dir", str),
    "run.heatmaps": ("heatmaps", _bool),
    "train.lr": ("lr", float),
    "train.epochs": ("epochs", int),
    "train.batch_size": ("batch_size", int),
    "train.seed": ("train_seed", int),
}


@dataclass
class ExperimentConfig:
    model_path: str = ""
    model_spec: str = ""
    data_path: str = ""
    data_format: str = "idx"
    method: str = "la"
    n_iter: int = 20
    s_range: float = 20.0
    k_targets: int = -1  # -1: min(c - 1, 20)
    mode: str = "linear"
    eps_min: float = 1e-3
    attack: str = "both"
    ig_steps: int = 50
    sg_sigma: float = 0.15
    sg_n: int = 50
    signed: bool = False
    metric_baseline: str = "zero"
    n_points: int = 101
    samples: int = 20
    seed: int = 0
    output_dir: str = "out"
    heatmaps: bool = False
    lr: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    train_seed: int = 0

    def apply(self, key, raw):
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        attr, cast = KEYS[key]
        try:
            setattr(self, attr, cast(raw))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc

    def as_dict(self):
        reverse = {attr: key for key, (attr, _) in KEYS.items()}
        return {reverse[f.name]: getattr(self, f.name) for f in fields(self)}


def parse_config_file(path, config=None):
    config = config or ExperimentConfig()
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        config.apply(key.strip(), raw.strip())
    return config
