"""Flat experiment configuration: documented defaults, strict keys, round-trip serialization.

Config files come in two accepted forms, detected automatically:
  * flat UTF-8 ``key = value`` lines (# comments allowed)
  * a nested YAML document whose paths flatten to the dotted keys below
Unknown keys are errors. Every run embeds the effective flat config in its
outputs as the config echo.
"""
from pathlib import Path

import yaml

# key: (default, help)
DEFAULTS = {
    "method": ("unet", "training regime: unet | seg-glgan"),
    "seed": (0, "global RNG seed for training and generation"),
    "data.num_classes": (2, "number of classes C expected in the dataset"),
    "synth.height": (64, "synthetic image height"),
    "synth.width": (64, "synthetic image width"),
    "synth.num_classes": (2, "synthetic classes incl. background"),
    "synth.radius_min": (3.0, "min ellipse radius, px"),
    "synth.radius_max": (9.0, "max ellipse radius, px"),
    "synth.fg_fraction": (0.03, "target foreground pixel fraction per sample"),
    "synth.noise_sigma": (0.05, "gaussian noise std dev"),
    "synth.count_train": (200, "synthetic train samples"),
    "synth.count_val": (50, "synthetic val samples"),
    "roi.mode": ("static", "ROI policy: static | dynamic"),
    "roi.static_h": (50, "static ROI height (50 for 128x128 prostate, 60 for 160x160 cardiac)"),
    "roi.static_w": (50, "static ROI width"),
    "roi.margin": (8, "dynamic ROI margin around the foreground bounding box, px"),
    "roi.min_size": (16, "dynamic ROI minimum side length, px"),
    "loss.kind": ("ce", "segmentation loss: ce | wce | dice | focal | context"),
    "loss.lambda_local": (1.0, "weight of the local CE term in the composite loss"),
    "loss.lambda_adv": (1.0, "weight of the adversarial term in the generator objective"),
    "loss.reduction": ("mean", "CE reduction: mean | sum"),
    "loss.focal_gamma": (2.0, "focal modulating exponent"),
    "model.depth": (4, "U-Net depth (input dims must divide 2**depth)"),
    "model.base_channels": (32, "U-Net channels at the first stage"),
    "model.disc_head": ("auto", "discriminator local head: auto | fully_connected | gap"),
    "train.epochs": (150, "training epochs"),
    "train.lr": (1e-4, "Adam learning rate"),
    "train.batch_size": (8, "mini-batch size"),
    "train.checkpoint_every": (0, "periodic checkpoint interval in epochs, 0 = only best"),
    "train.eval_every": (1, "validation interval in epochs"),
    "eval.hd_percentile": (100.0, "Hausdorff percentile, 100 = classical max"),
    "plot.n_examples": (4, "overlay images to render"),
    "plot.scale": (4, "integer upscaling factor for overlay images"),
}

CHOICES = {
    "method": ("unet", "seg-glgan"),
    "roi.mode": ("static", "dynamic"),
    "loss.kind": ("ce", "wce", "dice", "focal", "context"),
    "loss.reduction": ("mean", "sum"),
    "model.disc_head": ("auto", "fully_connected", "gap"),
}


class ConfigError(Exception):
    pass


def _coerce(key, value):
    default = DEFAULTS[key][0]
    try:
        if isinstance(default, bool):
            coerced = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            coerced = int(value)
        elif isinstance(default, float):
            coerced = float(value)
        else:
            coerced = str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: cannot interpret {value!r} as {type(default).__name__}") from exc
    if key in CHOICES and coerced not in CHOICES[key]:
        raise ConfigError(f"config key {key!r}: {coerced!r} not one of {CHOICES[key]}")
    return coerced


def _flatten(tree, prefix=""):
    flat = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{path}."))
        else:
            flat[path] = value
    return flat


class ExperimentConfig:
    """Immutable-by-convention mapping of the documented dotted keys to values."""

    def __init__(self, values=None):
        self.values = {k: d for k, (d, _) in DEFAULTS.items()}
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value)

    def __getitem__(self, key):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    @classmethod
    def from_file(cls, path):
        return cls.from_text(Path(path).read_text())

    @classmethod
    def from_text(cls, text):
        stripped = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        lines = [ln for ln in stripped if ln]
        if lines and all("=" in ln for ln in lines):
            pairs = {}
            for ln in lines:
                key, _, raw = ln.partition("=")
                pairs[key.strip()] = raw.strip()
            return cls(pairs)
        try:
            tree = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is neither key=value lines nor valid YAML: {exc}") from exc
        if tree is None:
            return cls()
        if not isinstance(tree, dict):
            raise ConfigError("config document must be a mapping")
        return cls(_flatten(tree))

    def to_flat_text(self):
        return "".join(f"{k} = {self.values[k]}\n" for k in DEFAULTS)

    def to_dict(self):
        return dict(self.values)

    def echo(self):
        """JSON-ready copy, embedded verbatim in every run artifact."""
        return dict(self.values)
