"""Samples, dataset IO, volume preprocessing and the synthetic generator.

Sample-directory format (bit-exact):
    root/{train,val}/<id>.img   raw float32, little-endian, row-major
    root/{train,val}/<id>.lbl   raw uint8, row-major
    root/{train,val}/<id>.json  {"shape": [H, W], "classes": C}
"""
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage


class LoadError(Exception):
    """A sample file is missing or does not match its sidecar."""


class ValidationError(Exception):
    """A sample violates its invariants (shape, range or label values)."""


@dataclass
class ImageSample:
    """One 2D grayscale image with its integer label map."""

    image: np.ndarray  # float32 (H, W), intensities in [0, 1]
    label: np.ndarray  # uint8 (H, W), values in [0, num_classes)
    id: str

    def validate(self, num_classes):
        if self.image.shape != self.label.shape:
            raise ValidationError(
                f"sample {self.id!r}: image shape {self.image.shape} != label shape {self.label.shape}"
            )
        if self.image.ndim != 2:
            raise ValidationError(f"sample {self.id!r}: expected 2D image, got {self.image.ndim}D")
        lo, hi = float(self.image.min()), float(self.image.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"sample {self.id!r}: intensities [{lo}, {hi}] outside [0, 1]")
        top = int(self.label.max()) if self.label.size else 0
        if top >= num_classes:
            raise ValidationError(
                f"sample {self.id!r}: label value {top} >= num_classes {num_classes}"
            )


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    num_classes: int = 2
    provenance: str = "generic"  # promise12 | acdc | synthetic | generic

    def validate(self):
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        for sample in self.train + self.val:
            sample.validate(self.num_classes)
        overlap = {s.id for s in self.train} & {s.id for s in self.val}
        if overlap:
            raise ValidationError(f"train/val ids overlap: {sorted(overlap)[:5]}")


@dataclass
class SynthConfig:
    """Small-bright-ellipse generator mimicking heavy foreground/background imbalance."""

    image_size: tuple = (64, 64)
    num_classes: int = 2
    object_radius_range: tuple = (3.0, 9.0)
    foreground_fraction_target: float = 0.03
    noise_sigma: float = 0.05
    count_train: int = 200
    count_val: int = 50
    seed: int = 0
    background_intensity: float = 0.2
    object_intensity: float = 0.5

    def validate(self):
        h, w = self.image_size
        rmin, rmax = self.object_radius_range
        if rmin <= 0 or rmax < rmin:
            raise ValueError(f"radius range must be positive and ordered, got {self.object_radius_range}")
        if self.count_train <= 0 or self.count_val <= 0:
            raise ValueError("count_train and count_val must be positive")
        if not (0.0 < self.foreground_fraction_target <= 0.2):
            raise ValueError(f"foreground_fraction_target must lie in (0, 0.2], got {self.foreground_fraction_target}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if 2 * rmax + 2 >= min(h, w):
            raise ValueError(
                f"objects of radius {rmax} cannot fit a {h}x{w} image"
            )


def write_sample(sample, directory):
    """Write one sample as the .img/.lbl/.json triple."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    image = np.ascontiguousarray(sample.image, dtype="<f4")
    label = np.ascontiguousarray(sample.label, dtype=np.uint8)
    (directory / f"{sample.id}.img").write_bytes(image.tobytes())
    (directory / f"{sample.id}.lbl").write_bytes(label.tobytes())
    meta = {"shape": [int(s) for s in image.shape], "classes": int(label.max()) + 1}
    (directory / f"{sample.id}.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def write_split(split, root):
    """Write a DatasetSplit in the sample-directory layout. Sidecar classes = split.num_classes."""
    root = Path(root)
    for part, samples in (("train", split.train), ("val", split.val)):
        directory = root / part
        directory.mkdir(parents=True, exist_ok=True)
        for sample in samples:
            image = np.ascontiguousarray(sample.image, dtype="<f4")
            label = np.ascontiguousarray(sample.label, dtype=np.uint8)
            (directory / f"{sample.id}.img").write_bytes(image.tobytes())
            (directory / f"{sample.id}.lbl").write_bytes(label.tobytes())
            meta = {"shape": [int(s) for s in image.shape], "classes": int(split.num_classes)}
            (directory / f"{sample.id}.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def _read_sample(directory, sample_id, num_classes):
    meta_path = directory / f"{sample_id}.json"
    img_path = directory / f"{sample_id}.img"
    lbl_path = directory / f"{sample_id}.lbl"
    for p in (meta_path, img_path, lbl_path):
        if not p.exists():
            raise LoadError(f"missing sample file: {p}")
    try:
        meta = json.loads(meta_path.read_text())
        h, w = (int(v) for v in meta["shape"])
        classes = int(meta["classes"])
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise LoadError(f"corrupt sidecar {meta_path}: {exc}") from exc
    img_bytes = img_path.read_bytes()
    lbl_bytes = lbl_path.read_bytes()
    if len(img_bytes) != 4 * h * w:
        raise LoadError(f"corrupt sample file {img_path}: expected {4 * h * w} bytes, found {len(img_bytes)}")
    if len(lbl_bytes) != h * w:
        raise LoadError(f"corrupt sample file {lbl_path}: expected {h * w} bytes, found {len(lbl_bytes)}")
    if classes != num_classes:
        raise ValidationError(
            f"sample {sample_id!r}: sidecar declares {classes} classes, loader expected {num_classes}"
        )
    image = np.frombuffer(img_bytes, dtype="<f4").reshape(h, w)
    label = np.frombuffer(lbl_bytes, dtype=np.uint8).reshape(h, w)
    sample = ImageSample(image=image, label=label, id=sample_id)
    sample.validate(num_classes)
    return sample


def load_dataset(root, format="sample_dir", num_classes=2):
    """Load a DatasetSplit from disk. Sample order is lexicographic by id."""
    if format != "sample_dir":
        raise ValueError(f"unknown dataset format {format!r}")
    root = Path(root)
    if not root.exists():
        raise LoadError(f"dataset root does not exist: {root}")
    parts = {}
    for part in ("train", "val"):
        directory = root / part
        samples = []
        if directory.exists():
            ids = sorted(p.stem for p in directory.glob("*.img"))
            for sample_id in ids:
                samples.append(_read_sample(directory, sample_id, num_classes))
        if part == "train" and not samples:
            warnings.warn(f"train split of {root} is empty", stacklevel=2)
        parts[part] = samples
    split = DatasetSplit(train=parts["train"], val=parts["val"], num_classes=num_classes)
    split.validate()
    return split


def minmax_normalize(volume):
    """Per-volume min-max rescale to [0, 1]. Constant volumes map to 0 with a warning."""
    volume = np.asarray(volume, dtype=np.float32)
    lo, hi = float(volume.min()), float(volume.max())
    if hi == lo:
        warnings.warn("constant-intensity volume: normalization maps all voxels to 0", stacklevel=2)
        return np.zeros_like(volume)
    return (volume - lo) / (hi - lo)


def center_crop_or_pad(plane, target_hw, pad_value=0):
    """Center-crop a 2D array to target_hw, zero-padding symmetrically when smaller."""
    h, w = plane.shape
    th, tw = target_hw
    out = np.full((th, tw), pad_value, dtype=plane.dtype)
    src_r = max((h - th) // 2, 0)
    src_c = max((w - tw) // 2, 0)
    dst_r = max((th - h) // 2, 0)
    dst_c = max((tw - w) // 2, 0)
    rows = min(h, th)
    cols = min(w, tw)
    out[dst_r:dst_r + rows, dst_c:dst_c + cols] = plane[src_r:src_r + rows, src_c:src_c + cols]
    return out


def _slices_to_samples(volume, labels, target_hw, id_prefix):
    samples = []
    for k in range(volume.shape[0]):
        image = center_crop_or_pad(volume[k].astype(np.float32), target_hw, pad_value=0.0)
        label = center_crop_or_pad(labels[k].astype(np.uint8), target_hw, pad_value=0)
        samples.append(ImageSample(image=image, label=label, id=f"{id_prefix}{k:03d}"))
    return samples


def preprocess_promise12(volume, spacing, labels=None, id_prefix="slice_"):
    """Resample a prostate MR volume to 1mm isotropic, normalize and crop slices to 128x128.

    ``volume`` is (D, H, W) with ``spacing`` giving mm per voxel along each of
    its axes in the same order. Images are interpolated trilinearly, label
    volumes nearest-neighbor so class indices stay integral. Axial slices are
    taken along axis 0. Without ``labels`` the output label maps are all
    background (inference-only use).
    """
    volume = np.asarray(volume)
    if volume.ndim != 3 or volume.size == 0:
        raise ValueError("volume must be a non-empty 3D array")
    spacing = tuple(float(s) for s in spacing)
    if any(s <= 0 for s in spacing):
        raise ValueError(f"spacing must be positive, got {spacing}")
    if labels is not None and np.asarray(labels).shape != volume.shape:
        raise ValueError("labels must match volume shape")
    if spacing != (1.0, 1.0, 1.0):
        volume = ndimage.zoom(volume.astype(np.float32), spacing, order=1)
        if labels is not None:
            labels = ndimage.zoom(np.asarray(labels), spacing, order=0)
    if labels is None:
        labels = np.zeros(volume.shape, dtype=np.uint8)
    volume = minmax_normalize(volume)
    return _slices_to_samples(volume, np.asarray(labels), (128, 128), id_prefix)


def preprocess_acdc(volume, labels=None, id_prefix="slice_"):
    """Normalize a cardiac MR volume and center-crop/pad its slices to 160x160.

    No resampling; labels use the four-class scheme (background, RV, Myo, LV).
    """
    volume = np.asarray(volume)
    if volume.ndim != 3 or volume.size == 0:
        raise ValueError("volume must be a non-empty 3D array")
    if labels is not None and np.asarray(labels).shape != volume.shape:
        raise ValueError("labels must match volume shape")
    if labels is None:
        labels = np.zeros(volume.shape, dtype=np.uint8)
    volume = minmax_normalize(volume)
    return _slices_to_samples(volume, np.asarray(labels), (160, 160), id_prefix)


def split_by_record(records, train_ratio, seed, num_classes=None, provenance="generic"):
    """Split at record (patient/volume) level, never slice level.

    ``records`` maps record id -> list of ImageSample (a dict or a list of
    (id, samples) pairs). Deterministic given ``seed``.
    """
    if not 0.0 < train_ratio < 1.0:
        raise ValueError(f"train_ratio must lie in (0, 1), got {train_ratio}")
    items = sorted(records.items()) if isinstance(records, dict) else sorted(records)
    if len(items) < 2:
        raise ValueError(f"cannot split {len(items)} record(s): need at least 2")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(items))
    n_train = int(round(len(items) * train_ratio))
    n_train = min(max(n_train, 1), len(items) - 1)
    train_idx = set(order[:n_train].tolist())
    train, val = [], []
    for i, (_, samples) in enumerate(items):
        (train if i in train_idx else val).extend(samples)
    if num_classes is None:
        top = max((int(s.label.max()) for s in train + val), default=1)
        num_classes = max(top + 1, 2)
    split = DatasetSplit(train=train, val=val, num_classes=num_classes, provenance=provenance)
    split.validate()
    return split


def _draw_ellipse(label, rng, class_index, area_target, radius_range, fraction_tol):
    """Paint one axis-aligned ellipse of roughly area_target pixels; returns pixels painted."""
    h, w = label.shape
    rmin, rmax = radius_range
    for _ in range(20):
        aspect = rng.uniform(0.7, 1.4)
        ra = float(np.clip(np.sqrt(area_target / np.pi * aspect), rmin, rmax))
        rb = float(np.clip(area_target / np.pi / ra, rmin, rmax))
        cr = int(rng.integers(int(np.ceil(ra)) + 1, h - int(np.ceil(ra)) - 1))
        cc = int(rng.integers(int(np.ceil(rb)) + 1, w - int(np.ceil(rb)) - 1))
        rr, cc_grid = np.ogrid[:h, :w]
        mask = ((rr - cr) / ra) ** 2 + ((cc_grid - cc) / rb) ** 2 <= 1.0
        mask &= label == 0
        painted = int(mask.sum())
        if abs(painted - area_target) <= fraction_tol * area_target:
            label[mask] = class_index
            return painted
    label[mask] = class_index
    return painted


def generate_synthetic(config):
    """Generate a class-imbalanced DatasetSplit of noisy images with small bright ellipses.

    Fully deterministic given ``config.seed``: one RNG stream drives every
    draw in a fixed order. Realized per-sample foreground fraction stays
    within +-50% (relative) of the target.
    """
    config.validate()
    h, w = config.image_size
    c = config.num_classes
    rng = np.random.default_rng(config.seed)
    target_total = config.foreground_fraction_target * h * w
    per_object = target_total / (c - 1)

    def make(sample_id):
        for _ in range(20):
            label = np.zeros((h, w), dtype=np.uint8)
            painted = 0
            for cls in range(1, c):
                painted += _draw_ellipse(label, rng, cls, per_object, config.object_radius_range, 0.45)
            if abs(painted - target_total) <= 0.5 * target_total:
                break
        else:
            raise ValueError(
                f"cannot realize foreground fraction {config.foreground_fraction_target} "
                f"with radii {config.object_radius_range} on {h}x{w}"
            )
        image = np.full((h, w), config.background_intensity, dtype=np.float32)
        for cls in range(1, c):
            image[label == cls] = config.object_intensity + 0.05 * (cls - 1)
        if config.noise_sigma > 0:
            image = image + rng.normal(0.0, config.noise_sigma, size=(h, w)).astype(np.float32)
        image = np.clip(image, 0.0, 1.0).astype(np.float32)
        return ImageSample(image=image, label=label, id=sample_id)

    train = [make(f"train_{i:04d}") for i in range(config.count_train)]
    val = [make(f"val_{i:04d}") for i in range(config.count_val)]
    split = DatasetSplit(train=train, val=val, num_classes=c, provenance="synthetic")
    split.validate()
    return split


def class_frequencies(split):
    """Per-class pixel frequencies over the train split, summing to 1."""
    if not split.train:
        raise ValueError("class_frequencies requires a non-empty train split")
    counts = np.zeros(split.num_classes, dtype=np.int64)
    for sample in split.train:
        counts += np.bincount(sample.label.ravel(), minlength=split.num_classes)
    return counts / counts.sum()
