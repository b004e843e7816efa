"""ROI extraction from label maps: static (fixed dims) and dynamic (object-sized) boxes.

Boxes are always computed from the target label, never from a prediction,
and are consumed at training time only.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ROIBox:
    row0: int
    col0: int
    height: int
    width: int
    mode: str  # "static" | "dynamic"

    @property
    def row1(self):
        return self.row0 + self.height

    @property
    def col1(self):
        return self.col0 + self.width

    def slices(self):
        return slice(self.row0, self.row1), slice(self.col0, self.col1)


@dataclass
class ROIConfig:
    mode: str = "static"
    static_dims: tuple = (50, 50)
    margin: int = 8
    min_size: int = 16

    def validate(self, image_hw=None):
        if self.mode not in ("static", "dynamic"):
            raise ValueError(f"unknown roi mode {self.mode!r}")
        if self.margin < 0 or self.min_size < 1:
            raise ValueError("margin must be >= 0 and min_size >= 1")
        if image_hw is not None:
            h, w = image_hw
            if self.mode == "static" and (self.static_dims[0] > h or self.static_dims[1] > w):
                raise ValueError(f"static dims {self.static_dims} exceed image {image_hw}")
            if self.mode == "dynamic" and (self.min_size > h or self.min_size > w):
                raise ValueError(f"min_size {self.min_size} exceeds image {image_hw}")

    def extract(self, label):
        if self.mode == "static":
            return extract_static_roi(label, self.static_dims)
        return extract_dynamic_roi(label, self.margin, self.min_size)


def _clip_origin(origin, extent, limit):
    return int(np.clip(origin, 0, limit - extent))


def extract_static_roi(label, dims):
    """Fixed-size box centered (rounded down) at the foreground centroid.

    Any class > 0 counts as foreground; an all-background label centers the
    box at the image center. Clipping translates the box, never resizes it.
    """
    label = np.asarray(label)
    h, w = label.shape
    bh, bw = int(dims[0]), int(dims[1])
    if bh > h or bw > w:
        raise ValueError(f"static dims {dims} exceed label dims {label.shape}")
    fg = np.argwhere(label > 0)
    if len(fg):
        center_r, center_c = (int(v) for v in np.floor(fg.mean(axis=0)))
    else:
        center_r, center_c = h // 2, w // 2
    row0 = _clip_origin(center_r - bh // 2, bh, h)
    col0 = _clip_origin(center_c - bw // 2, bw, w)
    return ROIBox(row0=row0, col0=col0, height=bh, width=bw, mode="static")


def extract_dynamic_roi(label, margin, min_size):
    """Tight foreground bounding box, expanded by margin, at least min_size per side.

    Multi-class labels use the union box across all foreground classes. An
    empty label yields a centered min_size box.
    """
    label = np.asarray(label)
    h, w = label.shape
    min_size = int(min_size)
    if min_size > h or min_size > w:
        raise ValueError(f"min_size {min_size} exceeds label dims {label.shape}")
    fg = np.argwhere(label > 0)
    if len(fg):
        r0, c0 = fg.min(axis=0)
        r1, c1 = fg.max(axis=0) + 1
        r0 = max(int(r0) - margin, 0)
        c0 = max(int(c0) - margin, 0)
        r1 = min(int(r1) + margin, h)
        c1 = min(int(c1) + margin, w)
        bh, bw = r1 - r0, c1 - c0
        if bh < min_size:
            r0 -= (min_size - bh) // 2
            bh = min_size
        if bw < min_size:
            c0 -= (min_size - bw) // 2
            bw = min_size
        row0 = _clip_origin(r0, bh, h)
        col0 = _clip_origin(c0, bw, w)
    else:
        bh = bw = min_size
        row0 = _clip_origin(h // 2 - min_size // 2, bh, h)
        col0 = _clip_origin(w // 2 - min_size // 2, bw, w)
    return ROIBox(row0=row0, col0=col0, height=bh, width=bw, mode="dynamic")


def crop(map_, box):
    """Restrict a 2D (H, W) or per-class 3D/4D (..., H, W) map to the box.

    Works on numpy arrays and torch tensors alike; torch slices keep the
    autograd graph so gradients pass through unchanged inside the box and
    are zero outside it. The same box must be applied to target and
    prediction (computed once, from the target).
    """
    h, w = map_.shape[-2], map_.shape[-1]
    if box.row0 < 0 or box.col0 < 0 or box.row1 > h or box.col1 > w:
        raise ValueError(f"box {box} out of bounds for map of shape {tuple(map_.shape)}")
    return map_[..., box.row0:box.row1, box.col0:box.col1]
