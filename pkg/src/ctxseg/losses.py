"""Segmentation losses: composite global/local CE, the baseline losses and the adversarial terms.

All losses take per-class probability maps (softmax outputs), shaped
(C, H, W) or batched (N, C, H, W), with integer label maps of matching
spatial shape. Probabilities are clamped to [EPS, 1-EPS] before any log.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import torch

from ctxseg import roi as roi_mod

EPS = 1e-7
WEIGHT_CAP_RATIO = 100.0


@dataclass
class LossConfig:
    kind: str = "ce"  # ce | wce | dice | focal | context
    lambda_local: float = 1.0
    lambda_adv: float = 1.0
    reduction: str = "mean"  # mean | sum
    focal_gamma: float = 2.0
    class_weights: object = None  # optional length-C positive vector

    def validate(self):
        if self.kind not in ("ce", "wce", "dice", "focal", "context"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.reduction not in ("mean", "sum"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        if self.lambda_local < 0 or self.lambda_adv < 0 or self.focal_gamma < 0:
            raise ValueError("lambda_local, lambda_adv and focal_gamma must be >= 0")
        if self.class_weights is not None and np.any(np.asarray(self.class_weights) <= 0):
            raise ValueError("class_weights must be positive")


def _as_batched(pred, target):
    if pred.dim() == 3:
        pred = pred.unsqueeze(0)
        target = target.unsqueeze(0)
    if pred.dim() != 4 or target.dim() != 3:
        raise ValueError(f"expected (C,H,W)/(H,W) or (N,C,H,W)/(N,H,W), got {tuple(pred.shape)} / {tuple(target.shape)}")
    if pred.shape[-2:] != target.shape[-2:] or pred.shape[0] != target.shape[0]:
        raise ValueError(f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} do not align")
    return pred, target


def _reduce(per_pixel, reduction):
    if reduction == "sum":
        return per_pixel.sum()
    return per_pixel.mean()


def _target_log_probs(pred, target):
    logp = torch.log(pred.clamp(EPS, 1.0 - EPS))
    return logp.gather(1, target.unsqueeze(1).long()).squeeze(1)


def cross_entropy(pred, target, region=None, weights=None, reduction="mean"):
    """-sum_i sum_c w_c y_ic ln(p_ic) over the whole map or a ROIBox region.

    ``mean`` divides by the number of pixels in the evaluated domain;
    weights do not change the denominator.
    """
    pred, target = _as_batched(pred, target)
    if region is not None:
        pred = roi_mod.crop(pred, region)
        target = roi_mod.crop(target, region)
    nll = -_target_log_probs(pred, target)
    if weights is not None:
        w = torch.as_tensor(np.asarray(weights), dtype=pred.dtype, device=pred.device)
        nll = nll * w[target.long()]
    return _reduce(nll, reduction)


def context_ce(pred, target, box, lambda_local=1.0, reduction="mean"):
    """Global CE over the whole map plus lambda_local times CE over the box.

    The box must come from the target label (roi module); the same box is
    applied to prediction and target.
    """
    global_term = cross_entropy(pred, target, reduction=reduction)
    local_term = cross_entropy(pred, target, region=box, reduction=reduction)
    return global_term + lambda_local * local_term


def inverse_frequency_weights(frequencies, cap_ratio=WEIGHT_CAP_RATIO):
    """Inverse-frequency class weights, capped at cap_ratio x the smallest and normalized to mean 1."""
    freqs = np.asarray(frequencies, dtype=np.float64)
    if np.any(freqs < 0) or freqs.sum() <= 0:
        raise ValueError("frequencies must be nonnegative and not all zero")
    if np.any(freqs == 0):
        warnings.warn("zero-frequency class: its weight is clamped to the cap", stacklevel=2)
    inv = 1.0 / np.maximum(freqs, np.finfo(np.float64).tiny)
    inv = np.minimum(inv, cap_ratio * inv.min())
    return inv / inv.mean()


def weighted_ce(pred, target, class_weights, reduction="mean"):
    """Cross entropy with per-class weights (typically inverse_frequency_weights output)."""
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if class_weights.ndim != 1 or len(class_weights) != pred.shape[-3]:
        raise ValueError(f"class_weights must have length {pred.shape[-3]}, got {class_weights.shape}")
    return cross_entropy(pred, target, weights=class_weights, reduction=reduction)


def dice_loss(pred, target, smooth=1.0):
    """1 - mean soft Dice over foreground classes; value in [0, 1]."""
    pred, target = _as_batched(pred, target)
    c = pred.shape[1]
    onehot = torch.nn.functional.one_hot(target.long(), c).permute(0, 3, 1, 2).to(pred.dtype)
    p_fg = pred[:, 1:]
    y_fg = onehot[:, 1:]
    inter = (p_fg * y_fg).sum(dim=(2, 3))
    sums = p_fg.sum(dim=(2, 3)) + y_fg.sum(dim=(2, 3))
    dice = (2.0 * inter + smooth) / (sums + smooth)
    return 1.0 - dice.mean()


def focal_loss(pred, target, gamma=2.0, reduction="mean"):
    """CE with the (1-p)^gamma modulating factor suppressing easy pixels."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    pred, target = _as_batched(pred, target)
    p = pred.clamp(EPS, 1.0 - EPS)
    pt = p.gather(1, target.unsqueeze(1).long()).squeeze(1)
    per_pixel = -((1.0 - pt) ** gamma) * torch.log(pt)
    return _reduce(per_pixel, reduction)


def _clamp_scores(scores):
    return torch.as_tensor(scores).clamp(EPS, 1.0 - EPS)


def discriminator_loss(score_real, score_fake):
    """-ln(D(real)) - ln(1 - D(fake)), averaged over the batch."""
    real = _clamp_scores(score_real)
    fake = _clamp_scores(score_fake)
    return (-torch.log(real)).mean() + (-torch.log(1.0 - fake)).mean()


def generator_adversarial_loss(score_fake):
    """Non-saturating generator objective -ln(D(fake)), batch-averaged."""
    fake = _clamp_scores(score_fake)
    return (-torch.log(fake)).mean()


def seg_glgan_generator_loss(pred, target, score_fake, lambda_adv=1.0):
    """Per-pixel mean multi-class CE plus lambda_adv times the adversarial term."""
    mce = cross_entropy(pred, target, reduction="mean")
    return mce + lambda_adv * generator_adversarial_loss(score_fake)


def segmentation_loss(pred, target, config, box=None):
    """Dispatch the configured non-adversarial loss for one sample or batch.

    ``box`` is required for kind="context"; for batched inputs pass one box
    per sample (the local terms are averaged over the batch).
    """
    kind = config.kind
    if kind == "ce":
        return cross_entropy(pred, target, reduction=config.reduction)
    if kind == "wce":
        if config.class_weights is None:
            raise ValueError("loss kind 'wce' needs class_weights (see inverse_frequency_weights)")
        return weighted_ce(pred, target, config.class_weights, reduction=config.reduction)
    if kind == "dice":
        return dice_loss(pred, target)
    if kind == "focal":
        return focal_loss(pred, target, gamma=config.focal_gamma, reduction=config.reduction)
    if kind == "context":
        if box is None:
            raise ValueError("loss kind 'context' needs the ROI box computed from the target label")
        boxes = box if isinstance(box, (list, tuple)) else [box]
        if pred.dim() == 3:
            return context_ce(pred, target, boxes[0], config.lambda_local, config.reduction)
        if len(boxes) != pred.shape[0]:
            raise ValueError(f"need one box per sample: {len(boxes)} boxes for batch of {pred.shape[0]}")
        global_term = cross_entropy(pred, target, reduction=config.reduction)
        local = torch.stack([
            cross_entropy(pred[i], target[i], region=b, reduction=config.reduction)
            for i, b in enumerate(boxes)
        ])
        local_term = local.sum() if config.reduction == "sum" else local.mean()
        return global_term + config.lambda_local * local_term
    raise ValueError(f"unknown loss kind {kind!r}")
