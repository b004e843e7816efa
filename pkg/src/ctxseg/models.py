"""Generator (U-Net) and the two-branch context discriminator.

The discriminator scores a segmentation mask as real or fake from the
concatenation of a global feature vector (whole mask) and a local one
(ROI crop of the same mask): score = classifier(global || local). Both
branches emit 64 features; the classifier consumes the 128-vector.
"""
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ctxseg.losses import EPS

LEAKY_SLOPE = 0.2
FEATURE_DIM = 64


@dataclass
class GeneratorConfig:
    in_channels: int = 1
    num_classes: int = 2
    depth: int = 4
    base_channels: int = 32

    def validate(self):
        if self.depth < 3:
            raise ValueError(f"generator depth must be >= 3, got {self.depth}")
        if self.num_classes < 2 or self.base_channels < 1:
            raise ValueError("num_classes must be >= 2 and base_channels >= 1")


@dataclass
class ContextDiscriminatorConfig:
    num_classes: int = 2
    full_dims: tuple = (128, 128)
    roi_dims: object = (50, 50)  # (h, w) for the fixed head, None for variable ROI sizes
    head: str = "fully_connected"  # fully_connected | gap

    def validate(self):
        if self.head not in ("fully_connected", "gap"):
            raise ValueError(f"unknown discriminator head {self.head!r}")
        if self.roi_dims is None and self.head != "gap":
            raise ValueError("variable roi_dims requires the gap head")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")


def init_weights(module):
    """GAN-conventional init: normal(0, 0.02) for conv/FC weights, zero biases."""
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def parameter_count(model):
    """Exact number of trainable scalars."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


class _DoubleConv(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    """Standard encoder-decoder with skip connections and bilinear upsampling.

    Emits per-class logits; use generator_forward for softmax probabilities.
    Input H and W must be divisible by 2**depth.
    """

    def __init__(self, config):
        super().__init__()
        config.validate()
        self.config = config
        chans = [config.base_channels * 2 ** d for d in range(config.depth + 1)]
        self.inc = _DoubleConv(config.in_channels, chans[0])
        self.downs = nn.ModuleList(
            _DoubleConv(chans[d], chans[d + 1]) for d in range(config.depth)
        )
        self.ups = nn.ModuleList(
            _DoubleConv(chans[d + 1] + chans[d], chans[d]) for d in reversed(range(config.depth))
        )
        self.outc = nn.Conv2d(chans[0], config.num_classes, 1)
        self.apply(init_weights)

    def forward(self, x):
        h, w = x.shape[-2:]
        factor = 2 ** self.config.depth
        if h % factor or w % factor:
            raise ValueError(f"input {h}x{w} not divisible by 2**depth = {factor}")
        feats = [self.inc(x)]
        for down in self.downs:
            feats.append(down(F.max_pool2d(feats[-1], 2)))
        out = feats[-1]
        for i, up in enumerate(self.ups):
            skip = feats[-2 - i]
            out = F.interpolate(out, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            out = up(torch.cat([skip, out], dim=1))
        return self.outc(out)


def generator_forward(model, image):
    """Softmax probability map for a (1, H, W) image or an (N, 1, H, W) batch."""
    single = image.dim() == 3
    if single:
        image = image.unsqueeze(0)
    if image.dim() != 4 or image.shape[1] != model.config.in_channels:
        raise ValueError(f"expected (N, {model.config.in_channels}, H, W) input, got {tuple(image.shape)}")
    probs = torch.softmax(model(image), dim=1)
    return probs.squeeze(0) if single else probs


class _FeatureConvStack(nn.Module):
    """Shared conv trunk: 9x9/5x5/5x5 kernels, 32/64/64 channels, LeakyReLU + 2x2 avg pool."""

    def __init__(self, in_channels):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, 32, 9, padding=4)
        self.conv2 = nn.Conv2d(32, 64, 5, padding=2)
        self.conv3 = nn.Conv2d(64, 64, 5, padding=2)

    def forward(self, x):
        x = F.avg_pool2d(F.leaky_relu(self.conv1(x), LEAKY_SLOPE), 2)
        x = F.avg_pool2d(F.leaky_relu(self.conv2(x), LEAKY_SLOPE), 2)
        x = F.avg_pool2d(F.leaky_relu(self.conv3(x), LEAKY_SLOPE), 2)
        return x

    @staticmethod
    def out_hw(h, w):
        for _ in range(3):
            h, w = h // 2, w // 2
        return h, w


class GlobalFeatureExtractor(nn.Module):
    """Whole-mask branch: conv stack, then two FC layers down to a 64-vector."""

    def __init__(self, num_classes, full_dims):
        super().__init__()
        self.full_dims = tuple(full_dims)
        self.convs = _FeatureConvStack(num_classes)
        fh, fw = _FeatureConvStack.out_hw(*self.full_dims)
        self.fc1 = nn.Linear(64 * fh * fw, FEATURE_DIM)
        self.fc2 = nn.Linear(FEATURE_DIM, FEATURE_DIM)

    def forward(self, mask):
        if tuple(mask.shape[-2:]) != self.full_dims:
            raise ValueError(f"expected full mask of dims {self.full_dims}, got {tuple(mask.shape[-2:])}")
        x = self.convs(mask)
        x = torch.flatten(x, 1)
        x = F.leaky_relu(self.fc1(x), LEAKY_SLOPE)
        return self.fc2(x)


class LocalFeatureExtractor(nn.Module):
    """ROI branch: same conv stack; FC head sized to the ROI, or GAP for variable ROIs."""

    def __init__(self, num_classes, roi_dims=None, head="fully_connected"):
        super().__init__()
        if head not in ("fully_connected", "gap"):
            raise ValueError(f"unknown head {head!r}")
        if head == "fully_connected" and roi_dims is None:
            raise ValueError("fully_connected head needs fixed roi_dims")
        self.head = head
        self.roi_dims = tuple(roi_dims) if roi_dims is not None else None
        self.convs = _FeatureConvStack(num_classes)
        if head == "fully_connected":
            fh, fw = _FeatureConvStack.out_hw(*self.roi_dims)
            self.fc1 = nn.Linear(64 * fh * fw, FEATURE_DIM)
            self.fc2 = nn.Linear(FEATURE_DIM, FEATURE_DIM)
        else:
            self.fc = nn.Linear(FEATURE_DIM, FEATURE_DIM)

    def forward(self, roi_mask):
        if self.head == "fully_connected":
            if tuple(roi_mask.shape[-2:]) != self.roi_dims:
                raise ValueError(
                    f"fixed head expects ROI dims {self.roi_dims}, got {tuple(roi_mask.shape[-2:])}; "
                    "variable-size ROIs need the gap head"
                )
            x = self.convs(roi_mask)
            x = torch.flatten(x, 1)
            x = F.leaky_relu(self.fc1(x), LEAKY_SLOPE)
            return self.fc2(x)
        x = self.convs(roi_mask)
        x = F.adaptive_avg_pool2d(x, 1).flatten(1)
        return self.fc(x)


class ContextDiscriminator(nn.Module):
    """score = sigmoid(FC(global_features || local_features)), clamped into (0, 1)."""

    def __init__(self, config):
        super().__init__()
        config.validate()
        self.config = config
        self.psi_g = GlobalFeatureExtractor(config.num_classes, config.full_dims)
        self.psi_l = LocalFeatureExtractor(config.num_classes, config.roi_dims, config.head)
        self.psi_c = nn.Linear(2 * FEATURE_DIM, 1)
        self.apply(init_weights)

    def forward(self, full_mask, roi_mask):
        single = full_mask.dim() == 3
        if single:
            full_mask = full_mask.unsqueeze(0)
            roi_mask = roi_mask.unsqueeze(0)
        g = self.psi_g(full_mask)
        l = self.psi_l(roi_mask)
        score = torch.sigmoid(self.psi_c(torch.cat([g, l], dim=1))).squeeze(1)
        score = score.clamp(EPS, 1.0 - EPS)
        return score.squeeze(0) if single else score


def discriminator_forward(model, full_mask, roi_mask):
    """Confidence score in (0, 1) for a (full mask, ROI mask) pair or batch."""
    return model(full_mask, roi_mask)
