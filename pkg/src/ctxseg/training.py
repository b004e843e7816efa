"""Training loops: U-Net with any configured loss, and the adversarial global/local regime.

Both trainers are deterministic given the seed: model init draws from a
freshly seeded torch RNG and the per-epoch shuffle comes from a separate
numpy stream, so identical configs reproduce identical logs bit for bit.
ROI boxes are always computed from the target label of the current sample
and shared between target and prediction; no ROI is used at inference.
"""
import copy
import json
import time
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from ctxseg import losses as losses_mod
from ctxseg import roi as roi_mod
from ctxseg.data import class_frequencies
from ctxseg.metrics import evaluate_split
from ctxseg.models import (
    ContextDiscriminator,
    ContextDiscriminatorConfig,
    GeneratorConfig,
    UNet,
    generator_forward,
)

SATURATION_LEVEL = 1.0 - 1e-4
SATURATION_EPOCHS = 5


class ConfigError(Exception):
    """Invalid or inconsistent training configuration, raised before any compute."""


@dataclass
class TrainConfig:
    epochs: int = 150
    learning_rate: float = 1e-4
    batch_size: int = 8
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    loss: losses_mod.LossConfig = field(default_factory=losses_mod.LossConfig)
    roi: roi_mod.ROIConfig = field(default_factory=roi_mod.ROIConfig)
    model: GeneratorConfig = field(default_factory=GeneratorConfig)
    disc_head: str = "auto"  # auto | fully_connected | gap
    checkpoint_every: int = 0  # epochs; 0 disables periodic checkpoints
    eval_every: int = 1
    hd_percentile: float = 100.0
    out_dir: object = None  # write trainlog/checkpoints here when set
    config_echo: dict = field(default_factory=dict)

    def validate(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0, learning_rate > 0, batch_size >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        self.loss.validate()
        try:
            self.roi.validate()
            self.model.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.disc_head not in ("auto", "fully_connected", "gap"):
            raise ConfigError(f"unknown disc_head {self.disc_head!r}")


@dataclass
class EpochRecord:
    epoch: int
    losses: dict
    val_dice: object = None
    val_hd: object = None
    scores: dict = None  # discriminator score stats, adversarial regime only
    wall_time_s: float = 0.0


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    def to_jsonl(self):
        """One JSON object per epoch. Wall time stays out of the payload so
        identical runs serialize to identical bytes."""
        lines = []
        for r in self.records:
            payload = {"epoch": r.epoch, "losses": r.losses, "val_dice": r.val_dice, "val_hd": r.val_hd}
            if r.scores is not None:
                payload["scores"] = r.scores
            lines.append(json.dumps(payload, sort_keys=True))
        return "".join(line + "\n" for line in lines)

    def save(self, path):
        Path(path).write_text(self.to_jsonl())

    def best_val(self):
        """(epoch, dice) of the best validation mean Dice, or None if never evaluated.

        Ties keep the earliest epoch, matching the strict-improvement rule
        used for best-checkpoint tracking.
        """
        best = None
        for r in self.records:
            if r.val_dice is not None and (best is None or r.val_dice > best[1]):
                best = (r.epoch, r.val_dice)
        return best


def _stack_samples(samples):
    images = torch.from_numpy(np.stack([s.image for s in samples])[:, None].astype(np.float32))
    labels_np = np.stack([s.label for s in samples]).astype(np.int64)
    return images, torch.from_numpy(labels_np), labels_np


def _prepare_loss(config, split):
    loss_cfg = config.loss
    if loss_cfg.kind == "wce" and loss_cfg.class_weights is None:
        weights = losses_mod.inverse_frequency_weights(class_frequencies(split))
        loss_cfg = losses_mod.LossConfig(**{**asdict(loss_cfg), "class_weights": weights})
    return loss_cfg


def _eval_epoch(gen, split, config):
    if not split.val:
        return None, None
    report = evaluate_split(gen, split.val, split.num_classes, hd_percentile=config.hd_percentile)
    return report.mean_dice, report.mean_hd


def _maybe_checkpoint(config, epoch, gen, disc, improved):
    if config.out_dir is None:
        return
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.checkpoint_every and epoch % config.checkpoint_every == 0:
        save_checkpoint(out / f"epoch_{epoch:04d}.ckpt", gen, config.config_echo, disc)
    if improved:
        save_checkpoint(out / "best.ckpt", gen, config.config_echo, disc)


def train_segmenter(config, split):
    """Mini-batch training of the U-Net generator with the configured loss.

    Returns (generator, TrainLog); the returned generator carries the
    best-validation-Dice parameters when validation ran, else the final ones.
    """
    config.validate()
    if not split.train:
        raise ConfigError("train split is empty")
    torch.manual_seed(config.seed)
    gen = UNet(config.model)
    log = TrainLog()
    if config.epochs == 0:
        return gen, log

    loss_cfg = _prepare_loss(config, split)
    use_roi = loss_cfg.kind == "context"
    if use_roi:
        config.roi.validate(split.train[0].image.shape)
    opt = torch.optim.Adam(gen.parameters(), lr=config.learning_rate, betas=config.betas)
    images, labels, labels_np = _stack_samples(split.train)
    shuffle_rng = np.random.default_rng(config.seed)
    best_dice, best_state = -1.0, None

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(split.train))
        epoch_loss, n_batches = 0.0, 0
        gen.train()
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            probs = generator_forward(gen, images[idx])
            boxes = [config.roi.extract(labels_np[i]) for i in idx] if use_roi else None
            loss = losses_mod.segmentation_loss(probs, labels[idx], loss_cfg, boxes)
            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {n_batches}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach())
            n_batches += 1

        val_dice = val_hd = None
        if split.val and (epoch % config.eval_every == 0 or epoch == config.epochs):
            val_dice, val_hd = _eval_epoch(gen, split, config)
        improved = val_dice is not None and val_dice > best_dice
        if improved:
            best_dice = val_dice
            best_state = copy.deepcopy(gen.state_dict())
        log.append(EpochRecord(
            epoch=epoch,
            losses={"seg": epoch_loss / n_batches},
            val_dice=val_dice,
            val_hd=val_hd,
            wall_time_s=time.perf_counter() - t0,
        ))
        _maybe_checkpoint(config, epoch, gen, None, improved)

    if best_state is not None:
        gen.load_state_dict(best_state)
    if config.out_dir is not None:
        log.save(Path(config.out_dir) / "trainlog.jsonl")
    return gen, log


def _discriminator_config(config, split):
    full_dims = tuple(split.train[0].image.shape)
    if config.roi.mode == "dynamic":
        if config.disc_head == "fully_connected":
            raise ConfigError("dynamic ROI produces variable dims: the fully_connected head cannot accept them, use gap")
        head, roi_dims = "gap", None
    else:
        head = "fully_connected" if config.disc_head == "auto" else config.disc_head
        roi_dims = None if head == "gap" else tuple(config.roi.static_dims)
    return ContextDiscriminatorConfig(
        num_classes=split.num_classes, full_dims=full_dims, roi_dims=roi_dims, head=head,
    )


def _score_pairs(disc, full_batch, boxes):
    """Batch the global branch, loop the (possibly ragged) ROI crops."""
    g = disc.psi_g(full_batch)
    locals_ = torch.cat([
        disc.psi_l(roi_mod.crop(full_batch[i], box).unsqueeze(0))
        for i, box in enumerate(boxes)
    ])
    score = torch.sigmoid(disc.psi_c(torch.cat([g, locals_], dim=1))).squeeze(1)
    return score.clamp(losses_mod.EPS, 1.0 - losses_mod.EPS)


def train_seg_glgan(config, split):
    """Alternating optimization: one discriminator step, one generator step per batch.

    Real inputs are one-hot target masks, fake inputs the generator's
    softmax maps; both are routed as (full mask, ROI crop) pairs using the
    target-derived box. Returns (generator, discriminator, TrainLog).
    """
    config.validate()
    if not split.train:
        raise ConfigError("train split is empty")
    if config.loss.kind != "ce":
        raise ConfigError(f"the adversarial regime trains on multi-class CE, not loss kind {config.loss.kind!r}")
    disc_cfg = _discriminator_config(config, split)
    config.roi.validate(split.train[0].image.shape)

    torch.manual_seed(config.seed)
    gen = UNet(config.model)
    disc = ContextDiscriminator(disc_cfg)
    log = TrainLog()
    if config.epochs == 0:
        return gen, disc, log

    opt_g = torch.optim.Adam(gen.parameters(), lr=config.learning_rate, betas=config.betas)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.learning_rate, betas=config.betas)
    images, labels, labels_np = _stack_samples(split.train)
    num_classes = split.num_classes
    shuffle_rng = np.random.default_rng(config.seed)
    best_dice, best_state = -1.0, None
    saturated_streak = 0

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(split.train))
        sums = {"d": 0.0, "g_mce": 0.0, "g_adv": 0.0}
        real_score_sum, n_batches = 0.0, 0
        score_min, score_max = 1.0, 0.0
        gen.train()
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_labels = labels[idx]
            boxes = [config.roi.extract(labels_np[i]) for i in idx]
            probs = generator_forward(gen, images[idx])

            # discriminator step: real one-hot targets vs detached generator output
            real = torch.nn.functional.one_hot(batch_labels, num_classes).permute(0, 3, 1, 2).float()
            score_real = _score_pairs(disc, real, boxes)
            score_fake = _score_pairs(disc, probs.detach(), boxes)
            d_loss = losses_mod.discriminator_loss(score_real, score_fake)
            if not torch.isfinite(d_loss):
                raise RuntimeError(f"non-finite discriminator loss at epoch {epoch}, batch {n_batches}")
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

            # generator step against the updated discriminator
            score_gen = _score_pairs(disc, probs, boxes)
            mce = losses_mod.cross_entropy(probs, batch_labels, reduction="mean")
            adv = losses_mod.generator_adversarial_loss(score_gen)
            g_loss = mce + config.loss.lambda_adv * adv
            if not torch.isfinite(g_loss):
                raise RuntimeError(f"non-finite generator loss at epoch {epoch}, batch {n_batches}")
            opt_g.zero_grad()
            opt_d.zero_grad()
            g_loss.backward()
            opt_g.step()

            sums["d"] += float(d_loss.detach())
            sums["g_mce"] += float(mce.detach())
            sums["g_adv"] += float(adv.detach())
            real_score_sum += float(score_real.detach().mean())
            with torch.no_grad():
                batch_scores = torch.cat([score_real, score_fake, score_gen])
                score_min = min(score_min, float(batch_scores.min()))
                score_max = max(score_max, float(batch_scores.max()))
            n_batches += 1

        mean_real = real_score_sum / n_batches
        saturated_streak = saturated_streak + 1 if mean_real > SATURATION_LEVEL else 0
        if saturated_streak == SATURATION_EPOCHS:
            warnings.warn(
                f"discriminator saturated: mean real score > {SATURATION_LEVEL} for {SATURATION_EPOCHS} consecutive epochs",
                stacklevel=2,
            )

        val_dice = val_hd = None
        if split.val and (epoch % config.eval_every == 0 or epoch == config.epochs):
            val_dice, val_hd = _eval_epoch(gen, split, config)
        improved = val_dice is not None and val_dice > best_dice
        if improved:
            best_dice = val_dice
            best_state = copy.deepcopy(gen.state_dict())
        log.append(EpochRecord(
            epoch=epoch,
            losses={k: v / n_batches for k, v in sums.items()},
            val_dice=val_dice,
            val_hd=val_hd,
            scores={"real_mean": mean_real, "min": score_min, "max": score_max},
            wall_time_s=time.perf_counter() - t0,
        ))
        _maybe_checkpoint(config, epoch, gen, disc, improved)

    if best_state is not None:
        gen.load_state_dict(best_state)
    if config.out_dir is not None:
        log.save(Path(config.out_dir) / "trainlog.jsonl")
    return gen, disc, log


def predict(model, image):
    """Argmax label map for one whole image; no ROI enters inference."""
    was_training = model.training
    model.eval()
    with torch.no_grad():
        tensor = torch.as_tensor(np.asarray(image), dtype=torch.float32)
        if tensor.dim() == 2:
            tensor = tensor.unsqueeze(0)
        probs = generator_forward(model, tensor)
        label = probs.argmax(dim=0)
    if was_training:
        model.train()
    return label.numpy().astype(np.int64)


def save_checkpoint(path, generator, config_echo=None, discriminator=None):
    """Single-archive checkpoint: config echo plus named parameter tensors.

    Generator tensors are stored under gen.*; discriminator tensors keep
    their psi_g.* / psi_l.* / psi_c.* names.
    """
    meta = {"generator": _jsonable(asdict(generator.config))}
    params = {f"gen.{k}": v for k, v in generator.state_dict().items()}
    if discriminator is not None:
        meta["discriminator"] = _jsonable(asdict(discriminator.config))
        params.update(discriminator.state_dict())
    torch.save({"config": config_echo or {}, "model": meta, "params": params}, path)


def load_checkpoint(path):
    """Rebuild (generator, discriminator-or-None, config_echo) from a checkpoint file."""
    payload = torch.load(path, weights_only=True)
    gen_meta = dict(payload["model"]["generator"])
    gen = UNet(GeneratorConfig(**gen_meta))
    gen.load_state_dict({k[len("gen."):]: v for k, v in payload["params"].items() if k.startswith("gen.")})
    gen.eval()
    disc = None
    if "discriminator" in payload["model"]:
        disc_meta = dict(payload["model"]["discriminator"])
        disc_meta["full_dims"] = tuple(disc_meta["full_dims"])
        if disc_meta.get("roi_dims") is not None:
            disc_meta["roi_dims"] = tuple(disc_meta["roi_dims"])
        disc = ContextDiscriminator(ContextDiscriminatorConfig(**disc_meta))
        disc.load_state_dict({k: v for k, v in payload["params"].items() if not k.startswith("gen.")})
        disc.eval()
    return gen, disc, payload["config"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, tuple):
        return list(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
