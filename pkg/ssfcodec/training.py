"""
Rate-distortion objective, the training loop and lambda sweeps
"""
import os
import math
import time
import logging
from dataclasses import dataclass, fields, asdict, replace
from typing import List, NamedTuple, Optional, Sequence

import pandas as pd
import torch
from dotenv import dotenv_values

from ssfcodec.checkpoint import load_checkpoint, persistent_state, save_checkpoint
from ssfcodec.codec.models import CodecConfig, VideoCodec, build_codec
from ssfcodec.codec.pipeline import code_iframe, code_pframe
from ssfcodec.data import SequenceDataset
from ssfcodec.errors import ConfigurationError, InvalidArgumentError, TrainingError
from ssfcodec.transforms.networks import TransformFamily, count_parameters

logger = logging.getLogger(__name__)

LOG_COLUMNS = ['step', 'loss', 'D', 'R', 'lr', 'wall_time']
KEY_ALIASES = {'lambda': 'lmbda'}


@dataclass
class TrainConfig:
    lmbda: float = 0.01
    epochs: int = 2
    batch_size: int = 8
    crop: int = 64
    lr_initial: float = 1e-4
    lr_final: float = 1.2e-6
    seed: int = 0
    chunk_length: int = 4
    family: str = 'flawin'
    embed_dim: int = 16
    latent_channels: int = 32
    hyper_channels: int = 32
    steps_per_epoch: int = 250
    max_steps: Optional[int] = None
    grad_clip: float = 1.0
    log_every: int = 25
    detach_reference: bool = False

    def __post_init__(self):
        if not self.lmbda >= 0:
            raise ConfigurationError(f"lambda must be non-negative, got {self.lmbda}")
        if self.chunk_length < 1:
            raise ConfigurationError(f"chunk_length must be at least 1, got {self.chunk_length}")
        for name in ('epochs', 'batch_size', 'crop', 'steps_per_epoch', 'log_every'):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr_initial <= 0 or self.lr_final < 0 or self.lr_final > self.lr_initial:
            raise ConfigurationError("Learning rates must satisfy 0 <= lr_final <= lr_initial, lr_initial > 0")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigurationError("max_steps must be positive when set")
        try:
            self.family = TransformFamily(self.family).value
        except ValueError:
            raise ConfigurationError(f"Unknown transform family '{self.family}'")

    @property
    def total_steps(self) -> int:
        steps = self.epochs * self.steps_per_epoch
        return min(steps, self.max_steps) if self.max_steps else steps

    @classmethod
    def from_profile(cls, profile, **overrides) -> 'TrainConfig':
        values = dict(
            lmbda=profile.LAMBDA, epochs=profile.EPOCHS, batch_size=profile.BATCH_SIZE,
            crop=profile.CROP, lr_initial=profile.LR_INITIAL, lr_final=profile.LR_FINAL,
            seed=profile.SEED, chunk_length=profile.CHUNK_LENGTH, family=profile.FAMILY,
            embed_dim=profile.EMBED_DIM, latent_channels=profile.LATENT_CHANNELS,
            hyper_channels=profile.HYPER_CHANNELS, steps_per_epoch=profile.STEPS_PER_EPOCH,
            grad_clip=profile.GRAD_CLIP, log_every=profile.LOG_EVERY,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_file(cls, path: str, base: Optional['TrainConfig'] = None) -> 'TrainConfig':
        """Flat key=value file; keys are field names ('lambda' is accepted for lmbda)"""
        if not os.path.isfile(path):
            raise ConfigurationError(f"Config file not found: {path}")
        base = base or cls()
        known = {f.name: f for f in fields(cls)}
        changes = {}
        for key, raw in dotenv_values(path).items():
            name = KEY_ALIASES.get(key.strip().lower(), key.strip().lower())
            if name not in known:
                raise ConfigurationError(f"Unknown config key '{key}' in {path}")
            changes[name] = _coerce(name, raw, getattr(base, name))
        return replace(base, **changes)

    def codec_config(self, profile=None) -> CodecConfig:
        overrides = dict(family=self.family, embed_dim=self.embed_dim,
                         latent_channels=self.latent_channels, hyper_channels=self.hyper_channels)
        if profile is None:
            return CodecConfig(**overrides)
        return CodecConfig.from_profile(profile, **overrides)

    def to_dict(self):
        return asdict(self)


def _coerce(name, raw, current):
    if raw is None or raw == '':
        if name == 'max_steps':
            return None
        raise ConfigurationError(f"Config key '{name}' has no value")
    try:
        if isinstance(current, bool):
            lowered = raw.strip().lower()
            if lowered not in ('true', 'false', '1', '0', 'on', 'off', 'yes', 'no'):
                raise ValueError(raw)
            return lowered in ('true', '1', 'on', 'yes')
        if name == 'max_steps' or isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigurationError(f"Config key '{name}' has invalid value '{raw}'")


class RdTerms(NamedTuple):
    loss: torch.Tensor
    distortion: torch.Tensor
    rate: torch.Tensor


def rd_loss(chunk: torch.Tensor, codec: VideoCodec, lmbda: float,
            generator: Optional[torch.Generator] = None, detach_reference: bool = False) -> RdTerms:
    """
    loss = D + lambda * R over a (B, T, C, H, W) chunk: frame 0 intra, the rest
    predicted from the previous reconstruction. D sums per-frame MSE; R is the
    chunk's bits divided by B*H*W.
    """
    if chunk.dim() != 5:
        raise InvalidArgumentError(f"Expected a (B, T, C, H, W) chunk, got {tuple(chunk.shape)}")
    batch, length, _, height, width = chunk.shape
    if length < 1:
        raise InvalidArgumentError("Chunk must hold at least one frame")

    intra = code_iframe(chunk[:, 0], codec.iframe, 'train', generator)
    distortion = torch.mean((chunk[:, 0] - intra.x_hat) ** 2)
    bits = intra.rate
    reference = intra.x_hat
    for t in range(1, length):
        predicted = code_pframe(chunk[:, t], reference, codec.pframe, 'train', generator, detach_reference)
        distortion = distortion + torch.mean((chunk[:, t] - predicted.x_hat) ** 2)
        bits = bits + predicted.rate_motion + predicted.rate_residual
        reference = predicted.x_hat
    rate = bits / (batch * height * width)
    return RdTerms(distortion + lmbda * rate, distortion, rate)


class TrainResult(NamedTuple):
    codec: VideoCodec
    checkpoint_path: Optional[str]
    history: pd.DataFrame


def _append_log(rows, log_path):
    if not log_path or not rows:
        return
    frame = pd.DataFrame(rows, columns=LOG_COLUMNS)
    frame.to_csv(log_path, mode='a', header=not os.path.exists(log_path), index=False)


def _snapshot(codec, batch, terms, step, out_path) -> str:
    path = f"{out_path or 'ssf_checkpoint.pt'}.nonfinite.pt"
    torch.save({
        'step': step,
        'batch': batch.detach().cpu(),
        'loss': float(terms.loss), 'D': float(terms.distortion), 'R': float(terms.rate),
        'config': codec.config.to_dict(),
        'state_dict': {k: v.detach().cpu() for k, v in persistent_state(codec).items()},
    }, path)
    return path


def train(dataset: SequenceDataset, cfg: TrainConfig, out_path: Optional[str] = None,
          log_path: Optional[str] = None, codec: Optional[VideoCodec] = None, profile=None) -> TrainResult:
    """Joint end-to-end optimisation of every sub-network on random chunks"""
    torch.manual_seed(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    codec = codec or build_codec(cfg.codec_config(profile), seed=cfg.seed)
    multiple = codec.config.frame_multiple
    if cfg.crop % multiple:
        raise ConfigurationError(f"crop {cfg.crop} must be divisible by the model's frame multiple {multiple}")
    chunks = SequenceDataset(dataset.frames, 'train', cfg.chunk_length, dataset.gop_size, dataset.files, dataset.root)

    optimizer = torch.optim.Adam([p for p in codec.parameters() if p.requires_grad], lr=cfg.lr_initial)
    total = cfg.total_steps
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=total, eta_min=cfg.lr_final)
    if log_path and os.path.exists(log_path):
        os.remove(log_path)

    logger.info(f"Training {codec.family} codec ({count_parameters(codec)} parameters) "
                f"for {total} steps at lambda={cfg.lmbda}")
    codec.train()
    history, pending = [], []
    started = time.time()
    for step in range(total):
        batch = chunks.sample_batch(cfg.batch_size, cfg.crop, generator)
        terms = rd_loss(batch, codec, cfg.lmbda, generator, cfg.detach_reference)
        if not torch.isfinite(terms.loss):
            snapshot = _snapshot(codec, batch, terms, step, out_path)
            _append_log(pending, log_path)
            raise TrainingError(f"Non-finite loss {float(terms.loss)} at step {step}; snapshot at {snapshot}",
                                snapshot)

        lr = optimizer.param_groups[0]['lr']
        optimizer.zero_grad()
        terms.loss.backward()
        if cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(codec.parameters(), cfg.grad_clip)
        optimizer.step()
        scheduler.step()

        row = [step, float(terms.loss), float(terms.distortion), float(terms.rate), lr, time.time() - started]
        history.append(row)
        pending.append(row)
        if step % cfg.log_every == 0 or step == total - 1:
            logger.info(f"step {step}: loss={row[1]:.6f} D={row[2]:.6f} R={row[3]:.4f} lr={lr:.3g}")
            _append_log(pending, log_path)
            pending = []

    _append_log(pending, log_path)
    codec.eval()
    path = None
    if out_path:
        path = save_checkpoint(codec, out_path, metadata={
            'lambda': cfg.lmbda, 'train_config': cfg.to_dict(), 'steps': total,
        })
    return TrainResult(codec, path, pd.DataFrame(history, columns=LOG_COLUMNS))


def audit_gradients(codec: VideoCodec, batches: Sequence[torch.Tensor], lmbda: float,
                    generator: Optional[torch.Generator] = None) -> List[str]:
    """Names of trainable parameters that receive no non-zero gradient on any of the batches"""
    codec.train()
    codec.zero_grad()
    touched = set()
    for batch in batches:
        rd_loss(batch, codec, lmbda, generator).loss.backward()
        for name, parameter in codec.named_parameters():
            if parameter.grad is not None and bool(torch.any(parameter.grad != 0)):
                touched.add(name)
        codec.zero_grad()
    return [name for name, parameter in codec.named_parameters()
            if parameter.requires_grad and name not in touched]


def checkpoint_name(family: str, lmbda: float) -> str:
    return f"ssf_{family}_lambda_{lmbda:g}.pt"


class SweepResult(NamedTuple):
    checkpoints: List[str]
    points: list
    table: pd.DataFrame


def sweep(dataset: SequenceDataset, lambdas: Sequence[float], cfg: TrainConfig, out_dir: str,
          eval_dataset: Optional[SequenceDataset] = None, profile=None) -> SweepResult:
    """One model per lambda, trained from scratch; existing checkpoints are reused"""
    from ssfcodec.evaluation import eval_model, points_table

    if not lambdas:
        raise ConfigurationError("Sweep needs at least one lambda")
    os.makedirs(out_dir, exist_ok=True)
    eval_dataset = eval_dataset or dataset.with_mode('test')
    checkpoints, points = [], []
    for lmbda in lambdas:
        path = os.path.join(out_dir, checkpoint_name(cfg.family, lmbda))
        if os.path.exists(path):
            logger.warning(f"Resuming sweep: reusing existing checkpoint {path}")
            codec, _ = load_checkpoint(path)
        else:
            log_path = os.path.splitext(path)[0] + '.csv'
            codec = train(dataset, replace(cfg, lmbda=lmbda), path, log_path, profile=profile).codec
        checkpoints.append(path)
        points.append(eval_model(codec, eval_dataset, lmbda=lmbda).point)

    ordered = sorted(points, key=lambda p: p.lmbda)
    if len(ordered) > 1 and ordered[-1].bpp > ordered[0].bpp:
        logger.info(f"bpp at lambda={ordered[-1].lmbda:g} exceeds bpp at lambda={ordered[0].lmbda:g}")
    table = points_table(points)
    table.to_csv(os.path.join(out_dir, 'rd_points.csv'), index=False)
    return SweepResult(checkpoints, points, table)


def parameter_report(codec: VideoCodec) -> pd.DataFrame:
    """Trainable parameter counts per sub-network, with a total row"""
    rows = []
    for name, model in codec.autoencoders():
        counts = model.parameter_counts()
        rows.append(dict(network=name, **counts, total=sum(counts.values())))
    frame = pd.DataFrame(rows)
    totals = frame.drop(columns='network').sum()
    total_row = pd.DataFrame([dict(network='total', **totals.to_dict())])
    return pd.concat([frame, total_row], ignore_index=True)
