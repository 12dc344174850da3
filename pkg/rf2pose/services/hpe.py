"""
Encoder-decoder pose estimator trained with pose loss plus counterfactual
regularization.

The encoder is a shape-preserving 1D U-Net producing v with the signal's
shape; the decoder runs two streams of attention blocks (over time, and over
channels via transposition), pools each stream and regresses N x 3 joints.
"""
import copy
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.utils.data import DataLoader, TensorDataset
from tqdm import tqdm

from ..config.settings import (DECODER_HIDDEN, DECODER_POOL, DECODER_WIDTH, ENCODER_FILTERS, ENCODER_KERNELS,
                               LEAKY_SLOPE, SHOW_PROGRESS, STREAM_A, STREAM_B)
from ..core.counterfactual import DifferenceAggregator
from ..core.errors import (ConfigurationError, DependencyError, DivergenceError, NumericError,
                           ValidationError)
from ..core.models import RFSample
from ..utils.helpers import chunk_list, log_info, set_seed


def _check_signal(x: torch.Tensor, signal_shape: Tuple[int, int]) -> Tuple[torch.Tensor, bool]:
    if x.dim() == 2:
        x, unbatched = x.unsqueeze(0), True
    else:
        unbatched = False
    if x.dim() != 3 or tuple(x.shape[1:]) != tuple(signal_shape):
        raise ValidationError(f"Expected signals of shape (B, {signal_shape[0]}, {signal_shape[1]}), "
                              f"got {tuple(x.shape)}")
    return x, unbatched


class Encoder(nn.Module):
    """
    Three same-padded convolutions followed by three transposed convolutions
    with mirror-symmetric additive skips. The last layer returns to the
    signal channel count.
    """

    def __init__(self, signal_shape: Tuple[int, int], filters: int = ENCODER_FILTERS,
                 kernels: Sequence[int] = ENCODER_KERNELS):
        super().__init__()
        if len(kernels) != 3 or any(k % 2 == 0 for k in kernels):
            raise ConfigurationError(f"Encoder needs three odd kernel sizes, got {tuple(kernels)}")
        self.signal_shape = tuple(signal_shape)
        channels = self.signal_shape[0]
        k1, k2, k3 = kernels
        self.conv1 = nn.Conv1d(channels, filters, k1, padding=k1 // 2)
        self.conv2 = nn.Conv1d(filters, filters, k2, padding=k2 // 2)
        self.conv3 = nn.Conv1d(filters, filters, k3, padding=k3 // 2)
        self.deconv1 = nn.ConvTranspose1d(filters, filters, k3, padding=k3 // 2)
        self.deconv2 = nn.ConvTranspose1d(filters, filters, k2, padding=k2 // 2)
        self.deconv3 = nn.ConvTranspose1d(filters, channels, k1, padding=k1 // 2)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        e1 = self.act(self.conv1(x))
        e2 = self.act(self.conv2(e1))
        e3 = self.act(self.conv3(e2))
        d1 = self.act(self.deconv1(e3))
        d2 = self.act(self.deconv2(d1 + e2))
        return self.deconv3(d2 + e1)


class AttentionBlock(nn.Module):
    """Multi-head self-attention followed by a dilated convolution, both residual."""

    def __init__(self, width: int, heads: int, kernel_size: int, dilation: int):
        super().__init__()
        if width % heads:
            raise ConfigurationError(f"Decoder width {width} is not divisible by {heads} heads")
        self.attention = nn.MultiheadAttention(width, heads, batch_first=True)
        self.conv = nn.Conv1d(width, width, kernel_size, dilation=dilation,
                              padding=dilation * (kernel_size - 1) // 2)
        self.norm1 = nn.LayerNorm(width)
        self.norm2 = nn.LayerNorm(width)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.last_attention: Optional[torch.Tensor] = None

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        attended, weights = self.attention(tokens, tokens, tokens, need_weights=True,
                                           average_attn_weights=False)
        self.last_attention = weights.detach()
        tokens = self.norm1(tokens + attended)
        conv = self.act(self.conv(tokens.transpose(1, 2))).transpose(1, 2)
        return self.norm2(tokens + conv)


class Decoder(nn.Module):
    """Two-stream attention decoder regressing N x 3 joint positions."""

    def __init__(self, signal_shape: Tuple[int, int], joint_count: int, width: int = DECODER_WIDTH,
                 pool: int = DECODER_POOL, hidden: int = DECODER_HIDDEN,
                 stream_a: Mapping = STREAM_A, stream_b: Mapping = STREAM_B):
        super().__init__()
        self.signal_shape = tuple(signal_shape)
        self.joint_count = joint_count
        channels, length = self.signal_shape
        self.project_a = nn.Linear(channels, width)
        self.project_b = nn.Linear(length, width)
        self.stream_a = self._make_stream(width, stream_a)
        self.stream_b = self._make_stream(width, stream_b)
        self.pool = nn.AdaptiveAvgPool1d(pool)
        self.head = nn.Sequential(
            nn.Linear(2 * width * pool, hidden),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Linear(hidden, joint_count * 3),
        )

    @staticmethod
    def _make_stream(width: int, spec: Mapping) -> nn.ModuleList:
        kernels, dilations = tuple(spec["kernels"]), tuple(spec["dilations"])
        if len(kernels) != len(dilations):
            raise ConfigurationError("Each decoder block needs one kernel size and one dilation")
        return nn.ModuleList(AttentionBlock(width, spec["heads"], k, d) for k, d in zip(kernels, dilations))

    @property
    def blocks(self) -> List[AttentionBlock]:
        return list(self.stream_a) + list(self.stream_b)

    def _run(self, tokens: torch.Tensor, stream: nn.ModuleList, offset: int) -> torch.Tensor:
        for i, block in enumerate(stream):
            tokens = block(tokens)
            if not torch.isfinite(tokens).all():
                raise NumericError("Non-finite activations in decoder block", layer=offset + i)
        return self.pool(tokens.transpose(1, 2)).flatten(1)

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        a = self._run(self.project_a(v.transpose(1, 2)), self.stream_a, 0)
        b = self._run(self.project_b(v), self.stream_b, len(self.stream_a))
        out = self.head(torch.cat([a, b], dim=1))
        if not torch.isfinite(out).all():
            raise NumericError("Non-finite activations in decoder head", layer=len(self.blocks))
        return out.view(-1, self.joint_count, 3)


class PoseEstimator(nn.Module):
    """
    Encoder, decoder and difference aggregator trained together.

    With ``decoder_only`` the encoder is skipped (v = x) and only the pose
    loss applies.
    """

    def __init__(self, signal_shape: Tuple[int, int], joint_count: int, part_count: int,
                 encoder_filters: int = ENCODER_FILTERS, encoder_kernels: Sequence[int] = ENCODER_KERNELS,
                 decoder_width: int = DECODER_WIDTH, decoder_pool: int = DECODER_POOL,
                 decoder_hidden: int = DECODER_HIDDEN, stream_a: Mapping = STREAM_A,
                 stream_b: Mapping = STREAM_B, decoder_only: bool = False):
        super().__init__()
        self.signal_shape = tuple(signal_shape)
        self.joint_count = joint_count
        self.decoder_only = decoder_only
        self.encoder = None if decoder_only else Encoder(signal_shape, encoder_filters, encoder_kernels)
        self.decoder = Decoder(signal_shape, joint_count, decoder_width, decoder_pool, decoder_hidden,
                               stream_a, stream_b)
        self.aggregator = DifferenceAggregator(part_count)
        if self.encoder is not None:
            with torch.no_grad():
                probe = self.encoder(torch.zeros(1, *self.signal_shape))
            if tuple(probe.shape[1:]) != self.signal_shape:
                raise ConfigurationError(
                    f"Encoder output {tuple(probe.shape[1:])} does not match signal shape {self.signal_shape}")

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        v = x if self.encoder is None else self.encoder(x)
        return self.decoder(v), v


def encode(model: PoseEstimator, x: torch.Tensor) -> torch.Tensor:
    """v = f_en(x); the identity for decoder-only models."""
    x, unbatched = _check_signal(x, model.signal_shape)
    v = x if model.encoder is None else model.encoder(x)
    return v[0] if unbatched else v


def decode(model: PoseEstimator, v: torch.Tensor) -> torch.Tensor:
    v, unbatched = _check_signal(v, model.signal_shape)
    y = model.decoder(v)
    return y[0] if unbatched else y


def infer_pose(model: PoseEstimator, x: torch.Tensor) -> torch.Tensor:
    """Deterministic forward pass in eval mode; accepts (C, L) or (B, C, L)."""
    model.eval()
    with torch.no_grad():
        return decode(model, encode(model, x))


def loss_terms(y_hat: torch.Tensor, y: torch.Tensor, v: Optional[torch.Tensor], r: Optional[torch.Tensor],
               lam: float) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Return (total, pose, regularization) with total = pose + lam * regularization."""
    if lam < 0:
        raise ConfigurationError(f"Regularization weight must be non-negative, got {lam}")
    if y_hat.shape != y.shape:
        raise ValidationError(f"Pose shapes differ: {tuple(y_hat.shape)} vs {tuple(y.shape)}")
    pose = F.mse_loss(y_hat, y)
    if v is None or r is None:
        reg = torch.zeros((), dtype=pose.dtype, device=pose.device)
    else:
        if v.shape != r.shape:
            raise ValidationError(f"Feature shapes differ: {tuple(v.shape)} vs {tuple(r.shape)}")
        reg = F.mse_loss(v, r)
    return pose + lam * reg, pose, reg


def combined_loss(y_hat: torch.Tensor, y: torch.Tensor, v: Optional[torch.Tensor], r: Optional[torch.Tensor],
                  lam: float) -> torch.Tensor:
    """MSE(y_hat, y) + lam * MSE(v, r)."""
    return loss_terms(y_hat, y, v, r, lam)[0]


def _stack_samples(samples: Sequence[RFSample], dtype=torch.float32) -> Tuple[torch.Tensor, torch.Tensor]:
    signals = torch.as_tensor(np.stack([s.signal for s in samples]), dtype=dtype)
    poses = torch.as_tensor(np.stack([s.pose for s in samples]), dtype=dtype)
    return signals, poses


def _validation_loss(model: PoseEstimator, signals: torch.Tensor, poses: torch.Tensor,
                     batch_size: int, device: str) -> float:
    model.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(signals), batch_size):
            x = signals[start:start + batch_size].to(device)
            y = poses[start:start + batch_size].to(device)
            y_hat, _ = model(x)
            total += F.mse_loss(y_hat, y, reduction="sum").item()
    return total / poses.numel()


def train_hpe(model: PoseEstimator, train_samples: Sequence[RFSample], validation_samples: Sequence[RFSample],
              store=None, lam: float = 1.0, lr: float = 1e-4, epochs: int = 200, batch_size: int = 32,
              seed: int = 0, device: str = "cpu", expected_hash: Optional[str] = None,
              force: bool = False) -> Tuple[PoseEstimator, List[Dict[str, float]]]:
    """
    Train with Adam on pose loss plus lam times the counterfactual
    regularization, keeping the weights with the lowest validation pose loss.

    Args:
        store: TargetStore holding the per-part differences of every training
            sample; required when lam > 0 and the encoder is present
        expected_hash: Targets configuration hash the store must carry

    Returns:
        (model with best weights loaded, per-epoch history)
    """
    if lam < 0:
        raise ConfigurationError(f"Regularization weight must be non-negative, got {lam}")
    history: List[Dict[str, float]] = []
    if epochs == 0:
        return model, history
    if not train_samples:
        raise ValidationError("Training split is empty")
    if not validation_samples:
        raise ValidationError("A validation split is required to select the best model")

    use_targets = lam > 0 and not model.decoder_only
    if model.decoder_only and lam > 0:
        log_info("Decoder-only model: training with the pose loss only")
    set_seed(seed)
    signals, poses = _stack_samples(train_samples)
    if use_targets:
        if store is None:
            raise DependencyError("Counterfactual regularization needs a regularization-target store")
        if expected_hash is not None:
            store.check_hash(expected_hash, force=force)
        targets = torch.as_tensor(np.stack([store.require_target(s.sample_id) for s in train_samples]))
        if targets.shape[1] != model.aggregator.part_count or tuple(targets.shape[2:]) != model.signal_shape:
            raise DependencyError(f"Stored targets of shape {tuple(targets.shape[1:])} do not fit the model")
    else:
        targets = torch.zeros(len(train_samples), 1)
    val_signals, val_poses = _stack_samples(validation_samples)

    model.to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    loader = DataLoader(TensorDataset(signals, poses, targets), batch_size=batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(seed))

    best_loss, best_state = float("inf"), copy.deepcopy(model.state_dict())
    for epoch in tqdm(range(1, epochs + 1), desc="hpe", disable=not SHOW_PROGRESS):
        model.train()
        sums = np.zeros(3)
        batches = 0
        for step, (x, y, per_part) in enumerate(loader, start=1):
            x, y = x.to(device), y.to(device)
            y_hat, v = model(x)
            r = model.aggregator(per_part.to(device)) if use_targets else None
            total, pose, reg = loss_terms(y_hat, y, v if use_targets else None, r, lam)
            if not torch.isfinite(total):
                raise DivergenceError("Estimator loss diverged",
                                      epoch=epoch, step=step)
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            sums += (total.item(), pose.item(), reg.item())
            batches += 1
        val_loss = _validation_loss(model, val_signals, val_poses, batch_size, device)
        train_loss, train_pose, train_reg = sums / max(batches, 1)
        history.append({"epoch": epoch, "train_loss": train_loss, "train_pose": train_pose,
                        "train_reg": train_reg, "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss, best_state = val_loss, copy.deepcopy(model.state_dict())
        log_info(f"hpe epoch {epoch}: train {train_loss:.6f} (pose {train_pose:.6f}, reg {train_reg:.6f}), "
                 f"val {val_loss:.6f}")

    model.load_state_dict(best_state)
    model.eval()
    log_info(f"Selected estimator weights with validation loss {best_loss:.6f}")
    return model, history


def predict_poses(model: PoseEstimator, samples: Sequence[RFSample], batch_size: int = 32,
                  device: str = "cpu") -> Dict[str, np.ndarray]:
    """Map sample id to its predicted N x 3 pose."""
    model.to(device)
    predictions: Dict[str, np.ndarray] = {}
    for chunk in chunk_list(list(samples), batch_size):
        x = torch.as_tensor(np.stack([s.signal for s in chunk]), dtype=torch.float32, device=device)
        y_hat = infer_pose(model, x).cpu().numpy()
        for sample, pose in zip(chunk, y_hat):
            predictions[sample.sample_id] = pose.astype(np.float64)
    return predictions
