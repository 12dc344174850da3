"""
Conditional Wasserstein GAN used as a one-step signal generator.

The critic objective is the Wasserstein term plus a gradient penalty on
random interpolates between real and generated signals.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import torch
from torch import nn
from torch.utils.data import DataLoader, TensorDataset
from tqdm import tqdm

from ..config.settings import (
    BACKBONE_FILTERS,
    BACKBONE_KERNELS,
    DISCRIMINATOR_FILTERS,
    EMBED_WIDTH,
    LEAKY_SLOPE,
    SHOW_PROGRESS
)
from ..core.errors import DivergenceError, ValidationError
from ..utils.helpers import log_debug, log_info
from .backbone import ResidualBackbone, broadcast_condition, draw_noise

Critic = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


class Generator(nn.Module):
    """g_theta(z, c): noise with the signal's shape plus a condition vector."""

    def __init__(self, signal_shape: Tuple[int, int], cond_width: int,
                 embed_width: int = EMBED_WIDTH,
                 filters: Sequence[int] = BACKBONE_FILTERS,
                 kernels: Sequence[int] = BACKBONE_KERNELS):
        super().__init__()
        self.signal_shape = tuple(signal_shape)
        self.cond_proj = nn.Linear(cond_width, embed_width)
        self.backbone = ResidualBackbone(self.signal_shape[0], embed_width, filters, kernels)

    def forward(self, z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        c = broadcast_condition(c, z.shape[0]).to(z.dtype)
        return self.backbone(z, self.cond_proj(c))


class Discriminator(nn.Module):
    """
    f_omega(x, c): one convolution over the signal with the condition
    broadcast along the length axis and concatenated as extra channels,
    followed by a scalar head.
    """

    def __init__(self, signal_shape: Tuple[int, int], cond_width: int,
                 filters: int = DISCRIMINATOR_FILTERS, kernel_size: int = 3):
        super().__init__()
        channels, length = signal_shape
        self.signal_shape = tuple(signal_shape)
        self.conv = nn.Conv1d(channels + cond_width, filters, kernel_size, padding=kernel_size // 2)
        self.act = nn.LeakyReLU(LEAKY_SLOPE)
        self.head = nn.Linear(filters * length, 1)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        c = broadcast_condition(c, x.shape[0]).to(x.dtype)
        c = c.unsqueeze(-1).expand(-1, -1, x.shape[-1])
        features = self.act(self.conv(torch.cat([x, c], dim=1)))
        return self.head(features.flatten(1)).squeeze(-1)


def _check_pair(x_real: torch.Tensor, x_fake: torch.Tensor) -> None:
    if x_real.shape != x_fake.shape:
        raise ValidationError(
            f"Real signal shape {tuple(x_real.shape)} differs from generated shape {tuple(x_fake.shape)}")


def gradient_penalty(disc: Critic, x_real: torch.Tensor, x_fake: torch.Tensor, c: torch.Tensor,
                     alpha: Optional[torch.Tensor] = None,
                     generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Mean of (||grad_x f(x_hat, c)|| - 1)^2 over interpolates x_hat."""
    _check_pair(x_real, x_fake)
    if alpha is None:
        alpha = torch.rand((x_real.shape[0],) + (1,) * (x_real.dim() - 1), generator=generator,
                           dtype=x_real.dtype).to(x_real.device)
    interpolates = alpha * x_real + (1 - alpha) * x_fake
    if not interpolates.requires_grad:
        interpolates = interpolates.detach().requires_grad_(True)
    scores = disc(interpolates, c)
    grads = torch.autograd.grad(scores.sum(), interpolates, create_graph=True)[0]
    return ((grads.flatten(1).norm(2, dim=1) - 1) ** 2).mean()


def critic_loss(disc: Critic, x_real: torch.Tensor, x_fake: torch.Tensor, c: torch.Tensor,
                gp_weight: float = 10.0, alpha: Optional[torch.Tensor] = None,
                generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """mean(-f(x_real, c) + f(x_fake, c)) + gp_weight * gradient penalty."""
    _check_pair(x_real, x_fake)
    loss = (-disc(x_real, c) + disc(x_fake, c)).mean()
    if gp_weight > 0:
        loss = loss + gp_weight * gradient_penalty(disc, x_real, x_fake, c, alpha, generator)
    return loss


def generator_loss(gen: Callable, disc: Critic, z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
    """mean(-f(g(z, c), c))."""
    signal_shape = getattr(gen, "signal_shape", None)
    if signal_shape is not None and tuple(z.shape[1:]) != tuple(signal_shape):
        raise ValidationError(f"Noise shape {tuple(z.shape[1:])} differs from signal shape {signal_shape}")
    return (-disc(gen(z, c), c)).mean()


@dataclass
class GanHistory:
    """Per-epoch losses and update bookkeeping of one training run."""
    epochs: List[Dict[str, float]] = field(default_factory=list)
    critic_updates: int = 0
    generator_updates: int = 0


def cgan_train(gen: Generator, disc: Discriminator, embedder: nn.Module,
               signals: torch.Tensor, parts: torch.Tensor, epochs: int, batch_size: int,
               gen_lr: float = 2e-4, disc_lr: float = 1e-4, n_critic: int = 5,
               gp_weight: float = 10.0, seed: int = 0, device: str = "cpu") -> GanHistory:
    """
    Alternate ``n_critic`` critic updates with one generator update per batch.

    The skeleton embedder is optimized together with the generator; the
    critic sees the condition detached.
    """
    if signals.shape[0] != parts.shape[0]:
        raise ValidationError("Signals and skeleton parts must have the same number of samples")
    history = GanHistory()
    if epochs == 0 or signals.shape[0] == 0:
        return history
    gen.to(device).train()
    disc.to(device).train()
    embedder.to(device).train()
    opt_g = torch.optim.Adam(list(gen.parameters()) + list(embedder.parameters()), lr=gen_lr)
    opt_d = torch.optim.Adam(disc.parameters(), lr=disc_lr)
    loader = DataLoader(TensorDataset(signals, parts), batch_size=batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(seed))
    noise_gen = torch.Generator().manual_seed(seed + 1)

    for epoch in tqdm(range(1, epochs + 1), desc="cgan", disable=not SHOW_PROGRESS):
        critic_total, gen_total, batches = 0.0, 0.0, 0
        for step, (x, flat) in enumerate(loader, start=1):
            x, flat = x.to(device), flat.to(device)
            with torch.no_grad():
                c_fixed = embedder(flat)
            for _ in range(n_critic):
                z = draw_noise(tuple(x.shape), noise_gen, x.dtype, device)
                with torch.no_grad():
                    fake = gen(z, c_fixed)
                loss_d = critic_loss(disc, x, fake, c_fixed, gp_weight, generator=noise_gen)
                if not torch.isfinite(loss_d):
                    raise DivergenceError("Critic loss is not finite", epoch=epoch, step=step)
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
                history.critic_updates += 1

            z = draw_noise(tuple(x.shape), noise_gen, x.dtype, device)
            loss_g = generator_loss(gen, disc, z, embedder(flat))
            if not torch.isfinite(loss_g):
                raise DivergenceError("Generator loss is not finite", epoch=epoch, step=step)
            opt_g.zero_grad()
            loss_g.backward()
            opt_g.step()
            history.generator_updates += 1

            critic_total += float(loss_d)
            gen_total += float(loss_g)
            batches += 1
        history.epochs.append({"epoch": epoch, "critic_loss": critic_total / batches,
                               "generator_loss": gen_total / batches})
        log_debug(f"cgan epoch {epoch}: critic {critic_total / batches:.6f}, generator {gen_total / batches:.6f}")
    log_info(f"CGAN training finished: {history.critic_updates} critic and "
             f"{history.generator_updates} generator updates")
    return history


@torch.no_grad()
def cgan_sample(gen: Generator, c: torch.Tensor, seed: int, shared_noise: bool = False) -> torch.Tensor:
    """One forward pass g(z, c) with z drawn from a generator seeded with ``seed``."""
    unbatched = c.dim() == 1
    c = c.unsqueeze(0) if unbatched else c
    generator = torch.Generator().manual_seed(int(seed))
    dtype = c.dtype if torch.is_floating_point(c) else torch.get_default_dtype()
    z = draw_noise((c.shape[0],) + tuple(gen.signal_shape), generator, dtype, c.device, shared_noise)
    out = gen(z, c)
    return out.squeeze(0) if unbatched else out
