"""
Conditional denoising diffusion for RF signals.

Covers the linear noise schedule, the closed-form forward process, the
noise-prediction training loss and loop, and the two reverse samplers:
ancestral DDPM sampling over all T steps and DDIM sampling over a shorter,
uniformly spaced subsequence.
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, TensorDataset
from tqdm import tqdm

from ..config.settings import BACKBONE_FILTERS, BACKBONE_KERNELS, SHOW_PROGRESS, TIME_WIDTH
from ..core.errors import ConfigurationError, DivergenceError, StepError, ValidationError
from ..utils.helpers import log_debug, log_info
from .backbone import ResidualBackbone, broadcast_condition, draw_noise, sinusoidal_embedding

# eps_theta(x_t, t, c) for any callable, not only Denoiser modules
NoisePredictor = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]
Step = Union[int, torch.Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    """
    beta_1..beta_T with alpha_t = 1 - beta_t and alpha_bar_t the running
    product. Index 0 of ``alpha_bar_padded`` is alpha_bar_0 = 1.
    """
    beta: torch.Tensor
    alpha: torch.Tensor
    alpha_bar: torch.Tensor

    @property
    def T(self) -> int:
        return int(self.beta.shape[0])

    @property
    def alpha_bar_padded(self) -> torch.Tensor:
        one = torch.ones(1, dtype=self.alpha_bar.dtype)
        return torch.cat([one, self.alpha_bar])

    def alpha_bar_at(self, t: int) -> float:
        """alpha_bar_t for t in 0..T."""
        if not 0 <= t <= self.T:
            raise StepError(f"Step {t} is outside 0..{self.T}")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def to_dict(self) -> Dict[str, List[float]]:
        return {"beta": self.beta.tolist()}

    @classmethod
    def from_dict(cls, payload: Dict[str, List[float]]) -> "NoiseSchedule":
        beta = torch.tensor(payload["beta"], dtype=torch.float64)
        alpha = 1.0 - beta
        return cls(beta=beta, alpha=alpha, alpha_bar=torch.cumprod(alpha, dim=0))


def build_schedule(T: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """
    Linearly spaced schedule from beta_min to beta_max inclusive.

    T = 1 gives the single step [beta_min].
    """
    if T < 1:
        raise ConfigurationError(f"Diffusion needs at least one step, got T={T}")
    if not 0 < beta_min < beta_max < 1:
        raise ConfigurationError(
            f"Noise schedule needs 0 < beta_min < beta_max < 1, got {beta_min}, {beta_max}")
    if T == 1:
        beta = torch.tensor([beta_min], dtype=torch.float64)
    else:
        beta = torch.linspace(beta_min, beta_max, T, dtype=torch.float64)
    alpha = 1.0 - beta
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=torch.cumprod(alpha, dim=0))


def _step_index(t: Step, schedule: NoiseSchedule, device=None) -> torch.Tensor:
    steps = torch.as_tensor(t, dtype=torch.long, device=device)
    if steps.numel() == 0 or int(steps.min()) < 1 or int(steps.max()) > schedule.T:
        raise StepError(f"Diffusion step must lie in 1..{schedule.T}, got {t}")
    return steps


def _per_sample(values: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    values = values.to(device=like.device, dtype=like.dtype)
    if values.dim() == 0:
        return values
    return values.view(-1, *([1] * (like.dim() - 1)))


def forward_noise(x0: torch.Tensor, t: Step, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps."""
    if eps.shape != x0.shape:
        raise ValidationError(f"Noise shape {tuple(eps.shape)} differs from signal shape {tuple(x0.shape)}")
    steps = _step_index(t, schedule)
    alpha_bar = schedule.alpha_bar[steps.cpu() - 1]
    return (_per_sample(alpha_bar.sqrt(), x0) * x0
            + _per_sample((1.0 - alpha_bar).sqrt(), x0) * eps)


class Denoiser(nn.Module):
    """
    Noise predictor eps_theta(x_t, t, c): the residual backbone driven by the
    sum of a projected sinusoidal step embedding and a projected condition.
    """

    def __init__(self, signal_shape: Tuple[int, int], cond_width: int,
                 time_width: int = TIME_WIDTH,
                 filters: Sequence[int] = BACKBONE_FILTERS,
                 kernels: Sequence[int] = BACKBONE_KERNELS):
        super().__init__()
        self.signal_shape = tuple(signal_shape)
        self.time_width = time_width
        self.time_proj = nn.Linear(time_width, time_width)
        self.cond_proj = nn.Linear(cond_width, time_width)
        self.backbone = ResidualBackbone(self.signal_shape[0], time_width, filters, kernels)

    def forward(self, x: torch.Tensor, t: Step, c: torch.Tensor) -> torch.Tensor:
        steps = torch.as_tensor(t, device=x.device)
        if steps.dim() == 0:
            steps = steps.expand(x.shape[0])
        temb = self.time_proj(sinusoidal_embedding(steps, self.time_width).to(x.dtype))
        c = broadcast_condition(c, x.shape[0]).to(x.dtype)
        return self.backbone(x, temb + self.cond_proj(c))


def ddpm_loss(denoiser: NoisePredictor, x0: torch.Tensor, c: torch.Tensor, t: Step,
              eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Mean squared error between eps and eps_theta(x_t, t, c)."""
    if eps.shape != x0.shape:
        raise ValidationError(f"Noise shape {tuple(eps.shape)} differs from signal shape {tuple(x0.shape)}")
    steps = _step_index(t, schedule, device=x0.device)
    if steps.dim() == 0:
        steps = steps.expand(x0.shape[0])
    x_t = forward_noise(x0, steps, eps, schedule)
    predicted = denoiser(x_t, steps, c)
    if predicted.shape != eps.shape:
        raise ValidationError(
            f"Denoiser output shape {tuple(predicted.shape)} differs from signal shape {tuple(eps.shape)}")
    return ((eps - predicted) ** 2).mean()


def _resolve_start(denoiser, c: torch.Tensor, shape, x_T: Optional[torch.Tensor],
                   generator: torch.Generator, shared_noise: bool) -> torch.Tensor:
    if x_T is not None:
        return x_T.clone()
    if shape is None:
        signal_shape = getattr(denoiser, "signal_shape", None)
        if signal_shape is None:
            raise ConfigurationError("Sampling needs a signal shape or an initial noise tensor")
        shape = (c.shape[0],) + tuple(signal_shape)
    dtype = c.dtype if torch.is_floating_point(c) else torch.get_default_dtype()
    return draw_noise(tuple(shape), generator, dtype, c.device, shared_noise)


def _check_finite(x: torch.Tensor, step: int) -> None:
    if not torch.isfinite(x).all():
        raise DivergenceError("Sampling produced non-finite values", step=step)


@torch.no_grad()
def ddpm_sample(denoiser: NoisePredictor, c: torch.Tensor, schedule: NoiseSchedule, seed: int,
                shape: Optional[Tuple[int, ...]] = None, x_T: Optional[torch.Tensor] = None,
                shared_noise: bool = False) -> torch.Tensor:
    """
    Ancestral sampling over t = T..1.

    ``c`` is (batch, width). The initial noise and every per-step z come
    from one CPU generator seeded with ``seed``; with ``shared_noise`` each
    draw is shared by all rows of the batch. z = 0 at the last step.
    """
    unbatched = c.dim() == 1
    c = c.unsqueeze(0) if unbatched else c
    generator = torch.Generator().manual_seed(int(seed))
    x = _resolve_start(denoiser, c, shape, x_T, generator, shared_noise)
    for t in range(schedule.T, 0, -1):
        alpha = float(schedule.alpha[t - 1])
        beta = float(schedule.beta[t - 1])
        alpha_bar = schedule.alpha_bar_at(t)
        steps = torch.full((x.shape[0],), t, dtype=torch.long, device=x.device)
        eps = denoiser(x, steps, c)
        x = (x - beta / (1.0 - alpha_bar) ** 0.5 * eps) / alpha ** 0.5
        if t > 1:
            sigma = ((1.0 - schedule.alpha_bar_at(t - 1)) / (1.0 - alpha_bar)) ** 0.5 * beta ** 0.5
            x = x + sigma * draw_noise(tuple(x.shape), generator, x.dtype, x.device, shared_noise)
        _check_finite(x, t)
    return x.squeeze(0) if unbatched else x


def ddim_timesteps(T: int, steps: int) -> List[int]:
    """Uniformly spaced integer steps from T down to 1."""
    if not 1 <= steps <= T:
        raise ConfigurationError(f"DDIM steps must lie in 1..{T}, got {steps}")
    if steps == 1:
        return [T]
    grid = np.rint(np.linspace(T, 1, steps)).astype(int)
    sequence = []
    for t in grid.tolist():
        if not sequence or t != sequence[-1]:
            sequence.append(t)
    return sequence


def ddim_sigma(schedule: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    """Noise scale for the DDIM move from step t to the earlier step t_prev."""
    if not 0 <= t_prev < t:
        raise StepError(f"DDIM needs 0 <= t_prev < t, got t={t}, t_prev={t_prev}")
    alpha_bar = schedule.alpha_bar_at(t)
    alpha_bar_prev = schedule.alpha_bar_at(t_prev)
    beta = float(schedule.beta[t - 1])
    return eta * ((1.0 - alpha_bar_prev) / (1.0 - alpha_bar)) ** 0.5 * beta ** 0.5


@torch.no_grad()
def ddim_sample(denoiser: NoisePredictor, c: torch.Tensor, schedule: NoiseSchedule, steps: int,
                eta: float, seed: int, shape: Optional[Tuple[int, ...]] = None,
                x_T: Optional[torch.Tensor] = None, shared_noise: bool = False) -> torch.Tensor:
    """
    DDIM sampling over ``ddim_timesteps(T, steps)``.

    sigma_t = eta * sqrt((1 - ab_prev) / (1 - ab_t)) * sqrt(beta_t), with beta_t
    taken at the current step even when the subsequence is strided. With
    eta = 0 the trajectory depends only on the initial noise.
    """
    if eta < 0:
        raise ConfigurationError(f"DDIM eta must be non-negative, got {eta}")
    sequence = ddim_timesteps(schedule.T, steps)
    unbatched = c.dim() == 1
    c = c.unsqueeze(0) if unbatched else c
    generator = torch.Generator().manual_seed(int(seed))
    x = _resolve_start(denoiser, c, shape, x_T, generator, shared_noise)
    for i, t in enumerate(sequence):
        t_prev = sequence[i + 1] if i + 1 < len(sequence) else 0
        alpha_bar = schedule.alpha_bar_at(t)
        alpha_bar_prev = schedule.alpha_bar_at(t_prev)
        step_tensor = torch.full((x.shape[0],), t, dtype=torch.long, device=x.device)
        eps = denoiser(x, step_tensor, c)
        x0_pred = (x - (1.0 - alpha_bar) ** 0.5 * eps) / alpha_bar ** 0.5
        sigma = ddim_sigma(schedule, t, t_prev, eta)
        direction = max(1.0 - alpha_bar_prev - sigma ** 2, 0.0) ** 0.5
        x = alpha_bar_prev ** 0.5 * x0_pred + direction * eps
        if sigma > 0:
            x = x + sigma * draw_noise(tuple(x.shape), generator, x.dtype, x.device, shared_noise)
        _check_finite(x, t)
    return x.squeeze(0) if unbatched else x


def train_ddpm(denoiser: Denoiser, embedder: nn.Module, signals: torch.Tensor, parts: torch.Tensor,
               schedule: NoiseSchedule, epochs: int, batch_size: int, lr: float, seed: int = 0,
               device: str = "cpu") -> List[Dict[str, float]]:
    """
    Train eps_theta and the skeleton embedder jointly with Adam.

    Args:
        signals: (M, C, L) training signals
        parts: (M, F) flattened skeleton vectors (or joints) per signal

    Returns:
        list: One ``{"epoch", "loss"}`` record per epoch
    """
    if signals.shape[0] != parts.shape[0]:
        raise ValidationError("Signals and skeleton parts must have the same number of samples")
    history = []
    if epochs == 0 or signals.shape[0] == 0:
        return history
    denoiser.to(device).train()
    embedder.to(device).train()
    params = list(denoiser.parameters()) + list(embedder.parameters())
    optimizer = torch.optim.Adam(params, lr=lr)
    loader = DataLoader(TensorDataset(signals, parts), batch_size=batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(seed))
    noise_gen = torch.Generator().manual_seed(seed + 1)
    for epoch in tqdm(range(1, epochs + 1), desc="ddpm", disable=not SHOW_PROGRESS):
        total, count = 0.0, 0
        for step, (x0, flat) in enumerate(loader, start=1):
            x0, flat = x0.to(device), flat.to(device)
            t = torch.randint(1, schedule.T + 1, (x0.shape[0],), generator=noise_gen)
            eps = torch.randn(x0.shape, generator=noise_gen, dtype=x0.dtype).to(device)
            loss = ddpm_loss(denoiser, x0, embedder(flat), t.to(device), eps, schedule)
            if not torch.isfinite(loss):
                raise DivergenceError("Diffusion loss is not finite", epoch=epoch, step=step)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss) * x0.shape[0]
            count += x0.shape[0]
        history.append({"epoch": epoch, "loss": total / count})
        log_debug(f"ddpm epoch {epoch}: loss {total / count:.6f}")
    log_info(f"Diffusion training finished after {epochs} epochs, final loss {history[-1]['loss']:.6f}")
    return history
