"""
Simplified residual convolution backbone shared by the diffusion denoiser
and the adversarial generator.

Signals are (batch, channels, length) and every convolution runs over the
length axis with same-padding, so the backbone preserves signal shape.
"""
import math
from typing import Sequence, Tuple

import torch
from torch import nn

from ..config.settings import BACKBONE_FILTERS, BACKBONE_KERNELS, LEAKY_SLOPE
from ..core.errors import ConfigurationError


class ResidualBlock(nn.Module):
    """Two convolutions, each followed by LeakyReLU, plus a skip path."""

    def __init__(self, in_channels: int, filters: int, kernel_size: int, slope: float = LEAKY_SLOPE):
        super().__init__()
        padding = kernel_size // 2
        self.conv1 = nn.Conv1d(in_channels, filters, kernel_size, padding=padding)
        self.conv2 = nn.Conv1d(filters, filters, kernel_size, padding=padding)
        self.act = nn.LeakyReLU(slope)
        self.skip = nn.Identity() if in_channels == filters else nn.Conv1d(in_channels, filters, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.conv2(self.act(self.conv1(x)))) + self.skip(x)


class ResidualBackbone(nn.Module):
    """
    Residual blocks with an embedding vector broadcast-added to the channels
    in front of every block, and a 1x1 output head back to the signal
    channel count.
    """

    def __init__(self, channels: int, embed_width: int,
                 filters: Sequence[int] = BACKBONE_FILTERS,
                 kernels: Sequence[int] = BACKBONE_KERNELS,
                 slope: float = LEAKY_SLOPE):
        super().__init__()
        if len(filters) != len(kernels):
            raise ConfigurationError("filters and kernels must have the same length")
        self.blocks = nn.ModuleList()
        self.injections = nn.ModuleList()
        in_channels = channels
        for width, kernel in zip(filters, kernels):
            self.injections.append(nn.Linear(embed_width, in_channels))
            self.blocks.append(ResidualBlock(in_channels, width, kernel, slope))
            in_channels = width
        self.head = nn.Conv1d(in_channels, channels, 1)

    def forward(self, x: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        for inject, block in zip(self.injections, self.blocks):
            x = block(x + inject(embedding).unsqueeze(-1))
        return self.head(x)


def sinusoidal_embedding(t: torch.Tensor, width: int) -> torch.Tensor:
    """Sinusoidal step embedding of shape (batch, width)."""
    half = width // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64, device=t.device) / half)
    args = t.to(torch.float64).unsqueeze(-1) * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def broadcast_condition(c: torch.Tensor, batch: int) -> torch.Tensor:
    """Expand an unbatched condition vector to the batch size."""
    if c.dim() == 1:
        c = c.unsqueeze(0)
    if c.shape[0] == 1 and batch > 1:
        c = c.expand(batch, -1)
    return c


def draw_noise(shape: Tuple[int, ...], generator: torch.Generator, dtype, device,
               shared: bool = False) -> torch.Tensor:
    """
    Standard normal noise drawn on the CPU generator and moved to ``device``.

    With ``shared`` one draw is repeated along the batch axis.
    """
    draw_shape = (1,) + tuple(shape[1:]) if shared else tuple(shape)
    noise = torch.randn(draw_shape, generator=generator, dtype=dtype)
    if shared:
        noise = noise.expand(shape).clone()
    return noise.to(device)
