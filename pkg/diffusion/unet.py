"""Noise-prediction networks.

The U-Net follows the latent-diffusion layout: residual blocks with a
timestep embedding, spatial transformers (self-attention, cross-attention to
the condition embedding, GEGLU feed-forward) at the configured downsampling
factors, and skip connections between mirrored levels.
"""

import math
from typing import List, Literal, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator

from cvtp.encoders import EMBED_DIM
from utils.errors import ValidationError


class DenoiserConfig(BaseModel):
    """Architecture of ε_θ."""

    kind: Literal["unet", "tiny"] = "unet"
    in_channels: int = Field(3, ge=1)
    out_channels: int = Field(3, ge=1)
    concat_channels: int = Field(0, ge=0, description="Extra input channels (reflectance or reference latent)")
    base_channels: int = Field(32, ge=1)
    channel_mult: List[int] = Field(default_factory=lambda: [1, 2, 3, 5])
    attention_resolutions: List[int] = Field(default_factory=lambda: [2, 4, 8], description="Downsampling factors with attention")
    num_res_blocks: int = Field(2, ge=1)
    head_channels: int = Field(32, ge=1)
    context_dim: int = Field(EMBED_DIM, ge=1)
    transformer_depth: int = Field(1, ge=1)
    norm_groups: int = Field(32, ge=1)

    @model_validator(mode="after")
    def validate_widths(self):
        if self.kind == "unet":
            for mult in self.channel_mult:
                width = self.base_channels * mult
                if width % self.norm_groups:
                    raise ValueError(f"level width {width} is not divisible by {self.norm_groups} norm groups")
        return self

    @property
    def total_in_channels(self) -> int:
        return self.in_channels + self.concat_channels

    @property
    def downsample_factor(self) -> int:
        return 2 ** (len(self.channel_mult) - 1) if self.kind == "unet" else 1


def timestep_embedding(timesteps: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps."""
    half = dim // 2
    exponent = -math.log(10000.0) * torch.arange(half, dtype=torch.float64, device=timesteps.device) / half
    angles = timesteps.reshape(-1, 1).double() * torch.exp(exponent)[None]
    return torch.cat([torch.cos(angles), torch.sin(angles)], dim=-1)


class ResnetBlock2D(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, time_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)
        self.time_emb_proj = nn.Linear(time_dim, out_channels)
        self.norm2 = nn.GroupNorm(groups, out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)
        self.conv_shortcut = nn.Conv2d(in_channels, out_channels, kernel_size=1) if in_channels != out_channels else None

    def forward(self, hidden: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        residual = hidden
        hidden = self.conv1(F.silu(self.norm1(hidden)))
        hidden = hidden + self.time_emb_proj(F.silu(temb))[:, :, None, None]
        hidden = self.conv2(F.silu(self.norm2(hidden)))
        if self.conv_shortcut is not None:
            residual = self.conv_shortcut(residual)
        return hidden + residual


class Attention(nn.Module):
    def __init__(self, channels: int, context_dim: int, head_channels: int):
        super().__init__()
        self.heads = max(1, channels // head_channels)
        self.to_q = nn.Linear(channels, channels, bias=False)
        self.to_k = nn.Linear(context_dim, channels, bias=False)
        self.to_v = nn.Linear(context_dim, channels, bias=False)
        self.to_out = nn.Linear(channels, channels)

    def forward(self, hidden: torch.Tensor, context: Optional[torch.Tensor] = None) -> torch.Tensor:
        batch, length, channels = hidden.shape
        kv = hidden if context is None else context
        head_dim = channels // self.heads

        def split(x: torch.Tensor) -> torch.Tensor:
            return x.reshape(batch, x.shape[1], self.heads, head_dim).transpose(1, 2)

        out = F.scaled_dot_product_attention(split(self.to_q(hidden)), split(self.to_k(kv)), split(self.to_v(kv)))
        return self.to_out(out.transpose(1, 2).reshape(batch, length, channels))


class GEGLU(nn.Module):
    def __init__(self, dim_in: int, dim_out: int):
        super().__init__()
        self.proj = nn.Linear(dim_in, dim_out * 2)

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        hidden, gate = self.proj(hidden).chunk(2, dim=-1)
        return hidden * F.gelu(gate)


class TransformerBlock(nn.Module):
    def __init__(self, channels: int, context_dim: int, head_channels: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(channels)
        self.attn1 = Attention(channels, channels, head_channels)
        self.norm2 = nn.LayerNorm(channels)
        self.attn2 = Attention(channels, context_dim, head_channels)
        self.norm3 = nn.LayerNorm(channels)
        self.ff = nn.Sequential(GEGLU(channels, 4 * channels), nn.Linear(4 * channels, channels))

    def forward(self, hidden: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        hidden = self.attn1(self.norm1(hidden)) + hidden
        hidden = self.attn2(self.norm2(hidden), context) + hidden
        return self.ff(self.norm3(hidden)) + hidden


class SpatialTransformer(nn.Module):
    def __init__(self, channels: int, config: DenoiserConfig):
        super().__init__()
        self.norm = nn.GroupNorm(config.norm_groups, channels, eps=1e-6)
        self.proj_in = nn.Linear(channels, channels)
        self.blocks = nn.ModuleList(
            [TransformerBlock(channels, config.context_dim, config.head_channels) for _ in range(config.transformer_depth)]
        )
        self.proj_out = nn.Linear(channels, channels)

    def forward(self, hidden: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        batch, channels, height, width = hidden.shape
        residual = hidden
        hidden = self.norm(hidden).permute(0, 2, 3, 1).reshape(batch, height * width, channels)
        hidden = self.proj_in(hidden)
        for block in self.blocks:
            hidden = block(hidden, context)
        hidden = self.proj_out(hidden).reshape(batch, height, width, channels).permute(0, 3, 1, 2)
        return hidden + residual


class UNet(nn.Module):
    """ε_θ(z_t ⊕ concat, t, c) with the condition embedding as a single cross-attention token."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        base = config.base_channels
        time_dim = 4 * base
        groups = config.norm_groups
        self.time_embedding = nn.Sequential(nn.Linear(base, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim))
        self.conv_in = nn.Conv2d(config.total_in_channels, base, kernel_size=3, padding=1)

        self.down_blocks = nn.ModuleList()
        skip_channels = [base]
        channels = base
        factor = 1
        for level, mult in enumerate(config.channel_mult):
            for _ in range(config.num_res_blocks):
                width = base * mult
                block = nn.ModuleDict({"resnet": ResnetBlock2D(channels, width, time_dim, groups)})
                if factor in config.attention_resolutions:
                    block["attention"] = SpatialTransformer(width, config)
                self.down_blocks.append(block)
                channels = width
                skip_channels.append(channels)
            if level != len(config.channel_mult) - 1:
                self.down_blocks.append(
                    nn.ModuleDict({"downsample": nn.Conv2d(channels, channels, kernel_size=3, stride=2, padding=1)})
                )
                skip_channels.append(channels)
                factor *= 2

        self.mid_block = nn.ModuleDict({
            "resnet1": ResnetBlock2D(channels, channels, time_dim, groups),
            "attention": SpatialTransformer(channels, config),
            "resnet2": ResnetBlock2D(channels, channels, time_dim, groups),
        })

        self.up_blocks = nn.ModuleList()
        for level, mult in reversed(list(enumerate(config.channel_mult))):
            for index in range(config.num_res_blocks + 1):
                width = base * mult
                block = nn.ModuleDict({"resnet": ResnetBlock2D(channels + skip_channels.pop(), width, time_dim, groups)})
                if factor in config.attention_resolutions:
                    block["attention"] = SpatialTransformer(width, config)
                channels = width
                if level and index == config.num_res_blocks:
                    block["upsample"] = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
                    factor //= 2
                self.up_blocks.append(block)

        self.norm_out = nn.GroupNorm(groups, channels)
        self.conv_out = nn.Conv2d(channels, config.out_channels, kernel_size=3, padding=1)

    def forward(
        self,
        z_t: torch.Tensor,
        t: torch.Tensor,
        cond: torch.Tensor,
        concat: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        hidden = _join_inputs(z_t, concat, self.config)
        factor = self.config.downsample_factor
        if hidden.shape[-1] % factor or hidden.shape[-2] % factor:
            raise ValidationError(f"latent {tuple(hidden.shape[-2:])} is not divisible by the U-Net depth factor {factor}")
        temb = self.time_embedding(timestep_embedding(_timesteps(t, z_t), self.config.base_channels).to(hidden.dtype))
        context = cond.to(hidden.dtype)[:, None, :]

        hidden = self.conv_in(hidden)
        skips = [hidden]
        for block in self.down_blocks:
            if "downsample" in block:
                hidden = block["downsample"](hidden)
            else:
                hidden = block["resnet"](hidden, temb)
                if "attention" in block:
                    hidden = block["attention"](hidden, context)
            skips.append(hidden)

        hidden = self.mid_block["resnet1"](hidden, temb)
        hidden = self.mid_block["attention"](hidden, context)
        hidden = self.mid_block["resnet2"](hidden, temb)

        for block in self.up_blocks:
            hidden = block["resnet"](torch.cat([hidden, skips.pop()], dim=1), temb)
            if "attention" in block:
                hidden = block["attention"](hidden, context)
            if "upsample" in block:
                hidden = block["upsample"](F.interpolate(hidden, scale_factor=2.0, mode="nearest"))

        return self.conv_out(F.silu(self.norm_out(hidden)))


class TinyDenoiser(nn.Module):
    """Two smooth convolutions with additive time and condition features.

    Small enough for finite-difference gradient checks in double precision.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        width = config.base_channels
        self.conv_in = nn.Conv2d(config.total_in_channels, width, kernel_size=3, padding=1)
        self.time_proj = nn.Linear(width, width)
        self.cond_proj = nn.Linear(config.context_dim, width)
        self.conv_out = nn.Conv2d(width, config.out_channels, kernel_size=3, padding=1)

    def forward(self, z_t, t, cond, concat=None):
        hidden = self.conv_in(_join_inputs(z_t, concat, self.config))
        temb = timestep_embedding(_timesteps(t, z_t), self.config.base_channels).to(hidden.dtype)
        hidden = hidden + self.time_proj(temb)[:, :, None, None] + self.cond_proj(cond.to(hidden.dtype))[:, :, None, None]
        return self.conv_out(torch.tanh(hidden))


def _timesteps(t, z_t: torch.Tensor) -> torch.Tensor:
    t = torch.as_tensor(t, device=z_t.device)
    return t.expand(z_t.shape[0]) if t.dim() == 0 else t


def _join_inputs(z_t: torch.Tensor, concat: Optional[torch.Tensor], config: DenoiserConfig) -> torch.Tensor:
    if config.concat_channels:
        if concat is None:
            raise ValidationError("denoiser was built with concatenated conditioning but none was given")
        if concat.shape[-2:] != z_t.shape[-2:] or concat.shape[1] != config.concat_channels:
            raise ValidationError(
                f"concatenated conditioning {tuple(concat.shape[1:])} does not match latent {tuple(z_t.shape[1:])}"
            )
        return torch.cat([z_t, concat.to(z_t.dtype)], dim=1)
    if concat is not None:
        raise ValidationError("denoiser takes no concatenated conditioning")
    if z_t.shape[1] != config.in_channels:
        raise ValidationError(f"denoiser expects {config.in_channels} latent channels, got {z_t.shape[1]}")
    return z_t


def build_denoiser(config: DenoiserConfig) -> nn.Module:
    return UNet(config) if config.kind == "unet" else TinyDenoiser(config)
