"""Test the noise schedule, the denoising objective, guidance and the samplers."""

import math
import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent))

import mpmath
import numpy as np
import pytest
import torch

from conftest import tiny_denoiser_config
from diffusion import (
    DenoiserConfig,
    GuidanceConfig,
    TinyDenoiser,
    build_denoiser,
    cfg_eps,
    ddpm_step,
    drop_conditions,
    eps_loss,
    make_schedule,
    q_sample,
    sample,
    sdedit_sample,
    timestep_sequence,
)
from utils.errors import ValidationError


def _constant_denoiser(cond_value: float, null_value: float):
    """ε̂ is ``cond_value`` everywhere for a non-zero condition and ``null_value`` for the null one."""
    def denoiser(z_t, t, cond, concat=None):
        is_null = bool(torch.all(cond == 0))
        return torch.full_like(z_t, null_value if is_null else cond_value)
    return denoiser


def _zero_denoiser(z_t, t, cond, concat=None):
    return torch.zeros_like(z_t)


def test_linear_schedule():
    """β is linear on 1..T with a zero placeholder at index 0; ᾱ decreases from 1."""
    sched = make_schedule(1000)
    assert sched.betas.shape == (1001,)
    assert sched.betas[0] == 0.0
    assert sched.betas[1] == pytest.approx(1e-4)
    assert sched.betas[1000] == pytest.approx(2e-2)
    assert sched.alpha_bars[0] == 1.0
    assert np.all(np.diff(sched.alpha_bars) < 0)


def test_alpha_bar_matches_high_precision_product():
    sched = make_schedule(1000)
    mpmath.mp.dps = 50
    product = mpmath.mpf(1)
    for t in range(1, 1001):
        product *= 1 - mpmath.mpf(1e-4) - (mpmath.mpf(2e-2) - mpmath.mpf(1e-4)) * (t - 1) / 999
    assert sched.alpha_bars[1000] == pytest.approx(float(product), rel=1e-9)


def test_schedule_validation():
    with pytest.raises(ValidationError):
        make_schedule(0)
    with pytest.raises(ValidationError):
        make_schedule(10, beta_start=0.1, beta_end=0.01)
    with pytest.raises(ValidationError):
        make_schedule(10, kind="cosine")


def test_q_sample_closed_form(schedule):
    rng = np.random.default_rng(0)
    z0 = rng.standard_normal((3, 4, 4))
    eps = rng.standard_normal((3, 4, 4))
    t = 17
    expected = math.sqrt(schedule.alpha_bars[t]) * z0 + math.sqrt(1 - schedule.alpha_bars[t]) * eps
    assert np.allclose(q_sample(z0, t, eps, schedule), expected)
    assert np.array_equal(q_sample(z0, 0, eps, schedule), z0)

    batch = torch.from_numpy(np.stack([z0, z0]))
    noise = torch.from_numpy(np.stack([eps, eps]))
    noisy = q_sample(batch, torch.tensor([0, t]), noise, schedule)
    assert torch.allclose(noisy[0], batch[0])
    assert np.allclose(noisy[1].numpy(), expected)

    with pytest.raises(ValidationError):
        q_sample(z0, schedule.timesteps + 1, eps, schedule)
    with pytest.raises(ValidationError):
        q_sample(z0, 1, eps[:2], schedule)


@pytest.mark.parametrize("t", [100, 500, 900])
def test_q_sample_moments_match_the_forward_process(t):
    """Over 10⁵ noise draws z_t has mean √ᾱ_t·z0 and variance ᾱ_t·Var(z0) + (1 − ᾱ_t)."""
    sched = make_schedule(1000)
    alpha_bar = sched.alpha_bars[t]
    rng = np.random.default_rng(t)
    draws = 100_000

    fixed = np.full(draws, 0.5)
    noisy = q_sample(fixed, t, rng.standard_normal(draws), sched)
    assert noisy.mean() == pytest.approx(math.sqrt(alpha_bar) * 0.5, abs=0.02)
    assert noisy.var() == pytest.approx(1.0 - alpha_bar, rel=0.02)

    data = rng.standard_normal(draws)
    noisy = q_sample(data, t, rng.standard_normal(draws), sched)
    assert noisy.var() == pytest.approx(alpha_bar * data.var() + (1.0 - alpha_bar), rel=0.02)


def test_zero_prediction_loss_is_noise_energy():
    """A denoiser that always predicts 0 scores E[ε²] = 1."""
    sched = make_schedule(1000)
    z0 = torch.zeros(100, 1, 32, 32, dtype=torch.float64)
    cond = torch.ones(100, 4, dtype=torch.float64)
    loss = eps_loss(_zero_denoiser, z0, cond, sched, torch.Generator().manual_seed(0))
    assert loss.item() == pytest.approx(1.0, rel=0.03)


def _random_mask(seed, shape):
    if seed is None:
        return torch.ones(shape, dtype=torch.float64)
    mask = (torch.rand(shape, generator=torch.Generator().manual_seed(seed)) > 0.5).double()
    mask[0, 0, 0, 0] = 1.0
    return mask


MASK_SEEDS = list(range(20)) + [None]


@pytest.mark.parametrize("mask_seed", MASK_SEEDS)
def test_masked_loss_averages_over_kept_cells(schedule, mask_seed):
    """With ε̂ = 0 the loss is the mean of ε² over unmasked elements only."""
    z0 = torch.zeros(2, 3, 4, 4, dtype=torch.float64)
    noise = torch.randn(2, 3, 4, 4, generator=torch.Generator().manual_seed(100), dtype=torch.float64)
    mask = _random_mask(mask_seed, (2, 1, 4, 4))
    t = torch.tensor([5, 9])
    cond = torch.ones(2, 8, dtype=torch.float64)

    loss = eps_loss(_zero_denoiser, z0, cond, schedule, mask=mask, t=t, noise=noise)
    kept = (mask == 1).expand_as(noise)
    assert loss.item() == pytest.approx((noise[kept] ** 2).mean().item(), rel=1e-12)

    if mask_seed is None:
        unmasked = eps_loss(_zero_denoiser, z0, cond, schedule, t=t, noise=noise)
        assert loss.item() == pytest.approx(unmasked.item(), rel=1e-12)


def test_all_masked_loss_is_zero(schedule):
    z0 = torch.zeros(2, 3, 4, 4, dtype=torch.float64)
    cond = torch.ones(2, 8, dtype=torch.float64)
    empty = eps_loss(_zero_denoiser, z0, cond, schedule, torch.Generator().manual_seed(0),
                     mask=torch.zeros(2, 1, 4, 4, dtype=torch.float64))
    assert empty.item() == 0.0


@pytest.mark.parametrize("mask_seed", MASK_SEEDS)
def test_masked_cells_receive_no_gradient(schedule, mask_seed):
    denoiser = TinyDenoiser(tiny_denoiser_config()).double()
    z0 = torch.randn(2, 3, 8, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(200))
    cond = torch.randn(2, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(201))
    mask = _random_mask(mask_seed, (2, 1, 8, 8))
    loss, prediction = eps_loss(denoiser, z0, cond, schedule, torch.Generator().manual_seed(1), mask=mask,
                                return_prediction=True)
    prediction.retain_grad()
    loss.backward()
    masked = (mask == 0).expand_as(prediction.grad)
    if masked.any():
        assert prediction.grad[masked].abs().max().item() == 0.0
    assert prediction.grad[~masked].abs().max().item() > 0.0


def test_loss_gradient_matches_finite_differences(schedule):
    torch.manual_seed(0)
    denoiser = TinyDenoiser(tiny_denoiser_config(base_channels=4)).double()
    z0 = torch.randn(1, 3, 4, 4, dtype=torch.float64)
    noise = torch.randn(1, 3, 4, 4, dtype=torch.float64)
    cond = torch.randn(1, 8, dtype=torch.float64, requires_grad=True)
    t = torch.tensor([7])
    assert torch.autograd.gradcheck(lambda c: eps_loss(denoiser, z0, c, schedule, t=t, noise=noise), (cond,))


def test_condition_drop():
    cond = torch.ones(1000, 4)
    dropped = drop_conditions(cond, 0.25, torch.Generator().manual_seed(0))
    rows_dropped = (dropped.abs().sum(dim=1) == 0).float().mean().item()
    assert 0.2 < rows_dropped < 0.3
    assert drop_conditions(cond, 0.0, None) is cond
    with pytest.raises(ValidationError):
        drop_conditions(cond, 1.0, None)


def test_guidance_arithmetic():
    """ε̃ = ε_null + s·(ε_cond − ε_null), with exact branches at s = 0 and s = 1."""
    denoiser = _constant_denoiser(cond_value=2.0, null_value=1.0)
    z = torch.zeros(1, 3, 2, 2)
    cond = torch.ones(1, 4)
    assert torch.all(cfg_eps(denoiser, z, 5, cond, GuidanceConfig(scale=7.5)) == 8.5)
    assert torch.all(cfg_eps(denoiser, z, 5, cond, GuidanceConfig(scale=1.0)) == 2.0)
    assert torch.all(cfg_eps(denoiser, z, 5, cond, GuidanceConfig(scale=0.0)) == 1.0)


def test_final_reverse_step_recovers_clean_latent(schedule):
    """From z_1 = q(z0, 1, ε) and the true ε, the step to 0 returns z0."""
    z0 = torch.randn(1, 3, 4, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
    eps = torch.randn(1, 3, 4, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(3))
    z1 = q_sample(z0, 1, eps, schedule)
    assert torch.allclose(ddpm_step(z1, 1, eps, schedule), z0, atol=1e-10)


def test_reverse_step_noise_and_validation(schedule):
    z = torch.zeros(1, 3, 4, 4)
    eps = torch.zeros_like(z)
    a = ddpm_step(z, 10, eps, schedule, torch.Generator().manual_seed(0), t_prev=5)
    b = ddpm_step(z, 10, eps, schedule, torch.Generator().manual_seed(0), t_prev=5)
    assert torch.equal(a, b)
    assert a.abs().sum() > 0
    with pytest.raises(ValidationError):
        ddpm_step(z, 5, eps, schedule, t_prev=5)
    with pytest.raises(ValidationError):
        ddpm_step(z, 0, eps, schedule)


def test_timestep_sequence():
    sched = make_schedule(1000)
    sequence = timestep_sequence(sched, 200)
    assert len(sequence) == 200
    assert sequence[0] == 1000 and sequence[-1] == 5
    assert all(a > b for a, b in zip(sequence, sequence[1:]))
    assert timestep_sequence(sched, 1000) == list(range(1000, 0, -1))
    with pytest.raises(ValidationError):
        timestep_sequence(sched, 1001)
    with pytest.raises(ValidationError):
        timestep_sequence(sched, 0)


def test_sampling_is_reproducible(schedule):
    denoiser = TinyDenoiser(tiny_denoiser_config())
    cond = torch.randn(1, 8, generator=torch.Generator().manual_seed(0))
    guidance = GuidanceConfig(scale=3.0)

    a = sample(denoiser, cond, (1, 3, 8, 8), schedule, guidance, torch.Generator().manual_seed(4), steps=10)
    b = sample(denoiser, cond, (1, 3, 8, 8), schedule, guidance, torch.Generator().manual_seed(4), steps=10)
    c = sample(denoiser, cond, (1, 3, 8, 8), schedule, guidance, torch.Generator().manual_seed(5), steps=10)
    assert a.shape == (1, 3, 8, 8)
    assert torch.equal(a, b)
    assert not torch.equal(a, c)


def test_analytic_reverse_chain_recovers_x0():
    """With the optimal single-point denoiser the 200-step chain lands on z0."""
    sched = make_schedule(1000)
    alpha_bars = torch.from_numpy(sched.alpha_bars)
    z0 = torch.rand(1, 1, 8, 8, generator=torch.Generator().manual_seed(0), dtype=torch.float64) * 2 - 1

    def optimal(z_t, t, cond, concat=None):
        return (z_t - alpha_bars[t].sqrt() * z0) / (1 - alpha_bars[t]).sqrt()

    cond = torch.ones(1, 4, dtype=torch.float64)
    distances = [
        (sample(optimal, cond, z0.shape, sched, GuidanceConfig(scale=1.0),
                torch.Generator().manual_seed(seed), steps=200) - z0).norm().item()
        for seed in range(16)
    ]
    assert np.mean(distances) < 0.05


def test_guidance_is_inert_when_branches_coincide(schedule):
    """A condition-blind denoiser samples the same latent for s = 0 and s = 7.5."""
    denoiser = TinyDenoiser(tiny_denoiser_config())

    def blind(z_t, t, cond, concat=None):
        return denoiser(z_t, t, torch.zeros_like(cond))

    cond = torch.randn(1, 8, generator=torch.Generator().manual_seed(0))
    unguided = sample(blind, cond, (1, 3, 8, 8), schedule, GuidanceConfig(scale=0.0),
                      torch.Generator().manual_seed(6), steps=10)
    guided = sample(blind, cond, (1, 3, 8, 8), schedule, GuidanceConfig(scale=7.5),
                    torch.Generator().manual_seed(6), steps=10)
    assert torch.equal(unguided, guided)


def test_sdedit_levels(schedule):
    """N = 0 leaves the latent alone; N = T is ordinary sampling with the same generator."""
    denoiser = TinyDenoiser(tiny_denoiser_config())
    cond = torch.randn(1, 8, generator=torch.Generator().manual_seed(0))
    guidance = GuidanceConfig(scale=2.0)
    z0 = torch.rand(1, 3, 8, 8, generator=torch.Generator().manual_seed(1)) * 2 - 1

    unchanged = sdedit_sample(denoiser, z0, 0, cond, schedule, guidance, torch.Generator().manual_seed(2))
    assert torch.equal(unchanged, z0)
    assert unchanged is not z0

    edited = sdedit_sample(denoiser, z0, schedule.timesteps, cond, schedule, guidance,
                           torch.Generator().manual_seed(3), steps=10)
    sampled = sample(denoiser, cond, z0.shape, schedule, guidance, torch.Generator().manual_seed(3), steps=10)
    assert torch.equal(edited, sampled)

    partial = sdedit_sample(denoiser, z0, 20, cond, schedule, guidance, torch.Generator().manual_seed(3), steps=10)
    assert partial.shape == z0.shape
    with pytest.raises(ValidationError):
        sdedit_sample(denoiser, z0, schedule.timesteps + 1, cond, schedule, guidance)


def test_unet_forward_shapes():
    """The U-Net keeps the latent shape and accepts a concatenated map."""
    config = DenoiserConfig(
        kind="unet",
        concat_channels=3,
        base_channels=16,
        channel_mult=[1, 2],
        attention_resolutions=[2],
        num_res_blocks=1,
        head_channels=8,
        context_dim=8,
        norm_groups=8,
    )
    torch.manual_seed(0)
    unet = build_denoiser(config)
    z = torch.randn(2, 3, 8, 8)
    out = unet(z, torch.tensor([3, 40]), torch.randn(2, 8), torch.randn(2, 3, 8, 8))
    assert out.shape == z.shape

    with pytest.raises(ValidationError):
        unet(z, 3, torch.randn(2, 8))
    with pytest.raises(ValidationError):
        unet(torch.randn(2, 3, 7, 7), 3, torch.randn(2, 8), torch.randn(2, 3, 7, 7))


def test_denoiser_config_validation():
    with pytest.raises(ValueError):
        DenoiserConfig(kind="unet", base_channels=12, norm_groups=8)
