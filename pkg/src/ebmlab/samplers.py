"""Score-driven MCMC: unadjusted and Metropolis-adjusted Langevin, annealed
variants over a noise schedule, and the persistent-chain replay buffer.

Chains are batched: state arrays have shape (n_chains, d) and every chain in a
batch advances from the same counter-based stream, so a fixed RngStream yields
bit-identical trajectories. The Metropolis correction only ever uses energy
differences, so any constant shift of the energy cancels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .energy import EnergyFamily, GaussianDensity
from .errors import ChainDivergenceError, InvalidArgumentError
from .numerics import RngStream


@dataclass(frozen=True)
class LangevinConfig:
    step_size: float
    num_steps: int
    adjust: bool = False

    def __post_init__(self):
        if self.step_size <= 0:
            raise InvalidArgumentError(f"step_size must be positive, got {self.step_size}")
        if self.num_steps < 1:
            raise InvalidArgumentError(f"num_steps must be >= 1, got {self.num_steps}")


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing positive noise scales, largest first."""

    sigmas: tuple[float, ...]

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        if not sig:
            raise InvalidArgumentError("noise schedule must be nonempty")
        if any(s <= 0 for s in sig):
            raise InvalidArgumentError("noise scales must be positive")
        if any(a <= b for a, b in zip(sig, sig[1:])):
            raise InvalidArgumentError("noise scales must be strictly decreasing")
        object.__setattr__(self, "sigmas", sig)

    @classmethod
    def geometric(cls, sigma_max: float, sigma_min: float, levels: int) -> "NoiseSchedule":
        if levels < 1 or sigma_max <= sigma_min or sigma_min <= 0:
            raise InvalidArgumentError("bad geometric schedule parameters")
        if levels == 1:
            return cls((sigma_max,))
        ratio = (sigma_min / sigma_max) ** (1.0 / (levels - 1))
        return cls(tuple(sigma_max * ratio**i for i in range(levels)))


@dataclass(frozen=True)
class Target:
    """Bundle of score (always) and energy (needed only for adjustment)."""

    score_fn: Callable[[np.ndarray], np.ndarray]
    energy_fn: Callable[[np.ndarray], np.ndarray] | None = None


def model_target(family: EnergyFamily, theta) -> Target:
    """Target for the model density exp(-E); score is -grad_x E."""
    return Target(
        score_fn=lambda X: -family.grad_x(theta, X),
        energy_fn=lambda X: family.energy(theta, X),
    )


def density_target(density: GaussianDensity) -> Target:
    return Target(score_fn=density.score, energy_fn=lambda X: -density.logpdf(X))


def _as_target(target) -> Target:
    if isinstance(target, Target):
        return target
    return Target(score_fn=target)


@dataclass(frozen=True)
class LangevinResult:
    final: np.ndarray
    trajectory: list[np.ndarray] | None
    accept_rate: float | None


def _proposal_log_density(x_to: np.ndarray, x_from: np.ndarray,
                          score_from: np.ndarray, eps: float) -> np.ndarray:
    """log N(x_to; x_from + (eps^2/2) s(x_from), eps^2 I), full constant kept."""
    d = x_to.shape[1]
    mean = x_from + 0.5 * eps**2 * score_from
    sq = np.sum((x_to - mean) ** 2, axis=1)
    return -0.5 * sq / eps**2 - 0.5 * d * np.log(2.0 * np.pi * eps**2)


def mala_log_accept_ratio(target, x: np.ndarray, x_prop: np.ndarray,
                          step_size: float) -> np.ndarray:
    """Per-chain log of the Metropolis-Hastings ratio for a Langevin proposal.

    log a = [-E(x') + log q(x | x')] - [-E(x) + log q(x' | x)]. Only energy
    differences appear, so the unnormalized model density suffices.
    """
    target = _as_target(target)
    if target.energy_fn is None:
        raise InvalidArgumentError("adjusted moves need an energy function")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    x_prop = np.atleast_2d(np.asarray(x_prop, dtype=np.float64))
    e_x = target.energy_fn(x)
    e_p = target.energy_fn(x_prop)
    if not (np.all(np.isfinite(e_x)) and np.all(np.isfinite(e_p))):
        raise ChainDivergenceError("non-finite energy in MH ratio", step_index=0)
    s_x = target.score_fn(x)
    s_p = target.score_fn(x_prop)
    fwd = _proposal_log_density(x_prop, x, s_x, step_size)
    bwd = _proposal_log_density(x, x_prop, s_p, step_size)
    return (e_x - e_p) + (bwd - fwd)


def langevin_chain(target, x0: np.ndarray, cfg: LangevinConfig, rng: RngStream,
                   keep_trajectory: bool = False) -> LangevinResult:
    """Run K batched Langevin updates x <- x + (eps^2/2) s(x) + eps z.

    With ``cfg.adjust`` each proposal passes a Metropolis-Hastings test using
    the Gaussian proposal density; otherwise moves are always taken.
    """
    target = _as_target(target)
    if cfg.adjust and target.energy_fn is None:
        raise InvalidArgumentError("adjust=true requires a target with energies")
    x = np.array(np.atleast_2d(np.asarray(x0, dtype=np.float64)))
    eps = cfg.step_size
    trajectory = [x.copy()] if keep_trajectory else None
    n_accept = 0
    n_total = 0
    for k in range(cfg.num_steps):
        s = target.score_fn(x)
        if not np.all(np.isfinite(s)):
            raise ChainDivergenceError(f"non-finite score at step {k}", step_index=k)
        z = rng.normal(x.shape)
        prop = x + 0.5 * eps**2 * s + eps * z
        if cfg.adjust:
            log_alpha = mala_log_accept_ratio(target, x, prop, eps)
            u = rng.uniform(x.shape[0])
            accept = np.log(u) < log_alpha
            x = np.where(accept[:, None], prop, x)
            n_accept += int(np.sum(accept))
            n_total += accept.size
        else:
            x = prop
        if not np.all(np.isfinite(x)):
            raise ChainDivergenceError(f"chain diverged at step {k}", step_index=k)
        if keep_trajectory:
            trajectory.append(x.copy())
    rate = (n_accept / n_total) if n_total else None
    return LangevinResult(final=x, trajectory=trajectory, accept_rate=rate)


def annealed_langevin(score_fn_at_sigma, schedule: NoiseSchedule,
                      per_level_cfg: LangevinConfig, x0: np.ndarray,
                      rng: RngStream, keep_level_finals: bool = False):
    """Chain Langevin runs across decreasing noise scales.

    Level step sizes follow eps * (sigma_l / sigma_last), so the coarsest
    level takes proportionally larger moves. Returns the final state, or
    (final, [(sigma, state), ...]) when level finals are requested.
    """
    x = np.array(np.atleast_2d(np.asarray(x0, dtype=np.float64)))
    sigma_last = schedule.sigmas[-1]
    tags = []
    for sigma in schedule.sigmas:
        cfg = LangevinConfig(
            step_size=per_level_cfg.step_size * (sigma / sigma_last),
            num_steps=per_level_cfg.num_steps,
            adjust=False,
        )
        result = langevin_chain(lambda X, s=sigma: score_fn_at_sigma(X, s), x, cfg, rng)
        x = result.final
        if keep_level_finals:
            tags.append((sigma, x.copy()))
    if keep_level_finals:
        return x, tags
    return x


# -- replay buffer -------------------------------------------------------------


def fresh_gaussian_init(rng: RngStream, n: int, dim: int, variance: float = 4.0) -> np.ndarray:
    """Over-dispersed fresh chain starts: N(0, variance * I)."""
    return np.sqrt(variance) * rng.normal((n, dim))


@dataclass
class ReplayBuffer:
    """Store of past chain states; single-writer.

    Eviction is uniform at random over the capacity+1 candidates (the new
    item included), so no insertion cohort is privileged.
    """

    capacity: int
    reinit_prob: float = 0.05
    items: list[np.ndarray] = field(default_factory=list)
    rng: RngStream = field(default_factory=lambda: RngStream(seed=0, stream_id=0xB0FFE2))

    def __post_init__(self):
        if self.capacity < 1:
            raise InvalidArgumentError("buffer capacity must be >= 1")
        if not 0.0 <= self.reinit_prob <= 1.0:
            raise InvalidArgumentError("reinit_prob must be in [0, 1]")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def dim(self) -> int | None:
        return None if not self.items else self.items[0].size


def buffer_push(buffer: ReplayBuffer, x: np.ndarray) -> ReplayBuffer:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()
    if buffer.items and x.size != buffer.dim:
        raise InvalidArgumentError(
            f"item dim {x.size} does not match buffer dim {buffer.dim}"
        )
    buffer.items.append(x.copy())
    if len(buffer.items) > buffer.capacity:
        evict = int(buffer.rng.integers(0, len(buffer.items)))
        buffer.items.pop(evict)
    return buffer


def buffer_push_batch(buffer: ReplayBuffer, X: np.ndarray) -> ReplayBuffer:
    for row in np.atleast_2d(np.asarray(X, dtype=np.float64)):
        buffer_push(buffer, row)
    return buffer


def buffer_init_sample(buffer: ReplayBuffer, rng: RngStream,
                       fresh_sampler: Callable[[], np.ndarray]) -> np.ndarray:
    """Fresh draw with probability reinit_prob (always when empty), else a
    uniformly chosen stored state."""
    if not buffer.items or float(rng.uniform(1)[0]) < buffer.reinit_prob:
        return np.asarray(fresh_sampler(), dtype=np.float64)
    idx = int(rng.integers(0, len(buffer.items)))
    return buffer.items[idx].copy()


def buffer_init_batch(buffer: ReplayBuffer, rng: RngStream, n: int,
                      fresh_batch: Callable[[int], np.ndarray]) -> np.ndarray:
    """Vectorized chain initialization for PCD."""
    if not buffer.items:
        return fresh_batch(n)
    coins = rng.uniform(n) < buffer.reinit_prob
    idx = rng.integers(0, len(buffer.items), n)
    stacked = np.stack(buffer.items)
    out = stacked[idx]
    n_fresh = int(np.sum(coins))
    if n_fresh:
        out[coins] = fresh_batch(n_fresh)
    return out
