"""Branch-free 1-D chain with policy noise, sticky traps, and phase resets.

The agent's only intent is "advance" (branching factor 1), so any failure here
is process instability, not search.  Two disturbances act per step:

1. With probability ``sticky_p`` the sticky trap fires and replays its
   memory: the inverse of the previously executed action.  The memory starts
   as "forward" (nothing to invert yet), becomes the inverse of each executed
   action, and is restored to "forward" by a phase reset.
2. Otherwise the intended forward action executes, flipped to backward with
   probability ``policy_noise``.

The trap preempts policy noise (historical inertia overrides intent; the
composition order is configurable in principle but fixed here).  Position
clamps at 0 (reflecting floor); the episode succeeds on reaching ``length``
and fails after ``max_steps``.  Resets every ``reset_period`` steps clear only
the trap memory, never the position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError
from .seeding import derive_rng


@dataclass(frozen=True)
class ChainConfig:
    length: int
    policy_noise: float = 0.0
    sticky_p: float = 0.0
    reset_period: int | None = None
    max_steps: int | None = None
    trials: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise InvalidInputError("length must be >= 1")
        if not (0 <= self.policy_noise <= 1):
            raise InvalidInputError("policy_noise must lie in [0, 1]")
        if not (0 <= self.sticky_p <= 1):
            raise InvalidInputError("sticky_p must lie in [0, 1]")
        if self.reset_period is not None and self.reset_period < 1:
            raise InvalidInputError("reset_period must be >= 1 when set")
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise InvalidInputError("max_steps must be >= 1 when set")

    @property
    def step_budget(self) -> int:
        return self.max_steps if self.max_steps is not None else 50 * self.length


@dataclass(frozen=True)
class ChainEpisodeResult:
    success: bool
    steps_taken: int
    backward_steps: int
    positions: tuple[int, ...] | None = None


@dataclass(frozen=True)
class SuccessRate:
    rate: float
    ci_low: float
    ci_high: float
    trials: int


def episode_stream(seed, budget: int) -> np.ndarray:
    """Per-step uniform draws (trap gate, noise gate); shareable across variants."""
    rng = derive_rng(seed, "chain-episode")
    return rng.random((budget, 2))


def run_on_stream(
    config: ChainConfig, stream: np.ndarray, record_positions: bool = False
) -> ChainEpisodeResult:
    """Run one episode against a fixed random stream (matched-seed comparisons)."""
    budget = config.step_budget
    if stream.shape[0] < budget:
        raise InvalidInputError("stream shorter than the step budget")
    pos = 0
    trap_forward = True
    backward = 0
    positions = [0] if record_positions else None
    for t in range(1, budget + 1):
        u, v = stream[t - 1]
        if u < config.sticky_p:
            forward = trap_forward
        else:
            forward = not (v < config.policy_noise)
        if forward:
            pos += 1
        else:
            pos = max(pos - 1, 0)
            backward += 1
        if record_positions:
            positions.append(pos)
        if pos >= config.length:
            return ChainEpisodeResult(
                True, t, backward, tuple(positions) if record_positions else None
            )
        trap_forward = not forward
        if config.reset_period is not None and t % config.reset_period == 0:
            trap_forward = True
    return ChainEpisodeResult(
        False, budget, backward, tuple(positions) if record_positions else None
    )


def run_chain_episode(config: ChainConfig, seed, record_positions: bool = False) -> ChainEpisodeResult:
    return run_on_stream(config, episode_stream(seed, config.step_budget), record_positions)


def run_batch_on_streams(config: ChainConfig, streams: np.ndarray):
    """Vectorized episode batch on streams of shape (n, budget, 2).

    Returns (success, steps_taken, backward_steps) arrays; semantics identical
    to ``run_on_stream`` episode by episode.
    """
    budget = config.step_budget
    if streams.shape[1] < budget:
        raise InvalidInputError("streams shorter than the step budget")
    n = streams.shape[0]
    pos = np.zeros(n, dtype=np.int64)
    trap_forward = np.ones(n, dtype=bool)
    running = np.ones(n, dtype=bool)
    steps_taken = np.full(n, budget, dtype=np.int64)
    backward = np.zeros(n, dtype=np.int64)
    for t in range(1, budget + 1):
        if not running.any():
            break
        u = streams[:, t - 1, 0]
        v = streams[:, t - 1, 1]
        trap = u < config.sticky_p
        forward = np.where(trap, trap_forward, ~(v < config.policy_noise))
        fwd = running & forward
        bwd = running & ~forward
        pos[fwd] += 1
        pos[bwd] = np.maximum(pos[bwd] - 1, 0)
        backward[bwd] += 1
        reached = running & (pos >= config.length)
        steps_taken[reached] = t
        running &= ~reached
        trap_forward = np.where(running & forward, False, trap_forward)
        trap_forward = np.where(running & ~forward, True, trap_forward)
        if config.reset_period is not None and t % config.reset_period == 0:
            trap_forward = np.where(running, True, trap_forward)
    success = steps_taken < budget
    success |= (steps_taken == budget) & (pos >= config.length)
    return success, steps_taken, backward


def batch_streams(config: ChainConfig) -> np.ndarray:
    rng = derive_rng(config.seed, "chain-batch", config.trials)
    return rng.random((config.trials, config.step_budget, 2))


def wilson_interval(successes: int, trials: int, z: float = 2.576) -> tuple[float, float]:
    """Wilson score interval (default 99%)."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    phat = successes / trials
    denom = 1 + z**2 / trials
    center = (phat + z**2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z**2 / (4 * trials**2)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


def success_rate(config: ChainConfig) -> SuccessRate:
    """Monte-Carlo success frequency with a 99% Wilson interval."""
    success, _, _ = run_batch_on_streams(config, batch_streams(config))
    wins = int(success.sum())
    lo, hi = wilson_interval(wins, config.trials)
    return SuccessRate(wins / config.trials, lo, hi, config.trials)


def paired_success_rates(config: ChainConfig, reset_period: int) -> tuple[SuccessRate, SuccessRate]:
    """Baseline vs. reset variant on identical random streams."""
    streams = batch_streams(config)
    base_cfg = replace(config, reset_period=None)
    reset_cfg = replace(config, reset_period=reset_period)
    out = []
    for cfg in (base_cfg, reset_cfg):
        success, _, _ = run_batch_on_streams(cfg, streams)
        wins = int(success.sum())
        lo, hi = wilson_interval(wins, config.trials)
        out.append(SuccessRate(wins / config.trials, lo, hi, config.trials))
    return out[0], out[1]


def collapse_profile(config: ChainConfig, lengths) -> list[tuple[int, SuccessRate]]:
    """Success rate as a function of chain length at fixed disturbance levels."""
    profile = []
    for L in lengths:
        cfg = replace(config, length=int(L))
        profile.append((int(L), success_rate(cfg)))
    return profile


def exact_success_probability(config: ChainConfig) -> float:
    """Success probability by exact dynamic programming over the full state space.

    State is (position, trap memory); the phase counter is implicit in the
    absolute step index.  Complexity O(budget * length), exact up to float
    rounding.
    """
    L = config.length
    budget = config.step_budget
    p, eps, K = config.sticky_p, config.policy_noise, config.reset_period
    # value[t][x][d]: success probability before step t+1 at position x with
    # trap memory d (1 = forward); iterate t downward from the budget.
    nxt = np.zeros((L + 1, 2))
    nxt[L, :] = 1.0
    for t in range(budget, 0, -1):
        cur = np.zeros((L + 1, 2))
        cur[L, :] = 1.0
        reset_due = K is not None and t % K == 0
        for x in range(L):
            for d in (0, 1):
                p_fwd = p * d + (1 - p) * (1 - eps)
                p_bwd = 1.0 - p_fwd
                x_fwd = x + 1
                d_after_fwd = 1 if reset_due else 0
                d_after_bwd = 1
                win_fwd = 1.0 if x_fwd >= L else nxt[x_fwd, d_after_fwd]
                win_bwd = nxt[max(x - 1, 0), d_after_bwd]
                cur[x, d] = p_fwd * win_fwd + p_bwd * win_bwd
        nxt = cur
    return float(nxt[0, 1])


def to_finite_process(config: ChainConfig):
    """Hidden-state view of the chain for exact entropy diagnostics.

    Hidden states are (position, trap memory) pairs with positions clamped to
    [0, length]; the observed symbol is the position alone, so the trap
    register is hidden information a history compressor can destroy.
    """
    from .diagnostics import FiniteProcess

    L = config.length
    p, eps = config.sticky_p, config.policy_noise
    states = [(x, d) for x in range(L + 1) for d in (0, 1)]
    index = {s: i for i, s in enumerate(states)}
    transition = np.zeros((len(states), len(states)))
    for (x, d), i in index.items():
        p_fwd = p * d + (1 - p) * (1 - eps)
        x_fwd, x_bwd = min(x + 1, L), max(x - 1, 0)
        transition[i, index[(x_fwd, 0)]] += p_fwd
        transition[i, index[(x_bwd, 1)]] += 1.0 - p_fwd
    initial = np.zeros(len(states))
    initial[index[(0, 1)]] = 1.0
    return FiniteProcess(
        initial=initial,
        transition=transition,
        observation=tuple(x for (x, _d) in states),
    )


def expected_hitting_time(length: int, policy_noise: float) -> float:
    """Mean steps to reach the end for the trap-free noisy walk (exact solve)."""
    if not (0 < policy_noise < 1):
        raise InvalidInputError("hitting time solve needs 0 < policy_noise < 1")
    L = length
    fwd, bwd = 1 - policy_noise, policy_noise
    a = np.zeros((L, L))
    b = np.ones(L)
    for x in range(L):
        a[x, x] = 1.0
        if x + 1 < L:
            a[x, x + 1] -= fwd
        down = max(x - 1, 0)
        a[x, down] -= bwd
    return float(np.linalg.solve(a, b)[0])
