"""Sparse long-horizon environments with aliased observations and landmarks.

An instance hides a unique optimal action sequence of length L.  The only
reward is terminal: 1 iff every action matched the hidden path.  Observations
at on-path states are drawn from step-keyed mixtures kept within
``alias_epsilon`` total variation of a fixed base distribution, so they carry
no usable depth signal.  Optional landmarks partition the horizon into
independently solvable segments; each internal boundary is omitted with
probability ``p_drop`` at generation time, merging adjacent segments and
raising the longest effective segment ``h_max``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from .errors import ContractViolationError, InvalidInputError, ResourceLimitError
from .seeding import derive_rng

FAILURE_OBSERVATION = -1


@dataclass(frozen=True)
class TwHsfParams:
    horizon: int
    action_count: int
    alias_epsilon: float = 0.0
    observation_alphabet_size: int = 3
    landmarks: tuple[int, ...] | None = None
    landmark_drop_prob: float = 0.0

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidInputError("horizon must be >= 1")
        if self.action_count < 2:
            raise InvalidInputError("action_count must be >= 2")
        if not (0 <= self.alias_epsilon < 1):
            raise InvalidInputError("alias_epsilon must lie in [0, 1)")
        if self.observation_alphabet_size < 2:
            raise InvalidInputError("observation alphabet needs >= 2 symbols")
        if not (0 <= self.landmark_drop_prob <= 1):
            raise InvalidInputError("landmark_drop_prob must lie in [0, 1]")
        if self.landmarks is not None:
            segs = tuple(int(s) for s in self.landmarks)
            if any(s <= 0 for s in segs):
                raise InvalidInputError("segment lengths must be positive")
            if sum(segs) != self.horizon:
                raise InvalidInputError("segment lengths must sum to the horizon")
            object.__setattr__(self, "landmarks", segs)


@dataclass(frozen=True, eq=False)
class TwHsfInstance:
    params: TwHsfParams
    seed: int
    optimal_path: tuple[int, ...]
    base_distribution: np.ndarray
    step_symbols: tuple[int, ...]
    effective_segments: tuple[int, ...]

    @property
    def h_max(self) -> int:
        return max(self.effective_segments)

    def observation_distribution(self, t: int) -> np.ndarray:
        """Law of the observation emitted at on-path step t (1-based)."""
        if not (1 <= t <= self.params.horizon):
            raise InvalidInputError("step index out of range")
        eps = self.params.alias_epsilon
        dist = (1.0 - eps) * self.base_distribution.copy()
        dist[self.step_symbols[t - 1]] += eps
        return dist

    def to_json(self) -> str:
        payload = {
            "params": {
                "horizon": self.params.horizon,
                "action_count": self.params.action_count,
                "alias_epsilon": self.params.alias_epsilon,
                "observation_alphabet_size": self.params.observation_alphabet_size,
                "landmarks": list(self.params.landmarks) if self.params.landmarks else None,
                "landmark_drop_prob": self.params.landmark_drop_prob,
            },
            "seed": self.seed,
            "optimal_path": list(self.optimal_path),
            "step_symbols": list(self.step_symbols),
            "effective_segments": list(self.effective_segments),
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "TwHsfInstance":
        payload = json.loads(text)
        p = payload["params"]
        params = TwHsfParams(
            horizon=p["horizon"],
            action_count=p["action_count"],
            alias_epsilon=p["alias_epsilon"],
            observation_alphabet_size=p["observation_alphabet_size"],
            landmarks=tuple(p["landmarks"]) if p["landmarks"] else None,
            landmark_drop_prob=p["landmark_drop_prob"],
        )
        return TwHsfInstance(
            params=params,
            seed=payload["seed"],
            optimal_path=tuple(payload["optimal_path"]),
            base_distribution=np.full(
                params.observation_alphabet_size, 1.0 / params.observation_alphabet_size
            ),
            step_symbols=tuple(payload["step_symbols"]),
            effective_segments=tuple(payload["effective_segments"]),
        )


class Status(Enum):
    ON_PATH = "on_path"
    FAILED = "failed"
    SUCCEEDED = "succeeded"


@dataclass
class EnvState:
    t: int
    status: Status
    history: list[tuple[int, int]] = field(default_factory=list)
    _rng: np.random.Generator | None = None

    @property
    def terminal(self) -> bool:
        return self.status is not Status.ON_PATH


def merge_segments(segments: tuple[int, ...], dropped: list[bool]) -> tuple[int, ...]:
    """Merge adjacent segments whose shared internal boundary was dropped."""
    if len(dropped) != len(segments) - 1:
        raise InvalidInputError("need one drop flag per internal boundary")
    merged = [segments[0]]
    for seg, drop in zip(segments[1:], dropped):
        if drop:
            merged[-1] += seg
        else:
            merged.append(seg)
    return tuple(merged)


def generate_instance(params: TwHsfParams, seed: int) -> TwHsfInstance:
    """Sample an instance; deterministic given (params, seed).

    The optimal path is uniform over the action-sequence space.  Observation
    laws are mixtures ``(1 - eps) * D + eps * delta(m_t)`` with D uniform over
    the alphabet and ``m_t`` a seeded step-keyed symbol, which certifies
    ``TV(law_t, D) = eps * (1 - 1/|alphabet|) <= eps``.  Landmark omission is
    sampled once per instance: each internal boundary drops independently with
    probability ``p_drop``.
    """
    rng = derive_rng(seed, "twhsf-instance")
    path = tuple(int(a) for a in rng.integers(0, params.action_count, size=params.horizon))
    symbols = tuple(
        int(s) for s in rng.integers(0, params.observation_alphabet_size, size=params.horizon)
    )
    base = np.full(params.observation_alphabet_size, 1.0 / params.observation_alphabet_size)
    if params.landmarks is None:
        effective = (params.horizon,)
    else:
        drops = [bool(rng.random() < params.landmark_drop_prob) for _ in params.landmarks[:-1]]
        effective = merge_segments(params.landmarks, drops)
    return TwHsfInstance(
        params=params,
        seed=seed,
        optimal_path=path,
        base_distribution=base,
        step_symbols=symbols,
        effective_segments=effective,
    )


def reset(instance: TwHsfInstance, episode_seed: int) -> tuple[EnvState, int]:
    """Start an episode; returns the fresh state and the first observation."""
    rng = derive_rng(instance.seed, "episode", episode_seed)
    state = EnvState(t=0, status=Status.ON_PATH, history=[], _rng=rng)
    obs = _sample_observation(instance, state, 1)
    return state, obs


def _sample_observation(instance: TwHsfInstance, state: EnvState, t: int) -> int:
    if state.status is Status.FAILED:
        return FAILURE_OBSERVATION
    dist = instance.observation_distribution(min(t, instance.params.horizon))
    return int(state._rng.choice(len(dist), p=dist))


def env_step(
    instance: TwHsfInstance, state: EnvState, action: int
) -> tuple[EnvState, int, int, bool]:
    """Advance one step; reward 1 only at t = L with the full path matched."""
    if state.terminal:
        raise ContractViolationError("cannot step a terminal episode state")
    if not (0 <= action < instance.params.action_count):
        raise InvalidInputError("action outside the action space")
    t = state.t + 1
    on_path = action == instance.optimal_path[t - 1]
    if not on_path:
        status = Status.FAILED
    elif t == instance.params.horizon:
        status = Status.SUCCEEDED
    else:
        status = Status.ON_PATH
    new_state = EnvState(t=t, status=status, history=list(state.history), _rng=state._rng)
    reward = 1 if status is Status.SUCCEEDED else 0
    done = status is not Status.ON_PATH
    obs = FAILURE_OBSERVATION if done else _sample_observation(instance, new_state, t + 1)
    new_state.history.append((obs, action))
    return new_state, obs, reward, done


def success_probability(action_count: int, horizon: int) -> Fraction:
    """Per-episode success chance of uniform random play: ``|A|^-L`` exactly."""
    if action_count < 2 or horizon < 1:
        raise InvalidInputError("need action_count >= 2 and horizon >= 1")
    return Fraction(1, action_count**horizon)


# ---------------------------------------------------------------------------
# Depth unidentifiability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HistoryTvResult:
    value: float
    ci_halfwidth: float
    exact: bool


def history_distribution_tv(
    instance: TwHsfInstance,
    t: int,
    t_prime: int,
    monte_carlo: bool = False,
    samples: int = 100_000,
    seed: int = 0,
    max_support: int = 1_000_000,
) -> HistoryTvResult:
    """TV between survival-conditioned observation histories at two depths.

    Conditioned on survival, action prefixes coincide with the optimal path,
    so all distinguishability lives in the observations.  The two history laws
    are compared over their common window of the most recent
    ``k = min(t, t_prime)`` observations (the part of the history an agent
    could use to tell the depths apart).  The result is bounded by
    ``alias_epsilon * k``.  Exact enumeration needs product support
    ``alphabet^k <= max_support``; otherwise pass ``monte_carlo=True`` for an
    unbiased likelihood-ratio estimate with a 99% CI half-width.
    """
    L = instance.params.horizon
    if not (0 <= t < L and 0 <= t_prime < L):
        raise InvalidInputError("depths must satisfy 0 <= t, t' < horizon")
    k = min(t, t_prime)
    if k == 0 or t == t_prime:
        return HistoryTvResult(0.0, 0.0, True)
    win_a = [instance.observation_distribution(s) for s in range(t - k + 1, t + 1)]
    win_b = [instance.observation_distribution(s) for s in range(t_prime - k + 1, t_prime + 1)]
    m = instance.params.observation_alphabet_size
    if m**k <= max_support:
        tv = 0.0
        total = m**k
        for flat in range(total):
            rem = flat
            pa = pb = 1.0
            for i in range(k):
                sym = rem % m
                rem //= m
                pa *= win_a[i][sym]
                pb *= win_b[i][sym]
            tv += abs(pa - pb)
        return HistoryTvResult(0.5 * tv, 0.0, True)
    if not monte_carlo:
        raise ResourceLimitError(
            f"product support {m}^{k} exceeds {max_support}; pass monte_carlo=True"
        )
    rng = derive_rng(seed, "history-tv", t, t_prime)
    draws = np.stack([rng.choice(m, size=samples, p=w) for w in win_a], axis=1)
    log_ratio = np.zeros(samples)
    for i in range(k):
        log_ratio += np.log(win_b[i][draws[:, i]]) - np.log(win_a[i][draws[:, i]])
    stat = 0.5 * np.abs(1.0 - np.exp(log_ratio))
    value = float(stat.mean())
    ci = float(2.576 * stat.std(ddof=1) / np.sqrt(samples))
    return HistoryTvResult(value, ci, False)
