"""Episodes-to-success scaling: unstructured retry vs. landmark segmentation.

The unstructured agent replays fresh uniform action sequences until the
hidden path matches, so its episode count is geometric with success chance
``|A|^-L`` and its median grows exponentially in the horizon.  The structured
agent solves each effective segment independently (uniform retry within the
segment, exact replay of memorized prefixes), shifting the exponential
dependence from L to the longest effective segment.  Landmark omission merges
segments and interpolates back toward the unstructured regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .seeding import derive_rng, parallel_map
from .twhsf import TwHsfParams, generate_instance

_EPISODE_BATCH = 4096


@dataclass(frozen=True)
class ScalingConfig:
    horizons: tuple[int, ...]
    action_count: int
    trials_per_point: int
    alias_epsilon: float = 0.0
    observation_alphabet_size: int = 3
    segment_length: int | None = None
    segment_count: int | None = None
    p_drop: float = 0.0
    episode_cap: int = 300_000
    confidence_delta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.episode_cap < 1:
            raise InvalidInputError("episode_cap must be >= 1")
        if self.trials_per_point < 1:
            raise InvalidInputError("trials_per_point must be >= 1")
        if self.segment_length is not None and self.segment_count is not None:
            raise InvalidInputError("give segment_length or segment_count, not both")
        if not (0 < self.confidence_delta < 1):
            raise InvalidInputError("confidence_delta must lie in (0, 1)")
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))


@dataclass(frozen=True, eq=False)
class EpisodeSamples:
    """Per-trial episodes-to-success; capped trials carry the cap value."""

    episodes: np.ndarray
    capped: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "episodes", np.asarray(self.episodes, dtype=np.int64))
        object.__setattr__(self, "capped", np.asarray(self.capped, dtype=bool))

    @property
    def median(self) -> float:
        return float(np.median(self.episodes))

    @property
    def iqr(self) -> tuple[float, float]:
        return (
            float(np.percentile(self.episodes, 25)),
            float(np.percentile(self.episodes, 75)),
        )

    @property
    def capped_fraction(self) -> float:
        return float(self.capped.mean())


@dataclass(frozen=True)
class CurvePoint:
    horizon: int
    median_episodes: float
    iqr_low: float
    iqr_high: float
    capped_fraction: float


@dataclass(frozen=True)
class ScalingCurve:
    condition: str
    points: tuple[CurvePoint, ...]
    theoretical_reference: tuple[tuple[int, float], ...]
    log_slope: float | None = None


def segments_for(config: ScalingConfig, horizon: int) -> tuple[int, ...]:
    """Segment layout for a horizon under the configured landmark policy."""
    if config.segment_length is not None:
        m = config.segment_length
        if m < 1:
            raise InvalidInputError("segment_length must be >= 1")
        segs = [m] * (horizon // m)
        if horizon % m:
            segs.append(horizon % m)
        return tuple(segs)
    if config.segment_count is not None:
        k = config.segment_count
        if not (1 <= k <= horizon):
            raise InvalidInputError("segment_count must lie in [1, horizon]")
        base, extra = divmod(horizon, k)
        return tuple(base + (1 if i < extra else 0) for i in range(k))
    raise InvalidInputError("no landmark policy configured")


def _episodes_until_match(
    rng: np.random.Generator, action_count: int, target: np.ndarray, cap: int
) -> tuple[int, bool]:
    """Episodes of fresh uniform action sequences until one matches the target."""
    consumed = 0
    while consumed < cap:
        batch = min(_EPISODE_BATCH, cap - consumed)
        guesses = rng.integers(0, action_count, size=(batch, len(target)))
        hits = np.flatnonzero((guesses == target).all(axis=1))
        if hits.size:
            return consumed + int(hits[0]) + 1, False
        consumed += batch
    return cap, True


def _instance_for_trial(config: ScalingConfig, horizon: int, trial: int, structured: bool):
    params = TwHsfParams(
        horizon=horizon,
        action_count=config.action_count,
        alias_epsilon=config.alias_epsilon,
        observation_alphabet_size=config.observation_alphabet_size,
        landmarks=segments_for(config, horizon) if structured else None,
        landmark_drop_prob=config.p_drop if structured else 0.0,
    )
    return generate_instance(params, seed_for_trial(config, horizon, trial))


def _unstructured_trial(args) -> tuple[int, bool]:
    config, horizon, trial = args
    instance = _instance_for_trial(config, horizon, trial, structured=False)
    rng = derive_rng(config.seed, "trackb", horizon, trial, "episodes")
    target = np.array(instance.optimal_path)
    return _episodes_until_match(rng, config.action_count, target, config.episode_cap)


def _structured_trial(args) -> tuple[int, bool]:
    config, horizon, trial = args
    instance = _instance_for_trial(config, horizon, trial, structured=True)
    rng = derive_rng(config.seed, "trackb", horizon, trial, "episodes")
    path = np.array(instance.optimal_path)
    total = 0
    capped = False
    offset = 0
    for segment in instance.effective_segments:
        used, hit_cap = _episodes_until_match(
            rng, config.action_count, path[offset : offset + segment], config.episode_cap - total
        )
        total += used
        offset += segment
        if hit_cap:
            capped = True
            break
    return total, capped


def seed_for_trial(config: ScalingConfig, horizon: int, trial: int) -> int:
    """Instance seed shared across conditions and p_drop levels (matched seeds)."""
    return int(derive_rng(config.seed, "trackb", horizon, trial, "instance").integers(2**63))


def run_unstructured(config: ScalingConfig, horizon: int, jobs: int = 1) -> EpisodeSamples:
    """Uniform-retry episode counts per trial, capped at the episode cap."""
    args = [(config, horizon, trial) for trial in range(config.trials_per_point)]
    results = parallel_map(_unstructured_trial, args, jobs)
    episodes, capped = zip(*results)
    return EpisodeSamples(np.array(episodes), np.array(capped))


def run_structured(config: ScalingConfig, horizon: int, jobs: int = 1) -> EpisodeSamples:
    """Segment-wise retry with memorization; every reset counts one episode."""
    if config.segment_length is None and config.segment_count is None:
        raise InvalidInputError("structured runs need a landmark policy")
    args = [(config, horizon, trial) for trial in range(config.trials_per_point)]
    results = parallel_map(_structured_trial, args, jobs)
    episodes, capped = zip(*results)
    return EpisodeSamples(np.array(episodes), np.array(capped))


def theoretical_bounds(
    action_count: int, horizon: int, segments: tuple[int, ...], delta: float
) -> tuple[float, float]:
    """Order-of-growth references ``|A|^L ln(1/delta)`` and ``k |A|^lmax ln(1/delta)``.

    Constants are fixed at 1; these are reference magnitudes, not predictions.
    """
    if not (0 < delta < 1):
        raise InvalidInputError("delta must lie in (0, 1)")
    log_term = math.log(1.0 / delta)
    unstructured = float(action_count**horizon) * log_term
    structured = len(segments) * float(action_count ** max(segments)) * log_term
    return unstructured, structured


def geometric_ks_test(samples, p: float, seed: int = 0):
    """One-sample KS test against Geometric(p), valid for discrete data.

    A naive ``kstest(samples, geom(p).cdf)`` is invalid for discrete nulls
    (the CDF atoms create a deterministic gap, so even exact geometric data
    fails).  This uses the randomized probability integral transform: under
    the null, ``F(x-1) + V * (F(x) - F(x-1))`` with V ~ U(0,1) is exactly
    uniform, so the continuous KS test applies.  Deterministic given seed.
    """
    from scipy import stats

    xs = np.asarray(samples, dtype=np.int64)
    if np.any(xs < 1):
        raise InvalidInputError("geometric samples must be >= 1")
    if not (0 < p <= 1):
        raise InvalidInputError("p must lie in (0, 1]")
    rng = derive_rng(seed, "geometric-ks", len(xs))
    cdf_hi = 1.0 - (1.0 - p) ** xs
    mass = p * (1.0 - p) ** (xs - 1)
    u = cdf_hi - mass + rng.random(len(xs)) * mass
    return stats.kstest(u, "uniform")


def geometric_median(p: float) -> int:
    """Median of a geometric law with success chance p (support 1, 2, ...)."""
    if not (0 < p <= 1):
        raise InvalidInputError("p must lie in (0, 1]")
    if p == 1:
        return 1
    return int(math.ceil(math.log(0.5) / math.log(1.0 - p)))


def median_ci(samples: np.ndarray, confidence: float = 0.99) -> tuple[float, float]:
    """Order-statistic confidence interval for the population median."""
    from scipy import stats

    xs = np.sort(np.asarray(samples))
    n = len(xs)
    alpha = 1.0 - confidence
    lo = int(stats.binom.ppf(alpha / 2, n, 0.5))
    hi = int(stats.binom.ppf(1 - alpha / 2, n, 0.5))
    lo = max(0, min(lo, n - 1))
    hi = max(0, min(hi, n - 1))
    return float(xs[lo]), float(xs[hi])


def fit_log_slope(horizons, medians) -> float:
    """Least-squares slope of ln(median) against the horizon."""
    hs = np.asarray(horizons, dtype=float)
    ms = np.asarray(medians, dtype=float)
    if len(hs) < 2:
        raise InvalidInputError("need at least two points to fit a slope")
    slope, _ = np.polyfit(hs, np.log(ms), 1)
    return float(slope)


def collect_samples(config: ScalingConfig, jobs: int = 1) -> dict:
    """Per-condition, per-horizon episode samples for the whole sweep."""
    return {
        "unstructured": {h: run_unstructured(config, h, jobs) for h in config.horizons},
        "structured": {h: run_structured(config, h, jobs) for h in config.horizons},
    }


def build_scaling_curve(
    config: ScalingConfig, jobs: int = 1, samples: dict | None = None
) -> tuple[ScalingCurve, ScalingCurve]:
    """Aggregate both conditions over all horizons with reference bounds.

    The unstructured log-slope is fitted on uncapped points only.
    """
    if samples is None:
        samples = collect_samples(config, jobs)
    un_points, st_points = [], []
    un_ref, st_ref = [], []
    for horizon in config.horizons:
        un = samples["unstructured"][horizon]
        st = samples["structured"][horizon]
        for point_samples, acc in ((un, un_points), (st, st_points)):
            q1, q3 = point_samples.iqr
            acc.append(
                CurvePoint(horizon, point_samples.median, q1, q3, point_samples.capped_fraction)
            )
        bound_un, bound_st = theoretical_bounds(
            config.action_count,
            horizon,
            segments_for(config, horizon),
            config.confidence_delta,
        )
        un_ref.append((horizon, bound_un))
        st_ref.append((horizon, bound_st))
    uncapped = [p for p in un_points if p.capped_fraction < 0.5]
    slope = (
        fit_log_slope([p.horizon for p in uncapped], [p.median_episodes for p in uncapped])
        if len(uncapped) >= 2
        else None
    )
    st_slope = (
        fit_log_slope([p.horizon for p in st_points], [p.median_episodes for p in st_points])
        if len(st_points) >= 2
        else None
    )
    return (
        ScalingCurve("unstructured", tuple(un_points), tuple(un_ref), slope),
        ScalingCurve("structured", tuple(st_points), tuple(st_ref), st_slope),
    )
