"""Critical-response indicators and branching/phase-boundary quantities.

Three per-step indicators signal approach to the instability regime:

- ``gamma_t = -(1/t) ln(rho_t / rho0)``, the running decay-rate estimate;
- ``delta_h_t``, the predictive entropy a history compressor gives up
  relative to the full history (zero iff the compressed view predicts the
  next symbol as well as the full one);
- ``r_t = (t - t_last_reset) / L*``, the fraction of the critical length an
  uninterrupted span has consumed.

A step is critical when at least two indicators exceed their thresholds.
The module also provides the multi-branch survival formula
``1 - (1 - rho)^b`` and the segment-length phase boundary it induces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, ResourceLimitError, UndefinedIndicatorError


def gamma_t(rho0: float, rho_t: float, t: int) -> float:
    """Running per-step decay estimate at step t >= 1."""
    if t < 1:
        raise InvalidInputError("t must be >= 1")
    if rho0 <= 0:
        raise InvalidInputError("rho0 must be positive")
    if rho_t <= 0:
        raise UndefinedIndicatorError("advantage hit zero: decay rate saturated")
    return -math.log(rho_t / rho0) / t


def r_t(t: int, t_last_reset: int, l_star: float) -> float:
    """Consumed fraction of the critical length since the last reset."""
    if l_star <= 0:
        raise InvalidInputError("l_star must be positive")
    if t < t_last_reset:
        raise InvalidInputError("t must be >= t_last_reset")
    return (t - t_last_reset) / l_star


# ---------------------------------------------------------------------------
# Conditional entropy spike indicator
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FiniteProcess:
    """Hidden finite Markov chain observed through a symbol map.

    ``initial`` and ``transition`` act on hidden states; ``observation`` maps
    each hidden state to the emitted symbol.  Histories are observed symbol
    sequences, which makes non-Markov observable processes (hidden registers)
    expressible.
    """

    initial: np.ndarray
    transition: np.ndarray
    observation: tuple[int, ...]

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=float)
        transition = np.asarray(self.transition, dtype=float)
        if abs(initial.sum() - 1.0) > 1e-9 or np.any(initial < 0):
            raise InvalidInputError("initial must be a distribution")
        if transition.shape != (len(initial), len(initial)):
            raise InvalidInputError("transition shape must match the state count")
        if np.any(np.abs(transition.sum(axis=1) - 1.0) > 1e-9) or np.any(transition < 0):
            raise InvalidInputError("transition rows must be distributions")
        if len(self.observation) != len(initial):
            raise InvalidInputError("need one observation symbol per hidden state")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)

    @property
    def n_symbols(self) -> int:
        return max(self.observation) + 1

    def history_table(self, t: int, max_support: int = 1_000_000) -> dict:
        """Map each observable history of length t to its hidden-state weights."""
        if t < 1:
            raise InvalidInputError("t must be >= 1")
        if self.n_symbols**t > max_support:
            raise ResourceLimitError(
                f"history support {self.n_symbols}^{t} exceeds {max_support}"
            )
        obs = np.asarray(self.observation)
        table = {(): self.initial}
        for _ in range(t):
            nxt = {}
            for hist, weights in table.items():
                pushed = weights @ self.transition
                for symbol in range(self.n_symbols):
                    mass = np.where(obs == symbol, pushed, 0.0)
                    total = mass.sum()
                    if total > 0:
                        nxt[hist + (symbol,)] = mass
            table = nxt
        return table


def identity_compressor(history: tuple) -> tuple:
    return history


def last_k_compressor(k: int):
    """Keep only the most recent k symbols (truncate-to-last-k)."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")

    def compress(history: tuple) -> tuple:
        return history[-k:]

    return compress


def phase_suffix_compressor(phase_k: int):
    """Consolidate history up to the last phase boundary into the boundary index.

    Keeps the suffix since the most recent multiple of ``phase_k`` together
    with that boundary position (the consolidated segment state).
    """
    if phase_k < 1:
        raise InvalidInputError("phase_k must be >= 1")

    def compress(history: tuple) -> tuple:
        boundary = (len(history) // phase_k) * phase_k
        return (boundary,) + tuple(history[boundary:])

    return compress


def _conditional_entropy(groups: dict, transition: np.ndarray, observation) -> float:
    """H(next symbol | group), exact summation over the grouped joint table."""
    obs = np.asarray(observation)
    n_symbols = int(obs.max()) + 1
    entropy = 0.0
    for weights in groups.values():
        pushed = weights @ transition
        total = pushed.sum()
        if total <= 0:
            continue
        dist = np.array(
            [np.where(obs == s, pushed, 0.0).sum() for s in range(n_symbols)]
        )
        dist = dist[dist > 0]
        entropy += -(dist * np.log(dist / total)).sum()
    return float(entropy)


def delta_h_t(
    process: FiniteProcess,
    compressor,
    t: int,
    max_support: int = 1_000_000,
) -> float:
    """Predictive entropy lost by compressing the history at step t.

    Both conditional entropies are computed exactly from the enumerated joint
    table.  For any compressor that is a deterministic function of the
    history the result is non-negative, and it is zero when the compressed
    view retains everything the history says about the next symbol (e.g. the
    last state of a Markov chain).
    """
    table = process.history_table(t, max_support=max_support)
    full = _conditional_entropy(table, process.transition, process.observation)
    grouped: dict = {}
    for hist, weights in table.items():
        key = compressor(hist)
        if key in grouped:
            grouped[key] = grouped[key] + weights
        else:
            grouped[key] = weights.copy()
    compressed = _conditional_entropy(grouped, process.transition, process.observation)
    return float(compressed - full)


# ---------------------------------------------------------------------------
# Critical region
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdPolicy:
    gamma_threshold: float
    delta_h_threshold: float
    r_threshold: float = 0.8

    def __post_init__(self):
        if min(self.gamma_threshold, self.delta_h_threshold, self.r_threshold) <= 0:
            raise InvalidInputError("thresholds must be positive")

    @staticmethod
    def from_fit(
        fitted_gamma: float,
        background_delta_h,
        gamma_multiplier: float = 1.5,
        r_threshold: float = 0.8,
    ) -> "ThresholdPolicy":
        """Defaults: fitted gamma x 1.5 and background mean + 2 std."""
        background = np.asarray(background_delta_h, dtype=float)
        return ThresholdPolicy(
            gamma_threshold=gamma_multiplier * fitted_gamma,
            delta_h_threshold=float(background.mean() + 2.0 * background.std(ddof=0)),
            r_threshold=r_threshold,
        )


@dataclass(frozen=True)
class DiagnosticsFrame:
    t: int
    gamma_t: float
    delta_h_t: float
    r_t: float
    gamma_flag: bool = False
    delta_h_flag: bool = False
    r_flag: bool = False
    critical: bool = False

    def __post_init__(self):
        if not math.isnan(self.r_t) and self.r_t < 0:
            raise InvalidInputError("r_t must be non-negative")
        if self.critical != (self.flag_count >= 2):
            raise InvalidInputError("critical must mean at least two flags set")

    @property
    def flag_count(self) -> int:
        return int(self.gamma_flag) + int(self.delta_h_flag) + int(self.r_flag)

    @property
    def flags(self) -> str:
        names = []
        if self.gamma_flag:
            names.append("gamma")
        if self.delta_h_flag:
            names.append("delta_h")
        if self.r_flag:
            names.append("r")
        return "|".join(names)


def critical_region(frames, policy: ThresholdPolicy) -> list[DiagnosticsFrame]:
    """Set indicator flags per frame; critical iff at least two are exceeded.

    NaN indicator values (not computed) never raise a flag.  Saturated
    gamma_t (infinite) always exceeds its threshold.
    """
    flagged = []
    for frame in frames:
        gflag = (not math.isnan(frame.gamma_t)) and frame.gamma_t > policy.gamma_threshold
        dflag = (not math.isnan(frame.delta_h_t)) and frame.delta_h_t > policy.delta_h_threshold
        rflag = (not math.isnan(frame.r_t)) and frame.r_t > policy.r_threshold
        flagged.append(
            replace(
                frame,
                gamma_flag=gflag,
                delta_h_flag=dflag,
                r_flag=rflag,
                critical=(int(gflag) + int(dflag) + int(rflag)) >= 2,
            )
        )
    return flagged


def frames_from_trace(
    trace_t,
    trace_rho,
    l_star: float,
    reset_period: int | None = None,
    reset_times=None,
    rho0: float | None = None,
    delta_h=None,
) -> list[DiagnosticsFrame]:
    """Assemble raw frames from an advantage trace and a reset schedule.

    ``rho0`` defaults to the first trace value.  Saturated steps (advantage
    at zero) record an infinite gamma_t.  ``delta_h`` is an optional aligned
    array; missing values are NaN.
    """
    ts = np.asarray(trace_t, dtype=int)
    rho = np.asarray(trace_rho, dtype=float)
    base = rho0 if rho0 is not None else float(rho[0])
    resets = sorted(set(reset_times or []))
    frames = []
    for i, (t, r) in enumerate(zip(ts, rho)):
        if t < 1:
            continue
        try:
            g = gamma_t(base, float(r), int(t))
        except UndefinedIndicatorError:
            g = math.inf
        if reset_period is not None:
            last_reset = (t // reset_period) * reset_period if t >= reset_period else 0
            last_reset = min(last_reset, t)
        elif resets:
            past = [x for x in resets if x <= t]
            last_reset = past[-1] if past else 0
        else:
            last_reset = 0
        dh = float(delta_h[i]) if delta_h is not None else math.nan
        frames.append(
            DiagnosticsFrame(
                t=int(t),
                gamma_t=g,
                delta_h_t=dh,
                r_t=r_t(int(t), last_reset, l_star),
            )
        )
    return frames


# ---------------------------------------------------------------------------
# Branching compensation and phase boundary
# ---------------------------------------------------------------------------

def branching_survival(rho: float, b: int) -> float:
    """Survival of b independent branches: ``1 - (1 - rho)^b``."""
    if not (0 <= rho <= 1):
        raise InvalidInputError("rho must lie in [0, 1]")
    if b < 1:
        raise InvalidInputError("b must be >= 1")
    return 1.0 - (1.0 - rho) ** b


def phase_boundary_length(gamma: float, rho0: float, tau: float, b: int) -> float:
    """Largest segment length keeping b-branch survival at threshold tau.

    Solves ``1 - (1 - rho0 e^{-gamma l})^b = tau`` for l; at b = 1 this
    reduces exactly to the critical length ``ln(rho0 / tau) / gamma``.
    Grows logarithmically in b.
    """
    if gamma <= 0:
        raise InvalidInputError("gamma must be positive")
    if not (0 < tau < rho0 <= 1):
        raise InvalidInputError("need 0 < tau < rho0 <= 1")
    if b < 1:
        raise InvalidInputError("b must be >= 1")
    per_branch = 1.0 - (1.0 - tau) ** (1.0 / b)
    return math.log(rho0 / per_branch) / gamma


def phase_boundary(gamma: float, rho0: float, tau: float, b_values) -> list[tuple[int, float]]:
    """Boundary curve ``l*(b)`` over the given branching factors."""
    return [(int(b), phase_boundary_length(gamma, rho0, tau, int(b))) for b in b_values]
