"""Transition kernels, hypothesis-conditioned propagation, and decay fitting.

The distinguishability between two hypothesis-conditioned state distributions
is measured in total variation.  Under a kernel with contraction coefficient
``eta < 1`` it shrinks geometrically per step, which yields an exponential
decay ``rho(t) <= rho0 * exp(-gamma * t)`` of the decision advantage and a
finite critical length ``L* = ln(rho0 / tau) / gamma`` at which the advantage
crosses a reliability threshold ``tau``.  This module provides:

- finite row-stochastic kernels and scalar Gaussian autoregressions,
- exact pushforward propagation of hypothesis pairs,
- total-variation / decision-advantage / mutual-information measures,
- Monte-Carlo simulation of the Gaussian chain with a plug-in advantage
  estimator, plus its exact closed-form reference trace,
- log-linear least-squares fitting of decay traces into a ``DecayFit``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, special

from .errors import InvalidInputError, NoSignalError
from .seeding import derive_rng

_NORM_ATOL = 1e-9


# ---------------------------------------------------------------------------
# Kernel and distribution types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform grid used to discretize a scalar kernel for numeric propagation."""

    low: float
    high: float
    cells: int

    def __post_init__(self):
        if not (self.high > self.low) or self.cells < 2:
            raise InvalidInputError("grid needs high > low and at least 2 cells")

    @property
    def centers(self) -> np.ndarray:
        edges = np.linspace(self.low, self.high, self.cells + 1)
        return 0.5 * (edges[:-1] + edges[1:])

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.low, self.high, self.cells + 1)


@dataclass(frozen=True, eq=False)
class FiniteMatrixKernel:
    """Row-stochastic transition matrix over a finite state space."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise InvalidInputError("kernel matrix must be square")
        if np.any(rows < 0):
            raise InvalidInputError("kernel matrix entries must be non-negative")
        if np.any(np.abs(rows.sum(axis=1) - 1.0) > _NORM_ATOL):
            raise InvalidInputError("kernel matrix rows must sum to 1 within 1e-9")

    @property
    def n_states(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True, eq=False)
class GaussianARKernel:
    """Scalar autoregression ``Z' = a * Z + noise``, noise ~ N(0, sigma^2)."""

    coefficient: float
    noise_sigma: float
    grid: GridSpec | None = None

    def __post_init__(self):
        if not abs(self.coefficient) < 1:
            raise InvalidInputError("autoregression requires |coefficient| < 1")
        if not self.noise_sigma > 0:
            raise InvalidInputError("noise_sigma must be positive")

    def discretize(self, grid: GridSpec | None = None) -> FiniteMatrixKernel:
        """Project the kernel onto a grid; tail mass folds into boundary cells."""
        grid = grid or self.grid
        if grid is None:
            raise InvalidInputError("numeric propagation needs a grid spec")
        centers = grid.centers
        edges = grid.edges
        means = self.coefficient * centers
        z = (edges[None, :] - means[:, None]) / self.noise_sigma
        cdf = special.ndtr(z)
        rows = np.diff(cdf, axis=1)
        rows[:, 0] += cdf[:, 0]
        rows[:, -1] += 1.0 - cdf[:, -1]
        return FiniteMatrixKernel(rows)


KernelSpec = FiniteMatrixKernel | GaussianARKernel


def _check_distribution(vec: np.ndarray, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-d probability vector")
    if np.any(vec < -1e-12):
        raise InvalidInputError(f"{name} has negative entries")
    if abs(vec.sum() - 1.0) > _NORM_ATOL:
        raise InvalidInputError(f"{name} must sum to 1 within 1e-9")
    return np.clip(vec, 0.0, None)


@dataclass(frozen=True, eq=False)
class HypothesisPair:
    """State laws conditioned on the goal hypothesis (p) and its negation (q)."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = _check_distribution(self.p, "p")
        q = _check_distribution(self.q, "q")
        if p.shape != q.shape:
            raise InvalidInputError("p and q must share the same support dimension")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class DecayFit:
    """Exponential decay fit of an advantage trace.

    ``eta = exp(-gamma)`` is the per-step contraction coefficient and
    ``alpha = exp(-2 * gamma)`` its mutual-information (SDPI) counterpart.
    ``l_star`` is the threshold-crossing horizon for the fitted curve, infinite
    for a degenerate (non-decaying) fit that starts above the threshold.
    """

    rho0: float
    gamma: float
    eta: float
    alpha: float
    r_squared: float
    l_star: float
    tau: float
    window: tuple[int, int]
    degenerate: bool = False

    def __post_init__(self):
        if abs(self.eta - math.exp(-self.gamma)) > 1e-12:
            raise InvalidInputError("eta must equal exp(-gamma) within 1e-12")
        if abs(self.alpha - math.exp(-2.0 * self.gamma)) > 1e-12:
            raise InvalidInputError("alpha must equal exp(-2*gamma) within 1e-12")

    def to_json_dict(self) -> dict:
        return {
            "rho0": self.rho0,
            "gamma": self.gamma,
            "eta": self.eta,
            "alpha": self.alpha,
            "r_squared": self.r_squared,
            "l_star": self.l_star,
            "tau": self.tau,
            "window": list(self.window),
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True, eq=False)
class AdvantageTrace:
    """Advantage values per step, with optional Monte-Carlo standard errors."""

    t: np.ndarray
    rho: np.ndarray
    stderr: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=int)
        rho = np.asarray(self.rho, dtype=float)
        if t.shape != rho.shape:
            raise InvalidInputError("t and rho must have matching lengths")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "rho", rho)
        if self.stderr is not None:
            se = np.asarray(self.stderr, dtype=float)
            if se.shape != rho.shape:
                raise InvalidInputError("stderr must match rho length")
            object.__setattr__(self, "stderr", se)

    def __len__(self) -> int:
        return len(self.t)


# ---------------------------------------------------------------------------
# Distances and information measures
# ---------------------------------------------------------------------------

def tv_distance(pair: HypothesisPair) -> float:
    """Total variation distance ``0.5 * sum |p_i - q_i|``."""
    return float(min(1.0, max(0.0, 0.5 * np.abs(pair.p - pair.q).sum())))


def decision_advantage(pair: HypothesisPair) -> float:
    """Bayes-optimal testing advantage under balanced priors.

    For balanced priors the advantage ``1 - 2 * P_e`` equals the total
    variation distance between the two conditional laws exactly.
    """
    return tv_distance(pair)


def dobrushin_coefficient(kernel: FiniteMatrixKernel) -> float:
    """Tightest uniform TV contraction coefficient of a finite kernel.

    Equals the maximum TV distance between any two rows.  A value of 1 means
    the kernel admits no uniform contraction; this violates the eta < 1
    assumption behind exponential decay and is flagged with a warning.
    """
    if not isinstance(kernel, FiniteMatrixKernel):
        raise InvalidInputError("Dobrushin coefficient is defined for finite kernels")
    rows = kernel.rows
    worst = 0.0
    for i in range(rows.shape[0] - 1):
        diffs = 0.5 * np.abs(rows[i + 1:] - rows[i]).sum(axis=1)
        worst = max(worst, float(diffs.max()))
    worst = min(1.0, worst)
    if worst >= 1.0 - 1e-12:
        warnings.warn(
            "kernel has Dobrushin coefficient 1: no uniform TV contraction",
            stacklevel=2,
        )
    return worst


def propagate(kernel: KernelSpec, pair: HypothesisPair, steps: int) -> list[HypothesisPair]:
    """Pushforward pairs ``(P_t, Q_t)`` for t = 0..steps under the kernel."""
    if steps < 0:
        raise InvalidInputError("steps must be >= 0")
    if isinstance(kernel, GaussianARKernel):
        kernel = kernel.discretize()
    rows = kernel.rows
    if pair.p.shape[0] != rows.shape[0]:
        raise InvalidInputError("pair support does not match kernel dimension")
    out = [pair]
    p, q = pair.p, pair.q
    for _ in range(steps):
        p = p @ rows
        q = q @ rows
        out.append(HypothesisPair(p / p.sum(), q / q.sum()))
    return out


def mutual_information(joint: np.ndarray) -> float:
    """Mutual information (nats) of a normalized joint table over (G, state)."""
    joint = np.asarray(joint, dtype=float)
    if np.any(joint < -1e-12):
        raise InvalidInputError("joint table has negative entries")
    if abs(joint.sum() - 1.0) > _NORM_ATOL:
        raise InvalidInputError("joint table must sum to 1 within 1e-9")
    joint = np.clip(joint, 0.0, None)
    pg = joint.sum(axis=1, keepdims=True)
    pz = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = joint * (np.log(joint) - np.log(pg @ pz))
    return float(max(0.0, terms[mask].sum()))


def gaussian_tv(mean_a: float, mean_b: float, sigma: float) -> float:
    """Exact TV distance between two equal-variance Gaussians.

    With sigma = 0 the laws are point masses: distance is 0 or 1.
    """
    if sigma < 0:
        raise InvalidInputError("sigma must be non-negative")
    if sigma == 0:
        return float(mean_a != mean_b)
    return float(special.erf(abs(mean_a - mean_b) / (2.0 * math.sqrt(2.0) * sigma)))


def gaussian_tv_numeric(mean_a: float, sigma_a: float, mean_b: float, sigma_b: float) -> float:
    """TV distance between two Gaussians by adaptive quadrature (|err| < 1e-6)."""
    if sigma_a <= 0 or sigma_b <= 0:
        raise InvalidInputError("numeric integration requires positive sigmas")

    def absdiff(x):
        da = math.exp(-0.5 * ((x - mean_a) / sigma_a) ** 2) / (sigma_a * math.sqrt(2 * math.pi))
        db = math.exp(-0.5 * ((x - mean_b) / sigma_b) ** 2) / (sigma_b * math.sqrt(2 * math.pi))
        return abs(da - db)

    span = 10.0 * max(sigma_a, sigma_b)
    lo = min(mean_a, mean_b) - span
    hi = max(mean_a, mean_b) + span
    value, err = integrate.quad(absdiff, lo, hi, limit=200, epsabs=1e-9)
    if err > 1e-6:
        raise InvalidInputError(f"quadrature error {err:.2e} exceeds 1e-6")
    return float(min(1.0, max(0.0, 0.5 * value)))


# ---------------------------------------------------------------------------
# Gaussian autoregressive chain
# ---------------------------------------------------------------------------

def _initial_moments(z0) -> tuple[float, float]:
    """Accept a point value or a (mean, sigma) tuple; return (mean, sigma)."""
    if isinstance(z0, (tuple, list)) and len(z0) == 2:
        mean, sigma = float(z0[0]), float(z0[1])
        if sigma < 0:
            raise InvalidInputError("initial sigma must be non-negative")
        return mean, sigma
    return float(z0), 0.0


def ar_exact_trace(kernel: GaussianARKernel, z0_given_g, horizon: int) -> AdvantageTrace:
    """Closed-form advantage trace of the Gaussian chain.

    Conditional laws stay Gaussian with means ``a^t * m0`` and shared variance
    ``a^{2t} s0^2 + sigma^2 * sum_{i<t} a^{2i}``, so the advantage is the
    equal-variance Gaussian TV at every step.  Requires equal initial spreads.
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    (m_p, s_p), (m_q, s_q) = (_initial_moments(z) for z in z0_given_g)
    if abs(s_p - s_q) > 1e-12:
        raise InvalidInputError("closed form needs equal initial spreads")
    a, sigma = kernel.coefficient, kernel.noise_sigma
    ts = np.arange(horizon + 1)
    rho = np.empty(horizon + 1)
    for t in ts:
        var_t = a ** (2 * t) * s_p**2 + sigma**2 * sum(a ** (2 * i) for i in range(t))
        rho[t] = gaussian_tv(a**t * m_p, a**t * m_q, math.sqrt(var_t))
    return AdvantageTrace(ts, rho, np.zeros(horizon + 1))


def simulate_ar_chain(
    kernel: GaussianARKernel,
    z0_given_g,
    horizon: int,
    trials: int,
    seed: int,
) -> AdvantageTrace:
    """Monte-Carlo advantage trace of the Gaussian chain.

    Simulates ``trials`` trajectories per hypothesis and estimates the
    advantage at each step by classifying with the midpoint threshold of the
    two sample means (the Bayes rule for the equal-variance Gaussian family):
    the measured balanced accuracy gives ``rho = P(correct|G=1) +
    P(correct|G=0) - 1``.  The threshold is fitted on one half of the
    trajectories and evaluated on the other half, so the estimate carries no
    overfitting optimism even when the advantage is near zero.  Deterministic
    given the seed.
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    a, sigma = kernel.coefficient, kernel.noise_sigma
    (m_p, s_p), (m_q, s_q) = (_initial_moments(z) for z in z0_given_g)
    rng = derive_rng(seed, "ar-chain", trials, horizon)
    zp = np.full(trials, m_p) + (s_p * rng.standard_normal(trials) if s_p else 0.0)
    zq = np.full(trials, m_q) + (s_q * rng.standard_normal(trials) if s_q else 0.0)
    rho = np.empty(horizon + 1)
    se = np.empty(horizon + 1)
    rho[0], se[0] = _threshold_advantage(zp, zq)
    for t in range(1, horizon + 1):
        zp = a * zp + sigma * rng.standard_normal(trials)
        zq = a * zq + sigma * rng.standard_normal(trials)
        rho[t], se[t] = _threshold_advantage(zp, zq)
    return AdvantageTrace(np.arange(horizon + 1), rho, se)


def _threshold_advantage(zp: np.ndarray, zq: np.ndarray) -> tuple[float, float]:
    half = len(zp) // 2
    if half >= 1:
        fit_p, fit_q = zp[:half], zq[:half]
        eval_p, eval_q = zp[half:], zq[half:]
    else:
        fit_p, fit_q = zp, zq
        eval_p, eval_q = zp, zq
    mid = 0.5 * (fit_p.mean() + fit_q.mean())
    sign = 1.0 if fit_p.mean() >= fit_q.mean() else -1.0
    n = len(eval_p)
    acc_p = np.count_nonzero(sign * (eval_p - mid) > 0) / n
    acc_q = np.count_nonzero(sign * (mid - eval_q) > 0) / n
    rho = acc_p + acc_q - 1.0
    se = math.sqrt(acc_p * (1 - acc_p) / n + acc_q * (1 - acc_q) / n)
    return float(min(1.0, max(0.0, rho))), float(se)


# ---------------------------------------------------------------------------
# Decay fitting
# ---------------------------------------------------------------------------

def critical_length(rho0: float, gamma: float, tau: float) -> float:
    """Threshold-crossing horizon of the fitted exponential curve."""
    if rho0 <= tau:
        return 0.0
    if gamma <= 0:
        return math.inf
    return math.log(rho0 / tau) / gamma


def fit_exponential_decay(
    trace: AdvantageTrace,
    tau: float,
    floor: float = 1e-6,
    trim_relative_stderr: float = 0.25,
    window: tuple[int, int] | None = None,
) -> DecayFit:
    """Log-linear least-squares fit of an advantage trace.

    The fitting window keeps points with ``rho > floor``; for Monte-Carlo
    traces, trailing points whose standard error exceeds
    ``trim_relative_stderr`` of the value are dropped as well.  An explicit
    ``window`` (t_lo, t_hi inclusive) overrides both rules.  Points carrying
    standard errors are weighted by inverse log-variance, floored at a 5%
    relative precision so that high-precision points cannot dominate where
    model curvature, not sampling noise, is the binding error (traces without
    standard errors therefore fit unweighted).  A non-decreasing trace yields
    ``gamma = 0`` with the degenerate flag set; a trace with fewer than 3
    usable points raises ``NoSignalError``.
    """
    if not (0 < tau < 1):
        raise InvalidInputError("tau must lie strictly inside (0, 1)")
    t = trace.t.astype(float)
    rho = trace.rho
    if window is not None:
        keep = (trace.t >= window[0]) & (trace.t <= window[1]) & (rho > 0)
    else:
        keep = rho > floor
        if trace.stderr is not None and trim_relative_stderr is not None:
            usable = np.flatnonzero(keep)
            while len(usable) and trace.stderr[usable[-1]] > trim_relative_stderr * rho[usable[-1]]:
                keep[usable[-1]] = False
                usable = usable[:-1]
    if keep.sum() < 3:
        raise NoSignalError("need at least 3 positive trace points to fit")
    tw, yw = t[keep], np.log(rho[keep])
    if trace.stderr is not None:
        sigma_log = np.maximum(trace.stderr[keep] / rho[keep], 0.05)
        slope, intercept = np.polyfit(tw, yw, 1, w=1.0 / sigma_log)
    else:
        slope, intercept = np.polyfit(tw, yw, 1)
    resid = yw - (slope * tw + intercept)
    ss_tot = float(((yw - yw.mean()) ** 2).sum())
    ss_res = float((resid**2).sum())
    r_squared = 1.0 if ss_tot < 1e-30 else max(0.0, 1.0 - ss_res / ss_tot)
    rho0 = float(math.exp(intercept))
    gamma = float(-slope)
    degenerate = gamma <= 0
    if degenerate:
        gamma = 0.0
    fit_window = (int(trace.t[keep][0]), int(trace.t[keep][-1]))
    return DecayFit(
        rho0=rho0,
        gamma=gamma,
        eta=math.exp(-gamma),
        alpha=math.exp(-2.0 * gamma),
        r_squared=r_squared,
        l_star=critical_length(rho0, gamma, tau),
        tau=tau,
        window=fit_window,
        degenerate=degenerate,
    )


def geometric_trace(eta: float, rho0: float, horizon: int) -> AdvantageTrace:
    """Synthetic geometric trace ``rho0 * eta^t`` for t = 0..horizon."""
    if not (0 < eta <= 1) or not (0 < rho0 <= 1):
        raise InvalidInputError("eta and rho0 must lie in (0, 1]")
    ts = np.arange(horizon + 1)
    return AdvantageTrace(ts, rho0 * eta**ts.astype(float))


def advantage_trace_from_pairs(pairs: list[HypothesisPair]) -> AdvantageTrace:
    """Advantage per propagation step for a list of pushforward pairs."""
    rho = np.array([decision_advantage(pair) for pair in pairs])
    return AdvantageTrace(np.arange(len(pairs)), rho)
