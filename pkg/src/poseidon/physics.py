"""Bounded seismological-law parameters and reference estimators.

Raw learnable scalars are mapped onto physically admissible ranges:

    b  = 0.7 + 0.6 * sigmoid(theta_b)          in (0.7, 1.3)
    p  = 0.8 + 0.4 * sigmoid(theta_p)          in (0.8, 1.2)
    c  = softplus(theta_c) + 0.001             > 0.001 days
    dM = delta_m                               unbounded

The closed-form magnitude-frequency estimator (Aki 1965, Utsu 1965 bin
correction) and a deterministic grid-search maximum-likelihood fit of the
aftershock decay law serve as the independent oracles that the learned
parameters are tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diff
from .errors import EstimationError, InvalidInputError

B_LOW, B_SPAN = 0.7, 0.6
P_LOW, P_SPAN = 0.8, 0.4
C_FLOOR = 0.001


@dataclass(frozen=True)
class PhysicsParams:
    """Raw learnable scalars with derived bounded values."""

    theta_b: float = 0.0
    theta_p: float = 0.0
    theta_c: float = -5.0
    delta_m: float = 1.2

    @property
    def b(self) -> float:
        return B_LOW + B_SPAN * _sigmoid(self.theta_b)

    @property
    def p(self) -> float:
        return P_LOW + P_SPAN * _sigmoid(self.theta_p)

    @property
    def c(self) -> float:
        return _softplus(self.theta_c) + C_FLOOR

    def derived(self) -> tuple[float, float, float, float]:
        return (self.b, self.p, self.c, self.delta_m)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


# -- differentiable derivations (Tensor in, Tensor out) ---------------------

def derive_b(theta_b):
    return diff.add(diff.mul(diff.sigmoid(theta_b), B_SPAN), B_LOW)


def derive_p(theta_p):
    return diff.add(diff.mul(diff.sigmoid(theta_p), P_SPAN), P_LOW)


def derive_c(theta_c):
    return diff.add(diff.softplus(theta_c), C_FLOOR)


def derive(params: PhysicsParams) -> tuple[float, float, float, float]:
    """Bounded values for raw scalars; the float twin of the Tensor path."""
    if not all(map(math.isfinite, (params.theta_b, params.theta_p, params.theta_c, params.delta_m))):
        raise InvalidInputError("physics raw parameters must be finite")
    return params.derived()


# -- inverse maps (used to represent published values exactly) ---------------

def raw_for_b(b: float) -> float:
    if not B_LOW < b < B_LOW + B_SPAN:
        raise InvalidInputError(f"b={b} outside the open interval ({B_LOW}, {B_LOW + B_SPAN})")
    q = (b - B_LOW) / B_SPAN
    return math.log(q / (1.0 - q))

def raw_for_p(p: float) -> float:
    if not P_LOW < p < P_LOW + P_SPAN:
        raise InvalidInputError(f"p={p} outside the open interval ({P_LOW}, {P_LOW + P_SPAN})")
    q = (p - P_LOW) / P_SPAN
    return math.log(q / (1.0 - q))

def raw_for_c(c: float) -> float:
    if c <= C_FLOOR:
        raise InvalidInputError(f"c={c} must exceed the floor {C_FLOOR}")
    y = c - C_FLOOR
    # inverse softplus, stable for small and large y
    return y + math.log(-math.expm1(-y)) if y > 1e-10 else math.log(math.expm1(y))


# -- magnitude-frequency slope estimator -------------------------------------

@dataclass(frozen=True)
class BEstimate:
    b: float
    std_err: float
    n: int


def mle_b(magnitudes, m_c: float, bin_width: float = 0.0) -> BEstimate:
    """Maximum-likelihood slope of the magnitude-frequency relation.

    b = log10(e) / (mean(M) - (m_c - bin_width / 2)) for magnitudes at or
    above the completeness level m_c; bin_width corrects for discretized
    magnitudes (0 for continuous values). Standard error is b / sqrt(n).
    """
    mags = np.asarray(magnitudes, dtype=np.float64)
    if mags.size < 2:
        raise EstimationError(f"need at least 2 magnitudes, got {mags.size}")
    if np.min(mags) < m_c - bin_width / 2.0 - 1e-12:
        raise EstimationError("magnitudes below the completeness level are present")
    denom = float(np.mean(mags)) - (m_c - bin_width / 2.0)
    if denom <= 0.0:
        raise EstimationError("degenerate sample: no spread above the completeness level")
    b = math.log10(math.e) / denom
    return BEstimate(b=b, std_err=b / math.sqrt(mags.size), n=int(mags.size))


# -- aftershock decay fit ------------------------------------------------------

@dataclass(frozen=True)
class OmoriFit:
    p: float
    c: float
    log_likelihood: float
    n: int
    at_boundary: bool


P_GRID = np.round(np.arange(0.5, 2.0 + 1e-9, 0.005), 6)
C_GRID = np.logspace(math.log10(0.001), 0.0, 400)


def _log_norm(p, c, horizon):
    """log of the truncated power-law normalizer: integral over (0, horizon]."""
    p = np.asarray(p, dtype=np.float64)
    u = 1.0 - p
    a = np.log(horizon + c)
    bb = np.log(c)
    # ((horizon+c)^u - c^u)/u, written via expm1 so u -> 0 stays finite
    with np.errstate(divide="ignore"):
        val = np.exp(u * bb) * (a - bb) * _expm1x(u * (a - bb))
    return np.log(val)


def _expm1x(x):
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x / 2.0, np.expm1(safe) / safe)


def _grid_loglik(delays, horizon, p_grid, c_grid):
    best = (-np.inf, None, None)
    n = delays.size
    for c in c_grid:
        s = float(np.log(delays + c).sum())
        ll = -p_grid * s - n * _log_norm(p_grid, c, horizon)
        k = int(np.argmax(ll))
        if ll[k] > best[0]:
            best = (float(ll[k]), float(p_grid[k]), float(c))
    return best


def fit_omori(delays, horizon: float) -> OmoriFit:
    """Deterministic maximum-likelihood (p, c) for the aftershock decay law.

    Coarse grid (p in [0.5, 2.0] step 0.005; c log-spaced over
    [0.001, 1.0], 400 points) followed by two fixed local refinement
    passes around the best cell.
    """
    d = np.asarray(delays, dtype=np.float64)
    if horizon <= 0:
        raise InvalidInputError(f"horizon must be positive, got {horizon}")
    if d.size < 50:
        raise EstimationError(f"need at least 50 delays, got {d.size}")
    if np.any(d <= 0) or np.any(d > horizon + 1e-9):
        raise InvalidInputError("delays must lie in (0, horizon]")

    ll, p, c = _grid_loglik(d, horizon, P_GRID, C_GRID)
    at_boundary = p <= P_GRID[0] or p >= P_GRID[-1] or c <= C_GRID[0] or c >= C_GRID[-1]

    p_step, c_ratio = 0.005, C_GRID[1] / C_GRID[0]
    for _ in range(2):
        p_grid = np.linspace(p - 2 * p_step, p + 2 * p_step, 41)
        p_grid = p_grid[p_grid > 0.0]
        c_grid = np.geomspace(max(c / c_ratio**2, 1e-6), c * c_ratio**2, 41)
        ll, p, c = _grid_loglik(d, horizon, p_grid, c_grid)
        p_step /= 10.0
        c_ratio = c_ratio ** 0.1

    return OmoriFit(p=p, c=c, log_likelihood=ll, n=int(d.size), at_boundary=at_boundary)
