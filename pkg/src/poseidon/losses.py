"""Training objectives: task losses, statistical-law penalties, contrastive
energy shaping, and the weighted total.

Three binary tasks use three different losses (label-smoothed BCE for
aftershocks, focal loss for the extremely imbalanced tsunami class,
positively-weighted BCE for foreshocks). Physics penalties tie learnable
law parameters to batch aggregates: a weighted least-squares fit of the
log-linear magnitude-frequency curve given the learned slope, a KL
divergence between the observed aftershock-delay histogram and the
learned truncated power-law decay, and a squared-residual pull of the
learned mainshock/largest-aftershock magnitude gap. The energy head is
shaped contrastively (observed latents should sit at lower energy than
noise-perturbed ones) and kept near zero by a quadratic regularizer.

Total = task + lambda_p * physics + lambda_c * contrastive + lambda_e *
energy, with lambda_p = 0 during stage 1 of training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diff
from .diff import Tensor
from .errors import InvalidInputError

PROB_FLOOR = 1e-7


@dataclass(frozen=True)
class LossConfig:
    margin: float = 1.0
    sigma_noise: float = 0.1
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    label_smoothing: float = 0.05
    foreshock_pos_weight: float = 3.0
    lambda_p: float = 0.1        # stage 2; stage 1 forces 0
    lambda_c: float = 0.1
    lambda_e: float = 0.01
    gr_max_magnitude: float = 9.0
    gr_bin_width: float = 0.1
    omori_bin_lo: float = 0.01   # days
    omori_bin_hi: float = 90.0
    omori_n_bins: int = 20
    omori_min_delays: int = 50

    def validate(self):
        if not (0.0 <= self.label_smoothing < 0.5):
            raise InvalidInputError("label_smoothing must be in [0, 0.5)")
        if self.focal_gamma < 0 or min(self.lambda_p, self.lambda_c, self.lambda_e) < 0:
            raise InvalidInputError("loss weights must be non-negative")

    def omori_edges(self) -> np.ndarray:
        return np.logspace(math.log10(self.omori_bin_lo), math.log10(self.omori_bin_hi),
                           self.omori_n_bins + 1)


@dataclass
class LossBreakdown:
    task_aftershock: float
    task_tsunami: float
    task_foreshock: float
    gr: float
    omori: float
    bath: float
    contrastive: float
    energy_reg: float
    total: float
    gr_flagged: bool = False
    omori_flagged: bool = False

    FIELDS = ("task_aftershock", "task_tsunami", "task_foreshock", "gr", "omori",
              "bath", "contrastive", "energy_reg", "total")

    def as_row(self):
        return [getattr(self, f) for f in self.FIELDS]


def clamp_probs(p: Tensor, floor: float = PROB_FLOOR) -> Tensor:
    """Clip probabilities into [floor, 1 - floor] with pass-through gradient
    inside the clamp (composed from relu, so it stays on the tape)."""
    hi = 1.0 - floor
    return diff.sub(diff.add(diff.relu(diff.sub(p, floor)), floor),
                    diff.relu(diff.sub(p, hi)))


def smoothed_bce(p: Tensor, y: np.ndarray, epsilon: float) -> Tensor:
    """BCE against smoothed targets y' = y (1 - eps) + (1 - y) eps."""
    y = np.asarray(y, dtype=np.float64)
    yp = y * (1.0 - epsilon) + (1.0 - y) * epsilon
    pc = clamp_probs(p)
    ll = diff.add(diff.mul(diff.log(pc), yp),
                  diff.mul(diff.log(diff.sub(1.0, pc)), 1.0 - yp))
    return diff.mul(diff.mean(ll), -1.0)


def weighted_bce(p: Tensor, y: np.ndarray, pos_weight: float) -> Tensor:
    """BCE with the positive-class term multiplied by pos_weight."""
    y = np.asarray(y, dtype=np.float64)
    pc = clamp_probs(p)
    ll = diff.add(diff.mul(diff.log(pc), pos_weight * y),
                  diff.mul(diff.log(diff.sub(1.0, pc)), 1.0 - y))
    return diff.mul(diff.mean(ll), -1.0)


def focal_loss(p: Tensor, y: np.ndarray, alpha: float, gamma: float) -> Tensor:
    """- alpha (1-p)^gamma y log(p) - (1-y) log(1-p), averaged.

    The focusing factor and alpha apply to the positive term only; the
    negative term is plain cross-entropy.
    """
    y = np.asarray(y, dtype=np.float64)
    pc = clamp_probs(p)
    one_minus = diff.sub(1.0, pc)
    pos = diff.mul(diff.mul(diff.power(one_minus, gamma), diff.log(pc)), alpha * y)
    neg = diff.mul(diff.log(one_minus), 1.0 - y)
    return diff.mul(diff.mean(diff.add(pos, neg)), -1.0)


def contrastive_loss(z: Tensor, energy_fn, margin: float, sigma_noise: float, rng) -> Tensor:
    """mean softplus(E(z) - E(z + eps) + margin), eps ~ Normal(0, sigma^2 I).

    Pushes observed latents below their perturbed neighbors on the energy
    landscape; the gradient with respect to E(z) is always positive.
    """
    if z.data.ndim != 2 or z.data.shape[0] == 0:
        raise InvalidInputError(f"contrastive loss needs a non-empty (B, D) batch, got {z.data.shape}")
    eps = rng.normal(0.0, sigma_noise, size=z.data.shape)
    e_obs = energy_fn(z)
    e_pert = energy_fn(diff.add(z, eps))
    return diff.mean(diff.softplus(diff.add(diff.sub(e_obs, e_pert), margin)))


def energy_reg(energy: Tensor) -> Tensor:
    """mean E^2: keeps the scalar energies inside tanh's responsive range."""
    return diff.mean(diff.power(energy, 2.0))


def gr_loss(magnitudes: np.ndarray, b: Tensor, m_c: float,
            cfg: LossConfig | None = None) -> tuple[Tensor, bool]:
    """Weighted squared deviation from the log-linear magnitude-frequency law.

    N(M) counts batch magnitudes >= M at thresholds from m_c to the
    configured maximum in 0.1 steps; counts are add-one smoothed inside
    the log. The intercept is profiled out in closed form: given the
    learned slope b, a is the weighted least-squares minimizer, with
    Poisson-motivated weights w = sqrt(N) normalized to sum 1. Fewer than
    two occupied thresholds carries no slope information: returns (0,
    flagged=True).
    """
    cfg = cfg or LossConfig()
    mags = np.sort(np.asarray(magnitudes, dtype=np.float64))
    thresholds = np.arange(m_c, cfg.gr_max_magnitude + 1e-9, cfg.gr_bin_width)
    counts = mags.size - np.searchsorted(mags, thresholds, side="left")
    occupied = counts > 0
    if int(occupied.sum()) < 2:
        return Tensor(0.0), True

    y = np.log10(counts + 1.0)
    w = np.sqrt(counts.astype(np.float64))
    w /= w.sum()
    # intercept profiled out: a = sum w (y + b M) at the weighted LS optimum
    a = diff.add(float(np.dot(w, y)), diff.mul(b, float(np.dot(w, thresholds))))
    resid = diff.add(diff.sub(y, a), diff.mul(b, thresholds))
    return diff.tsum(diff.mul(diff.power(resid, 2.0), w)), False


def omori_loss(delays: np.ndarray, p: Tensor, c: Tensor,
               cfg: LossConfig | None = None) -> tuple[Tensor, bool]:
    """KL(observed delay histogram || learned truncated power-law decay).

    Observed probabilities are add-epsilon smoothed histogram masses over
    log-spaced bins; predicted masses are exact integrals of
    (t + c)^(-p) over each bin, normalized over the binned range. The
    integral is evaluated through expm1(x)/x so the exponent may pass
    through p = 1 smoothly. Fewer than the configured minimum number of
    in-range delays returns (0, flagged=True).
    """
    cfg = cfg or LossConfig()
    edges = cfg.omori_edges()
    d = np.asarray(delays, dtype=np.float64)
    d = d[(d >= edges[0]) & (d <= edges[-1])]
    if d.size < cfg.omori_min_delays:
        return Tensor(0.0), True

    hist, _ = np.histogram(d, bins=edges)
    q = (hist + 1e-8) / (hist.sum() + 1e-8 * hist.size)

    lo = diff.log(diff.add(c, edges[:-1]))
    hi = diff.log(diff.add(c, edges[1:]))
    span = diff.sub(hi, lo)                      # log((e_hi + c) / (e_lo + c))
    u = diff.sub(1.0, p)
    # bin mass: (e_lo + c)^u * span * expm1x(u * span) == ((hi+c)^u - (lo+c)^u)/u
    mass = diff.mul(diff.mul(diff.exp(diff.mul(u, lo)), span), diff.expm1x(diff.mul(u, span)))
    log_pi = diff.sub(diff.log(mass), diff.log(diff.tsum(mass)))
    kl = diff.add(diff.mul(diff.tsum(diff.mul(log_pi, q)), -1.0),
                  float(np.dot(q, np.log(q))))
    return kl, False


def bath_loss(pairs: np.ndarray, delta_m: Tensor) -> Tensor:
    """Mean squared (M_main - M_largest_aftershock - delta_m)."""
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.size == 0:
        raise InvalidInputError("bath loss needs at least one mainshock/aftershock pair")
    gaps = pairs[:, 0] - pairs[:, 1]
    resid = diff.sub(gaps, delta_m)
    return diff.mean(diff.power(resid, 2.0))


@dataclass
class PhysicsBatch:
    """Aggregates a batch contributes to the law penalties."""

    magnitudes: np.ndarray
    m_c: float
    delays: np.ndarray
    bath_pairs: np.ndarray  # (n, 2) [mainshock magnitude, largest aftershock]


def total_loss(outputs, labels: np.ndarray, physics: PhysicsBatch,
               theta: dict, cfg: LossConfig, stage: int, rng) -> tuple[Tensor, LossBreakdown]:
    """Assemble the full training objective for one batch.

    ``outputs`` carries the forward tensors (p_a, p_t, p_f, energy, z and
    an energy_fn closure over the same parameters); ``theta`` maps "b",
    "p", "c", "delta_m" to the derived physics tensors. Stage 1 computes
    the physics components for logging but weights them zero in the
    total; stage 2 applies cfg.lambda_p.
    """
    cfg.validate()
    labels = np.asarray(labels, dtype=np.float64)
    l_after = smoothed_bce(outputs.p_a, labels[:, 0], cfg.label_smoothing)
    l_tsu = focal_loss(outputs.p_t, labels[:, 1], cfg.focal_alpha, cfg.focal_gamma)
    l_fore = weighted_bce(outputs.p_f, labels[:, 2], cfg.foreshock_pos_weight)
    l_task = diff.mul(diff.add(diff.add(l_after, l_tsu), l_fore), 1.0 / 3.0)

    l_gr, gr_flag = gr_loss(physics.magnitudes, theta["b"], physics.m_c, cfg)
    l_om, om_flag = omori_loss(physics.delays, theta["p"], theta["c"], cfg)
    if physics.bath_pairs.size:
        l_bath = bath_loss(physics.bath_pairs, theta["delta_m"])
    else:
        l_bath = Tensor(0.0)
    l_phys = diff.mul(diff.add(diff.add(l_gr, l_om), l_bath), 1.0 / 3.0)

    l_con = contrastive_loss(outputs.z, outputs.energy_fn, cfg.margin, cfg.sigma_noise, rng)
    l_en = energy_reg(outputs.energy)

    lam_p = 0.0 if stage == 1 else cfg.lambda_p
    total = diff.add(
        diff.add(l_task, diff.mul(l_phys, lam_p)),
        diff.add(diff.mul(l_con, cfg.lambda_c), diff.mul(l_en, cfg.lambda_e)),
    )
    breakdown = LossBreakdown(
        task_aftershock=l_after.item(), task_tsunami=l_tsu.item(),
        task_foreshock=l_fore.item(), gr=l_gr.item(), omori=l_om.item(),
        bath=l_bath.item(), contrastive=l_con.item(), energy_reg=l_en.item(),
        total=total.item(), gr_flagged=gr_flag, omori_flagged=om_flag,
    )
    return total, breakdown
