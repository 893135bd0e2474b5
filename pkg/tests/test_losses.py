import math

import numpy as np
import pytest

from poseidon import diff
from poseidon.diff import Tensor, grad_check
from poseidon.errors import InvalidInputError
from poseidon.losses import (
    LossConfig, bath_loss, clamp_probs, contrastive_loss, energy_reg,
    focal_loss, gr_loss, omori_loss, smoothed_bce, weighted_bce,
)
from poseidon.synthgen import make_rng, sample_gr_magnitudes, sample_omori_times


def _scalar(v):
    return Tensor(np.asarray(float(v)), requires_grad=True)


# -- focal loss ---------------------------------------------------------------

def test_focal_confident_correct_goes_to_zero():
    p = Tensor(np.array([1.0 - 1e-9]))
    loss = focal_loss(p, np.array([1.0]), 0.25, 2.0)
    assert loss.item() < 1e-6


def test_focal_positive_half_probability():
    loss = focal_loss(Tensor(np.array([0.5])), np.array([1.0]), 0.25, 2.0)
    assert loss.item() == pytest.approx(-0.25 * 0.25 * math.log(0.5), rel=1e-9)
    assert loss.item() == pytest.approx(0.04332, abs=1e-5)


def test_focal_negative_term_is_plain_bce():
    loss = focal_loss(Tensor(np.array([0.5])), np.array([0.0]), 0.25, 2.0)
    assert loss.item() == pytest.approx(-math.log(0.5), rel=1e-9)


def test_focal_reduces_to_positive_bce_at_gamma0_alpha1():
    p = Tensor(np.array([0.3, 0.8]))
    y = np.array([1.0, 1.0])
    focal = focal_loss(p, y, 1.0, 0.0).item()
    bce = -np.mean(np.log(np.array([0.3, 0.8])))
    assert focal == pytest.approx(bce, rel=1e-9)


# -- smoothed / weighted bce -----------------------------------------------------

def test_smoothed_bce_zero_eps_is_standard():
    p = Tensor(np.array([0.3, 0.9]))
    y = np.array([0.0, 1.0])
    expected = -np.mean([np.log(0.7), np.log(0.9)])
    assert smoothed_bce(p, y, 0.0).item() == pytest.approx(expected, rel=1e-9)


def test_smoothed_bce_minimized_at_smoothed_target():
    y = np.array([1.0])
    eps = 0.1
    losses = {q: smoothed_bce(Tensor(np.array([q])), y, eps).item()
              for q in (0.85, 0.9, 0.95)}
    assert losses[0.9] == min(losses.values())


def test_weighted_bce_unit_weight_is_standard():
    p = Tensor(np.array([0.4, 0.6]))
    y = np.array([1.0, 0.0])
    expected = -np.mean([np.log(0.4), np.log(0.4)])
    assert weighted_bce(p, y, 1.0).item() == pytest.approx(expected, rel=1e-9)


def test_weighted_bce_scales_positive_term():
    p = Tensor(np.array([0.4]))
    l1 = weighted_bce(p, np.array([1.0]), 1.0).item()
    l3 = weighted_bce(p, np.array([1.0]), 3.0).item()
    assert l3 == pytest.approx(3.0 * l1, rel=1e-9)


def test_clamp_probs_keeps_gradient_inside():
    assert grad_check(lambda t: diff.tsum(clamp_probs(diff.sigmoid(t))),
                      Tensor(np.array([0.3, -0.4, 1.2]))) < 1e-6


# -- contrastive / energy -----------------------------------------------------

def test_contrastive_constant_energy():
    z = Tensor(np.zeros((8, 4)))
    const = lambda t: diff.mul(diff.tsum(t, axis=1), 0.0)
    loss = contrastive_loss(z, const, 1.0, 0.1, make_rng(0))
    assert loss.item() == pytest.approx(np.log1p(math.e), rel=1e-9)  # softplus(1)
    assert loss.item() == pytest.approx(1.31326, abs=1e-5)


def test_contrastive_vanishes_when_perturbed_energy_explodes():
    z = Tensor(np.ones((4, 2)))
    # energy grows fast with distance from the observed point
    fn = lambda t: diff.mul(diff.tsum(diff.power(diff.sub(t, 1.0), 2.0), axis=1), 1e6)
    loss = contrastive_loss(z, fn, 1.0, 0.5, make_rng(1))
    assert loss.item() < 1e-4


def test_contrastive_gradient_sign_on_observed_energy():
    # d loss / d E(z) = mean sigmoid(...) > 0 always; probe by shifting only
    # the observed-side energy with a free scalar
    rng = make_rng(2)
    z = Tensor(rng.normal(size=(16, 3)))
    noise = rng.normal(0, 0.1, size=z.data.shape)
    e = lambda t: diff.mul(diff.tsum(t, axis=1), 0.1)

    s = _scalar(0.0)
    obs = diff.add(e(z), s)
    pert = e(diff.add(z, noise))
    diff.mean(diff.softplus(diff.add(diff.sub(obs, pert), 1.0))).backward()
    assert s.grad > 0


def test_energy_reg_is_mean_square():
    e = Tensor(np.array([1.0, -2.0, 3.0]))
    assert energy_reg(e).item() == pytest.approx((1 + 4 + 9) / 3.0)


# -- magnitude-frequency penalty ------------------------------------------------

def test_gr_loss_near_zero_on_matching_data():
    mags = sample_gr_magnitudes(1.0, 5.0, 9.0, 50_000, make_rng(3))
    loss, flagged = gr_loss(mags, Tensor(np.array(1.0)), 5.0)
    assert not flagged
    assert loss.item() < 1e-3


def test_gr_loss_scan_minimized_at_true_b():
    mags = sample_gr_magnitudes(1.0, 5.0, 9.0, 50_000, make_rng(4))
    losses = {b: gr_loss(mags, Tensor(np.array(b)), 5.0)[0].item() for b in (0.8, 1.0, 1.2)}
    assert losses[1.0] == min(losses.values())


def test_gr_loss_single_bin_degenerate():
    loss, flagged = gr_loss(np.full(100, 5.05), Tensor(np.array(1.0)), 5.0)
    assert flagged and loss.item() == 0.0


def test_gr_loss_differentiable_in_b():
    mags = sample_gr_magnitudes(0.9, 5.0, 8.0, 2_000, make_rng(5))
    assert grad_check(lambda b: gr_loss(mags, b, 5.0)[0], _scalar(1.05)) < 1e-6


# -- decay-law penalty ------------------------------------------------------------

def test_omori_loss_zero_when_histogram_matches():
    # q == pi exactly: build delays so the histogram equals the predicted masses
    cfg = LossConfig()
    edges = cfg.omori_edges()
    p_true, c_true = 1.1, 0.1
    u = 1.0 - p_true
    mass = ((edges[1:] + c_true) ** u - (edges[:-1] + c_true) ** u) / u
    pi = mass / mass.sum()
    counts = np.round(pi * 200_000).astype(int)
    mids = np.sqrt(edges[:-1] * edges[1:])
    delays = np.repeat(mids, counts)
    loss, flagged = omori_loss(delays, Tensor(np.array(p_true)), Tensor(np.array(c_true)), cfg)
    assert not flagged
    assert loss.item() < 1e-5


def test_omori_loss_scan_prefers_generator_parameters():
    delays = sample_omori_times(1.1, 0.1, 50_000, 90.0, make_rng(6))
    at = lambda p, c: omori_loss(delays, Tensor(np.array(p)), Tensor(np.array(c)))[0].item()
    best = at(1.1, 0.1)
    assert best <= at(1.4, 0.1) and best <= at(0.8, 0.1)


def test_omori_kl_nonnegative():
    rng = make_rng(7)
    for seed in range(5):
        delays = sample_omori_times(1.2, 0.2, 2_000, 90.0, make_rng(seed))
        p = float(rng.uniform(0.8, 1.2))
        c = float(rng.uniform(0.01, 0.5))
        loss, _ = omori_loss(delays, Tensor(np.array(p)), Tensor(np.array(c)))
        assert loss.item() >= 0.0


def test_omori_insufficient_delays_flagged():
    loss, flagged = omori_loss(np.array([1.0, 2.0]), Tensor(np.array(1.0)), Tensor(np.array(0.1)))
    assert flagged and loss.item() == 0.0


def test_omori_differentiable_including_p_equal_one():
    delays = sample_omori_times(1.1, 0.1, 5_000, 90.0, make_rng(8))

    def f(t):
        return omori_loss(delays, t[0], diff.add(t[1], 0.1))[0]

    assert grad_check(f, Tensor(np.array([1.0, 0.05]))) < 1e-6


# -- magnitude-gap penalty ---------------------------------------------------------

def test_bath_zero_residual():
    pairs = np.array([[6.0, 4.8], [7.0, 5.8], [5.5, 4.3]])
    assert bath_loss(pairs, Tensor(np.array(1.2))).item() == pytest.approx(0.0, abs=1e-12)


def test_bath_minimized_at_construction_value():
    rng = make_rng(9)
    mains = rng.uniform(5, 8, size=200)
    pairs = np.column_stack([mains, mains - 1.2])
    at = lambda dm: bath_loss(pairs, Tensor(np.array(dm))).item()
    assert at(1.2) < at(1.0) and at(1.2) < at(1.4)


def test_bath_quadratic_minimizer_gradient():
    pairs = np.array([[6.0, 4.9], [7.0, 5.7]])  # gaps 1.1, 1.3 -> minimizer 1.2
    dm = _scalar(1.2)
    bath_loss(pairs, dm).backward()
    assert dm.grad == pytest.approx(0.0, abs=1e-12)


def test_bath_rejects_empty():
    with pytest.raises(InvalidInputError):
        bath_loss(np.empty((0, 2)), Tensor(np.array(1.2)))
