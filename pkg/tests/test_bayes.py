import json
import math

import numpy as np
import pytest

from bosonic_metrology.bayes import (
    ChiCampaign, ChiRound, FitModel, Posterior, PriorEscapeError, SimulatedChiSystem, adaptive_chi,
    binomial_loglik, chi_operating_point, chi_posterior, fit_probability_model, phase_posterior, scs_model,
)
from bosonic_metrology.encoding import PHASE, ProbabilityCurve, analytic_scs_phase_overlap, shot_rng, sweep
from bosonic_metrology.metrology import fisher_information
from bosonic_metrology.probes import ProbeSpec

CHI = 2 * math.pi * 1.423


def test_scs_model_reproduces_overlap():
    th = np.linspace(0, 2.5, 50)
    assert np.max(np.abs(scs_model(2.0)(th) - analytic_scs_phase_overlap(2.0, th))) < 1e-14
    h = 1e-6
    fd = (scs_model(2.0)(0.7 + h) - scs_model(2.0)(0.7 - h)) / (2 * h)
    assert scs_model(2.0).derivative(0.7) == pytest.approx(fd, rel=1e-6)


def test_fit_recovers_ideal_parameters():
    curve = sweep(ProbeSpec.scs(2.0), PHASE)
    m = fit_probability_model(curve)
    ref = scs_model(2.0)
    assert m.b == pytest.approx(ref.b, rel=1e-4)
    assert m.c == pytest.approx(ref.c, rel=1e-4)
    assert m.alpha_eff == pytest.approx(2.0, rel=1e-4)


def test_fit_scaled_curve_scales_b():
    curve = sweep(ProbeSpec.scs(2.0), PHASE)
    k = 0.8
    scaled = ProbabilityCurve(PHASE, curve.probe, curve.grid, curve.p * k, "analytic")
    m = fit_probability_model(scaled)
    assert m.b == pytest.approx(scs_model(2.0).b / k, rel=1e-4)


def test_fit_sampled_residual_near_shot_noise():
    curve = sweep(ProbeSpec.scs(2.0), PHASE, n_shots=1000, seed=3)
    m = fit_probability_model(curve)
    noise = math.sqrt(np.mean(curve.p * (1 - curve.p)) / 1000)
    assert m.residual_rms < 2 * noise


def test_fit_rejects_displacement_curves():
    from bosonic_metrology.encoding import ProcessSpec
    curve = sweep(ProbeSpec.scs(1.0), ProcessSpec("DisplacementImag"))
    with pytest.raises(ValueError):
        fit_probability_model(curve)


def test_posterior_all_ones_peaks_at_maximum():
    post = phase_posterior(scs_model(2.0), 1000, 1000)
    assert post.map == pytest.approx(0.0, abs=5e-3)
    assert post.weights.sum() == pytest.approx(1.0)


def test_posterior_input_validation():
    with pytest.raises(ValueError):
        phase_posterior(scs_model(2.0), 11, 10)


def test_uninformative_data_gives_flat_posterior():
    post = Posterior.from_log_likelihood(np.linspace(0, 1, 101), np.zeros(101))
    assert np.allclose(post.weights, 1 / 101)
    assert post.mean == pytest.approx(0.5)


def test_likelihood_is_additive_over_batches():
    m = scs_model(2.0)
    grid = np.linspace(0, 2.5, 501)
    p = m(grid)
    joint = binomial_loglik(p, 700, 1000)
    split = binomial_loglik(p, 300, 400) + binomial_loglik(p, 400, 600)
    assert np.max(np.abs(joint - split)) < 1e-9
    a = Posterior.from_log_likelihood(grid, joint)
    b = Posterior.from_log_likelihood(grid, split)
    assert np.max(np.abs(a.weights - b.weights)) < 1e-12


@pytest.mark.parametrize("theta", [0.2, 0.3, 0.4])
def test_posterior_std_tracks_cramer_rao_and_covers(theta):
    m = scs_model(2.0)
    cr = 1 / math.sqrt(1000 * fisher_information(m, theta))
    p = float(m(theta))
    stds, hits = [], 0
    for s in range(100):
        n1 = int(shot_rng(s, 0).binomial(1000, p))
        post = phase_posterior(m, n1, 1000)
        stds.append(post.std)
        hits += abs(post.mean - theta) <= 2 * post.std
    assert abs(np.mean(stds) / cr - 1) < 0.25
    assert hits >= 88


def test_chi_round_validation():
    with pytest.raises(ValueError):
        ChiRound(0.0, 10, 5)
    with pytest.raises(ValueError):
        ChiRound(1.0, 10, 11)


def test_operating_point_maximizes_chi_information():
    m = scs_model(2.0)
    th = chi_operating_point(m)
    assert 0.3 < th < 0.5
    score = lambda t: t**2 * fisher_information(m, t)
    assert score(th) >= score(th * 0.8) and score(th) >= score(th * 1.2)


def test_noiseless_system_recovers_chi():
    m = scs_model(2.0)
    sys_ = SimulatedChiSystem(CHI, m, noiseless=True)
    camp = adaptive_chi(sys_, m, chi_guess=CHI * 1.1, seed=0)
    assert camp.estimate == pytest.approx(CHI, rel=1e-3)


def test_adaptive_chi_reaches_two_percent():
    m = scs_model(2.0)
    camp = adaptive_chi(SimulatedChiSystem(CHI, m), m, chi_guess=CHI * 1.1, seed=1)
    assert len(camp.rounds) == 4
    assert camp.std / camp.estimate <= 0.02
    assert abs(camp.estimate - CHI) < 4 * camp.std
    stds = [r.std for r in camp.rounds]
    assert stds[-1] < stds[0]


def test_small_cat_learns_slower():
    rel = {}
    for alpha in (1.0, 2.0):
        m = scs_model(alpha)
        vals = [adaptive_chi(SimulatedChiSystem(CHI, m), m, chi_guess=CHI * 1.1, seed=s).std for s in range(5)]
        rel[alpha] = np.mean(vals) / CHI
    assert rel[1.0] > rel[2.0]


def test_prior_escape_raises():
    m = scs_model(2.0)
    with pytest.raises(PriorEscapeError):
        adaptive_chi(SimulatedChiSystem(CHI, m), m, prior=(0.5 * CHI, 0.8 * CHI), seed=0)


def test_campaign_json_and_recompute():
    m = scs_model(2.0)
    camp = adaptive_chi(SimulatedChiSystem(CHI, m), m, chi_guess=CHI * 1.1, seed=2, max_rounds=3)
    d = json.loads(camp.to_json())
    assert [r["round"] for r in d["rounds"]] == [1, 2, 3]
    assert set(d["rounds"][0]) == {"round", "t_us", "N", "N1", "map", "std"}
    again = chi_posterior(ChiCampaign(camp.prior, camp.theta_opt, camp.rounds), m)
    assert again.map == pytest.approx(camp.estimate, rel=1e-12)


def test_fit_model_rejects_bad_parameters():
    with pytest.raises(ValueError):
        FitModel(-1.0, 1.0, 1.0)
