import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bosonic_metrology.encoding import PHASE, ProbabilityCurve, ideal_curve, sweep
from bosonic_metrology.fockspace import HilbertSpec, StateVector
from bosonic_metrology.metrology import (
    FisherCurve, IllConditionedFit, MeritReport, bootstrap, best_precision, curve_gain, fi_small_beta,
    fisher_curve, fisher_from_samples, fisher_information, fit_probability, fit_scaling, ideal_fisher_curve,
    merit_report, metrological_gain, precision_direct, trusted_region,
)
from bosonic_metrology.probes import ProbeSpec, build_state, probe_stats


def _curve(grid, p, source="analytic"):
    return ProbabilityCurve(PHASE, None, grid, p, source)


class _Fn:
    def __init__(self, f):
        self.f = f

    def __call__(self, b):
        return self.f(np.asarray(b, dtype=float))


def test_polynomial_fit_is_exact_for_polynomials():
    g = np.linspace(0, 2.5, 40)
    p = 0.9 - 0.2 * g + 0.03 * g**2
    sm = fit_probability(_curve(g, p), degree=4)
    assert np.max(np.abs(sm(g) - p)) < 1e-12
    assert np.max(np.abs(sm.derivative(g) - (-0.2 + 0.06 * g))) < 1e-10


def test_constant_curve_has_zero_slope_and_fi():
    g = np.linspace(0, 2.5, 40)
    sm = fit_probability(_curve(g, np.full_like(g, 0.4)), degree=6)
    assert np.max(np.abs(sm.derivative(g))) < 1e-10
    assert np.max(fisher_information(sm, g)) < 1e-12


def test_default_degree_fit_of_ideal_scs():
    c = sweep(ProbeSpec.scs(2.0), PHASE)
    sm = fit_probability(c)
    assert sm.degree == 10 and sm.residual_rms < 5e-3


def test_ill_conditioned_fit_suggests_lower_degree():
    g = np.linspace(0.0, 2.5, 200)
    with pytest.raises(IllConditionedFit) as info:
        fit_probability(ProbabilityCurve(PHASE, None, g, np.full_like(g, 0.5), "analytic"), degree=150)
    assert info.value.suggested_degree < 150


def test_fisher_information_closed_forms():
    assert fisher_information(_Fn(lambda b: np.cos(b / 2) ** 2), 0.9) == pytest.approx(1.0, rel=1e-8)
    lin = _Fn(lambda b: 0.5 + (b - 0.3))
    assert fisher_information(lin, 0.3) == pytest.approx(4.0, rel=1e-8)


def test_fisher_information_clamps_endpoints():
    assert math.isfinite(fisher_information(_Fn(lambda b: np.ones_like(b)), 0.0))


@pytest.mark.parametrize("probe", [ProbeSpec.cs_nbar(1.0), ProbeSpec.scs(2.0), ProbeSpec.fock(2)])
def test_small_beta_fi_approaches_qfi(probe):
    qfi = probe_stats(probe).qfi
    fn = ideal_curve(probe)
    assert fisher_information(fn, 1e-3) == pytest.approx(qfi, rel=0.01)


def test_small_beta_expansion():
    cs = build_state(ProbeSpec.cs_nbar(1.0), HilbertSpec(40))
    assert fi_small_beta(cs, "number", 0.0) == pytest.approx(4.0, abs=1e-10)
    fock = StateVector.fock(2, HilbertSpec(20))
    assert fi_small_beta(fock, "number", 0.0) == 0.0
    scs = build_state(ProbeSpec.scs(2.0))
    var = probe_stats(ProbeSpec.scs(2.0)).qfi / 4
    assert fi_small_beta(scs, "number", 0.0) == pytest.approx(4 * var, rel=1e-12)
    exact = fisher_information(ideal_curve(ProbeSpec.scs(2.0)), 0.05)
    assert fi_small_beta(scs, "number", 0.05) == pytest.approx(exact, rel=0.02)


def test_fock_two_in_displacement_has_qfi_20():
    # Var(x) for |2> with x = a + a^dagger is 2*2+1 = 5
    s = StateVector.fock(2, HilbertSpec(30))
    assert fi_small_beta(s, "x", 0.0) == pytest.approx(20.0, rel=1e-12)


@pytest.mark.parametrize("probe", [ProbeSpec.cs(1.3), ProbeSpec.scs(2.0), ProbeSpec.weighted_scs(1.0, 0.5),
                                   ProbeSpec.squeezed(0.5)])
def test_fi_never_exceeds_qfi(probe):
    fc = ideal_fisher_curve(probe, PHASE)
    assert fc.fi_max <= 1.0001 * probe_stats(probe).qfi


def test_ideal_merit_scs_vs_cs():
    scs = ideal_fisher_curve(ProbeSpec.scs(2.0), PHASE)
    cs = ideal_fisher_curve(ProbeSpec.cs_nbar(probe_stats(ProbeSpec.scs(2.0)).nbar), PHASE)
    rep = merit_report(scs, cs)
    assert rep.fi_max == pytest.approx(22.819, rel=1e-3)
    assert rep.fi_max_reference == pytest.approx(4 * 1.76159, rel=1e-3)
    assert abs(rep.width - 0.5) <= 0.2
    lo, hi = rep.dynamical_range
    assert lo < hi and rep.fi_avg > rep.fi_max_reference
    assert rep.gain_db == pytest.approx(10 * math.log10(rep.fi_max / rep.fi_max_reference), rel=1e-9)
    d = rep.to_dict()
    json.dumps(d)


def test_merit_identical_curves_has_empty_range():
    cs = ideal_fisher_curve(ProbeSpec.cs(1.0), PHASE)
    rep = merit_report(cs, cs)
    assert rep.dynamical_range is None and rep.width == 0.0
    assert rep.to_dict()["fi_avg"] is None


def test_fisher_curve_csv():
    fc = ideal_fisher_curve(ProbeSpec.cs(1.0), PHASE, np.linspace(0, 1, 5))
    lines = fc.to_csv().splitlines()
    assert lines[0] == "beta,fi" and len(lines) == 6


def test_precision_on_plateau_is_infinite():
    g = np.linspace(0, 2.5, 30)
    flat = sweep(ProbeSpec.cs(1.0), PHASE, g, readout_flip=0.5, n_shots=500, seed=1)
    sm = fit_probability(flat, degree=4)
    res = precision_direct(flat, sm, float(g[10]))
    assert res.infinite and math.isinf(res.delta_beta)


def test_direct_precision_tracks_cramer_rao():
    probe = ProbeSpec.scs(2.0)
    g = PHASE.default_grid()
    fn = ideal_curve(probe)
    th = float(g[int(np.argmax(np.abs(fn.derivative(g))))])
    cr = 1 / math.sqrt(1000 * fisher_information(fn, th))
    vals = []
    for s in range(20):
        c = sweep(probe, PHASE, g, n_shots=1000, seed=s)
        vals.append(precision_direct(c, fit_probability(c), th, "mean").delta_beta)
    assert abs(np.mean(vals) / cr - 1) < 0.15


def test_precision_conventions_and_missing_point():
    c = sweep(ProbeSpec.scs(2.0), PHASE, n_shots=400, seed=2)
    sm = fit_probability(c)
    shot = precision_direct(c, sm, 0.3)
    mean = precision_direct(c, sm, 0.3, "mean")
    assert mean.delta_beta == pytest.approx(shot.delta_beta / 20, rel=1e-12)
    assert shot.delta_beta >= 0.9 * shot.cramer_rao_shot
    with pytest.raises(ValueError):
        precision_direct(c, sm, 0.301)
    with pytest.raises(ValueError):
        precision_direct(c, sm, 0.3, "bogus")


def test_best_ideal_precision_reaches_qfi_limit():
    # With exact probabilities the per-shot optimum approaches 1/sqrt(QFI), which
    # sits below the coherent-state floor 1/sqrt(4 nbar + 4 nbar^2).
    probe = ProbeSpec.scs(2.0)
    fc = ideal_fisher_curve(probe, PHASE)
    nbar = probe_stats(probe).nbar
    best = 1 / math.sqrt(fc.fi_max)
    assert best == pytest.approx(1 / math.sqrt(probe_stats(probe).qfi), rel=1e-3)
    assert best > 1 / math.sqrt(8 * nbar**2 + 8 * nbar)
    assert best < 1 / math.sqrt(4 * nbar + 4 * nbar**2)


def test_trusted_region_drops_small_beta():
    c = sweep(ProbeSpec.scs(2.0), PHASE, n_shots=1000, seed=4)
    sm, fc = fisher_from_samples(c)
    mask = trusted_region(sm, c.grid)
    assert not mask[0] and mask[-1]
    assert np.all(np.diff(mask.astype(int)) >= 0)
    assert fc.beta_at_max > 0.05


def test_gain_values():
    assert metrological_gain(1.0, 1.0) == 0.0
    assert metrological_gain(10.0, 1.0) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        metrological_gain(0.0, 1.0)
    with pytest.raises(ValueError):
        metrological_gain(1.0, -1.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_gain_antisymmetric(a, b):
    assert metrological_gain(a, b) == pytest.approx(-metrological_gain(b, a), abs=1e-9)


def test_curve_gain_same_curve_is_zero():
    c = sweep(ProbeSpec.scs(2.0), PHASE, n_shots=300, seed=3)
    assert curve_gain(c, c) == pytest.approx(0.0, abs=1e-12)


def test_bootstrap_basics():
    c = sweep(ProbeSpec.cs(1.0), PHASE, np.linspace(0, 1, 5), n_shots=200, seed=1)
    assert bootstrap(c.records, lambda r: 1.0, 100, seed=0) == 0.0
    with pytest.raises(ValueError):
        bootstrap(c.records, lambda r: 1.0, 50)
    stat = lambda recs: recs[2].p_hat
    p = c.records[2].p_hat
    s = bootstrap(c.records, stat, 2000, seed=0)
    assert s == pytest.approx(math.sqrt(p * (1 - p) / 200), rel=0.08)
    assert bootstrap(c.records, stat, 200, seed=5) == bootstrap(c.records, stat, 200, seed=5)


def test_bootstrap_stabilizes():
    c = sweep(ProbeSpec.cs(1.0), PHASE, np.linspace(0, 1, 5), n_shots=200, seed=1)
    stat = lambda recs: recs[3].p_hat - recs[1].p_hat
    _, v = bootstrap(c.records, stat, 2000, seed=0, return_samples=True)
    assert abs(np.std(v[:1000], ddof=1) / np.std(v, ddof=1) - 1) < 0.05


def test_fit_scaling_recovers_linear_law():
    n = np.linspace(0.07, 1.76, 6)
    fit = fit_scaling(np.column_stack([n, 4 * n]))
    assert fit.params["a"] == pytest.approx(4, rel=1e-6)
    assert fit.params["b"] == pytest.approx(1, rel=1e-6)
    assert abs(fit.params["c"]) < 1e-6
    ll = fit_scaling(np.column_stack([n, 4 * n]), "loglog_linear")
    assert ll.params["a"] == pytest.approx(1.0, abs=1e-12)
    assert ll.params["b"] == pytest.approx(math.log(4), abs=1e-12)
    assert json.loads(json.dumps(fit.to_dict()))["model"] == "power_plus_offset"


def test_fit_scaling_recovers_power_with_offset():
    n = np.linspace(0.07, 1.76, 8)
    fit = fit_scaling(np.column_stack([n, 5.0 * n**1.7 + 0.4]))
    assert fit.params["b"] == pytest.approx(1.7, rel=1e-5)
    assert np.allclose(fit.predict(n), 5.0 * n**1.7 + 0.4)


def test_fit_scaling_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_scaling([[1, 1], [2, 2], [3, 3]])
    with pytest.raises(ValueError):
        fit_scaling([[0, 1], [1, 2], [2, 3], [3, 4]])
    with pytest.raises(ValueError):
        fit_scaling([[1, 1], [2, 2], [3, 3], [4, 4]], "cubic")


def test_ideal_precision_loglog_slopes():
    nbars = np.linspace(0.07, 1.76, 6)
    cs = [1 / math.sqrt(ideal_fisher_curve(ProbeSpec.cs_nbar(n), PHASE).fi_max) for n in nbars]
    scs = [1 / math.sqrt(ideal_fisher_curve(ProbeSpec.scs_nbar(n), PHASE).fi_max) for n in nbars]
    fcs = fit_scaling(np.column_stack([nbars, cs]), "loglog_linear")
    fscs = fit_scaling(np.column_stack([nbars, scs]), "loglog_linear")
    assert fcs.params["a"] == pytest.approx(-0.5, abs=1e-3)
    assert fcs.params["b"] == pytest.approx(-math.log(2), abs=1e-3)
    # the cat probe beats the coherent slope but stays well short of -1 on this range
    assert -0.75 < fscs.params["a"] < -0.6


def test_sampled_fi_exceeding_bound_stays_near():
    c = sweep(ProbeSpec.cs_nbar(1.0), PHASE, n_shots=1000, seed=8)
    _, fc = fisher_from_samples(c)
    assert fc.fi_max < 1.5 * 4.0
    assert isinstance(fc, FisherCurve) and fc.source == "polyfit"


def test_merit_report_type():
    cs = ideal_fisher_curve(ProbeSpec.cs(1.0), PHASE)
    assert isinstance(merit_report(cs, cs), MeritReport)


def test_fisher_curve_refines_peak():
    fn = ideal_curve(ProbeSpec.cs(1.0))
    fc = fisher_curve(fn, np.linspace(0.0, 2.5, 26))
    assert fc.fi_max == pytest.approx(4.0, rel=2e-3)


def test_best_precision_within_trusted_region():
    c = sweep(ProbeSpec.scs(2.0), PHASE, n_shots=1000, seed=6)
    sm = fit_probability(c)
    mask = trusted_region(sm, c.grid)
    best = best_precision(c, sm, mask)
    assert mask[int(np.argmin(np.abs(c.grid - best.beta)))]
    assert not best.infinite
    others = [precision_direct(c, sm, float(b)).delta_beta for b in c.grid[mask]]
    assert best.delta_beta == pytest.approx(min(others))
