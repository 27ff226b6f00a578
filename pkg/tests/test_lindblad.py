import math

import numpy as np
import pytest
from scipy.linalg import expm

from bosonic_metrology.encoding import PHASE, ProcessSpec, sweep
from bosonic_metrology.fockspace import DensityMatrix, HilbertSpec, make_number, phase_rotation
from bosonic_metrology.lindblad import (
    CHANNELS, LindbladConfig, StepSizeError, SystemParams, SplineCurve, budget_csv, build_hamiltonian,
    build_jump_operators, evolve, evolve_trajectory, imperfection_budget, prepare, simulate_protocol,
)
from bosonic_metrology.metrology import fisher_curve
from bosonic_metrology.probes import ProbeSpec, build_state, probe_stats


def params(chi=1.0, kerr=0.0, chi_prime=0.0, T_c1=1e3, T_q1=1e3, T_q2=2e3, n_c=0.0, n_q=0.0):
    return SystemParams(chi, chi_prime, kerr, 0.0, T_c1, T_q1, T_q2, n_c, n_q)


def ground(probe, cutoff):
    return prepare(build_state(probe, HilbertSpec(cutoff)), 1.0)


def test_reference_device_loads_with_units():
    p = SystemParams.reference_device()
    assert p.chi == pytest.approx(2 * math.pi * 1.423)
    assert p.kerr == pytest.approx(2 * math.pi * 6e-3)
    assert p.T_c1 == pytest.approx(1000.0) and p.T_q1 == pytest.approx(96.0)
    assert 1 / p.T_qphi == pytest.approx(1 / 15.47 - 0.5 / 96)


def test_param_validation():
    with pytest.raises(ValueError):
        params(T_c1=0.0)
    with pytest.raises(ValueError):
        params(T_q1=10.0, T_q2=30.0)
    with pytest.raises(ValueError):
        params(n_c=-0.1)
    with pytest.raises(ValueError):
        SystemParams.from_dict({"chi": {"value": 1, "unit": "furlong"}})
    with pytest.raises(ValueError):
        LindbladConfig(toggles={"warp_drive": True})
    with pytest.raises(ValueError):
        LindbladConfig(prep_fidelity=0.0)


def test_zero_couplings_give_zero_hamiltonian():
    H = build_hamiltonian(params(chi=0.0), 6)
    assert np.all(H.matrix == 0)


def test_hamiltonian_ground_branch_is_phase_rotation():
    p, cutoff = params(chi=1.3), 15
    H = build_hamiltonian(p, cutoff, {c: False for c in CHANNELS})
    t = 0.7
    U = expm(-1j * H.matrix * t)
    cav = build_state(ProbeSpec.cs(1.0), HilbertSpec(cutoff))
    joint, _ = prepare(cav, 1.0)
    rotated = phase_rotation(HilbertSpec(cutoff), p.chi * t / 2).matrix @ cav.amplitudes
    evolved = U @ joint.amplitudes
    assert np.max(np.abs(evolved[:cutoff] - rotated)) < 1e-9
    assert np.max(np.abs(evolved[cutoff:])) == 0


def test_kerr_phase():
    p, cutoff = params(chi=0.0, kerr=0.4), 8
    H = build_hamiltonian(p, cutoff, {c: c == "self_kerr" for c in CHANNELS})
    t = 0.9
    diag = np.diag(expm(-1j * H.matrix * t))[:cutoff]
    n = np.arange(cutoff)
    assert np.max(np.abs(diag - np.exp(-0.5j * p.kerr * n * (n - 1) * t))) < 1e-12


def test_jump_operators():
    p = params(T_q1=50.0, T_q2=40.0)
    assert build_jump_operators(p, {c: False for c in CHANNELS}, 5) == []
    jumps = build_jump_operators(p, {}, 5)
    labels = [j.label for j in jumps]
    assert not any(l.startswith("L5") or l.startswith("L2") for l in labels)
    deph = next(j for j in jumps if j.label.startswith("L3"))
    rate = np.max(np.abs(deph.matrix)) ** 2
    assert rate == pytest.approx(2 / p.T_qphi, rel=1e-12)
    thermal = build_jump_operators(params(n_c=0.1), {}, 5)
    assert any(j.label.startswith("L5") for j in thermal)


def test_zero_time_is_identity():
    _, rho0 = ground(ProbeSpec.scs(1.0), 15)
    out = evolve(rho0, build_hamiltonian(params(), 15), build_jump_operators(params(), {}, 15), 0.0)
    assert np.array_equal(out.matrix, rho0.matrix)


def test_closed_system_matches_unitary():
    p, cutoff = params(chi=1.5, kerr=0.05), 20
    cfg = LindbladConfig.ideal().only("self_kerr")
    H = build_hamiltonian(p, cutoff, cfg.toggles)
    joint, rho0 = ground(ProbeSpec.scs(1.5), cutoff)
    t = 1.3
    diag = {}
    rho = evolve(rho0, H, [], t, diagnostics=diag)
    psi = expm(-1j * H.matrix * t) @ joint.amplitudes
    assert np.max(np.abs(rho.matrix - np.outer(psi, psi.conj()))) < 1e-8
    assert diag["trace_drift"] < 1e-6 and diag["min_eigenvalue"] > -1e-6


def test_cavity_decay_closed_form():
    p, cutoff = params(chi=0.0, T_c1=5.0), 25
    cfg = LindbladConfig.ideal().only("cavity_decay")
    H = build_hamiltonian(p, cutoff, cfg.toggles)
    jumps = build_jump_operators(p, cfg.toggles, cutoff)
    _, rho0 = ground(ProbeSpec.cs(1.5), cutoff)
    n = make_number(HilbertSpec(cutoff, with_qubit=True)).matrix
    times = [0.5, 2.0, 6.0]
    diag = {}
    for t, rho in zip(times, evolve_trajectory(rho0, H, jumps, times, 0.01, diag)):
        nbar = float(np.real(np.trace(n @ rho.matrix)))
        assert nbar == pytest.approx(1.5**2 * math.exp(-t / p.T_c1), abs=1e-4)
    assert diag["trace_drift"] < 1e-6 and diag["min_eigenvalue"] > -1e-6
    rho = evolve_trajectory(rho0, H, jumps, [6.0], 0.01)[0]
    rho.check(1e-6, 1e-9, -1e-6)


def test_step_size_guard():
    p = params(chi=50.0)
    H = build_hamiltonian(p, 20)
    _, rho0 = ground(ProbeSpec.cs(1.0), 20)
    with pytest.raises(StepSizeError) as info:
        evolve(rho0, H, [], 1.0, LindbladConfig(dt=0.5), params=p)
    assert info.value.suggested_dt < 0.5


def test_prepare_mixture():
    psi = build_state(ProbeSpec.scs(1.0), HilbertSpec(20))
    joint, rho = prepare(psi, 0.9)
    assert np.trace(rho.matrix).real == pytest.approx(1.0)
    assert float(np.real(joint.amplitudes.conj() @ rho.matrix @ joint.amplitudes)) == pytest.approx(
        0.9 + 0.1 * float(np.sum(np.abs(psi.amplitudes) ** 2 / 20)), rel=1e-12)


@pytest.mark.parametrize("kind", ["PhaseRotation", "DisplacementImag", "DisplacementReal"])
def test_ideal_protocol_matches_unitary_sweep(kind):
    probe = ProbeSpec.scs(1.2)
    process = ProcessSpec(kind)
    grid = np.linspace(0, 1.2, 13)
    lind = simulate_protocol(probe, kind, grid, SystemParams.reference_device(), LindbladConfig.ideal())
    ref = sweep(probe, process, grid)
    assert lind.source == "lindblad"
    assert np.max(np.abs(lind.p - ref.p)) < 1e-6


def test_reference_device_protocol_below_qfi():
    probe = ProbeSpec.scs(1.5)
    lind = simulate_protocol(probe, "PhaseRotation", PHASE.default_grid(), SystemParams.reference_device())
    fc = fisher_curve(SplineCurve(lind.grid, lind.p), lind.grid)
    assert fc.fi_max < probe_stats(probe).qfi
    assert lind.p[0] < 1.0


def test_budget_ordering():
    rows = imperfection_budget([1.0], SystemParams.reference_device(), cases=("none", "cavity_decay", "self_kerr", "all"))
    fi = {r["channel"]: r["fi_max"] for r in rows}
    for case in ("cavity_decay", "self_kerr", "all"):
        assert fi[case] <= fi["none"] * (1 + 1e-8)
    assert fi["all"] <= min(fi["cavity_decay"], fi["self_kerr"]) * (1 + 1e-8)
    assert fi["cavity_decay"] > fi["self_kerr"]
    text = budget_csv(rows)
    assert text.splitlines()[0] == "nbar,channel,fi_max" and len(text.splitlines()) == 5


def test_budget_rejects_unknown_case():
    with pytest.raises(ValueError):
        imperfection_budget([1.0], SystemParams.reference_device(), cases=("gremlins",))


def test_readout_flip_applied():
    grid = np.linspace(0, 1, 5)
    a = simulate_protocol(ProbeSpec.cs(1.0), "PhaseRotation", grid, params(), LindbladConfig.ideal())
    b = simulate_protocol(ProbeSpec.cs(1.0), "PhaseRotation", grid, params(),
                          LindbladConfig.ideal(readout_flip=0.1))
    assert np.allclose(b.p, 0.9 * a.p + 0.1 * (1 - a.p))


def test_density_matrix_check_catches_bad_state():
    bad = DensityMatrix(np.diag([1.2, -0.2]).astype(complex), HilbertSpec(2))
    with pytest.raises(ValueError):
        bad.check(1e-6, 1e-9, -1e-6)
