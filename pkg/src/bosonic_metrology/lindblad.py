"""Open-system model of the encoding step (qubit + cavity, rotating frame)."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .encoding import ProbabilityCurve, ProcessSpec, mix_readout, probe_hilbert
from .fockspace import (DensityMatrix, HilbertSpec, Operator, make_annihilation,
                        make_number, qubit_excited_projector, qubit_lowering, tensor_qubit)
from .probes import ProbeSpec, build_state

CHANNELS = ("cavity_decay", "cavity_thermal", "qubit_decay", "qubit_thermal", "qubit_dephasing",
            "self_kerr", "chi_prime")
STABILITY = 0.05
TRACE_TOL = 1e-6
EIG_FLOOR = -1e-6

_FREQ_UNITS = {"GHz": 1e3, "MHz": 1.0, "kHz": 1e-3, "Hz": 1e-6, "rad/us": None}
_TIME_UNITS = {"s": 1e6, "ms": 1e3, "us": 1.0, "ns": 1e-3}


class StepSizeError(RuntimeError):
    def __init__(self, message: str, suggested_dt: float):
        super().__init__(f"{message}; suggested dt = {suggested_dt:.3e} us")
        self.suggested_dt = suggested_dt


def _to_internal(name: str, raw) -> float:
    if not isinstance(raw, dict):
        return float(raw)
    value, unit = float(raw["value"]), raw["unit"]
    if unit in _TIME_UNITS:
        return value * _TIME_UNITS[unit]
    if unit not in _FREQ_UNITS:
        raise ValueError(f"{name}: unknown unit {unit!r}")
    factor = _FREQ_UNITS[unit]
    return value if factor is None else 2 * math.pi * value * factor


@dataclass(frozen=True)
class SystemParams:
    """Device parameters; angular frequencies in rad/us, lifetimes in us."""

    chi: float
    chi_prime: float
    kerr: float
    anharmonicity: float
    T_c1: float
    T_q1: float
    T_q2: float
    n_c: float = 0.0
    n_q: float = 0.0

    def __post_init__(self):
        for name in ("T_c1", "T_q1", "T_q2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.T_q2 > 2 * self.T_q1:
            raise ValueError("T_q2 must not exceed 2*T_q1")
        if self.n_c < 0 or self.n_q < 0:
            raise ValueError("thermal occupations must be nonnegative")

    @property
    def T_qphi(self) -> float:
        inv = 1 / self.T_q2 - 0.5 / self.T_q1
        if inv < 0:
            raise ValueError("derived pure-dephasing time is negative")
        return math.inf if inv == 0 else 1 / inv

    @property
    def min_lifetime(self) -> float:
        return min(self.T_c1, self.T_q1, self.T_q2)

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names - {"_documentation_only"}
        if unknown:
            raise ValueError(f"unknown system parameters: {sorted(unknown)}")
        return cls(**{k: _to_internal(k, v) for k, v in d.items() if k in names})

    @classmethod
    def reference_device(cls) -> "SystemParams":
        text = resources.files("bosonic_metrology").joinpath("data/reference_device.json").read_text()
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _default_toggles() -> dict:
    return {c: True for c in CHANNELS}


@dataclass(frozen=True)
class LindbladConfig:
    dt: Optional[float] = None
    toggles: dict = field(default_factory=_default_toggles)
    prep_fidelity: float = 0.998
    cutoff: Optional[int] = None
    readout_flip: float = 0.0
    idle_time: float = 0.0
    validate_dt: bool = False

    def __post_init__(self):
        unknown = set(self.toggles) - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown channel toggles: {sorted(unknown)}")
        object.__setattr__(self, "toggles", {**_default_toggles(), **self.toggles})
        if not 0 < self.prep_fidelity <= 1:
            raise ValueError("prep_fidelity must lie in (0, 1]")
        if not 0 <= self.readout_flip <= 1:
            raise ValueError("readout_flip must lie in [0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.idle_time < 0:
            raise ValueError("idle_time must be nonnegative")

    @classmethod
    def ideal(cls, **kw) -> "LindbladConfig":
        return cls(toggles={c: False for c in CHANNELS}, prep_fidelity=1.0, **kw)

    def only(self, *channels: str) -> "LindbladConfig":
        """Copy with exactly the named channels enabled."""
        bad = set(channels) - set(CHANNELS)
        if bad:
            raise ValueError(f"unknown channels: {sorted(bad)}")
        return replace(self, toggles={c: c in channels for c in CHANNELS})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def build_hamiltonian(params: SystemParams, cutoff: int, toggles: Optional[dict] = None) -> Operator:
    """Dispersive Hamiltonian in the frame rotating at Delta = chi/2.

    Written with the overall sign chosen so that, with the qubit in g, the
    cavity picks up exp(+i n chi t / 2).  Two-level qubit: the anharmonicity
    term vanishes.
    """
    toggles = _default_toggles() if toggles is None else {**_default_toggles(), **toggles}
    spec = HilbertSpec(cutoff, with_qubit=True)
    n = make_number(spec).matrix
    pe = qubit_excited_projector(spec).matrix
    nn1 = n @ n - n  # a^dag a^dag a a
    h0 = 0.5 * params.chi * n - params.chi * (pe @ n)
    if toggles["self_kerr"]:
        h0 = h0 - 0.5 * params.kerr * nn1
    if toggles["chi_prime"]:
        h0 = h0 - 0.5 * params.chi_prime * (pe @ nn1)
    return Operator(-h0, spec, hermitian=True, label="H")


def build_jump_operators(params: SystemParams, toggles, cutoff: int) -> list:
    if isinstance(toggles, LindbladConfig):
        toggles = toggles.toggles
    toggles = {**_default_toggles(), **toggles}
    spec = HilbertSpec(cutoff, with_qubit=True)
    q = qubit_lowering(spec).matrix
    a = make_annihilation(spec).matrix
    candidates = [
        ("qubit_decay", "L1 qubit relaxation", q, (1 + params.n_q) / params.T_q1),
        ("qubit_thermal", "L2 qubit excitation", q.conj().T, params.n_q / params.T_q1),
        ("qubit_dephasing", "L3 qubit dephasing", q.conj().T @ q,
         2 / params.T_qphi if toggles["qubit_dephasing"] else 0.0),
        ("cavity_decay", "L4 cavity relaxation", a, (1 + params.n_c) / params.T_c1),
        ("cavity_thermal", "L5 cavity excitation", a.conj().T, params.n_c / params.T_c1),
    ]
    jumps = []
    for channel, label, op, rate in candidates:
        if toggles[channel] and rate > 0:
            jumps.append(Operator(math.sqrt(rate) * op, spec, label=label))
    return jumps


def stiffness(H: Operator, jumps: Sequence[Operator]) -> float:
    """max(spectral spread of H, largest dissipative rate)."""
    ev = np.linalg.eigvalsh(H.matrix)
    spread = float(ev[-1] - ev[0])
    rate = 0.0
    if jumps:
        gamma = sum(L.matrix.conj().T @ L.matrix for L in jumps)
        rate = float(np.linalg.eigvalsh(0.5 * (gamma + gamma.conj().T))[-1])
    return max(spread, rate)


def default_dt(params: SystemParams, H: Operator, jumps: Sequence[Operator]) -> float:
    base = 0.4 / max(abs(params.chi), 1 / params.min_lifetime)
    scale = stiffness(H, jumps)
    return base if scale == 0 else min(base, 0.98 * STABILITY / scale)


def _resolve_dt(config: LindbladConfig, params: SystemParams, H: Operator, jumps) -> float:
    if config.dt is None:
        return default_dt(params, H, jumps)
    scale = stiffness(H, jumps)
    if config.dt * scale >= STABILITY:
        raise StepSizeError(f"dt*scale = {config.dt * scale:.3g} violates the {STABILITY} bound",
                            0.98 * STABILITY / scale)
    return config.dt


class _Generator:
    """d rho/dt = -i(H_eff rho - rho H_eff^dag) + sum L rho L^dag, H_eff = H - i/2 sum L^dag L."""

    def __init__(self, H: Operator, jumps: Sequence[Operator]):
        heff = H.matrix.copy()
        for L in jumps:
            heff = heff - 0.5j * (L.matrix.conj().T @ L.matrix)
        self.heff = heff
        self.heff_dag = heff.conj().T
        self.jumps = [(L.matrix, L.matrix.conj().T) for L in jumps]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self.heff @ rho - rho @ self.heff_dag)
        for L, Ld in self.jumps:
            out += L @ rho @ Ld
        return out

    def rk4(self, rho: np.ndarray, h: float, steps: int) -> np.ndarray:
        for _ in range(steps):
            k1 = self(rho)
            k2 = self(rho + 0.5 * h * k1)
            k3 = self(rho + 0.5 * h * k2)
            k4 = self(rho + h * k3)
            rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        return 0.5 * (rho + rho.conj().T)


def _diagnose(rho: np.ndarray, dt: float, diag: Optional[dict]) -> None:
    drift = abs(float(np.trace(rho).real) - 1.0)
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    if diag is not None:
        diag["trace_drift"] = max(drift, diag.get("trace_drift", 0.0))
        diag["min_eigenvalue"] = min(min_eig, diag.get("min_eigenvalue", math.inf))
    if drift > TRACE_TOL or min_eig < EIG_FLOOR:
        raise StepSizeError(f"integration unstable (trace drift {drift:.2e}, min eigenvalue {min_eig:.2e})",
                            dt / 2)


def evolve_trajectory(rho0: DensityMatrix, H: Operator, jumps: Sequence[Operator], times,
                      dt: float, diagnostics: Optional[dict] = None) -> list:
    """rho at each of the nondecreasing ``times``; each interval is split into equal steps <= dt."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    gen = _Generator(H, jumps)
    rho = np.array(rho0.matrix)
    t_prev = 0.0
    out = []
    total_steps = 0
    for t in times:
        span = t - t_prev
        if span > 0:
            steps = int(math.ceil(span / dt - 1e-12))
            rho = gen.rk4(rho, span / steps, steps)
            total_steps += steps
            _diagnose(rho, dt, diagnostics)
        out.append(DensityMatrix(rho.copy(), rho0.spec))
        t_prev = t
    if diagnostics is not None:
        diagnostics.setdefault("trace_drift", 0.0)
        diagnostics.setdefault("min_eigenvalue", float(np.linalg.eigvalsh(rho0.matrix)[0]))
        diagnostics["steps"] = total_steps
        diagnostics["dt"] = dt
    return out


def evolve(rho0: DensityMatrix, H: Operator, jumps: Sequence[Operator], t: float,
           config: Optional[LindbladConfig] = None, params: Optional[SystemParams] = None,
           diagnostics: Optional[dict] = None) -> DensityMatrix:
    """Fixed-step RK4 integration of the master equation up to time ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    config = config or LindbladConfig()
    if config.dt is not None or params is not None:
        dt = _resolve_dt(config, params, H, jumps)
    else:
        scale = stiffness(H, jumps)
        dt = 0.98 * STABILITY / scale if scale > 0 else max(t, 1.0)
    return evolve_trajectory(rho0, H, jumps, [t], dt, diagnostics)[0]


def prepare(probe_state, prep_fidelity: float) -> tuple:
    """Joint |g>|psi> and its depolarized density matrix F rho + (1-F) |g><g| (x) I/d."""
    joint = tensor_qubit(probe_state, "g")
    c = probe_state.spec.cutoff
    rho = np.outer(joint.amplitudes, joint.amplitudes.conj())
    if prep_fidelity < 1:
        mixed = np.zeros_like(rho)
        mixed[np.arange(c), np.arange(c)] = 1.0 / c
        rho = prep_fidelity * rho + (1 - prep_fidelity) * mixed
    return joint, DensityMatrix(rho, joint.spec)


def _overlaps(rhos, target: np.ndarray) -> np.ndarray:
    return np.array([float(np.real(target.conj() @ r.matrix @ target)) for r in rhos])


def _protocol_probabilities(probe: ProbeSpec, process: ProcessSpec, grid: np.ndarray,
                            params: SystemParams, config: LindbladConfig, dt: Optional[float],
                            diagnostics: Optional[dict]) -> tuple:
    cutoff = config.cutoff or probe_hilbert(probe, process, float(np.max(np.abs(grid)))).cutoff
    cavity = HilbertSpec(cutoff)
    psi = build_state(probe, cavity)
    target, rho0 = prepare(psi, config.prep_fidelity)
    H = build_hamiltonian(params, cutoff, config.toggles)
    jumps = build_jump_operators(params, config.toggles, cutoff)
    if dt is None:
        dt = _resolve_dt(config, params, H, jumps)

    if process.kind == "PhaseRotation":
        if np.any(grid < 0):
            raise ValueError("phase encoding needs beta >= 0 (it is an evolution time)")
        rhos = evolve_trajectory(rho0, H, jumps, 2 * grid / params.chi, dt, diagnostics)
    else:
        rhos = []
        for b in grid:
            U = process.unitary(cavity.joint, float(b)).matrix
            rho = DensityMatrix(U @ rho0.matrix @ U.conj().T, rho0.spec)
            if config.idle_time > 0:
                rho = evolve_trajectory(rho, H, jumps, [config.idle_time], dt, diagnostics)[0]
            rhos.append(rho)
    p = _overlaps(rhos, target.amplitudes)
    F = config.prep_fidelity
    p = F * p + (1 - F) / cutoff
    return np.clip(p, 0.0, 1.0), dt


def simulate_protocol(probe: ProbeSpec, process_kind, beta_grid, params: SystemParams,
                      config: Optional[LindbladConfig] = None,
                      diagnostics: Optional[dict] = None) -> ProbabilityCurve:
    """Probability curve of the full noisy protocol: prepare, encode, unprepare, read out."""
    process = process_kind if isinstance(process_kind, ProcessSpec) else ProcessSpec(process_kind)
    config = config or LindbladConfig()
    grid = np.asarray(beta_grid, dtype=float)
    p, dt = _protocol_probabilities(probe, process, grid, params, config, None, diagnostics)
    if config.validate_dt:
        # halve until two successive halvings move the curve by < 1e-7
        history = [p]
        for _ in range(6):
            dt /= 2
            p_half, _ = _protocol_probabilities(probe, process, grid, params, config, dt, None)
            history.append(p_half)
            if len(history) >= 3 and all(np.max(np.abs(history[-1 - i] - history[-2 - i])) < 1e-7
                                         for i in range(2)):
                break
        else:
            raise StepSizeError("step halving did not converge", dt / 2)
        p = history[-1]
        if diagnostics is not None:
            diagnostics["dt"] = dt
    p = mix_readout(p, config.readout_flip)
    return ProbabilityCurve(process, probe, grid, p, "lindblad")


class SplineCurve:
    """Cubic-spline interpolant of a probability curve, with analytic derivative."""

    def __init__(self, grid, p):
        self._spline = CubicSpline(np.asarray(grid, dtype=float), np.asarray(p, dtype=float))

    def __call__(self, beta):
        return self._spline(beta)

    def derivative(self, beta):
        return self._spline(beta, 1)


BUDGET_CASES = {
    "none": (),
    "cavity_decay": ("cavity_decay",),
    "self_kerr": ("self_kerr",),
    "chi_prime": ("chi_prime",),
    "qubit": ("qubit_decay", "qubit_dephasing", "qubit_thermal"),
    "all": CHANNELS,
}


def imperfection_budget(nbars: Iterable[float], params: SystemParams, config: Optional[LindbladConfig] = None,
                        cases: Sequence[str] = tuple(BUDGET_CASES), family: str = "SCS",
                        grid=None) -> list:
    """FI_max of an SCS-family probe with one imperfection class switched on at a time.

    The prep-fidelity and readout settings of ``config`` are shared by every case.
    """
    from .metrology import fisher_curve

    config = config or LindbladConfig()
    grid = ProcessSpec("PhaseRotation").default_grid() if grid is None else np.asarray(grid, dtype=float)
    rows = []
    for nbar in nbars:
        probe = ProbeSpec.scs_nbar(nbar) if family == "SCS" else ProbeSpec.cs_nbar(nbar)
        for case in cases:
            if case not in BUDGET_CASES:
                raise ValueError(f"unknown budget case {case!r}")
            curve = simulate_protocol(probe, "PhaseRotation", grid, params, config.only(*BUDGET_CASES[case]))
            fc = fisher_curve(SplineCurve(curve.grid, curve.p), curve.grid, source="lindblad")
            rows.append({"nbar": float(nbar), "channel": case, "fi_max": fc.fi_max})
    return rows


def budget_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["nbar", "channel", "fi_max"], lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({"nbar": repr(r["nbar"]), "channel": r["channel"], "fi_max": repr(r["fi_max"])})
    return buf.getvalue()
