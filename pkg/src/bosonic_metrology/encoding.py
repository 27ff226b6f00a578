"""Parameter encoding, overlap probabilities and single-shot sampling."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fockspace import (
    HilbertSpec,
    LEAKAGE_TOL,
    Operator,
    StateVector,
    TruncationError,
    default_cutoff,
    displace,
    make_generator,
    phase_rotation,
)
from .probes import ProbeSpec, build_state

PROCESS_KINDS = {
    "PhaseRotation": "number",
    "DisplacementImag": "x",
    "DisplacementReal": "y",
}

DEFAULT_PHASE_GRID = (0.0, 2.5, 126)
DEFAULT_AMPLITUDE_GRID = (0.0, 1.5, 76)


@dataclass(frozen=True)
class ProcessSpec:
    kind: str

    def __post_init__(self):
        if self.kind not in PROCESS_KINDS:
            raise ValueError(f"unknown process kind {self.kind!r}; expected one of {tuple(PROCESS_KINDS)}")

    @property
    def generator(self) -> str:
        return PROCESS_KINDS[self.kind]

    def default_grid(self) -> np.ndarray:
        start, stop, n = DEFAULT_PHASE_GRID if self.kind == "PhaseRotation" else DEFAULT_AMPLITUDE_GRID
        return np.linspace(start, stop, n)

    def unitary(self, spec: HilbertSpec, beta: float) -> Operator:
        """exp(i B beta) for this process's generator B."""
        if self.kind == "PhaseRotation":
            return phase_rotation(spec, beta)
        if self.kind == "DisplacementImag":
            # exp(i g (a^dag + a)) = D(i g)
            return displace(spec, 1j * beta)
        # exp(i g i(a - a^dag)) = D(g)
        return displace(spec, beta)


PHASE = ProcessSpec("PhaseRotation")


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    beta: float
    shots: np.ndarray
    n_shots: int
    seed: Optional[int]
    stream: Optional[int] = None

    def __post_init__(self):
        shots = np.asarray(self.shots, dtype=np.uint8)
        if shots.shape != (self.n_shots,):
            raise ValueError(f"expected {self.n_shots} shots, got shape {shots.shape}")
        if shots.size and shots.max() > 1:
            raise ValueError("shots must be bits")
        shots.setflags(write=False)
        object.__setattr__(self, "shots", shots)

    @property
    def n_ones(self) -> int:
        return int(self.shots.sum())

    @property
    def p_hat(self) -> float:
        return self.n_ones / self.n_shots


@dataclass(frozen=True, eq=False)
class ProbabilityCurve:
    """Overlap probability p(beta) on a grid.

    ``p`` is the probability each shot is drawn from (readout error included);
    ``records`` holds the sampled shots when ``source == "sampled"``.
    """

    process: ProcessSpec
    probe: Optional[ProbeSpec]
    grid: np.ndarray
    p: np.ndarray
    source: str
    records: Optional[tuple] = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if grid.ndim != 1 or grid.shape != p.shape:
            raise ValueError("grid and p must be 1-D arrays of equal length")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.source not in ("analytic", "unitary-numeric", "lindblad", "sampled"):
            raise ValueError(f"unknown curve source {self.source!r}")
        if self.records is not None and len(self.records) != grid.size:
            raise ValueError("one record per grid point is required")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "p", np.clip(p, 0.0, 1.0))

    @property
    def p_est(self) -> np.ndarray:
        if self.records is None:
            return self.p
        return np.array([r.p_hat for r in self.records])

    @property
    def n_shots(self) -> int:
        return self.records[0].n_shots if self.records else 0

    def with_records(self, records: Sequence[MeasurementRecord]) -> "ProbabilityCurve":
        return ProbabilityCurve(self.process, self.probe, self.grid, self.p, "sampled", tuple(records))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["beta", "p_true", "p_est", "n_shots", "n_ones", "seed"])
        p_est = self.p_est
        for i, beta in enumerate(self.grid):
            if self.records is not None:
                rec = self.records[i]
                writer.writerow([repr(float(beta)), repr(float(self.p[i])), repr(float(p_est[i])),
                                 rec.n_shots, rec.n_ones, "" if rec.seed is None else rec.seed])
            else:
                writer.writerow([repr(float(beta)), repr(float(self.p[i])), repr(float(p_est[i])), 0, 0, ""])
        return buf.getvalue()


def records_from_csv(text: str) -> list:
    """Rebuild MeasurementRecords from the curve CSV (shot order is not preserved)."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        n, k = int(row["n_shots"]), int(row["n_ones"])
        if not 0 <= k <= n:
            raise ValueError(f"row at beta={row['beta']} has n_ones={k} outside [0, {n}]")
        shots = np.zeros(n, dtype=np.uint8)
        shots[:k] = 1
        seed = int(row["seed"]) if row.get("seed") not in (None, "") else None
        out.append(MeasurementRecord(float(row["beta"]), shots, n, seed))
    return out


def curve_from_csv(text: str, process: ProcessSpec, probe: Optional[ProbeSpec] = None) -> ProbabilityCurve:
    rows = list(csv.DictReader(io.StringIO(text)))
    grid = [float(r["beta"]) for r in rows]
    p = [float(r["p_true"]) if r.get("p_true") not in (None, "") else float(r["p_est"]) for r in rows]
    records = records_from_csv(text)
    if all(r.n_shots == 0 for r in records):
        return ProbabilityCurve(process, probe, grid, p, "unitary-numeric")
    return ProbabilityCurve(process, probe, grid, p, "sampled", tuple(records))


def overlap_probability(probe: StateVector, process: ProcessSpec, beta: float) -> float:
    """|<psi| U(beta) |psi>|^2, building U(beta) explicitly."""
    u = process.unitary(probe.spec, beta)
    evolved = u.apply(probe)
    leak = probe.spec.leakage(evolved)
    if leak > LEAKAGE_TOL:
        raise TruncationError(f"{process.kind} at beta={beta} leaks past cutoff {probe.spec.cutoff}", leak)
    amp = np.vdot(probe.amplitudes, evolved)
    return float(min(max(abs(amp) ** 2, 0.0), 1.0))


class SpectralCurve:
    """Ideal unitary overlap p(beta) and its exact derivative.

    The generator is diagonalized once; with w_k = |<v_k|psi>|^2 the overlap
    amplitude is A(beta) = sum_k w_k exp(i lambda_k beta).  For the number
    generator this is the photon-number distribution and is exact.
    """

    def __init__(self, probe: StateVector, process: ProcessSpec):
        self.probe = probe
        self.process = process
        gen = make_generator(process.generator, probe.spec)
        if process.generator == "number":
            self.eigvals = np.arange(probe.spec.dim, dtype=float) % probe.spec.cutoff
            self.weights = np.abs(probe.amplitudes) ** 2
            self._vecs = None
        else:
            self.eigvals, vecs = np.linalg.eigh(gen.matrix)
            self._vecs = vecs
            self.weights = np.abs(vecs.conj().T @ probe.amplitudes) ** 2

    def amplitude(self, beta):
        beta = np.asarray(beta, dtype=float)
        return np.exp(1j * np.multiply.outer(beta, self.eigvals)) @ self.weights

    def __call__(self, beta):
        return np.clip(np.abs(self.amplitude(beta)) ** 2, 0.0, 1.0)

    def derivative(self, beta):
        beta = np.asarray(beta, dtype=float)
        phases = np.exp(1j * np.multiply.outer(beta, self.eigvals))
        amp = phases @ self.weights
        damp = phases @ (1j * self.eigvals * self.weights)
        return 2.0 * np.real(np.conj(amp) * damp)

    def check_leakage(self, beta_max: float) -> float:
        """Top-level leakage of U(beta)|psi> at the largest |beta| of a sweep."""
        if self._vecs is None:
            return self.probe.leakage()
        evolved = self._vecs @ (np.exp(1j * self.eigvals * beta_max) * (self._vecs.conj().T @ self.probe.amplitudes))
        leak = self.probe.spec.leakage(evolved)
        if leak > LEAKAGE_TOL:
            raise TruncationError(f"{self.process.kind} up to beta={beta_max} leaks past cutoff", leak)
        return leak


def analytic_scs_phase_overlap(alpha: float, theta):
    """Closed-form overlap for SCS(alpha) under phase rotation by theta."""
    theta = np.asarray(theta, dtype=float)
    a2 = float(alpha) ** 2
    e = math.exp(-a2 / 2)
    amp = 1 + 2 * e + np.exp(-a2 * (1 - np.exp(1j * theta)))
    p = np.abs(amp) ** 2 / (4 * (1 + e) ** 2)
    return p if p.ndim else float(p)


def mix_readout(p, readout_flip: float):
    """Symmetric bit-flip on the single-shot outcome."""
    if not 0.0 <= readout_flip <= 1.0:
        raise ValueError(f"readout_flip must lie in [0, 1], got {readout_flip}")
    p = np.asarray(p, dtype=float)
    return p * (1 - readout_flip) + (1 - p) * readout_flip


def shot_rng(seed: Optional[int], index: int) -> np.random.Generator:
    """Independent stream for grid point ``index`` derived from ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def sample_shots(p: float, n_shots: int, seed: Optional[int] = None, *, stream: Optional[int] = None,
                 beta: float = float("nan")) -> MeasurementRecord:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    rng = shot_rng(seed, stream) if stream is not None else np.random.default_rng(seed)
    shots = (rng.random(n_shots) < p).astype(np.uint8)
    return MeasurementRecord(beta, shots, n_shots, seed, stream)


def sample_curve(curve: ProbabilityCurve, n_shots: int, seed: Optional[int]) -> ProbabilityCurve:
    records = tuple(
        sample_shots(float(p), n_shots, seed, stream=i, beta=float(b))
        for i, (b, p) in enumerate(zip(curve.grid, curve.p))
    )
    return curve.with_records(records)


def probe_hilbert(probe: ProbeSpec, process: ProcessSpec, beta_max: float) -> HilbertSpec:
    """Cavity space large enough for the probe after the largest displacement."""
    spec = probe.default_hilbert()
    if process.kind == "PhaseRotation":
        return spec
    scale = abs(probe.alpha) ** 2 if probe.alpha is not None else probe.nominal_nbar()
    reach = (math.sqrt(scale) + abs(beta_max)) ** 2
    return HilbertSpec(max(spec.cutoff, default_cutoff(reach)))


def _spectral_with_growth(probe: ProbeSpec, process: ProcessSpec, beta_max: float,
                          hilbert: Optional[HilbertSpec]) -> SpectralCurve:
    if hilbert is not None:
        fn = SpectralCurve(build_state(probe, hilbert), process)
        fn.check_leakage(beta_max)
        return fn
    hilbert = probe_hilbert(probe, process, beta_max)
    for _ in range(4):
        try:
            fn = SpectralCurve(build_state(probe, hilbert), process)
            fn.check_leakage(beta_max)
            return fn
        except TruncationError:
            hilbert = HilbertSpec(int(hilbert.cutoff * 1.5) + 1)
    fn = SpectralCurve(build_state(probe, hilbert), process)
    fn.check_leakage(beta_max)
    return fn


def sweep(probe: ProbeSpec, process: ProcessSpec, grid=None, n_shots: int = 0, readout_flip: float = 0.0,
          seed: Optional[int] = None, hilbert: Optional[HilbertSpec] = None) -> ProbabilityCurve:
    """Run the ideal protocol over a grid, optionally sampling single shots."""
    grid = process.default_grid() if grid is None else np.asarray(grid, dtype=float)
    curve_fn = _spectral_with_growth(probe, process, float(np.max(np.abs(grid))), hilbert)
    p = mix_readout(curve_fn(grid), readout_flip)
    curve = ProbabilityCurve(process, probe, grid, p, "unitary-numeric")
    if n_shots > 0:
        curve = sample_curve(curve, n_shots, seed)
    return curve


def ideal_curve(probe: ProbeSpec, process: ProcessSpec = PHASE, hilbert: Optional[HilbertSpec] = None,
                beta_max: Optional[float] = None) -> SpectralCurve:
    if beta_max is None:
        beta_max = float(process.default_grid()[-1])
    return _spectral_with_growth(probe, process, beta_max, hilbert)
