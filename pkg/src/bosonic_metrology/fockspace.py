"""Truncated Fock-space linear algebra for one bosonic mode (optionally plus a qubit).

Joint qubit-cavity vectors use qubit-major ordering: index = q * cutoff + n,
with q = 0 for |g> and q = 1 for |e>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import expm

LEAKAGE_TOL = 1e-6
_NORM_TOL = 1e-12
_HERMITIAN_TOL = 1e-12

GENERATORS = ("number", "x", "y")


class TruncationError(ValueError):
    """Raised when a state or operator pushes weight into the top Fock levels."""

    def __init__(self, message: str, leakage: float):
        super().__init__(f"{message} (leakage={leakage:.3e})")
        self.leakage = leakage


@dataclass(frozen=True)
class HilbertSpec:
    cutoff: int
    with_qubit: bool = False

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise ValueError(f"cutoff must be an integer >= 2, got {self.cutoff!r}")

    @property
    def dim(self) -> int:
        return self.cutoff * (2 if self.with_qubit else 1)

    @property
    def cavity(self) -> "HilbertSpec":
        return HilbertSpec(self.cutoff)

    @property
    def joint(self) -> "HilbertSpec":
        return HilbertSpec(self.cutoff, with_qubit=True)

    def leakage(self, amplitudes: np.ndarray) -> float:
        """Probability held by the top two Fock levels (summed over qubit levels)."""
        probs = np.abs(np.asarray(amplitudes)) ** 2
        probs = probs.reshape(-1, self.cutoff)
        return float(probs[:, -2:].sum())


def default_cutoff(nbar: float) -> int:
    """Cutoff rule ceil(nbar + 8 sqrt(nbar + 1) + 10)."""
    nbar = max(float(nbar), 0.0)
    return int(math.ceil(nbar + 8.0 * math.sqrt(nbar + 1.0) + 10.0))


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    spec: HilbertSpec

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.spec.dim,):
            raise ValueError(f"amplitudes shape {amps.shape} does not match dim {self.spec.dim}")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > _NORM_TOL:
            raise ValueError(f"state not normalized: |psi|^2 = {norm2!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, spec: HilbertSpec) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("zero vector cannot be normalized")
        return cls(amps / norm, spec)

    @classmethod
    def fock(cls, n: int, spec: HilbertSpec) -> "StateVector":
        if not 0 <= n < spec.cutoff:
            raise ValueError(f"Fock level {n} outside cutoff {spec.cutoff}")
        amps = np.zeros(spec.dim, dtype=complex)
        amps[n] = 1.0
        return cls(amps, spec)

    def leakage(self) -> float:
        return self.spec.leakage(self.amplitudes)

    def photon_distribution(self) -> np.ndarray:
        return (np.abs(self.amplitudes) ** 2).reshape(-1, self.spec.cutoff).sum(axis=0)

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.spec)


@dataclass(frozen=True, eq=False)
class Operator:
    matrix: np.ndarray
    spec: HilbertSpec
    hermitian: bool = False
    label: str = ""
    leakage: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.spec.dim, self.spec.dim):
            raise ValueError(f"operator shape {m.shape} does not match dim {self.spec.dim}")
        if self.hermitian:
            err = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
            if err >= _HERMITIAN_TOL * max(1.0, np.max(np.abs(m))):
                raise ValueError(f"operator claimed Hermitian but max|M - M^dag| = {err:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.spec, self.hermitian, self.label + "^dag" if self.label else "")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            _check_same(self.spec, other.spec)
            return Operator(self.matrix @ other.matrix, self.spec)
        if isinstance(other, StateVector):
            _check_same(self.spec, other.spec)
            return StateVector.from_amplitudes(self.matrix @ other.amplitudes, self.spec)
        return NotImplemented

    def apply(self, state: StateVector) -> np.ndarray:
        """Raw (unnormalized) action on a state."""
        _check_same(self.spec, state.spec)
        return self.matrix @ state.amplitudes


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    spec: HilbertSpec

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.spec.dim, self.spec.dim):
            raise ValueError(f"density matrix shape {m.shape} does not match dim {self.spec.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def check(self, trace_tol: float, herm_tol: float = 1e-10, eig_floor: float = -1e-8) -> None:
        drift = abs(self.trace - 1.0)
        if drift > trace_tol:
            raise ValueError(f"trace drift {drift:.3e} exceeds {trace_tol:.1e}")
        if self.hermiticity_error() > herm_tol:
            raise ValueError(f"density matrix not Hermitian ({self.hermiticity_error():.3e})")
        if self.min_eigenvalue() < eig_floor:
            raise ValueError(f"negative eigenvalue {self.min_eigenvalue():.3e}")

    def leakage(self) -> float:
        diag = np.real(np.diag(self.matrix)).reshape(-1, self.spec.cutoff)
        return float(diag[:, -2:].sum())


def _check_same(a: HilbertSpec, b: HilbertSpec) -> None:
    if a != b:
        raise ValueError(f"dimension mismatch: {a} vs {b}")


def make_annihilation(spec: HilbertSpec) -> Operator:
    """Cavity annihilation operator; on a joint spec it acts as identity on the qubit."""
    a = np.diag(np.sqrt(np.arange(1, spec.cutoff, dtype=float)), k=1).astype(complex)
    if spec.with_qubit:
        a = np.kron(np.eye(2), a)
    return Operator(a, spec, label="a")


def make_creation(spec: HilbertSpec) -> Operator:
    a = make_annihilation(spec)
    return Operator(a.matrix.conj().T, spec, label="a^dag")


def make_number(spec: HilbertSpec) -> Operator:
    n = np.diag(np.arange(spec.cutoff, dtype=float)).astype(complex)
    if spec.with_qubit:
        n = np.kron(np.eye(2), n)
    return Operator(n, spec, hermitian=True, label="n")


def make_generator(kind: str, spec: HilbertSpec) -> Operator:
    """Process generator: ``number`` (a^dag a), ``x`` (a^dag + a) or ``y`` (i(a - a^dag))."""
    if kind == "number":
        return make_number(spec)
    a = make_annihilation(spec).matrix
    ad = a.conj().T
    if kind == "x":
        return Operator(ad + a, spec, hermitian=True, label="x")
    if kind == "y":
        return Operator(1j * (a - ad), spec, hermitian=True, label="y")
    raise ValueError(f"unknown generator kind {kind!r}; expected one of {GENERATORS}")


def qubit_lowering(spec: HilbertSpec) -> Operator:
    """|g><e| on the qubit, identity on the cavity."""
    if not spec.with_qubit:
        raise ValueError("qubit operator requires a joint qubit-cavity spec")
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    return Operator(np.kron(sm, np.eye(spec.cutoff)), spec, label="q")


def qubit_excited_projector(spec: HilbertSpec) -> Operator:
    if not spec.with_qubit:
        raise ValueError("qubit operator requires a joint qubit-cavity spec")
    pe = np.diag([0.0, 1.0]).astype(complex)
    return Operator(np.kron(pe, np.eye(spec.cutoff)), spec, hermitian=True, label="q^dag q")


def _vacuum(spec: HilbertSpec) -> np.ndarray:
    v = np.zeros(spec.cutoff, dtype=complex)
    v[0] = 1.0
    return v


def displace(spec: HilbertSpec, alpha: complex) -> Operator:
    """Displacement operator exp(alpha a^dag - conj(alpha) a) on the cavity.

    The exponential is taken of the truncated generator, so the result is
    exactly unitary on the truncated space but deviates from the true
    displacement near the cutoff.  The reported ``leakage`` is the top-two-level
    population of D(alpha)|0>.
    """
    alpha = complex(alpha)
    if abs(alpha) ** 2 > spec.cutoff / 4:
        raise TruncationError(
            f"|alpha|^2 = {abs(alpha) ** 2:.3g} exceeds cutoff/4 = {spec.cutoff / 4:.3g}", float("nan")
        )
    cav = spec.cavity
    a = make_annihilation(cav).matrix
    d = expm(alpha * a.conj().T - np.conj(alpha) * a)
    leak = cav.leakage(d @ _vacuum(cav))
    if leak > LEAKAGE_TOL:
        raise TruncationError(f"displacement by {alpha} leaks past cutoff {spec.cutoff}", leak)
    if spec.with_qubit:
        d = np.kron(np.eye(2), d)
    return Operator(d, spec, label=f"D({alpha})", leakage=leak)


def phase_rotation(spec: HilbertSpec, theta: float) -> Operator:
    """exp(i theta a^dag a), computed on the diagonal."""
    phases = np.exp(1j * theta * np.arange(spec.cutoff))
    if spec.with_qubit:
        phases = np.tile(phases, 2)
    return Operator(np.diag(phases), spec, label=f"R({theta})")


def squeeze(spec: HilbertSpec, r: float) -> Operator:
    """Squeezing operator exp((-r/2)(a a - a^dag a^dag))."""
    if math.sinh(r) ** 2 > spec.cutoff / 6:
        raise TruncationError(
            f"sinh^2(r) = {math.sinh(r) ** 2:.3g} exceeds cutoff/6 = {spec.cutoff / 6:.3g}", float("nan")
        )
    cav = spec.cavity
    a = make_annihilation(cav).matrix
    ad = a.conj().T
    s = expm((-r / 2) * (a @ a - ad @ ad))
    leak = cav.leakage(s @ _vacuum(cav))
    if leak > LEAKAGE_TOL:
        raise TruncationError(f"squeezing r={r} leaks past cutoff {spec.cutoff}", leak)
    if spec.with_qubit:
        s = np.kron(np.eye(2), s)
    return Operator(s, spec, label=f"S({r})", leakage=leak)


StateLike = Union[StateVector, DensityMatrix]


def expectation(state: StateLike, op: Operator) -> complex:
    _check_same(state.spec, op.spec)
    if isinstance(state, DensityMatrix):
        val = np.trace(op.matrix @ state.matrix)
    else:
        val = np.vdot(state.amplitudes, op.matrix @ state.amplitudes)
    return complex(val)


def moments(state: StateLike, op: Operator, k: int = 4) -> np.ndarray:
    """Real parts of <B>, <B^2>, ..., <B^k> for a Hermitian B."""
    if not 1 <= k <= 4:
        raise ValueError("moments are available for orders 1..4")
    _check_same(state.spec, op.spec)
    out = np.empty(k)
    if isinstance(state, DensityMatrix):
        power = np.eye(op.spec.dim, dtype=complex)
        for i in range(k):
            power = power @ op.matrix
            out[i] = np.trace(power @ state.matrix).real
        return out
    # <B^{j+l}> = <B^j psi | B^l psi>
    vecs = [state.amplitudes]
    for _ in range(2):
        vecs.append(op.matrix @ vecs[-1])
    for order in range(1, k + 1):
        j, l = order // 2, order - order // 2
        out[order - 1] = np.vdot(vecs[j], vecs[l]).real
    return out


def variance(state: StateLike, op: Operator) -> float:
    m1, m2 = moments(state, op, 2)
    var = m2 - m1 * m1
    if var < -1e-12:
        raise ValueError(f"negative variance {var:.3e}; operator may not be Hermitian")
    return max(var, 0.0)


def inner_product(a: StateVector, b: StateVector) -> complex:
    _check_same(a.spec, b.spec)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def tensor_qubit(cavity_state: StateVector, qubit_level: Union[int, str] = "g") -> StateVector:
    """Embed a cavity state as |q> (x) |psi> in the joint space."""
    if cavity_state.spec.with_qubit:
        raise ValueError("state already lives in the joint space")
    level = {"g": 0, "e": 1}.get(qubit_level, qubit_level)
    if level not in (0, 1):
        raise ValueError(f"qubit level must be 'g', 'e', 0 or 1, got {qubit_level!r}")
    q = np.zeros(2)
    q[level] = 1.0
    return StateVector(np.kron(q, cavity_state.amplitudes), cavity_state.spec.joint)
