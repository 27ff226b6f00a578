"""Probe-state families, their photon statistics and closed-form QFI."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .fockspace import (
    HilbertSpec,
    LEAKAGE_TOL,
    StateVector,
    TruncationError,
    default_cutoff,
    displace,
    expectation,
    make_generator,
    phase_rotation,
    squeeze,
    variance,
)

FAMILIES = ("CS", "SCS", "WeightedSCS", "FockSuperposition", "SqueezedVacuum")

_FIELDS = {
    "CS": {"alpha"},
    "SCS": {"alpha"},
    "WeightedSCS": {"alpha", "w"},
    "FockSuperposition": {"N"},
    "SqueezedVacuum": {"r"},
}


class NoClosedForm(LookupError):
    """No analytic statistics for this (family, generator) pair; evaluate numerically."""


@dataclass(frozen=True)
class ProbeSpec:
    family: str
    alpha: Optional[complex] = None
    w: Optional[float] = None
    N: Optional[int] = None
    r: Optional[float] = None
    phase_offset: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown probe family {self.family!r}; expected one of {FAMILIES}")
        wanted = _FIELDS[self.family]
        for name in ("alpha", "w", "N", "r"):
            is_set = getattr(self, name) is not None
            if name in wanted and not is_set:
                raise ValueError(f"{self.family} requires field {name!r}")
            if name not in wanted and is_set:
                raise ValueError(f"{self.family} does not take field {name!r}")
        if self.alpha is not None:
            object.__setattr__(self, "alpha", complex(self.alpha))
        if self.w is not None and not 0.0 <= self.w <= 1.0:
            raise ValueError(f"weight w must lie in [0, 1], got {self.w}")
        if self.N is not None and (int(self.N) != self.N or self.N < 1):
            raise ValueError(f"N must be a positive integer, got {self.N}")

    # convenience constructors
    @classmethod
    def cs(cls, alpha: complex, phase_offset: float = 0.0) -> "ProbeSpec":
        return cls("CS", alpha=alpha, phase_offset=phase_offset)

    @classmethod
    def cs_nbar(cls, nbar: float, phase_offset: float = 0.0) -> "ProbeSpec":
        return cls("CS", alpha=math.sqrt(nbar), phase_offset=phase_offset)

    @classmethod
    def scs(cls, alpha: complex, phase_offset: float = 0.0) -> "ProbeSpec":
        return cls("SCS", alpha=alpha, phase_offset=phase_offset)

    @classmethod
    def scs_nbar(cls, nbar: float, phase_offset: float = 0.0) -> "ProbeSpec":
        return cls("SCS", alpha=solve_alpha_for_nbar("SCS", 0.5, nbar), phase_offset=phase_offset)

    @classmethod
    def weighted_scs(cls, alpha: complex, w: float, phase_offset: float = 0.0) -> "ProbeSpec":
        return cls("WeightedSCS", alpha=alpha, w=w, phase_offset=phase_offset)

    @classmethod
    def fock(cls, N: int, phase_offset: float = 0.0) -> "ProbeSpec":
        return cls("FockSuperposition", N=N, phase_offset=phase_offset)

    @classmethod
    def squeezed(cls, r: float, phase_offset: float = 0.0) -> "ProbeSpec":
        return cls("SqueezedVacuum", r=r, phase_offset=phase_offset)

    @property
    def weight(self) -> float:
        """Weight on the |alpha> branch (SCS is the equal-weight case)."""
        return 0.5 if self.family == "SCS" else float(self.w)

    def nominal_nbar(self) -> float:
        """Mean photon number from closed forms (used for sizing the cutoff)."""
        if self.family == "CS":
            return abs(self.alpha) ** 2
        if self.family in ("SCS", "WeightedSCS"):
            return weighted_scs_nbar(abs(self.alpha), self.weight)
        if self.family == "FockSuperposition":
            return self.N / 2
        return math.sinh(self.r) ** 2

    def default_hilbert(self) -> HilbertSpec:
        nbar = self.nominal_nbar()
        cutoff = default_cutoff(nbar)
        if self.family == "FockSuperposition":
            cutoff = max(cutoff, self.N + 3)
        elif self.family in ("CS", "SCS", "WeightedSCS"):
            cutoff = max(cutoff, default_cutoff(abs(self.alpha) ** 2))
        elif self.family == "SqueezedVacuum":
            cutoff = max(cutoff, _squeezed_cutoff(self.r), int(math.ceil(6 * nbar)) + 2)
        return HilbertSpec(cutoff)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        if "alpha" in d:
            a = complex(d["alpha"])
            d["alpha"] = a.real if a.imag == 0 else [a.real, a.imag]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeSpec":
        d = dict(d)
        unknown = set(d) - {"family", "alpha", "w", "N", "r", "phase_offset", "nbar"}
        if unknown:
            raise ValueError(f"unknown probe keys: {sorted(unknown)}")
        if "alpha" in d and isinstance(d["alpha"], (list, tuple)):
            d["alpha"] = complex(*d["alpha"])
        nbar = d.pop("nbar", None)
        if nbar is not None:
            if "alpha" in d:
                raise ValueError("give either alpha or nbar, not both")
            fam = d.get("family")
            if fam == "CS":
                d["alpha"] = math.sqrt(nbar)
            elif fam in ("SCS", "WeightedSCS"):
                d["alpha"] = solve_alpha_for_nbar(fam, d.get("w", 0.5), nbar)
            elif fam == "SqueezedVacuum":
                if "r" in d:
                    raise ValueError("give either r or nbar, not both")
                if nbar < 0:
                    raise ValueError("nbar must be nonnegative")
                d["r"] = math.asinh(math.sqrt(nbar))
            else:
                raise ValueError(f"nbar shortcut not supported for {fam}")
        return cls(**d)


@dataclass(frozen=True)
class ProbeStats:
    nbar: float
    generator_variance: float
    qfi: float
    normalization: float

    def __post_init__(self):
        if self.qfi < 0 or self.nbar < 0:
            raise ValueError("qfi and nbar must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def _squeezed_cutoff(r: float, tail: float = 1e-13) -> int:
    # P(2k) = (2k)! / (4^k k!^2) tanh^{2k} r / cosh r.  Truncation error in the
    # variance follows n^2 P(n) at the top rather than the bare leakage.
    t2 = math.tanh(abs(r)) ** 2
    p, k = 1.0 / math.cosh(r), 0
    while True:
        k += 1
        p *= t2 * (2 * k - 1) / (2 * k)
        if (2 * k) ** 2 * p < tail and k > 2:
            return 2 * k + 2


def scs_normalization(alpha: complex) -> float:
    return 1.0 / math.sqrt(2.0 * (1.0 + math.exp(-abs(alpha) ** 2 / 2)))


def weighted_scs_nbar(alpha: float, w: float) -> float:
    """Mean photon number of sqrt(1-w)|0> + sqrt(w)|alpha>, normalized."""
    a2 = alpha * alpha
    norm2 = 1.0 + 2.0 * math.sqrt(w * (1.0 - w)) * math.exp(-a2 / 2)
    return w * a2 / norm2


def build_state(spec: ProbeSpec, hilbert: Optional[HilbertSpec] = None) -> StateVector:
    if hilbert is None:
        hilbert = spec.default_hilbert()
    if hilbert.with_qubit:
        raise ValueError("probes are built on the cavity space; use tensor_qubit to embed")
    c = hilbert.cutoff
    vac = np.zeros(c, dtype=complex)
    vac[0] = 1.0

    fam = spec.family
    if fam == "CS":
        amps = displace(hilbert, spec.alpha).matrix @ vac
    elif fam in ("SCS", "WeightedSCS"):
        w = spec.weight
        coherent = displace(hilbert, spec.alpha).matrix @ vac
        amps = math.sqrt(1.0 - w) * vac + math.sqrt(w) * coherent
    elif fam == "FockSuperposition":
        if spec.N >= c - 2:
            raise TruncationError(f"|{spec.N}> sits in the top Fock levels of cutoff {c}", 0.5)
        amps = vac.copy()
        amps[spec.N] = 1.0
    else:
        amps = squeeze(hilbert, spec.r).matrix @ vac

    state = StateVector.from_amplitudes(amps, hilbert)
    if spec.phase_offset:
        state = StateVector.from_amplitudes(phase_rotation(hilbert, spec.phase_offset).apply(state), hilbert)
    leak = state.leakage()
    if leak > LEAKAGE_TOL:
        raise TruncationError(f"{fam} state leaks past cutoff {c}", leak)
    return state


def closed_form_stats(spec: ProbeSpec, generator: str = "number") -> ProbeStats:
    """Analytic n-bar, generator variance and QFI; raises NoClosedForm otherwise."""
    fam = spec.family
    if generator not in ("number", "x", "y"):
        raise ValueError(f"unknown generator {generator!r}")

    if fam == "CS":
        nbar = abs(spec.alpha) ** 2
        var = nbar if generator == "number" else 1.0
        return ProbeStats(nbar, var, 4 * var, 1.0)

    if fam == "SCS":
        a = spec.alpha
        norm = scs_normalization(a)
        n2 = norm * norm
        nbar = n2 * abs(a) ** 2
        if generator == "number":
            var = ((1 - n2) / n2) * nbar**2 + nbar
            return ProbeStats(nbar, var, 4 * var, norm)
        # quadrature formulas hold for a real branch amplitude with no pre-rotation
        if a.imag == 0 and spec.phase_offset == 0:
            if generator == "x":
                var = 2 * nbar + 1
            else:
                var = 1 - 2 * nbar * math.exp(-abs(a) ** 2 / 2)
            return ProbeStats(nbar, var, 4 * var, norm)
        raise NoClosedForm(f"no closed form for SCS with complex alpha under {generator}")

    if fam == "FockSuperposition" and generator == "number":
        nbar = spec.N / 2
        var = nbar**2
        return ProbeStats(nbar, var, 4 * var, 1 / math.sqrt(2))

    if fam == "SqueezedVacuum" and generator == "number":
        nbar = math.sinh(spec.r) ** 2
        var = 2 * nbar**2 + 2 * nbar
        return ProbeStats(nbar, var, 4 * var, 1.0)

    raise NoClosedForm(f"no closed form for {fam} under the {generator} generator")


def numeric_stats(spec: ProbeSpec, generator: str = "number", hilbert: Optional[HilbertSpec] = None) -> ProbeStats:
    """Statistics evaluated on the constructed Fock-space vector."""
    state = build_state(spec, hilbert)
    n_op = make_generator("number", state.spec)
    b_op = make_generator(generator, state.spec)
    nbar = expectation(state, n_op).real
    var = variance(state, b_op)
    norm = 1.0 / np.linalg.norm(_unnormalized(spec, state.spec))
    if spec.family == "SCS":
        norm *= math.sqrt(0.5)  # report N_alpha for N_alpha(|0> + |alpha>)
    return ProbeStats(max(nbar, 0.0), var, 4 * var, float(norm))


def probe_stats(spec: ProbeSpec, generator: str = "number", hilbert: Optional[HilbertSpec] = None) -> ProbeStats:
    try:
        return closed_form_stats(spec, generator)
    except NoClosedForm:
        return numeric_stats(spec, generator, hilbert)


def _unnormalized(spec: ProbeSpec, hilbert: HilbertSpec) -> np.ndarray:
    vac = np.zeros(hilbert.cutoff, dtype=complex)
    vac[0] = 1.0
    if spec.family in ("SCS", "WeightedSCS"):
        w = spec.weight
        coh = displace(hilbert, spec.alpha).matrix @ vac
        return math.sqrt(1 - w) * vac + math.sqrt(w) * coh
    if spec.family == "FockSuperposition":
        v = vac.copy()
        v[spec.N] = 1.0
        return v
    # CS and squeezed vacuum come out of a unitary, so they are already normalized
    return np.array([1.0])


def solve_alpha_for_nbar(family: str, w: float, nbar_target: float, tol: float = 1e-10) -> float:
    """Real alpha >= 0 giving the requested mean photon number, by bisection."""
    if family not in ("SCS", "WeightedSCS"):
        raise ValueError(f"alpha solve only defined for SCS/WeightedSCS, got {family}")
    if family == "SCS":
        w = 0.5
    if nbar_target <= 0:
        raise ValueError(f"nbar_target must be positive, got {nbar_target}")
    if not 0 < w <= 1:
        raise ValueError(f"weight must lie in (0, 1], got {w}")
    lo, hi = 0.0, 2.0 * math.sqrt(nbar_target / w) + 4.0
    n_lo, n_hi = weighted_scs_nbar(lo, w), weighted_scs_nbar(hi, w)
    if not n_lo <= nbar_target <= n_hi:
        raise ValueError(
            f"nbar={nbar_target} unreachable at w={w}: bracket covers [{n_lo:.4g}, {n_hi:.4g}]"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if weighted_scs_nbar(mid, w) < nbar_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
