"""Grid-based Bayesian estimation of a phase and of the dispersive coupling."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from .encoding import ProbabilityCurve, shot_rng

PHASE_PRIOR = (0.0, 2.5)
PHASE_POINTS = 2001
CHI_POINTS = 4001
CHI_PRIOR_SPAN = 0.3
LIKELIHOOD_EPS = 1e-12


class FitError(RuntimeError):
    def __init__(self, message: str, best_residual: float = float("nan")):
        super().__init__(f"{message} (best residual RMS {best_residual:.3e})")
        self.best_residual = best_residual


class PriorEscapeError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitModel:
    """p1(theta) = |c + exp(-a^2 (1 - e^{i theta}))|^2 / (4 b)."""

    b: float
    c: float
    alpha_eff: float
    residual_rms: float = float("nan")

    def __post_init__(self):
        if not (self.b > 0 and self.alpha_eff > 0):
            raise ValueError("b and alpha_eff must be positive")

    def _z(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.exp(-self.alpha_eff**2 * (1 - np.exp(1j * theta)))

    def raw(self, theta):
        return np.abs(self.c + self._z(theta)) ** 2 / (4 * self.b)

    def __call__(self, theta):
        return np.clip(self.raw(theta), 0.0, 1.0)

    def derivative(self, theta):
        z = self._z(theta)
        dz = z * self.alpha_eff**2 * 1j * np.exp(1j * np.asarray(theta, dtype=float))
        return 2 * np.real(np.conj(self.c + z) * dz) / (4 * self.b)

    def to_dict(self) -> dict:
        return {"b": self.b, "c": self.c, "alpha_eff": self.alpha_eff, "residual_rms": self.residual_rms}


def scs_model(alpha: float) -> FitModel:
    """Parameters reproducing the ideal overlap of the (|0> + |alpha>) probe exactly."""
    e = math.exp(-alpha**2 / 2)
    return FitModel((1 + e) ** 2, 1 + 2 * e, alpha, 0.0)


def fit_probability_model(curve: ProbabilityCurve, alpha_guess: Optional[float] = None) -> FitModel:
    """Multi-start least-squares fit of (b, c, alpha_eff) to a phase curve."""
    if curve.process.kind != "PhaseRotation":
        raise ValueError("the probability model describes phase encoding only")
    x, y = curve.grid, curve.p_est
    if x.size < 10:
        raise ValueError("need at least 10 points")
    if alpha_guess is None:
        probe = curve.probe
        alpha_guess = abs(probe.alpha) if probe is not None and probe.alpha is not None else 1.0
    alpha_guess = max(float(alpha_guess), 1e-3)

    def resid(v):
        b, c, a = v
        return FitModel(b, c, a).raw(x) - y

    e = math.exp(-alpha_guess**2 / 2)
    scale = max(float(np.max(y)), 1e-3)
    starts = [((1 + e) ** 2 / scale, 1 + 2 * e, alpha_guess),
              (1.0, 2 * e * scale, alpha_guess)]
    for f in (0.7, 0.85, 1.15, 1.3):
        a = alpha_guess * f
        ea = math.exp(-a**2 / 2)
        starts.append(((1 + ea) ** 2 / scale, 1 + 2 * ea, a))
    best = None
    for s in starts:
        try:
            sol = least_squares(resid, s, bounds=([1e-9, -np.inf, 1e-6], [np.inf, np.inf, np.inf]),
                                xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=4000)
        except ValueError:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or not np.all(np.isfinite(best.x)):
        raise FitError("probability-model fit failed from every start")
    rms = float(np.sqrt(np.mean(best.fun**2)))
    if not best.success:
        raise FitError("probability-model fit did not converge", rms)
    b, c, a = (float(v) for v in best.x)
    return FitModel(b, c, a, rms)


@dataclass(frozen=True, eq=False)
class Posterior:
    grid: np.ndarray
    log_weights: np.ndarray
    weights: np.ndarray
    map: float
    mean: float
    std: float

    @classmethod
    def from_log_likelihood(cls, grid, loglik) -> "Posterior":
        grid = np.asarray(grid, dtype=float)
        loglik = np.asarray(loglik, dtype=float)
        shifted = loglik - np.max(loglik)
        w = np.exp(shifted)
        w /= w.sum()
        mean = float(w @ grid)
        std = float(math.sqrt(max(w @ (grid - mean) ** 2, 0.0)))
        i = int(np.argmax(shifted))
        map_ = float(grid[i])
        if 0 < i < grid.size - 1:
            # vertex of the parabola through the three log-weights around the peak
            l0, l1, l2 = shifted[i - 1:i + 2]
            denom = l0 - 2 * l1 + l2
            if denom < 0:
                h = grid[i + 1] - grid[i]
                map_ = float(grid[i] + 0.5 * h * (l0 - l2) / denom)
                map_ = min(max(map_, grid[i - 1]), grid[i + 1])
        return cls(grid, shifted - math.log(np.exp(shifted).sum()), w, map_, mean, std)

    def edge_mass(self, fraction: float = 0.02) -> Tuple[float, float]:
        k = max(1, int(round(fraction * self.grid.size)))
        return float(self.weights[:k].sum()), float(self.weights[-k:].sum())


def binomial_loglik(p, n1, n):
    p = np.clip(p, LIKELIHOOD_EPS, 1 - LIKELIHOOD_EPS)
    return n1 * np.log(p) + (n - n1) * np.log1p(-p)


def phase_posterior(model: FitModel, N1, N, prior: Tuple[float, float] = PHASE_PRIOR,
                    points: int = PHASE_POINTS) -> Posterior:
    """Posterior over theta under a uniform prior from N1 ones in N shots."""
    if N < 1 or not 0 <= N1 <= N:
        raise ValueError("need N >= 1 and 0 <= N1 <= N")
    grid = np.linspace(prior[0], prior[1], points)
    return Posterior.from_log_likelihood(grid, binomial_loglik(model(grid), N1, N))


@dataclass(frozen=True)
class ChiRound:
    t_us: float
    N: int
    N1: float
    map: float = float("nan")
    std: float = float("nan")

    def __post_init__(self):
        if not self.t_us > 0:
            raise ValueError("round time must be positive")
        if not 0 <= self.N1 <= self.N:
            raise ValueError("N1 must lie in [0, N]")


@dataclass
class ChiCampaign:
    prior: Tuple[float, float]
    theta_opt: float
    rounds: List[ChiRound] = field(default_factory=list)

    @property
    def estimate(self) -> float:
        return self.rounds[-1].map if self.rounds else 0.5 * (self.prior[0] + self.prior[1])

    @property
    def std(self) -> float:
        return self.rounds[-1].std if self.rounds else float("nan")

    def to_dict(self) -> dict:
        return {
            "prior": list(self.prior),
            "theta_opt": self.theta_opt,
            "rounds": [{"round": i + 1, "t_us": r.t_us, "N": r.N, "N1": r.N1, "map": r.map, "std": r.std}
                       for i, r in enumerate(self.rounds)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def chi_prior(chi_guess: float, span: float = CHI_PRIOR_SPAN) -> Tuple[float, float]:
    return (chi_guess * (1 - span), chi_guess * (1 + span))


def chi_posterior(campaign: ChiCampaign, model: FitModel, points: int = CHI_POINTS,
                  rounds: Optional[Sequence[ChiRound]] = None) -> Posterior:
    """Posterior over chi from every round, with theta = chi t / 2."""
    rounds = campaign.rounds if rounds is None else rounds
    if not rounds:
        raise ValueError("campaign has no rounds")
    grid = np.linspace(campaign.prior[0], campaign.prior[1], points)
    loglik = np.zeros_like(grid)
    for r in rounds:
        loglik += binomial_loglik(model(grid * r.t_us / 2), r.N1, r.N)
    return Posterior.from_log_likelihood(grid, loglik)


@dataclass
class SimulatedChiSystem:
    """Stand-in for the device: outcome probability p(chi_true t / 2)."""

    chi_true: float
    probability_fn: Callable
    noiseless: bool = False

    def probability(self, t_us: float) -> float:
        return float(np.clip(self.probability_fn(self.chi_true * t_us / 2), 0.0, 1.0))

    def measure(self, t_us: float, n: int, rng: np.random.Generator) -> float:
        p = self.probability(t_us)
        if self.noiseless:
            return n * p
        return int(rng.binomial(n, p))


def chi_operating_point(model: FitModel, prior: Tuple[float, float] = PHASE_PRIOR,
                        points: int = PHASE_POINTS) -> float:
    """theta maximizing theta^2 FI(theta), i.e. the most informative point for chi.

    Since theta = chi t / 2, the Fisher information about chi at fixed t is
    (theta/chi)^2 FI(theta).
    """
    from .metrology import fisher_information

    theta = np.linspace(max(prior[0], 1e-3), prior[1], points)
    score = theta**2 * fisher_information(model, theta)
    return float(theta[int(np.argmax(score))])


def adaptive_chi(true_system: SimulatedChiSystem, model: FitModel, N_per_round: int = 1000,
                 max_rounds: int = 4, prior: Optional[Tuple[float, float]] = None,
                 chi_guess: Optional[float] = None, theta_opt: Optional[float] = None,
                 seed: Optional[int] = None, points: int = CHI_POINTS,
                 escape_fraction: float = 0.02, escape_mass: float = 0.05) -> ChiCampaign:
    """Iteratively pick t so that chi_est t / 2 = theta_opt, measure, and update."""
    if prior is None:
        if chi_guess is None:
            raise ValueError("supply a prior interval or a rough chi value")
        prior = chi_prior(chi_guess)
    if theta_opt is None:
        theta_opt = chi_operating_point(model)
    campaign = ChiCampaign(tuple(float(v) for v in prior), float(theta_opt))
    estimate = 0.5 * (prior[0] + prior[1])
    for k in range(max_rounds):
        t = 2 * theta_opt / estimate
        n1 = true_system.measure(t, N_per_round, shot_rng(seed, k))
        campaign.rounds.append(ChiRound(t, N_per_round, n1))
        post = chi_posterior(campaign, model, points)
        lo, hi = post.edge_mass(escape_fraction)
        if max(lo, hi) > escape_mass:
            side = "lower" if lo > hi else "upper"
            raise PriorEscapeError(
                f"posterior mass {max(lo, hi):.2f} at the {side} edge of the chi prior {prior}; widen the prior"
            )
        campaign.rounds[-1] = ChiRound(t, N_per_round, n1, post.map, post.std)
        estimate = post.map
    return campaign
