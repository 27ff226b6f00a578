"""Figures of merit: Fisher information, dynamical range, precision, gain, scaling fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as P
from scipy.optimize import golden, least_squares

from .encoding import MeasurementRecord, ProbabilityCurve, ProcessSpec, ideal_curve, shot_rng
from .fockspace import StateVector, make_generator, moments
from .probes import ProbeSpec

EPS = 1e-6
FD_STEP = 1e-5
PHASE_DEGREE = 10
AMPLITUDE_DEGREE = 8
SIGNIFICANCE = 3.0
MAX_CONDITION = 1e10


class IllConditionedFit(ValueError):
    def __init__(self, degree: int, condition: float, suggested: int):
        super().__init__(
            f"degree-{degree} fit is ill-conditioned (cond={condition:.2e}); try degree {suggested}"
        )
        self.condition = condition
        self.suggested_degree = suggested


class FitError(RuntimeError):
    pass


def default_degree(process: ProcessSpec) -> int:
    return PHASE_DEGREE if process.kind == "PhaseRotation" else AMPLITUDE_DEGREE


@dataclass(frozen=True, eq=False)
class SmoothCurve:
    """Least-squares polynomial p(beta) with its coefficient covariance."""

    poly: Polynomial
    degree: int
    domain: tuple
    residual_rms: float
    covariance: Optional[np.ndarray] = None

    def __call__(self, beta):
        return self.poly(np.asarray(beta, dtype=float))

    def derivative(self, beta):
        return self.poly.deriv()(np.asarray(beta, dtype=float))

    def _scaled(self, beta):
        off, scl = self.poly.mapparms()
        return off + scl * np.asarray(beta, dtype=float), scl

    def value_stderr(self, beta):
        if self.covariance is None:
            return np.zeros_like(np.asarray(beta, dtype=float))
        u, _ = self._scaled(beta)
        basis = P.polyvander(np.atleast_1d(u), self.degree)
        var = np.einsum("ij,jk,ik->i", basis, self.covariance, basis)
        return np.sqrt(np.maximum(var, 0.0)).reshape(np.shape(beta))

    def slope_stderr(self, beta):
        if self.covariance is None:
            return np.zeros_like(np.asarray(beta, dtype=float))
        u, scl = self._scaled(beta)
        u = np.atleast_1d(u)
        k = np.arange(self.degree + 1)
        basis = np.zeros((u.size, self.degree + 1))
        basis[:, 1:] = k[1:] * u[:, None] ** (k[1:] - 1) * scl
        var = np.einsum("ij,jk,ik->i", basis, self.covariance, basis)
        return np.sqrt(np.maximum(var, 0.0)).reshape(np.shape(beta))


def fit_probability(curve: ProbabilityCurve, degree: Optional[int] = None) -> SmoothCurve:
    """Polynomial least-squares fit of the curve's estimated probabilities."""
    if degree is None:
        degree = default_degree(curve.process)
    x, y = curve.grid, curve.p_est
    if x.size < degree + 1:
        raise ValueError(f"need at least {degree + 1} points for a degree-{degree} fit, got {x.size}")
    domain = (float(x[0]), float(x[-1]))
    template = Polynomial([0.0], domain=domain)
    off, scl = template.mapparms()
    u = off + scl * x
    vander = P.polyvander(u, degree)
    cond = np.linalg.cond(vander)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        suggested = degree - 1
        while suggested > 0 and np.linalg.cond(P.polyvander(u, suggested)) > MAX_CONDITION:
            suggested -= 1
        raise IllConditionedFit(degree, cond, suggested)
    coef, *_ = np.linalg.lstsq(vander, y, rcond=None)
    resid = y - vander @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    dof = x.size - degree - 1
    cov = None
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(vander.T @ vander)
    poly = Polynomial(coef, domain=domain)
    return SmoothCurve(poly, degree, domain, rms, cov)


def fisher_information(p_fn, beta, eps: float = EPS):
    """Binary-outcome FI (dp/dbeta)^2 / (p(1-p)) with p clamped to [eps, 1-eps].

    ``p_fn`` is any callable p(beta); if it exposes ``derivative`` that is used,
    otherwise a central difference with step 1e-5.
    """
    beta = np.asarray(beta, dtype=float)
    p = np.clip(p_fn(beta), eps, 1 - eps)
    if hasattr(p_fn, "derivative"):
        dp = p_fn.derivative(beta)
    else:
        dp = (np.asarray(p_fn(beta + FD_STEP)) - np.asarray(p_fn(beta - FD_STEP))) / (2 * FD_STEP)
    fi = dp**2 / (p * (1 - p))
    return fi if np.ndim(fi) else float(fi)


def fi_small_beta(state: StateVector, generator: str, beta: float) -> float:
    """Second-order small-beta expansion of the overlap FI.

    FI ~ 4 Var(B) - beta^2 (<B^4> - 4<B><B^3> + 3<B^2>^2 - 4 Var(B)^2);
    at beta = 0 this is exactly the QFI 4 Var(B).
    """
    m1, m2, m3, m4 = moments(state, make_generator(generator, state.spec), 4)
    var = max(m2 - m1 * m1, 0.0)
    return 4 * var - beta**2 * (m4 - 4 * m1 * m3 + 3 * m2 * m2 - 4 * var * var)


@dataclass(frozen=True, eq=False)
class FisherCurve:
    grid: np.ndarray
    fi: np.ndarray
    fi_max: float
    beta_at_max: float
    valid: np.ndarray
    source: str = ""

    def __post_init__(self):
        if np.any(self.fi[self.valid] < 0):
            raise ValueError("Fisher information must be nonnegative")

    def to_csv(self) -> str:
        lines = ["beta,fi"]
        lines += [f"{b!r},{f!r}" for b, f in zip(self.grid.tolist(), self.fi.tolist())]
        return "\n".join(lines) + "\n"


def trusted_region(smooth: SmoothCurve, grid, k: float = SIGNIFICANCE) -> np.ndarray:
    """Mask excluding the leading beta -> 0 stretch where a fitted FI is noise.

    A point is trusted once both the fitted slope and the fitted gap 1 - p are
    at least ``k`` standard errors from zero; everything before the first such
    point is dropped.
    """
    grid = np.asarray(grid, dtype=float)
    slope_ok = np.abs(smooth.derivative(grid)) >= k * smooth.slope_stderr(grid)
    gap_ok = (1 - smooth(grid)) >= k * smooth.value_stderr(grid)
    ok = slope_ok & gap_ok
    mask = np.zeros(grid.size, dtype=bool)
    if ok.any():
        mask[int(np.argmax(ok)):] = True
    return mask


def fisher_curve(p_fn, grid, *, trusted: Optional[np.ndarray] = None, refine: bool = True,
                 source: str = "", eps: float = EPS) -> FisherCurve:
    """FI on a grid; argmax over valid points refined by golden-section search."""
    grid = np.asarray(grid, dtype=float)
    fi = np.asarray(fisher_information(p_fn, grid, eps), dtype=float)
    raw = np.asarray(p_fn(grid), dtype=float)
    valid = np.isfinite(fi) & (raw > eps) & (raw < 1 - eps)
    if trusted is not None:
        valid &= trusted
    if not valid.any():
        return FisherCurve(grid, fi, 0.0, float("nan"), valid, source)
    idx = int(np.flatnonzero(valid)[np.argmax(fi[valid])])
    best_beta, best_fi = float(grid[idx]), float(fi[idx])
    if refine and 0 < idx < grid.size - 1:
        lo, hi = grid[idx - 1], grid[idx + 1]
        # the left neighbour may be a clamped beta -> 0 point; it still brackets
        left_ok = valid[idx - 1] or trusted is None
        if left_ok and valid[idx + 1]:
            neg = lambda b: -float(fisher_information(p_fn, b, eps))
            scale = max(abs(best_beta), 1e-4)
            b = golden(neg, brack=(lo, best_beta, hi), tol=1e-4 / (2 * scale))
            if lo <= b <= hi and -neg(b) > best_fi:
                best_beta, best_fi = float(b), -neg(b)
    return FisherCurve(grid, fi, best_fi, best_beta, valid, source)


def fisher_from_samples(curve: ProbabilityCurve, degree: Optional[int] = None):
    """Fit a sampled curve and return (smooth, FisherCurve) with the beta -> 0 stretch excluded."""
    smooth = fit_probability(curve, degree)
    trusted = trusted_region(smooth, curve.grid) if curve.records is not None else None
    return smooth, fisher_curve(smooth, curve.grid, trusted=trusted, source="polyfit")


def ideal_fisher_curve(probe: ProbeSpec, process: ProcessSpec, grid=None) -> FisherCurve:
    grid = process.default_grid() if grid is None else np.asarray(grid, dtype=float)
    fn = ideal_curve(probe, process, beta_max=float(np.max(np.abs(grid))))
    return fisher_curve(fn, grid, source="ideal")


@dataclass
class MeritReport:
    fi_max: float
    fi_max_reference: float
    dynamical_range: Optional[tuple]
    width: float
    fi_avg: float
    offset: float
    precision: float
    gain_db: float
    bootstrap_std: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dynamical_range"] = list(self.dynamical_range) if self.dynamical_range else None
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _crossing(b0, f0, b1, f1, thr):
    if f1 == f0:
        return b0
    return b0 + (thr - f0) * (b1 - b0) / (f1 - f0)


def merit_report(fi_probe: FisherCurve, fi_reference: FisherCurve) -> MeritReport:
    """Dynamical range, average FI inside it, offset and gain of a probe over a reference."""
    thr = fi_reference.fi_max
    grid, fi, valid = fi_probe.grid, fi_probe.fi, fi_probe.valid
    above = valid & (fi > thr)
    precision = 1 / math.sqrt(fi_probe.fi_max) if fi_probe.fi_max > 0 else float("inf")
    gain = metrological_gain(1 / math.sqrt(thr), precision) if thr > 0 and fi_probe.fi_max > 0 else 0.0
    empty = MeritReport(fi_probe.fi_max, thr, None, 0.0, float("nan"), fi_probe.beta_at_max, precision, gain)
    if not above.any():
        return empty

    # contiguous runs of grid indices above threshold
    idx = np.flatnonzero(above)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    near = int(np.argmin(np.abs(grid - fi_probe.beta_at_max)))
    run = next((r for r in runs if r[0] <= near <= r[-1]), max(runs, key=len))
    s, e = int(run[0]), int(run[-1])

    xs, ys = list(grid[s:e + 1]), list(fi[s:e + 1])
    if s > 0 and valid[s - 1]:
        lo = _crossing(grid[s - 1], fi[s - 1], grid[s], fi[s], thr)
        xs.insert(0, lo)
        ys.insert(0, thr)
    if e < grid.size - 1 and valid[e + 1]:
        hi = _crossing(grid[e], fi[e], grid[e + 1], fi[e + 1], thr)
        xs.append(hi)
        ys.append(thr)
    lo, hi = float(xs[0]), float(xs[-1])
    width = hi - lo
    if width <= 0:
        return empty
    fi_avg = float(np.trapezoid(ys, xs) / width)
    return MeritReport(fi_probe.fi_max, thr, (lo, hi), width, fi_avg, fi_probe.beta_at_max, precision, gain)


@dataclass(frozen=True)
class PrecisionResult:
    beta: float
    n_shots: int
    p_hat: float
    slope: float
    delta_p_shot: float
    delta_beta_shot: float
    delta_beta_mean: float
    cramer_rao_shot: float
    cramer_rao_mean: float
    infinite: bool
    convention: str = "shot"

    @property
    def delta_beta(self) -> float:
        return self.delta_beta_shot if self.convention == "shot" else self.delta_beta_mean


def _grid_index(curve: ProbabilityCurve, beta: float) -> int:
    i = int(np.argmin(np.abs(curve.grid - beta)))
    spacing = np.min(np.diff(curve.grid)) if curve.grid.size > 1 else 1.0
    if abs(curve.grid[i] - beta) > 1e-9 * max(1.0, spacing):
        raise ValueError(f"no shot record at beta={beta}; nearest grid point is {curve.grid[i]}")
    return i


def precision_direct(curve: ProbabilityCurve, smooth: SmoothCurve, beta: float,
                     convention: str = "shot") -> PrecisionResult:
    """Delta beta = Delta p / |dp/dbeta| from the shot record at ``beta``.

    ``convention="shot"`` uses the single-shot Bernoulli deviation
    sqrt(p(1-p)); ``"mean"`` divides it by sqrt(n_shots).
    """
    if convention not in ("shot", "mean"):
        raise ValueError("convention must be 'shot' or 'mean'")
    if curve.records is None:
        raise ValueError("precision_direct needs single-shot records")
    i = _grid_index(curve, beta)
    rec = curve.records[i]
    b = float(curve.grid[i])
    p_hat = rec.p_hat
    slope = float(smooth.derivative(b))
    floor = SIGNIFICANCE * float(smooth.slope_stderr(b))
    dp = math.sqrt(p_hat * (1 - p_hat))
    infinite = abs(slope) <= max(floor, 1e-12) or dp == 0.0
    d_shot = float("inf") if infinite else dp / abs(slope)
    d_mean = d_shot / math.sqrt(rec.n_shots)
    fi = float(fisher_information(smooth, b))
    cr_shot = 1 / math.sqrt(fi) if fi > 0 else float("inf")
    return PrecisionResult(b, rec.n_shots, p_hat, slope, dp, d_shot, d_mean, cr_shot,
                           cr_shot / math.sqrt(rec.n_shots), infinite, convention)


def best_precision(curve: ProbabilityCurve, smooth: SmoothCurve, trusted: Optional[np.ndarray] = None,
                   convention: str = "shot") -> PrecisionResult:
    """Smallest direct-precision value over the (trusted) grid."""
    if trusted is None:
        trusted = trusted_region(smooth, curve.grid)
    best = None
    for i in np.flatnonzero(trusted):
        res = precision_direct(curve, smooth, float(curve.grid[i]), convention)
        if res.infinite:
            continue
        if best is None or res.delta_beta < best.delta_beta:
            best = res
    if best is None:
        raise ValueError("no grid point carries a significant slope")
    return best


def metrological_gain(delta_ref: float, delta_probe: float) -> float:
    """20 log10(delta_ref / delta_probe) in dB."""
    if not (delta_ref > 0 and delta_probe > 0):
        raise ValueError("precisions must be positive")
    return 20.0 * math.log10(delta_ref / delta_probe)


def resample_record(rec: MeasurementRecord, rng: np.random.Generator) -> MeasurementRecord:
    # resampling n bits with replacement only changes the count, which is Binomial(n, p_hat)
    k = int(rng.binomial(rec.n_shots, rec.p_hat))
    shots = np.zeros(rec.n_shots, dtype=np.uint8)
    shots[:k] = 1
    return MeasurementRecord(rec.beta, shots, rec.n_shots, rec.seed, rec.stream)


def bootstrap(records: Sequence[MeasurementRecord], statistic: Callable[[list], float],
              n_resamples: int = 1000, seed: Optional[int] = None, return_samples: bool = False):
    """Standard deviation of ``statistic`` over with-replacement resamples of every record."""
    if n_resamples < 100:
        raise ValueError("n_resamples must be at least 100")
    values = np.empty(n_resamples)
    for k in range(n_resamples):
        rng = shot_rng(seed, k)
        values[k] = statistic([resample_record(r, rng) for r in records])
    std = float(np.std(values, ddof=1))
    return (std, values) if return_samples else std


def curve_gain(probe_curve: ProbabilityCurve, ref_curve: ProbabilityCurve, degree: Optional[int] = None,
               convention: str = "shot") -> float:
    """Gain in dB of the best direct precision of two sampled curves."""
    sp = fit_probability(probe_curve, degree)
    sr = fit_probability(ref_curve, degree)
    dp = best_precision(probe_curve, sp, convention=convention).delta_beta
    dr = best_precision(ref_curve, sr, convention=convention).delta_beta
    return metrological_gain(dr, dp)


def bootstrap_gain(probe_curve: ProbabilityCurve, ref_curve: ProbabilityCurve, n_resamples: int = 1000,
                   seed: Optional[int] = None, degree: Optional[int] = None) -> float:
    n = len(probe_curve.records)

    def stat(recs):
        return curve_gain(probe_curve.with_records(recs[:n]), ref_curve.with_records(recs[n:]), degree)

    return bootstrap(list(probe_curve.records) + list(ref_curve.records), stat, n_resamples, seed)


@dataclass
class ScalingFit:
    model: str
    params: dict
    stderr: dict
    fit_range: tuple
    rms: float

    def __post_init__(self):
        if any(not (v >= 0) for v in self.stderr.values() if math.isfinite(v)):
            raise ValueError("standard errors must be nonnegative")

    def predict(self, nbar):
        nbar = np.asarray(nbar, dtype=float)
        if self.model == "power_plus_offset":
            return self.params["a"] * nbar ** self.params["b"] + self.params["c"]
        return np.exp(self.params["a"] * np.log(nbar) + self.params["b"])

    def to_dict(self) -> dict:
        return {"model": self.model, "params": self.params, "stderr": self.stderr,
                "fit_range": list(self.fit_range), "rms": self.rms}


def fit_scaling(points, model: str = "power_plus_offset") -> ScalingFit:
    """Fit value(nbar) with a*nbar^b + c (multi-start) or ln value = a ln nbar + b.

    Logs are natural.  Standard errors come from s^2 (J^T J)^-1 with s^2 the
    residual variance.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array of (nbar, value)")
    x, y = pts[:, 0], pts[:, 1]
    if x.size < 4:
        raise ValueError("need at least 4 points")
    if np.any(x <= 0):
        raise ValueError("nbar must be positive")
    fit_range = (float(x.min()), float(x.max()))

    if model == "loglog_linear":
        if np.any(y <= 0):
            raise ValueError("log-log fit needs positive values")
        lx, ly = np.log(x), np.log(y)
        design = np.column_stack([lx, np.ones_like(lx)])
        coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
        resid = ly - design @ coef
        s2 = float(resid @ resid) / (x.size - 2)
        se = np.sqrt(np.diag(s2 * np.linalg.inv(design.T @ design)))
        return ScalingFit(model, {"a": float(coef[0]), "b": float(coef[1])},
                          {"a": float(se[0]), "b": float(se[1])}, fit_range,
                          float(np.sqrt(np.mean(resid**2))))

    if model != "power_plus_offset":
        raise ValueError(f"unknown scaling model {model!r}")

    def resid(theta):
        a, b, c = theta
        return a * x**b + c - y

    best = None
    c0 = float(np.min(y))
    for a0 in np.geomspace(0.1, 100.0, 5):
        for b0 in np.geomspace(0.25, 4.0, 4):
            try:
                sol = least_squares(resid, [a0, b0, c0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                    max_nfev=5000)
            except (ValueError, FloatingPointError):
                continue
            if not np.all(np.isfinite(sol.x)) or sol.status <= 0:
                continue
            if best is None or sol.cost < best.cost:
                best = sol
    if best is None:
        raise FitError("power-law fit failed from all 20 starts")
    jac = best.jac
    dof = x.size - 3
    s2 = 2 * best.cost / dof if dof > 0 else float("nan")
    try:
        cov = s2 * np.linalg.inv(jac.T @ jac)
        se = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        se = np.full(3, float("nan"))
    a, b, c = (float(v) for v in best.x)
    return ScalingFit(model, {"a": a, "b": b, "c": c},
                      {"a": float(se[0]), "b": float(se[1]), "c": float(se[2])}, fit_range,
                      float(np.sqrt(np.mean(best.fun**2))))
