"""Estimators and fits: g2 correlations, CHSH quantities, the visibility
witness, sideband-asymmetry thermometry, lifetime and phase-calibration
fits.  Every estimator returns an AnalysisResult carrying a one-standard-
deviation uncertainty, a method tag and a digest of its inputs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import curve_fit, minimize

from .core import OutcomeDistribution


class AnalysisError(ValueError):
    pass


def _digest(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class AnalysisResult:
    value: float
    sigma: float
    method: str
    inputs_digest: str
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.sigma < 0:
            raise AnalysisError("sigma must be >= 0")

    def __str__(self):
        return f"{self.value:.6g} ± {self.sigma:.2g} [{self.method}]"


@dataclass(frozen=True)
class CoincidenceTable:
    """Counts n_kl of trials where write detector k and read detector l each
    clicked alone, plus the singles and the trial count.  Counts may be
    expected values (floats) when built from an exact distribution."""

    counts: Mapping[tuple[int, int], float]
    write_singles: Mapping[int, float]
    read_singles: Mapping[int, float]
    trials: float

    def __post_init__(self):
        for v in list(self.counts.values()) + list(self.write_singles.values()) \
                + list(self.read_singles.values()):
            if v < 0:
                raise AnalysisError("counts must be >= 0")
        for (k, l), v in self.counts.items():
            if v > min(self.write_singles[k], self.read_singles[l]) + 1e-9:
                raise AnalysisError("coincidences exceed singles")

    @property
    def total_coincidences(self) -> float:
        return sum(self.counts.values())


def _channel_index(labels: Sequence[str]) -> dict[str, int]:
    return {lab: i for i, lab in enumerate(labels)}


def coincidences_from_distribution(
    dist: OutcomeDistribution,
    write_channels: tuple[str, str],
    read_channels: tuple[str, str],
    trials: float = 1.0,
    counts: Mapping[tuple[bool, ...], float] | None = None,
) -> CoincidenceTable:
    """Tabulate n_kl from a joint pattern distribution (or sampled pattern
    counts): exactly one write-side click on detector k and exactly one
    read-side click on detector l."""
    idx = _channel_index(dist.labels)
    wi = [idx[c] for c in write_channels]
    ri = [idx[c] for c in read_channels]
    source = counts if counts is not None else {
        pat: p * trials for pat, p in dist.probabilities.items()}
    n = {(k, l): 0.0 for k in (1, 2) for l in (1, 2)}
    w_singles = {1: 0.0, 2: 0.0}
    r_singles = {1: 0.0, 2: 0.0}
    for pat, c in source.items():
        w = (pat[wi[0]], pat[wi[1]])
        r = (pat[ri[0]], pat[ri[1]])
        for k in (1, 2):
            if w[k - 1]:
                w_singles[k] += c
            if r[k - 1]:
                r_singles[k] += c
        if sum(w) == 1 and sum(r) == 1:
            n[(w.index(True) + 1, r.index(True) + 1)] += c
    return CoincidenceTable(counts=n, write_singles=w_singles,
                            read_singles=r_singles, trials=trials)


# ---------------------------------------------------------------------------
# correlation estimators


def g2_cross(write_singles: float, read_singles: float, coincidences: float,
             trials: float, bootstrap: int = 0,
             rng: np.random.Generator | None = None) -> AnalysisResult:
    """Normalized cross correlation g2 = N_c N / (N_w N_r) with Poisson error
    propagation (or bootstrap over the three counts as a cross-check)."""
    if trials <= 0:
        raise AnalysisError("trials must be > 0")
    digest = _digest("g2", write_singles, read_singles, coincidences, trials)
    if write_singles <= 0 or read_singles <= 0:
        return AnalysisResult(math.nan, 0.0, "g2-cross/poisson", digest,
                              flags=("undefined: zero singles",))
    value = coincidences * trials / (write_singles * read_singles)
    if coincidences <= 0:
        return AnalysisResult(0.0, math.nan, "g2-cross/poisson", digest,
                              flags=("no coincidences",))
    if bootstrap:
        rng = rng or np.random.default_rng(0)
        draws = rng.poisson([coincidences, write_singles, read_singles],
                            size=(bootstrap, 3)).astype(float)
        draws[draws[:, 1] == 0, 1] = 1.0
        draws[draws[:, 2] == 0, 2] = 1.0
        vals = draws[:, 0] * trials / (draws[:, 1] * draws[:, 2])
        return AnalysisResult(value, float(np.std(vals)), "g2-cross/bootstrap", digest)
    rel = math.sqrt(1.0 / coincidences + 1.0 / write_singles + 1.0 / read_singles)
    return AnalysisResult(value, value * rel, "g2-cross/poisson", digest)


def correlation_E(table: CoincidenceTable, bootstrap: int = 0,
                  rng: np.random.Generator | None = None) -> AnalysisResult:
    """E = (n11 + n22 - n12 - n21) / total with multinomial error."""
    n = table.counts
    total = table.total_coincidences
    digest = _digest("E", sorted((f"{k}", v) for k, v in n.items()))
    if total <= 0:
        raise AnalysisError("correlation_E: no coincidences")
    value = (n[(1, 1)] + n[(2, 2)] - n[(1, 2)] - n[(2, 1)]) / total
    if bootstrap:
        rng = rng or np.random.default_rng(0)
        keys = sorted(n)
        p = np.array([n[k] for k in keys]) / total
        draws = rng.multinomial(max(int(round(total)), 1), p, size=bootstrap)
        signs = np.array([1 if k in ((1, 1), (2, 2)) else -1 for k in keys])
        vals = (draws * signs).sum(axis=1) / draws.sum(axis=1)
        return AnalysisResult(value, float(np.std(vals)), "E/bootstrap", digest)
    sigma = math.sqrt(max(1.0 - value**2, 0.0) / total)
    return AnalysisResult(value, sigma, "E/multinomial", digest)


def chsh_S(e_values: Sequence[AnalysisResult]) -> AnalysisResult:
    """S = |E(a,b) - E(a',b) + E(a,b') + E(a',b')| in that argument order."""
    if len(e_values) != 4:
        raise AnalysisError("chsh_S needs exactly four correlation coefficients")
    signs = (1.0, -1.0, 1.0, 1.0)
    value = abs(sum(s * e.value for s, e in zip(signs, e_values)))
    sigma = math.sqrt(sum(e.sigma**2 for e in e_values))
    return AnalysisResult(value, sigma, "chsh/4-setting",
                          _digest("S", [(e.value, e.sigma) for e in e_values]))


def visibility(e_results: Sequence[AnalysisResult], method: str = "max") -> AnalysisResult:
    """V = max|E| over the measured points (``max``) or the fitted sinusoid
    amplitude (``fit``, requires the phase values)."""
    if not e_results:
        raise AnalysisError("empty sweep")
    digest = _digest("V", [(e.value, e.sigma) for e in e_results])
    if method == "max":
        best = max(e_results, key=lambda e: abs(e.value))
        return AnalysisResult(abs(best.value), best.sigma, "visibility/max|E|", digest)
    raise AnalysisError("visibility: use fit_sinusoid_and_choose_phases for the "
                        "fitted-amplitude method")


def witness_R(v: float | AnalysisResult, g2_ee: float | AnalysisResult,
              g2_ll: float | AnalysisResult, n_sigma: float = 3.0) -> AnalysisResult:
    """Visibility-based entanglement witness R = (1 - V)(1 + gbar)/2 with
    gbar the mean of the two same-bin cross correlations.

    A classical (separable) source obeys V <= (gbar - 1)/(gbar + 1) and hence
    R >= 1; entanglement is flagged when R + n_sigma * sigma < 1.
    """
    def split(x):
        return (x.value, x.sigma) if isinstance(x, AnalysisResult) else (float(x), 0.0)
    v, sv = split(v)
    gee, see = split(g2_ee)
    gll, sll = split(g2_ll)
    if not 0.0 <= v <= 1.0:
        raise AnalysisError("V must be in [0, 1]")
    if gee <= 0 or gll <= 0:
        raise AnalysisError("g2 values must be > 0")
    gbar = 0.5 * (gee + gll)
    sg = 0.5 * math.hypot(see, sll)
    value = 0.5 * (1.0 - v) * (1.0 + gbar)
    sigma = math.hypot(0.5 * (1.0 + gbar) * sv, 0.5 * (1.0 - v) * sg)
    flags = []
    if value + n_sigma * sigma < 1.0:
        flags.append(f"entangled at {n_sigma:g} sigma")
    return AnalysisResult(value, sigma, "witness-R/(1-V)(1+g)/2",
                          _digest("R", v, gee, gll), flags=tuple(flags))


# ---------------------------------------------------------------------------
# thermometry and lifetime


def nth_from_asymmetry(rate_stokes: float, rate_antistokes: float,
                       sigma_stokes: float = 0.0,
                       sigma_antistokes: float = 0.0) -> AnalysisResult:
    """Thermal occupancy from the Stokes/anti-Stokes click-rate asymmetry at
    equal pulse energy: rates scale as (n+1) and n, so n = r_AS/(r_S - r_AS)."""
    digest = _digest("nth", rate_stokes, rate_antistokes)
    if rate_antistokes < 0 or rate_stokes <= 0:
        raise AnalysisError("rates must be positive (Stokes) and non-negative")
    if rate_antistokes >= rate_stokes:
        return AnalysisResult(math.nan, 0.0, "nth/sideband-asymmetry", digest,
                              flags=("non-physical: anti-Stokes >= Stokes",))
    diff = rate_stokes - rate_antistokes
    value = rate_antistokes / diff
    # first-order propagation of independent rate errors
    d_as = rate_stokes / diff**2
    d_s = -rate_antistokes / diff**2
    sigma = math.hypot(d_as * sigma_antistokes, d_s * sigma_stokes)
    return AnalysisResult(value, sigma, "nth/sideband-asymmetry", digest)


def fit_exponential(times: Sequence[float], values: Sequence[float],
                    window_start: float = 1e-6,
                    sigmas: Sequence[float] | None = None) -> AnalysisResult:
    """Least-squares a*exp(-t/T1) on points past window_start (the early
    points carry delayed heating and are excluded by default)."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    sel = t >= window_start
    if sel.sum() < 4:
        raise AnalysisError("need at least 4 points beyond the fit window start")
    t, y = t[sel], y[sel]
    sig = None if sigmas is None else np.asarray(sigmas, dtype=float)[sel]
    digest = _digest("T1", t.tolist(), y.tolist())
    if np.ptp(y) <= 0 or y.min() < 0:
        return AnalysisResult(math.inf, math.inf, "T1/exp-fit", digest,
                              flags=("degenerate: no decay",))

    def model(tt, a, t1):
        return a * np.exp(-tt / t1)

    # log-linear seed
    pos = y > 0
    slope, intercept = np.polyfit(t[pos], np.log(y[pos]), 1)
    p0 = (math.exp(intercept), -1.0 / slope if slope < 0 else (t.max() - t.min()))
    try:
        popt, pcov = curve_fit(model, t, y, p0=p0, sigma=sig, absolute_sigma=sig is not None,
                               maxfev=10000)
    except RuntimeError:
        return AnalysisResult(math.nan, math.nan, "T1/exp-fit", digest,
                              flags=("fit did not converge",))
    t1 = float(popt[1])
    err = float(math.sqrt(max(pcov[1, 1], 0.0)))
    flags = ()
    if t1 <= 0 or not math.isfinite(err):
        flags = ("fit did not converge",)
    return AnalysisResult(t1, err, "T1/exp-fit", digest, flags=flags)


# ---------------------------------------------------------------------------
# phase calibration


@dataclass(frozen=True)
class SweepPoint:
    phi_w: float
    phi_r: float
    e_value: float
    sigma: float = 0.0


@dataclass(frozen=True)
class CalibrationResult:
    phi_0: float
    phi_0_sigma: float
    amplitude: float
    amplitude_sigma: float
    offset: float
    chsh_settings: tuple[tuple[float, float], ...]
    setting_offsets: tuple[float, ...]   # epsilon vs phi_0 -/+ pi/4 and {0, pi/2}
    expected_S: float
    fit_residual_rms: float

    def as_results(self) -> dict[str, AnalysisResult]:
        digest = _digest("calib", self.phi_0, self.amplitude)
        return {
            "phi_0": AnalysisResult(self.phi_0, self.phi_0_sigma, "calibration/sin-fit", digest),
            "amplitude": AnalysisResult(self.amplitude, self.amplitude_sigma,
                                        "visibility/fit-amplitude", digest),
        }


def fit_sinusoid_and_choose_phases(points: Sequence[SweepPoint]) -> CalibrationResult:
    """Joint sinusoidal fit E = -A sin(phi_w + phi_r - phi_0) + c over the
    sweep curves, then numerical CHSH setting selection on the fitted model.

    The fit is linear in (A sin phi_0, A cos phi_0, c), so it needs no
    iteration; phi_0 is reported as the zero crossing with negative slope.
    The chosen settings maximize the model S and their offsets from the
    ideal phi_0 -/+ pi/4 and {0, pi/2} points are returned.
    """
    if len(points) < 6:
        raise AnalysisError("need at least 6 sweep points per calibration")
    x = np.array([p.phi_w + p.phi_r for p in points])
    y = np.array([p.e_value for p in points])
    w = np.array([1.0 / p.sigma**2 if p.sigma > 0 else 1.0 for p in points])
    # E = alpha cos(x) + beta sin(x) + c  with alpha = A sin(phi_0) etc.
    design = np.column_stack([np.cos(x), np.sin(x), np.ones_like(x)])
    wd = design * w[:, None]
    coef, *_ = np.linalg.lstsq(wd.T @ design, wd.T @ y, rcond=None)
    alpha, beta, c = coef
    amplitude = math.hypot(alpha, beta)
    phi_0 = math.atan2(alpha, -beta) % (2.0 * math.pi)
    resid = y - design @ coef
    dof = max(len(points) - 3, 1)
    rms = float(np.sqrt(np.mean(resid**2)))
    # parameter covariance from the normal equations
    scale = float(resid @ (w * resid) / dof)
    cov = np.linalg.inv(wd.T @ design) * scale
    var_alpha, var_beta = cov[0, 0], cov[1, 1]
    amp_sigma = math.sqrt(max(
        (alpha**2 * var_alpha + beta**2 * var_beta) / max(amplitude**2, 1e-30), 0.0))
    phi_sigma = math.sqrt(max(
        (beta**2 * var_alpha + alpha**2 * var_beta) / max(amplitude**4, 1e-30), 0.0))
    if amplitude < 3.0 * rms:
        raise AnalysisError(
            f"degenerate fit: amplitude {amplitude:.3g} below 3x residual rms {rms:.3g}")

    def model_e(phi_w, phi_r):
        return -amplitude * math.sin(phi_w + phi_r - phi_0) + c

    def neg_s(params):
        a, ap, b, bp = params
        return -abs(model_e(a, b) - model_e(ap, b) + model_e(a, bp) + model_e(ap, bp))

    # the constant offset breaks the sign symmetry of S, so try both fringe
    # branches (settings shifted by pi give the other sign of every E)
    ideal = np.array([phi_0 + math.pi / 4, phi_0 - math.pi / 4, 0.0, math.pi / 2])
    best = None
    for start in (ideal, ideal + np.array([math.pi, math.pi, 0.0, 0.0])):
        trial = minimize(neg_s, start, method="Nelder-Mead",
                         options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        if best is None or trial.fun < best.fun:
            best = trial
    a, ap, b, bp = best.x
    settings = ((a, b), (ap, b), (a, bp), (ap, bp))
    # report offsets against the nearest ideal points (mod 2 pi)
    ref = ideal if abs(a - ideal[0]) < math.pi / 2 else ideal + np.array(
        [math.pi, math.pi, 0.0, 0.0])
    offsets = tuple(float((x - r + math.pi) % (2.0 * math.pi) - math.pi)
                    for x, r in zip((a, ap, b, bp), ref))
    return CalibrationResult(
        phi_0=phi_0, phi_0_sigma=phi_sigma,
        amplitude=amplitude, amplitude_sigma=amp_sigma, offset=float(c),
        chsh_settings=settings, setting_offsets=tuple(float(o) for o in offsets),
        expected_S=-float(best.fun), fit_residual_rms=rms)
