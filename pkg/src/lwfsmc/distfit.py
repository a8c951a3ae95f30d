"""Candidate fading-distribution fitting and small-sample AIC model selection.

Five classic amplitude families are fitted per spatial window by maximum
likelihood and ranked by AICc; the family that wins the most windows is
selected. Traces carry SNR in dB; fitting happens on linear amplitudes via
amplitude = 10**(dB/20) with reference level 0 dB -> amplitude 1.

Closed-form MLEs are used where they exist (Rayleigh, log-normal). The rest
iterate to a 1e-9 parameter tolerance with a 200-iteration cap: Weibull by
Newton on the profile likelihood of the shape, Nakagami by an inverse-digamma
estimate of the shape refined with Newton steps, Rice by an EM-style fixed
point on the noncentrality with a Rayleigh fallback when it underflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Sequence

import numpy as np
from scipy.special import gammaln, i0e, i1e, polygamma, psi

from .errors import ConvergenceError, DegenerateFitError, InsufficientDataError

XI = 10.0 / math.log(10.0)  # scale between ln and 10*log10

_MAX_ITER = 200
_PTOL = 1e-9


class CandidateFamily(Enum):
    RICE = "rice"
    RAYLEIGH = "rayleigh"
    NAKAGAMI = "nakagami"
    WEIBULL = "weibull"
    LOG_NORMAL = "log_normal"

    @property
    def k_params(self) -> int:
        return 1 if self is CandidateFamily.RAYLEIGH else 2

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self]


_PARAM_NAMES = {
    CandidateFamily.RICE: ("nu", "sigma"),
    CandidateFamily.RAYLEIGH: ("sigma",),
    CandidateFamily.NAKAGAMI: ("m", "omega"),
    CandidateFamily.WEIBULL: ("shape", "scale"),
    CandidateFamily.LOG_NORMAL: ("mu_ln", "sigma_ln"),
}


@dataclass(frozen=True)
class MleFit:
    family: CandidateFamily
    params: dict[str, float]
    log_likelihood: float

    @property
    def theta(self) -> tuple[float, ...]:
        return tuple(self.params[name] for name in self.family.param_names)


@dataclass(frozen=True)
class FittedWindow:
    """AICc scores of all successfully fitted families for one spatial window."""

    window_index: int
    n_samples: int
    fits: dict[CandidateFamily, tuple[MleFit, float]]  # family -> (fit, aicc)
    failures: dict[CandidateFamily, str] = field(default_factory=dict)

    @property
    def winner(self) -> CandidateFamily | None:
        best = None
        for family in CandidateFamily:
            if family in self.fits:
                score = self.fits[family][1]
                if best is None or score < best[1]:
                    best = (family, score)
        return best[0] if best else None


@dataclass(frozen=True)
class SnrDistribution:
    """SNR law as a Gaussian over 10*log10(snr), i.e. log-normal linear SNR."""

    mu_db: float
    sigma_db: float
    family: CandidateFamily = CandidateFamily.LOG_NORMAL

    def __post_init__(self):
        if not (self.sigma_db > 0 and math.isfinite(self.sigma_db)):
            raise ValueError(f"sigma_db must be positive, got {self.sigma_db}")
        if not math.isfinite(self.mu_db):
            raise ValueError(f"mu_db must be finite, got {self.mu_db}")


def amplitude_from_db(snr_db) -> np.ndarray:
    return np.power(10.0, np.asarray(snr_db, dtype=np.float64) / 20.0)


def _validated(samples, k_params: int) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        x = x.ravel()
    # k+1 samples suffice for a proper MLE; AICc scoring separately needs n > k+1
    if x.size < k_params + 1:
        raise InsufficientDataError(
            f"need at least {k_params + 1} samples for a {k_params}-parameter fit, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("samples must be finite and strictly positive")
    return x


def _fit_rayleigh(x: np.ndarray) -> MleFit:
    sigma2 = float(np.mean(x * x) / 2.0)
    fit = MleFit(CandidateFamily.RAYLEIGH, {"sigma": math.sqrt(sigma2)}, 0.0)
    ll = log_likelihood(CandidateFamily.RAYLEIGH, fit.params, x)
    return MleFit(fit.family, fit.params, ll)


def _fit_log_normal(x: np.ndarray) -> MleFit:
    lx = np.log(x)
    mu = float(np.mean(lx))
    s2 = float(np.mean((lx - mu) ** 2))
    if s2 < 1e-30:
        raise DegenerateFitError("log-normal fit degenerate: zero variance in log samples")
    params = {"mu_ln": mu, "sigma_ln": math.sqrt(s2)}
    return MleFit(CandidateFamily.LOG_NORMAL, params, log_likelihood(CandidateFamily.LOG_NORMAL, params, x))


def _fit_weibull(x: np.ndarray) -> MleFit:
    lx = np.log(x)
    mean_lx = float(np.mean(lx))
    std_lx = float(np.std(lx))
    if std_lx < 1e-15:
        raise DegenerateFitError("weibull fit degenerate: identical samples")
    k = math.pi / (math.sqrt(6.0) * std_lx)  # moment init on log samples
    for _ in range(_MAX_ITER):
        w = np.exp(k * (lx - lx.max()))
        s0 = float(np.sum(w))
        s1 = float(np.sum(w * lx))
        s2 = float(np.sum(w * lx * lx))
        r1 = s1 / s0
        f = r1 - 1.0 / k - mean_lx
        fp = (s2 / s0 - r1 * r1) + 1.0 / (k * k)
        step = f / fp
        k_new = k - step
        while k_new <= 0:
            step /= 2.0
            k_new = k - step
        if abs(k_new - k) < _PTOL:
            k = k_new
            break
        k = k_new
    else:
        raise ConvergenceError(f"weibull shape estimate did not converge in {_MAX_ITER} iterations")
    # scale from the profile: lambda^k = mean(x^k), evaluated in log space
    log_scale = (math.log(np.mean(np.exp(k * (lx - lx.max())))) + k * lx.max()) / k
    params = {"shape": k, "scale": math.exp(log_scale)}
    return MleFit(CandidateFamily.WEIBULL, params, log_likelihood(CandidateFamily.WEIBULL, params, x))


def _fit_nakagami(x: np.ndarray) -> MleFit:
    x2 = x * x
    omega = float(np.mean(x2))
    delta = math.log(omega) - float(np.mean(np.log(x2)))
    if delta < 1e-15:
        raise DegenerateFitError("nakagami fit degenerate: zero spread in squared samples")
    # inverse-digamma closed-form start, then Newton on ln m - psi(m) = delta
    m = (3.0 - delta + math.sqrt((delta - 3.0) ** 2 + 24.0 * delta)) / (12.0 * delta)
    for _ in range(_MAX_ITER):
        g = math.log(m) - float(psi(m)) - delta
        gp = 1.0 / m - float(polygamma(1, m))
        step = g / gp
        m_new = m - step
        while m_new <= 0:
            step /= 2.0
            m_new = m - step
        if abs(m_new - m) < _PTOL:
            m = m_new
            break
        m = m_new
    else:
        raise ConvergenceError(f"nakagami shape estimate did not converge in {_MAX_ITER} iterations")
    params = {"m": m, "omega": omega}
    return MleFit(CandidateFamily.NAKAGAMI, params, log_likelihood(CandidateFamily.NAKAGAMI, params, x))


def _fit_rice(x: np.ndarray) -> MleFit:
    if float(np.ptp(x)) < 1e-15:
        raise DegenerateFitError("rice fit degenerate: identical samples")
    m2 = float(np.mean(x * x))
    m4 = float(np.mean(x**4))

    def fixed_point(nu: float) -> float:
        sigma2 = max((m2 - nu * nu) / 2.0, 1e-300)
        z = x * (nu / sigma2)
        return float(np.mean(x * (i1e(z) / i0e(z))))

    def rayleigh_fallback() -> MleFit:
        params = {"nu": 0.0, "sigma": math.sqrt(m2 / 2.0)}
        return MleFit(CandidateFamily.RICE, params,
                      log_likelihood(CandidateFamily.RICE, params, x))

    def finish(nu: float) -> MleFit:
        # a noncentrality carrying under 1e-6 of the power is an underflow:
        # the fixed-point map is flat there and the boundary solution is the fit
        if nu * nu < 1e-6 * m2:
            return rayleigh_fallback()
        params = {"nu": nu, "sigma": math.sqrt(max((m2 - nu * nu) / 2.0, 1e-300))}
        return MleFit(CandidateFamily.RICE, params,
                      log_likelihood(CandidateFamily.RICE, params, x))

    nu = (max(2.0 * m2 * m2 - m4, 0.0)) ** 0.25
    if nu == 0.0:
        nu = 0.1 * math.sqrt(m2)
    # plain fixed-point steps crawl near the nu=0 boundary, so each cycle takes
    # an Aitken-accelerated jump along the same map
    it = 0
    while it < _MAX_ITER:
        n1 = fixed_point(nu)
        it += 1
        if n1 * n1 < 1e-12 * m2:
            return rayleigh_fallback()
        if abs(n1 - nu) < _PTOL:
            return finish(n1)
        n2 = fixed_point(n1)
        it += 1
        if n2 * n2 < 1e-12 * m2:
            return rayleigh_fallback()
        if abs(n2 - n1) < _PTOL:
            return finish(n2)
        denom = n2 - 2.0 * n1 + nu
        acc = n2 - (n2 - n1) ** 2 / denom if denom != 0.0 else n2
        nu = acc if 0.0 < acc < math.sqrt(m2) else n2
    # iteration cap: accept the boundary solution if it is at least as good
    stalled = finish(nu)
    fb = rayleigh_fallback()
    if fb.log_likelihood >= stalled.log_likelihood - 1e-9:
        return fb
    raise ConvergenceError(f"rice fixed point did not converge in {_MAX_ITER} iterations")


_FITTERS = {
    CandidateFamily.RICE: _fit_rice,
    CandidateFamily.RAYLEIGH: _fit_rayleigh,
    CandidateFamily.NAKAGAMI: _fit_nakagami,
    CandidateFamily.WEIBULL: _fit_weibull,
    CandidateFamily.LOG_NORMAL: _fit_log_normal,
}


def fit_mle(family: CandidateFamily, samples) -> MleFit:
    """Maximum-likelihood fit of one family to positive linear amplitudes."""
    x = _validated(samples, family.k_params)
    return _FITTERS[family](x)


def log_likelihood(family: CandidateFamily, params: dict[str, float], samples) -> float:
    """Summed log density of ``samples`` under one family at given parameters."""
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if family is CandidateFamily.RAYLEIGH:
        s2 = params["sigma"] ** 2
        return float(np.sum(np.log(x)) - n * math.log(s2) - np.sum(x * x) / (2.0 * s2))
    if family is CandidateFamily.LOG_NORMAL:
        mu, s = params["mu_ln"], params["sigma_ln"]
        lx = np.log(x)
        return float(-np.sum(lx) - n * math.log(s) - n * 0.5 * math.log(2.0 * math.pi)
                     - np.sum((lx - mu) ** 2) / (2.0 * s * s))
    if family is CandidateFamily.WEIBULL:
        k, lam = params["shape"], params["scale"]
        lx = np.log(x)
        return float(n * math.log(k) - n * k * math.log(lam) + (k - 1.0) * np.sum(lx)
                     - np.sum(np.exp(k * (lx - math.log(lam)))))
    if family is CandidateFamily.NAKAGAMI:
        m, omega = params["m"], params["omega"]
        return float(n * (math.log(2.0) + m * math.log(m) - m * math.log(omega) - gammaln(m))
                     + (2.0 * m - 1.0) * np.sum(np.log(x)) - (m / omega) * np.sum(x * x))
    if family is CandidateFamily.RICE:
        nu, sigma = params["nu"], params["sigma"]
        s2 = sigma * sigma
        z = x * (nu / s2)
        log_bessel = z + np.log(i0e(z))
        return float(np.sum(np.log(x)) - n * math.log(s2)
                     - (np.sum(x * x) + n * nu * nu) / (2.0 * s2) + np.sum(log_bessel))
    raise ValueError(f"unknown family {family}")


def aicc(log_likelihood: float, k: int, n: int) -> float:
    """AIC with the small-sample correction term 2k(k+1)/(n-k-1)."""
    if n <= k + 1:
        raise ValueError(f"AICc undefined for n={n}, k={k} (need n > k + 1)")
    return -2.0 * log_likelihood + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0)


def fit_window(window_index: int, amplitudes) -> FittedWindow:
    """Fit every candidate family to one window's amplitudes and score by AICc."""
    x = np.asarray(amplitudes, dtype=np.float64)
    fits: dict[CandidateFamily, tuple[MleFit, float]] = {}
    failures: dict[CandidateFamily, str] = {}
    for family in CandidateFamily:
        try:
            fit = fit_mle(family, x)
            fits[family] = (fit, aicc(fit.log_likelihood, family.k_params, x.size))
        except Exception as exc:  # record per-family failure, keep scoring the rest
            failures[family] = f"{type(exc).__name__}: {exc}"
    return FittedWindow(window_index, int(x.size), fits, failures)


MIN_WINDOW_SAMPLES = 4  # largest k_params + 2


def fit_windows(segments) -> tuple[list[FittedWindow], list[tuple[int, int]]]:
    """Fit all candidate families per spatial window.

    ``segments`` come from trace.window_by_wavelengths; their snr_db samples
    are converted to linear amplitudes before fitting. Windows with fewer than
    MIN_WINDOW_SAMPLES samples are skipped and returned as (index, n) pairs.
    """
    fitted, skipped = [], []
    for seg in segments:
        if len(seg) < MIN_WINDOW_SAMPLES:
            skipped.append((seg.index, len(seg)))
            continue
        fitted.append(fit_window(seg.index, amplitude_from_db(seg.snr_db)))
    return fitted, skipped


def select_family(windows: Sequence[FittedWindow]) -> tuple[CandidateFamily, dict[CandidateFamily, int]]:
    """Family winning the most windows, plus the per-family win counts.

    Ties break in CandidateFamily declaration order; the result does not
    depend on window order.
    """
    counts = {family: 0 for family in CandidateFamily}
    scored = 0
    for w in windows:
        winner = w.winner
        if winner is not None:
            counts[winner] += 1
            scored += 1
    if scored == 0:
        raise InsufficientDataError("no window has a successful fit")
    table = {f: c for f, c in counts.items() if c > 0}
    best = max(counts, key=lambda f: counts[f])
    return best, table


def snr_pdf(dist: SnrDistribution, gamma_linear):
    """Density of linear SNR under the log-normal SNR law.

    p(g) = xi / (sqrt(2 pi) sigma g) * exp(-(10 log10 g - mu)^2 / (2 sigma^2)),
    xi = 10/ln 10. This is the Gaussian density over d = 10 log10 g carried to
    the linear domain by |dd/dg| = xi/g; without the exponential the bracket
    form would not integrate to one.
    """
    g = np.asarray(gamma_linear, dtype=np.float64)
    if np.any(g <= 0):
        raise ValueError("snr_pdf requires strictly positive linear SNR")
    d = 10.0 * np.log10(g)
    out = (XI / (math.sqrt(2.0 * math.pi) * dist.sigma_db * g)
           * np.exp(-((d - dist.mu_db) ** 2) / (2.0 * dist.sigma_db**2)))
    return float(out) if np.isscalar(gamma_linear) else out


def dist_from_db_samples(snr_db) -> SnrDistribution:
    """Gaussian MLE over dB samples; the dB form of the log-normal amplitude fit."""
    d = np.asarray(snr_db, dtype=np.float64)
    if d.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {d.size}")
    mu = float(np.mean(d))
    sigma = float(np.sqrt(np.mean((d - mu) ** 2)))
    if sigma < 1e-12:
        raise DegenerateFitError("degenerate distribution: zero variance in dB samples")
    return SnrDistribution(mu_db=mu, sigma_db=sigma)


def write_fit_report(windows: Sequence[FittedWindow], skipped: Sequence[tuple[int, int]],
                     fp: IO[str]) -> None:
    """CSV report, one row per (window, family): window_index,family,n_samples,loglik,aicc,winner."""
    fp.write("window_index,family,n_samples,loglik,aicc,winner\n")
    rows = [(w.window_index, w) for w in windows] + [(i, None) for i, _ in skipped]
    n_by_index = {i: n for i, n in skipped}
    for index, w in sorted(rows, key=lambda t: t[0]):
        for family in CandidateFamily:
            if w is not None and family in w.fits:
                fit, score = w.fits[family]
                ll, sc = repr(fit.log_likelihood), repr(score)
            else:
                ll, sc = "nan", "nan"
            n = w.n_samples if w is not None else n_by_index[index]
            winner = w.winner.value if w is not None and w.winner is not None else ""
            fp.write(f"{index},{family.value},{n},{ll},{sc},{winner}\n")
