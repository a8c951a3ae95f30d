"""Lloyd-Max scalar quantization of the SNR range into N = 2^r levels.

The quantizer alternates the two stationarity conditions of the squared-error
distortion D = sum_n integral over [G_{n-1}, G_n) of (R_n - g)^2 p(g) dg:

  midpoint:  G_n = (R_n + R_{n+1}) / 2          for interior boundaries
  centroid:  R_n = E[g | G_{n-1} <= g < G_n]    per cell

with G_0 and G_N pinned to the observed min/max SNR. It runs in the dB domain
against the Gaussian form of the log-normal SNR law (the linear-domain
distortion integral maps to this by the 10*log10 change of variables), so the
cell moments have stable closed forms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import ndtr, ndtri

from .distfit import SnrDistribution
from .errors import ConvergenceError, DegenerateCellError

_MAX_ITER = 1000
_GTOL = 1e-8
_MASS_FLOOR = 1e-12


@dataclass(frozen=True)
class ThresholdSet:
    """Cell boundaries and representative values of one interval's quantizer.

    thresholds[0] < ... < thresholds[N]; representatives[n] lies strictly
    inside cell n and interior boundaries are representative midpoints (to
    1e-9). ``distortion`` is the converged squared-dB distortion; it is a
    fit-time diagnostic (NaN on models parsed from disk, which do not carry
    the fitted density).
    """

    thresholds: np.ndarray
    representatives: np.ndarray
    n_states: int
    distortion: float = float("nan")

    def __post_init__(self):
        g = np.asarray(self.thresholds, dtype=np.float64)
        r = np.asarray(self.representatives, dtype=np.float64)
        n = self.n_states
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"n_states must be a power of two >= 2, got {n}")
        if g.shape != (n + 1,) or r.shape != (n,):
            raise ValueError(f"need {n + 1} thresholds and {n} representatives")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(r))):
            raise ValueError("thresholds and representatives must be finite")
        if np.any(np.diff(g) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if np.any(r <= g[:-1]) or np.any(r >= g[1:]):
            raise ValueError("each representative must lie strictly inside its cell")
        mid = (r[:-1] + r[1:]) / 2.0
        if np.max(np.abs(g[1:-1] - mid)) > 1e-9:
            raise ValueError("interior thresholds must be representative midpoints (1e-9)")
        g.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "thresholds", g)
        object.__setattr__(self, "representatives", r)


class GaussianDbDensity:
    """Gaussian density over dB SNR, the quantizer's view of the fitted law."""

    def __init__(self, mu_db: float, sigma_db: float):
        if not sigma_db > 0:
            raise ValueError(f"sigma_db must be positive, got {sigma_db}")
        self.mu = float(mu_db)
        self.sigma = float(sigma_db)

    def pdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=np.float64) - self.mu) / self.sigma)

    def quantile(self, p):
        return self.mu + self.sigma * ndtri(p)

    def mass(self, a, b):
        return self.cdf(b) - self.cdf(a)

    def first_moment(self, a, b):
        """integral of x * pdf(x) over [a, b]."""
        alpha = (np.asarray(a, dtype=np.float64) - self.mu) / self.sigma
        beta = (np.asarray(b, dtype=np.float64) - self.mu) / self.sigma
        phi_a, phi_b = _stdnorm_pdf(alpha), _stdnorm_pdf(beta)
        return self.mu * (ndtr(beta) - ndtr(alpha)) + self.sigma * (phi_a - phi_b)

    def second_moment(self, a, b):
        """integral of x^2 * pdf(x) over [a, b]."""
        alpha = (np.asarray(a, dtype=np.float64) - self.mu) / self.sigma
        beta = (np.asarray(b, dtype=np.float64) - self.mu) / self.sigma
        phi_a, phi_b = _stdnorm_pdf(alpha), _stdnorm_pdf(beta)
        m0 = ndtr(beta) - ndtr(alpha)
        t1 = phi_a - phi_b                      # integral of t*phi(t)
        t2 = m0 + alpha * phi_a - beta * phi_b  # integral of t^2*phi(t)
        return self.mu**2 * m0 + 2.0 * self.mu * self.sigma * t1 + self.sigma**2 * t2


class UniformDensity:
    """Uniform density on [lo, hi]; the analytic test hook for the quantizer."""

    def __init__(self, lo: float, hi: float):
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.lo = float(lo)
        self.hi = float(hi)
        self._h = 1.0 / (hi - lo)

    def _clip(self, x):
        return np.clip(np.asarray(x, dtype=np.float64), self.lo, self.hi)

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where((x >= self.lo) & (x <= self.hi), self._h, 0.0)

    def cdf(self, x):
        return (self._clip(x) - self.lo) * self._h

    def quantile(self, p):
        return self.lo + np.asarray(p, dtype=np.float64) * (self.hi - self.lo)

    def mass(self, a, b):
        return self.cdf(b) - self.cdf(a)

    def first_moment(self, a, b):
        a, b = self._clip(a), self._clip(b)
        return (b * b - a * a) * self._h / 2.0

    def second_moment(self, a, b):
        a, b = self._clip(a), self._clip(b)
        return (b**3 - a**3) * self._h / 3.0


def _stdnorm_pdf(z):
    return np.exp(-0.5 * np.asarray(z, dtype=np.float64) ** 2) / math.sqrt(2.0 * math.pi)


def _as_density(dist):
    if isinstance(dist, SnrDistribution):
        return GaussianDbDensity(dist.mu_db, dist.sigma_db)
    return dist  # duck-typed density (pdf/cdf/quantile/mass/first_moment/second_moment)


def _cell_distortion_closed(density, g: np.ndarray, r: np.ndarray) -> float:
    a, b = g[:-1], g[1:]
    m0 = np.asarray(density.mass(a, b), dtype=np.float64)
    m1 = np.asarray(density.first_moment(a, b), dtype=np.float64)
    m2 = np.asarray(density.second_moment(a, b), dtype=np.float64)
    return float(np.sum(m2 - 2.0 * r * m1 + r * r * m0))


def lloyd_max(dist, n_states: int, gamma_min_db: float, gamma_max_db: float,
              history: list | None = None) -> ThresholdSet:
    """Optimal N-level thresholds/representatives over [gamma_min_db, gamma_max_db].

    ``dist`` is an SnrDistribution (quantized in its Gaussian dB form) or any
    object with the density protocol used above. Representatives start at the
    (2n-1)/2N quantiles of the range-truncated density, then the centroid and
    midpoint conditions alternate until the largest boundary change drops
    below 1e-8 dB (cap 1000 iterations). Boundary thresholds stay pinned. The
    tracked distortion is non-increasing across iterations; pass a list as
    ``history`` to collect its per-iteration values.

    Raises DegenerateCellError when a cell's probability mass falls below
    1e-12 and ConvergenceError when the iteration cap is hit.
    """
    density = _as_density(dist)
    n = int(n_states)
    if n < 2 or (n & (n - 1)) != 0:
        raise ValueError(f"n_states must be a power of two >= 2, got {n_states}")
    lo, hi = float(gamma_min_db), float(gamma_max_db)
    if not lo < hi:
        raise ValueError(f"need gamma_min_db < gamma_max_db, got [{lo}, {hi}]")

    c_lo, c_hi = float(density.cdf(lo)), float(density.cdf(hi))
    if c_hi - c_lo < _MASS_FLOOR:
        raise DegenerateCellError(
            f"density carries no mass on [{lo}, {hi}] (mass {c_hi - c_lo:.3e})")
    q = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
    reps = np.asarray(density.quantile(c_lo + q * (c_hi - c_lo)), dtype=np.float64)

    g = np.empty(n + 1, dtype=np.float64)
    g[0], g[n] = lo, hi
    g[1:n] = (reps[:-1] + reps[1:]) / 2.0

    last_d = math.inf
    for _ in range(_MAX_ITER):
        a, b = g[:-1], g[1:]
        mass = np.asarray(density.mass(a, b), dtype=np.float64)
        bad = np.nonzero(mass < _MASS_FLOOR)[0]
        if bad.size:
            cell = int(bad[0])
            raise DegenerateCellError(
                f"cell {cell + 1} [{a[cell]:.6g}, {b[cell]:.6g}) holds mass "
                f"{mass[cell]:.3e} < {_MASS_FLOOR:g}")
        reps = np.asarray(density.first_moment(a, b), dtype=np.float64) / mass

        g_new = g.copy()
        g_new[1:n] = (reps[:-1] + reps[1:]) / 2.0
        d = _cell_distortion_closed(density, g_new, reps)
        if d > last_d + 1e-10 * max(1.0, abs(last_d)):
            raise ConvergenceError(f"distortion increased ({last_d!r} -> {d!r})")
        last_d = d
        if history is not None:
            history.append(d)
        delta = float(np.max(np.abs(g_new - g)))
        g = g_new
        if delta < _GTOL:
            return ThresholdSet(g, reps, n, distortion=d)
    raise ConvergenceError(f"lloyd-max did not converge in {_MAX_ITER} iterations")


def distortion(dist, thresholds) -> float:
    """Squared-error distortion of a quantizer configuration, by adaptive quadrature.

    Independent of the closed-form moments used inside lloyd_max; evaluates
    sum_n integral (R_n - g)^2 p(g) dg with absolute tolerance 1e-10 per cell.
    ``thresholds`` is a ThresholdSet or a (boundaries, representatives) pair of
    arrays, so non-stationary configurations (perturbation probes) can be
    scored too.
    """
    density = _as_density(dist)
    if isinstance(thresholds, ThresholdSet):
        g, r = thresholds.thresholds, thresholds.representatives
    else:
        g, r = (np.asarray(a, dtype=np.float64) for a in thresholds)
        if g.size != r.size + 1 or np.any(np.diff(g) <= 0):
            raise ValueError("need increasing boundaries with one fewer representative")
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        for i in range(r.size):
            try:
                val, _ = quad(lambda x, ri=r[i]: (ri - x) ** 2 * float(density.pdf(x)),
                              g[i], g[i + 1], epsabs=1e-10, limit=200)
            except IntegrationWarning as exc:
                raise ConvergenceError(f"quadrature failed on cell {i + 1}: {exc}") from exc
            total += val
    return total
