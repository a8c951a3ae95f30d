"""Synthetic SNR traces with known ground truth.

Field data for this kind of link is proprietary, so the test and demo data
come from here: a linear mean-decay profile (transmission loss in dB per
meter) plus AR(1) log-normal shadowing. All randomness uses numpy's PCG64
generator seeded through ``numpy.random.default_rng``; given the same seed the
output is identical on every platform (see README, "Reproducibility").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ModelValidationError
from .trace import SnrTrace, TrackGeometry, slot_positions


@dataclass(frozen=True)
class GroundTruthProfile:
    """Linear dB mean profile with AR(1) shadowing around it."""

    mean_db_at_origin: float
    slope_db_per_m: float
    sigma_db: float
    seed: int

    def __post_init__(self):
        if not all(map(math.isfinite, (self.mean_db_at_origin, self.slope_db_per_m, self.sigma_db))):
            raise ValueError("profile fields must be finite")
        if self.sigma_db < 0:
            raise ValueError(f"sigma_db must be >= 0, got {self.sigma_db}")

    def mean_at(self, position_m) -> np.ndarray:
        return self.mean_db_at_origin + self.slope_db_per_m * np.asarray(position_m, dtype=np.float64)


def generate_trace(profile: GroundTruthProfile, geometry: TrackGeometry,
                   speed_m_per_s: float, slot_duration_s: float,
                   correlation: float = 0.0, run_id: str = "synth") -> SnrTrace:
    """Simulate one forward run over the section.

    Samples sit speed*slot_duration_s apart starting at 0, strictly inside the
    section. snr_db = mean profile + shadowing, where the shadowing is a
    zero-mean Gaussian AR(1) sequence with per-slot correlation ``correlation``
    and stationary standard deviation sigma_db. Deterministic given the
    profile seed.
    """
    if not (speed_m_per_s > 0):
        raise ValueError(f"speed must be positive, got {speed_m_per_s}")
    if not (slot_duration_s > 0):
        raise ValueError(f"slot duration must be positive, got {slot_duration_s}")
    if not (0.0 <= correlation < 1.0):
        raise ValueError(f"correlation must be in [0, 1), got {correlation}")

    positions = slot_positions(geometry.section_length_m, speed_m_per_s * slot_duration_s)
    n = positions.size
    snr = profile.mean_at(positions)
    if profile.sigma_db > 0:
        rng = np.random.default_rng(profile.seed)
        z = rng.standard_normal(n)
        e = z * (profile.sigma_db * math.sqrt(1.0 - correlation**2))
        e[0] = z[0] * profile.sigma_db  # first sample at stationary scale
        snr = snr + _kernels.ar1_path(e, float(correlation))
    return SnrTrace(positions, np.arange(n, dtype=np.int64), snr,
                    slot_duration_s=slot_duration_s, run_id=run_id)


def _checked_cumulative(matrix: np.ndarray) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ModelValidationError(f"transition matrix must be square, got shape {m.shape}")
    if np.any(m < 0) or np.any(m > 1):
        raise ModelValidationError("transition probabilities must lie in [0, 1]")
    if np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-12:
        raise ModelValidationError("transition matrix rows must sum to 1")
    return np.cumsum(m, axis=1)


def generate_markov_trace(model, n_slots: int, seed: int) -> np.ndarray:
    """Forward-simulate a chain for ``n_slots`` slots; returns 1-based state labels.

    ``model`` needs ``matrix.p`` (row-stochastic) and ``state_probs``; an
    IntervalModel qualifies. The initial state is drawn from state_probs, each
    later slot from the current state's matrix row. Deterministic given seed.
    """
    if n_slots < 1:
        raise ValueError(f"n_slots must be >= 1, got {n_slots}")
    cum_rows = _checked_cumulative(model.matrix.p)
    probs = np.asarray(model.state_probs, dtype=np.float64)
    if abs(probs.sum() - 1.0) > 1e-12 or np.any(probs < 0):
        raise ModelValidationError("state_probs must be a probability vector")
    rng = np.random.default_rng(seed)
    u = rng.random(n_slots)
    state0 = _kernels.pick_state(np.cumsum(probs), u[0])
    return _kernels.markov_path(cum_rows, state0, u) + 1
