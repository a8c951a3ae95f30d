"""Model-versus-measurement agreement metrics.

The headline metric is the mean square error between position-binned mean-SNR
curves: both the held-out trace and a batch of simulated traces are binned
into fixed one-wavelength position bins, and the MSE averages the squared
difference of the two bin-mean curves over bins populated on both sides. The
bin width is configurable; one carrier wavelength is the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import InsufficientDataError
from .fsmc import FsmcModel, IntervalModel, TransitionMatrix, estimate_matrix, states_from_trace
from .simulate import simulate_run
from .trace import SnrTrace


@dataclass(frozen=True)
class MatrixComparison:
    span: tuple[float, float]
    model_matrix: TransitionMatrix
    empirical_matrix: TransitionMatrix
    max_abs_difference: float


@dataclass(frozen=True)
class ValidationReport:
    interval_lengths_m: tuple[float, ...]
    mse_per_interval_length: tuple[float, ...]
    matrix_comparisons: tuple[MatrixComparison, ...]
    n_states: int

    def __post_init__(self):
        if len(self.interval_lengths_m) != len(self.mse_per_interval_length):
            raise ValueError("interval lengths and MSE values must align")
        if any(m < 0 for m in self.mse_per_interval_length):
            raise ValueError("MSE values cannot be negative")


def child_seed(seed: int, index: int) -> int:
    """Documented seed-splitting rule: child i = SeedSequence(seed, spawn_key=(i,))."""
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _bin_stats(positions: np.ndarray, values: np.ndarray, width: float, n_bins: int):
    idx = np.minimum(np.floor(positions / width).astype(np.int64), n_bins - 1)
    sums = np.bincount(idx, weights=values, minlength=n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    return sums, counts


def overlay_curves(model: FsmcModel, heldout: SnrTrace, speed_m_per_s: float,
                   n_runs: int, seed: int, dither: str = "uniform",
                   bin_width_m: float | None = None):
    """Binned mean-SNR curves of measurement vs simulation.

    Simulates ``n_runs`` traces (run i seeded with child_seed(seed, i)), pools
    their samples, and returns (bin centers, measured means, simulated means)
    over the bins populated on both sides.
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    width = bin_width_m if bin_width_m is not None else model.geometry.wavelength_m
    if not width > 0:
        raise ValueError("bin width must be positive")
    n_bins = int(math.ceil(model.geometry.section_length_m / width))

    meas_sum, meas_cnt = _bin_stats(heldout.positions_m, heldout.snr_db, width, n_bins)
    sim_sum = np.zeros(n_bins)
    sim_cnt = np.zeros(n_bins, dtype=np.int64)
    for i in range(n_runs):
        run = simulate_run(model, speed_m_per_s, child_seed(seed, i), dither=dither)
        s, c = _bin_stats(run.positions_m, run.snr_db, width, n_bins)
        sim_sum += s
        sim_cnt += c

    both = (meas_cnt > 0) & (sim_cnt > 0)
    if not np.any(both):
        raise InsufficientDataError("no position bin holds both measured and simulated samples")
    centers = (np.nonzero(both)[0] + 0.5) * width
    return centers, meas_sum[both] / meas_cnt[both], sim_sum[both] / sim_cnt[both]


def mse_against_trace(model: FsmcModel, heldout: SnrTrace, speed_m_per_s: float,
                      n_runs: int, seed: int, dither: str = "uniform",
                      bin_width_m: float | None = None) -> float:
    """MSE between the binned mean-SNR curves of the held-out trace and n_runs simulations."""
    _, meas, sim = overlay_curves(model, heldout, speed_m_per_s, n_runs, seed,
                                  dither=dither, bin_width_m=bin_width_m)
    return float(np.mean((sim - meas) ** 2))


def compare_matrices(model: IntervalModel, heldout_samples) -> tuple[TransitionMatrix, float]:
    """Empirical matrix of held-out samples under the model's thresholds, and the
    largest absolute entry difference over the tridiagonal band."""
    snr = np.asarray(getattr(heldout_samples, "snr_db", heldout_samples), dtype=np.float64)
    if snr.size < 2:
        raise InsufficientDataError(f"need at least 2 held-out samples, got {snr.size}")
    states = states_from_trace(snr, model.thresholds)
    empirical, _ = estimate_matrix(states, model.matrix.n_states)
    n = model.matrix.n_states
    i, j = np.indices((n, n))
    band = np.abs(i - j) <= 1
    diff = float(np.max(np.abs(model.matrix.p - empirical.p)[band]))
    return empirical, diff


def write_mse_csv(rows: Sequence[tuple[float, float]], fp: IO[str]) -> None:
    fp.write("interval_m,mse\n")
    for interval_m, mse in rows:
        fp.write(f"{float(interval_m)!r},{float(mse)!r}\n")


def write_matrix_comparison_csv(comparisons: Sequence[MatrixComparison], fp: IO[str]) -> None:
    """Per-location matrix table; row k lists p(k -> k-1), p(k -> k), p(k -> k+1)."""
    fp.write("interval_start_m,interval_end_m,k,"
             "model_p_prev,model_p_stay,model_p_next,"
             "empirical_p_prev,empirical_p_stay,empirical_p_next\n")
    for cmp in comparisons:
        n = cmp.model_matrix.n_states
        for k in range(1, n + 1):
            cells = []
            for mat in (cmp.model_matrix.p, cmp.empirical_matrix.p):
                for col in (k - 2, k - 1, k):
                    cells.append(repr(float(mat[k - 1, col])) if 0 <= col < n else "")
            fp.write(f"{cmp.span[0]!r},{cmp.span[1]!r},{k}," + ",".join(cells) + "\n")


def write_overlay_csv(centers, measured, simulated, fp: IO[str]) -> None:
    fp.write("position_m,measured_mean_db,simulated_mean_db\n")
    for c, m, s in zip(centers, measured, simulated):
        fp.write(f"{float(c)!r},{float(m)!r},{float(s)!r}\n")
