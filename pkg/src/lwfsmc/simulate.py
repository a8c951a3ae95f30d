"""Trace simulation from a fitted model, and chain utilities.

A simulated receiver advances speed*slot_duration per slot. Inside an
interval the channel state evolves by that interval's transition matrix; when
the receiver crosses into the next interval the state is re-derived from the
cell of the last emitted SNR under the new interval's thresholds (adjacent
intervals have different thresholds, so carrying the state index over would
be meaningless while SNR continuity is physical). No transition draw is
consumed on a crossing slot.

Emission is the state's representative value plus a uniform dither across the
cell (``dither="uniform"``, the default) or the bare representative
(``dither="off"``). Bare representatives produce an N-valued staircase, which
inflates curve-level comparison error, so the dithered form is what the
validation pipeline uses.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import _kernels
from .errors import ConvergenceError, ModelValidationError
from .fsmc import FsmcModel
from .trace import SnrTrace, slot_positions

DITHER_MODES = ("uniform", "off")


def simulate_run(model: FsmcModel, speed_m_per_s: float, seed: int,
                 dither: str = "uniform") -> SnrTrace:
    """Simulate one crossing of the section; deterministic given ``seed``.

    The initial state is drawn from the first interval's state probabilities.
    Randomness comes from numpy's PCG64 seeded with ``seed``; the transition
    uniforms are drawn first, then the dither uniforms, each one per slot.
    """
    if not speed_m_per_s > 0:
        raise ValueError(f"speed must be positive, got {speed_m_per_s}")
    if dither not in DITHER_MODES:
        raise ValueError(f"dither must be one of {DITHER_MODES}, got {dither!r}")

    positions = slot_positions(model.geometry.section_length_m,
                               speed_m_per_s * model.slot_duration_s)
    n = positions.size
    if n < 2:
        raise ValueError("speed and slot duration leave fewer than 2 slots in the section")

    n_iv = len(model.intervals)
    interval_idx = np.minimum(
        np.floor(positions / model.interval_m).astype(np.int64), n_iv - 1)
    thresholds = np.stack([iv.thresholds.thresholds for iv in model.intervals])
    reps = np.stack([iv.thresholds.representatives for iv in model.intervals])
    cum_rows = np.cumsum(np.stack([iv.matrix.p for iv in model.intervals]), axis=2)
    cum_init = np.cumsum(model.intervals[int(interval_idx[0])].state_probs)

    rng = np.random.default_rng(seed)
    u_trans = rng.random(n)
    u_dither = rng.random(n)
    _, snr = _kernels.fsmc_walk(interval_idx, cum_init, cum_rows, thresholds, reps,
                                u_trans, u_dither, dither == "uniform")
    return SnrTrace(positions, np.arange(n, dtype=np.int64), snr,
                    slot_duration_s=model.slot_duration_s, run_id=f"sim-{seed}")


def _reachability(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    reach = adj | np.eye(n, dtype=bool)
    for _ in range(n):
        new = reach | (reach @ reach)
        if np.array_equal(new, reach):
            break
        reach = new
    return reach


def stationary_distribution(matrix) -> np.ndarray:
    """Left fixed-point probability vector of a row-stochastic matrix.

    Power iteration on the lazy chain (P + I)/2 (same fixed point, never
    periodic) from the uniform vector, run until the residual ||pi P - pi||_1
    drops below 1e-12. A reducible chain triggers a warning; the returned
    vector is then the limit reached from the uniform start, i.e. an equal
    mix over the chain's closed classes.
    """
    p = np.asarray(getattr(matrix, "p", matrix), dtype=np.float64)
    n = p.shape[0]
    if p.ndim != 2 or p.shape != (n, n):
        raise ModelValidationError(f"matrix must be square, got shape {p.shape}")
    if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-9 or np.any(p < 0):
        raise ModelValidationError("matrix must be row-stochastic")

    reach = _reachability(p > 0)
    if not np.all(reach & reach.T):
        warnings.warn("chain is reducible; returning the power-iteration limit "
                      "from a uniform start", stacklevel=2)

    lazy = (p + np.eye(n)) / 2.0
    pi = np.full(n, 1.0 / n)
    for _ in range(1_000_000):
        if float(np.abs(pi @ p - pi).sum()) < 1e-12:
            return pi
        pi = pi @ lazy
        pi = pi / pi.sum()
    raise ConvergenceError("stationary distribution power iteration did not converge")
