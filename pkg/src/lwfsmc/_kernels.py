"""Hot inner loops: numba-jitted by default, pure-Python fallback on demand.

Every kernel below is written once as a plain function over numpy arrays and
then compiled with ``numba.njit`` unless the environment variable
``LWFSMC_NO_NUMBA`` is set to ``1``/``true``/``yes`` (or numba is missing).
Both paths execute the same source, so their outputs are bit-identical;
``benchmarks/bench_kernels.py`` compares their speed.

The undecorated originals stay importable under ``*_py`` names. Each kernel is
self-contained (no cross-kernel calls) so the two paths never mix.
"""

import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("LWFSMC_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


def ar1_path(e, rho):
    """AR(1) recursion x[k] = rho*x[k-1] + e[k] with x[0] = e[0].

    The caller pre-scales the innovations so that e[0] carries the stationary
    standard deviation and e[k>0] the innovation standard deviation.
    """
    n = e.shape[0]
    out = np.empty(n, dtype=np.float64)
    out[0] = e[0]
    for k in range(1, n):
        out[k] = rho * out[k - 1] + e[k]
    return out


def pick_state(cum_row, u):
    """Index of the first cumulative entry exceeding u (clamped to the last state)."""
    n = cum_row.shape[0]
    for j in range(n - 1):
        if u < cum_row[j]:
            return j
    return n - 1


def markov_path(cum_rows, state0, u):
    """Walk a chain from 0-based ``state0`` using per-slot uniforms ``u``.

    ``cum_rows`` is the row-wise cumulative sum of a stochastic matrix.
    Slot 0 keeps ``state0``; slot k>0 draws from the previous state's row.
    """
    n = u.shape[0]
    n_states = cum_rows.shape[1]
    out = np.empty(n, dtype=np.int64)
    out[0] = state0
    for k in range(1, n):
        row = cum_rows[out[k - 1]]
        s = n_states - 1
        for j in range(n_states - 1):
            if u[k] < row[j]:
                s = j
                break
        out[k] = s
    return out


def count_pairs(states0, n_states):
    """N x N counts of consecutive (from, to) pairs in a 0-based state sequence."""
    counts = np.zeros((n_states, n_states), dtype=np.int64)
    for k in range(states0.shape[0] - 1):
        counts[states0[k], states0[k + 1]] += 1
    return counts


def fsmc_walk(interval_idx, cum_init, cum_rows, thresholds, reps, u_trans, u_dither, dither_on):
    """Slot-by-slot walk of a location-dependent chain over a moving receiver.

    interval_idx : int64[n] interval of each slot (non-decreasing)
    cum_init     : float64[N] cumulative initial-state probabilities of interval_idx[0]
    cum_rows     : float64[L, N, N] per-interval cumulative transition rows
    thresholds   : float64[L, N+1] per-interval cell boundaries (dB)
    reps         : float64[L, N] per-interval representative values (dB)
    u_trans      : float64[n] per-slot transition/initial draws
    u_dither     : float64[n] per-slot emission draws (used only when dither_on)

    On an interval change the state is re-derived from the previous emitted
    value under the new interval's boundaries; no transition draw is consumed
    for that slot. Returns (0-based states, emitted dB values).
    """
    n = interval_idx.shape[0]
    n_states = cum_rows.shape[1]
    states = np.empty(n, dtype=np.int64)
    snr = np.empty(n, dtype=np.float64)
    s = n_states - 1
    for j in range(n_states - 1):
        if u_trans[0] < cum_init[j]:
            s = j
            break
    for k in range(n):
        l = interval_idx[k]
        if k > 0:
            if l == interval_idx[k - 1]:
                row = cum_rows[l, s]
                s = n_states - 1
                for j in range(n_states - 1):
                    if u_trans[k] < row[j]:
                        s = j
                        break
            else:
                prev = snr[k - 1]
                s = 0
                while s < n_states - 1 and prev >= thresholds[l, s + 1]:
                    s += 1
        states[k] = s
        if dither_on:
            lo = thresholds[l, s]
            hi = thresholds[l, s + 1]
            snr[k] = lo + u_dither[k] * (hi - lo)
        else:
            snr[k] = reps[l, s]
    return states, snr


# Plain-Python originals stay importable for the benchmark and equivalence tests.
ar1_path_py = ar1_path
pick_state_py = pick_state
markov_path_py = markov_path
count_pairs_py = count_pairs
fsmc_walk_py = fsmc_walk

NUMBA_ENABLED = False
if not _numba_disabled():
    try:
        from numba import njit
    except ImportError:
        pass
    else:
        _opts = dict(cache=True, nogil=True)
        ar1_path = njit(**_opts)(ar1_path_py)
        pick_state = njit(**_opts)(pick_state_py)
        markov_path = njit(**_opts)(markov_path_py)
        count_pairs = njit(**_opts)(count_pairs_py)
        fsmc_walk = njit(**_opts)(fsmc_walk_py)
        NUMBA_ENABLED = True
