"""Location-dependent finite-state Markov channel model estimation.

The SNR range of each distance interval is split into N cells by a
ThresholdSet; a sample in cell n is in channel state n. State labels are
1-based (1..N, matching the threshold cells); matrix rows/columns and
probability vectors are 0-indexed arrays where index i corresponds to state
i+1. States may only transition between neighbours, so each interval's
transition matrix is tridiagonal; observed off-band transitions are counted,
reported as a model-adequacy diagnostic, and renormalized away.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .distfit import SnrDistribution, dist_from_db_samples
from .errors import InsufficientDataError, ModelValidationError, PipelineError
from .quantizer import ThresholdSet, distortion as _quad_distortion, lloyd_max
from .trace import SnrTrace, TrackGeometry, interval_span, partition_by_intervals
from . import _kernels


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic tridiagonal matrix; row i drives state i+1.

    ``flagged_rows`` lists 1-based states whose rows had no observed banded
    outgoing transitions and were set to self-loops. ``offband_fraction`` is
    the share of observed transitions that violated the adjacency assumption
    before renormalization.
    """

    n_states: int
    p: np.ndarray
    offband_fraction: float = 0.0
    flagged_rows: tuple[int, ...] = field(default=())

    def __post_init__(self):
        m = np.asarray(self.p, dtype=np.float64)
        n = self.n_states
        if m.shape != (n, n):
            raise ModelValidationError(f"matrix must be {n}x{n}, got {m.shape}")
        if np.any(m < 0) or np.any(m > 1):
            raise ModelValidationError("matrix entries must lie in [0, 1]")
        if np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-12:
            raise ModelValidationError("matrix rows must sum to 1 (1e-12)")
        i, j = np.indices((n, n))
        if np.any(m[np.abs(i - j) > 1] != 0.0):
            raise ModelValidationError("matrix must be tridiagonal")
        m.setflags(write=False)
        object.__setattr__(self, "p", m)


@dataclass(frozen=True)
class IntervalModel:
    """One distance interval: quantizer, state probabilities, transition matrix."""

    interval_index: int
    span: tuple[float, float]
    thresholds: ThresholdSet
    state_probs: np.ndarray
    matrix: TransitionMatrix
    sample_count: int

    def __post_init__(self):
        probs = np.asarray(self.state_probs, dtype=np.float64)
        n = self.matrix.n_states
        if self.thresholds.n_states != n:
            raise ModelValidationError("thresholds and matrix disagree on n_states")
        if probs.shape != (n,):
            raise ModelValidationError(f"state_probs must have length {n}")
        if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ModelValidationError("state_probs must be a probability vector (sum 1e-12)")
        if not self.span[1] > self.span[0]:
            raise ModelValidationError(f"empty interval span {self.span}")
        probs.setflags(write=False)
        object.__setattr__(self, "state_probs", probs)
        object.__setattr__(self, "span", (float(self.span[0]), float(self.span[1])))


@dataclass(frozen=True)
class FsmcModel:
    """Ordered interval models covering [0, section_length) plus global metadata."""

    geometry: TrackGeometry
    interval_m: float
    n_states: int
    slot_duration_s: float
    intervals: tuple[IntervalModel, ...]

    def __post_init__(self):
        ivs = tuple(self.intervals)
        if not ivs:
            raise ModelValidationError("model needs at least one interval")
        if any(iv.matrix.n_states != self.n_states for iv in ivs):
            raise ModelValidationError("all intervals must share n_states")
        if abs(ivs[0].span[0]) > 1e-9:
            raise ModelValidationError("first interval must start at 0")
        for a, b in zip(ivs, ivs[1:]):
            if abs(a.span[1] - b.span[0]) > 1e-9:
                raise ModelValidationError(
                    f"intervals {a.interval_index} and {b.interval_index} are not contiguous")
        if abs(ivs[-1].span[1] - self.geometry.section_length_m) > 1e-9:
            raise ModelValidationError("last interval must end at the section end")
        if not (self.slot_duration_s > 0 and math.isfinite(self.slot_duration_s)):
            raise ModelValidationError("slot_duration_s must be positive")
        object.__setattr__(self, "intervals", ivs)

    def interval_at(self, position_m: float) -> IntervalModel:
        idx = min(int(position_m // self.interval_m), len(self.intervals) - 1)
        return self.intervals[idx]


def states_from_trace(samples, thresholds: ThresholdSet) -> np.ndarray:
    """Map dB samples to 1-based states; out-of-range samples clamp to the edge cells.

    A sample in [G_{n-1}, G_n) is state n (cells closed on the left). Values
    below G_0 become state 1 and values at or above G_N become state N, since
    held-out data may slightly exceed the training range.
    """
    snr = np.asarray(getattr(samples, "snr_db", samples), dtype=np.float64)
    interior = thresholds.thresholds[1:-1]
    return np.searchsorted(interior, snr, side="right").astype(np.int64) + 1


def estimate_matrix_runs(sequences: Sequence[np.ndarray], n_states: int
                         ) -> tuple[TransitionMatrix, np.ndarray]:
    """Pool transition counts over runs; pairs straddling two runs are not counted."""
    total_len = 0
    counts = np.zeros((n_states, n_states), dtype=np.int64)
    visits = np.zeros(n_states, dtype=np.int64)
    for seq in sequences:
        s = np.asarray(seq, dtype=np.int64)
        if s.size == 0:
            continue
        if np.any(s < 1) or np.any(s > n_states):
            raise ValueError(f"state labels must lie in 1..{n_states}")
        total_len += s.size
        visits += np.bincount(s - 1, minlength=n_states)
        if s.size >= 2:
            counts += _kernels.count_pairs(s - 1, n_states)
    if total_len < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {total_len}")
    n_trans = int(counts.sum())
    if n_trans == 0:
        raise InsufficientDataError("no consecutive pairs within any single run")

    i, j = np.indices((n_states, n_states))
    band = np.abs(i - j) <= 1
    offband = int(counts[~band].sum())
    banded = np.where(band, counts, 0).astype(np.float64)
    row_tot = banded.sum(axis=1)

    p = np.zeros((n_states, n_states), dtype=np.float64)
    flagged = []
    for row in range(n_states):
        if row_tot[row] > 0:
            p[row] = banded[row] / row_tot[row]
        else:
            p[row, row] = 1.0
            flagged.append(row + 1)
            if visits[row] > 0:
                warnings.warn(
                    f"state {row + 1} was visited but has no banded outgoing "
                    "transitions; row set to a self-loop", stacklevel=2)
    matrix = TransitionMatrix(n_states, p, offband_fraction=offband / n_trans,
                              flagged_rows=tuple(flagged))
    return matrix, visits / total_len


def estimate_matrix(state_sequence, n_states: int) -> tuple[TransitionMatrix, np.ndarray]:
    """Transition matrix and visit frequencies from one 1-based state sequence."""
    s = np.asarray(state_sequence, dtype=np.int64)
    if s.size < 2:
        raise InsufficientDataError(f"need a sequence of length >= 2, got {s.size}")
    return estimate_matrix_runs([s], n_states)


def pooled_interval_samples(traces, geometry: TrackGeometry,
                            interval_m: float) -> list[np.ndarray]:
    """Per-interval dB samples pooled across runs (order: run-major)."""
    runs = [traces] if isinstance(traces, SnrTrace) else list(traces)
    per_run = [partition_by_intervals(t, interval_m, geometry) for t in runs]
    return [np.concatenate([p[l].snr_db for p in per_run])
            for l in range(len(per_run[0]))]


def build_model(traces, geometry: TrackGeometry, interval_m: float, n_states: int,
                dist_fits: Sequence[SnrDistribution] | None = None,
                slot_duration_s: float | None = None) -> FsmcModel:
    """Fit the full location-dependent model from one trace or several runs.

    Per interval: the SNR range comes from the interval's observed min/max,
    lloyd_max places the cells against the interval's fitted distribution
    (Gaussian dB MLE per interval when ``dist_fits`` is None), samples become
    states, and the banded transition matrix is counted across runs.
    """
    runs = [traces] if isinstance(traces, SnrTrace) else list(traces)
    if not runs:
        raise ValueError("need at least one trace")
    per_run = [partition_by_intervals(t, interval_m, geometry) for t in runs]
    n_intervals = len(per_run[0])
    if dist_fits is not None and len(dist_fits) != n_intervals:
        raise ValueError(f"dist_fits must have {n_intervals} entries, got {len(dist_fits)}")
    if slot_duration_s is None:
        slot_duration_s = runs[0].slot_duration_s

    intervals = []
    for l in range(n_intervals):
        segs = [p[l] for p in per_run]
        pooled = np.concatenate([seg.snr_db for seg in segs]) if segs else np.empty(0)
        if pooled.size == 0:
            raise InsufficientDataError(f"interval {l}: no samples")
        if pooled.size < 2:
            raise InsufficientDataError(f"interval {l}: fewer than 2 samples")
        try:
            dist = dist_fits[l] if dist_fits is not None else dist_from_db_samples(pooled)
            ts = lloyd_max(dist, n_states, float(pooled.min()), float(pooled.max()))
            seqs = [states_from_trace(seg.snr_db, ts) for seg in segs if len(seg)]
            matrix, probs = estimate_matrix_runs(seqs, n_states)
        except (PipelineError, ValueError) as exc:
            raise type(exc)(f"interval {l}: {exc}") from exc
        intervals.append(IntervalModel(
            interval_index=l,
            span=interval_span(l, interval_m, geometry),
            thresholds=ts,
            state_probs=probs,
            matrix=matrix,
            sample_count=int(pooled.size),
        ))
    return FsmcModel(geometry, float(interval_m), int(n_states),
                     float(slot_duration_s), tuple(intervals))


# --- model file format ------------------------------------------------------
#
# A single JSON document. Floats are written with 17 significant digits so
# that serialize -> parse -> serialize is byte-identical.

def _fnum(x: float) -> str:
    v = float(x)
    if not math.isfinite(v):
        raise ModelValidationError(f"cannot serialize non-finite number {v}")
    return format(v, ".17g")


def _farray(values) -> str:
    return "[" + ", ".join(_fnum(v) for v in np.asarray(values).ravel()) + "]"


def model_to_json(model: FsmcModel) -> str:
    """Serialize a model to its canonical JSON form (fixed key order, LF lines)."""
    out = []
    out.append("{")
    out.append('  "geometry": {')
    out.append(f'    "section_length_m": {_fnum(model.geometry.section_length_m)},')
    out.append(f'    "carrier_hz": {_fnum(model.geometry.carrier_hz)}')
    out.append("  },")
    out.append(f'  "interval_m": {_fnum(model.interval_m)},')
    out.append(f'  "n_states": {model.n_states},')
    out.append(f'  "slot_duration_s": {_fnum(model.slot_duration_s)},')
    out.append('  "intervals": [')
    for pos, iv in enumerate(model.intervals):
        comma = "," if pos + 1 < len(model.intervals) else ""
        out.append("    {")
        out.append(f'      "index": {iv.interval_index},')
        out.append(f'      "span": {_farray(iv.span)},')
        out.append(f'      "thresholds": {_farray(iv.thresholds.thresholds)},')
        out.append(f'      "representatives": {_farray(iv.thresholds.representatives)},')
        out.append(f'      "state_probs": {_farray(iv.state_probs)},')
        out.append(f'      "matrix": {_farray(iv.matrix.p)},')
        out.append(f'      "sample_count": {iv.sample_count},')
        out.append(f'      "offband_fraction": {_fnum(iv.matrix.offband_fraction)}')
        out.append("    }" + comma)
    out.append("  ]")
    out.append("}")
    return "\n".join(out) + "\n"


def model_from_json(text: str) -> FsmcModel:
    """Parse and validate a model JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"model file is not valid JSON: {exc}") from exc
    try:
        geometry = TrackGeometry(float(doc["geometry"]["section_length_m"]),
                                 float(doc["geometry"]["carrier_hz"]))
        n_states = int(doc["n_states"])
        intervals = []
        for entry in doc["intervals"]:
            ts = ThresholdSet(np.array(entry["thresholds"], dtype=np.float64),
                              np.array(entry["representatives"], dtype=np.float64),
                              n_states)
            matrix = TransitionMatrix(
                n_states,
                np.array(entry["matrix"], dtype=np.float64).reshape(n_states, n_states),
                offband_fraction=float(entry["offband_fraction"]))
            intervals.append(IntervalModel(
                interval_index=int(entry["index"]),
                span=(float(entry["span"][0]), float(entry["span"][1])),
                thresholds=ts,
                state_probs=np.array(entry["state_probs"], dtype=np.float64),
                matrix=matrix,
                sample_count=int(entry["sample_count"]),
            ))
        return FsmcModel(geometry, float(doc["interval_m"]), n_states,
                         float(doc["slot_duration_s"]), tuple(intervals))
    except ModelValidationError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelValidationError(f"model file violates the schema: {exc}") from exc


def write_model(model: FsmcModel, fp: IO[str]) -> None:
    fp.write(model_to_json(model))


def read_model(fp: IO[str]) -> FsmcModel:
    return model_from_json(fp.read())


def write_threshold_report(model: FsmcModel, fp: IO[str],
                           dists: Sequence[SnrDistribution] | None = None) -> None:
    """Threshold CSV: interval_index,n_states,g0..gN,rep1..repN,distortion.

    The distortion column holds the quadrature distortion against ``dists``
    when given; otherwise each ThresholdSet's stored value (NaN for models
    parsed from disk, whose files do not carry the fitted density).
    """
    n = model.n_states
    cols = (["interval_index", "n_states"] + [f"g{i}" for i in range(n + 1)]
            + [f"rep{i}" for i in range(1, n + 1)] + ["distortion"])
    fp.write(",".join(cols) + "\n")
    for pos, iv in enumerate(model.intervals):
        d = (_quad_distortion(dists[pos], iv.thresholds) if dists is not None
             else iv.thresholds.distortion)
        row = ([str(iv.interval_index), str(n)]
               + [repr(float(g)) for g in iv.thresholds.thresholds]
               + [repr(float(r)) for r in iv.thresholds.representatives]
               + [repr(float(d))])
        fp.write(",".join(row) + "\n")
