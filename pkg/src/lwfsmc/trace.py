"""Position-stamped SNR trace ingestion, validation and spatial indexing.

Trace CSV format (the only wire format for traces): UTF-8, header line
``position_m,slot,snr_db``, then one sample per line with three comma-separated
fields: decimal meters, decimal non-negative integer slot index, decimal dB
value. No quoting, LF or CRLF line endings.

SNR is stored and processed in dB throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import TraceFormatError

SPEED_OF_LIGHT_M_S = 299_792_458.0

TRACE_CSV_HEADER = "position_m,slot,snr_db"


@dataclass(frozen=True)
class SnrSample:
    """One received-SNR measurement at a known position and time slot."""

    position_m: float
    slot: int
    snr_db: float

    def __post_init__(self):
        if not math.isfinite(self.position_m) or self.position_m < 0:
            raise TraceFormatError(f"position must be finite and non-negative, got {self.position_m}")
        if self.slot < 0:
            raise TraceFormatError(f"slot must be non-negative, got {self.slot}")
        if not math.isfinite(self.snr_db):
            raise TraceFormatError(f"snr_db must be finite, got {self.snr_db}")


@dataclass(frozen=True)
class TrackGeometry:
    """Modeled waveguide span and carrier frequency."""

    section_length_m: float = 300.0
    carrier_hz: float = 2.412e9

    def __post_init__(self):
        if not (self.section_length_m > 0 and math.isfinite(self.section_length_m)):
            raise ValueError(f"section_length_m must be positive, got {self.section_length_m}")
        if not (self.carrier_hz > 0 and math.isfinite(self.carrier_hz)):
            raise ValueError(f"carrier_hz must be positive, got {self.carrier_hz}")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT_M_S / self.carrier_hz


@dataclass(frozen=True)
class SnrTrace:
    """One measurement run: parallel arrays of position, slot index and SNR.

    Invariants: at least 2 samples, strictly increasing slots, non-decreasing
    positions (reverse runs are normalized at ingest), all values finite.
    """

    positions_m: np.ndarray
    slots: np.ndarray
    snr_db: np.ndarray
    slot_duration_s: float
    run_id: str = ""

    def __post_init__(self):
        pos = np.asarray(self.positions_m, dtype=np.float64)
        slots = np.asarray(self.slots, dtype=np.int64)
        snr = np.asarray(self.snr_db, dtype=np.float64)
        if not (pos.ndim == slots.ndim == snr.ndim == 1):
            raise TraceFormatError("trace arrays must be one-dimensional")
        if not (pos.size == slots.size == snr.size):
            raise TraceFormatError("trace arrays must have equal length")
        if pos.size < 2:
            raise TraceFormatError(f"a trace needs at least 2 samples, got {pos.size}")
        if not np.all(np.isfinite(pos)) or np.any(pos < 0):
            raise TraceFormatError("positions must be finite and non-negative")
        if not np.all(np.isfinite(snr)):
            raise TraceFormatError("snr_db values must be finite")
        if np.any(slots < 0):
            raise TraceFormatError("slot indices must be non-negative")
        if np.any(np.diff(slots) <= 0):
            raise TraceFormatError("non-monotonic slots")
        if np.any(np.diff(pos) < 0):
            raise TraceFormatError("positions must be non-decreasing")
        if not (self.slot_duration_s > 0 and math.isfinite(self.slot_duration_s)):
            raise TraceFormatError(f"slot_duration_s must be positive, got {self.slot_duration_s}")
        for name, arr in (("positions_m", pos), ("slots", slots), ("snr_db", snr)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.positions_m.size)

    def __iter__(self) -> Iterator[SnrSample]:
        for p, k, s in zip(self.positions_m, self.slots, self.snr_db):
            yield SnrSample(float(p), int(k), float(s))

    @classmethod
    def from_samples(cls, samples: Iterable[SnrSample], slot_duration_s: float,
                     run_id: str = "") -> "SnrTrace":
        samples = list(samples)
        return cls(
            positions_m=np.array([s.position_m for s in samples], dtype=np.float64),
            slots=np.array([s.slot for s in samples], dtype=np.int64),
            snr_db=np.array([s.snr_db for s in samples], dtype=np.float64),
            slot_duration_s=slot_duration_s,
            run_id=run_id,
        )


@dataclass(frozen=True)
class TraceSegment:
    """Samples of one spatial bin, in original (slot) order."""

    index: int
    positions_m: np.ndarray
    slots: np.ndarray
    snr_db: np.ndarray

    def __len__(self) -> int:
        return int(self.positions_m.size)


def _parse_row(line: str, lineno: int) -> SnrSample:
    parts = line.split(",")
    if len(parts) != 3:
        raise TraceFormatError(f"line {lineno}: expected 3 comma-separated fields, got {len(parts)}")
    pos_s, slot_s, snr_s = (p.strip() for p in parts)
    try:
        position = float(pos_s)
    except ValueError:
        raise TraceFormatError(f"line {lineno}: bad position {pos_s!r}") from None
    if not slot_s.isdigit():  # plain decimal digits only: no sign, no underscores
        raise TraceFormatError(f"line {lineno}: bad slot index {slot_s!r}")
    slot = int(slot_s)
    try:
        snr = float(snr_s)
    except ValueError:
        raise TraceFormatError(f"line {lineno}: bad snr_db {snr_s!r}") from None
    try:
        return SnrSample(position, slot, snr)
    except TraceFormatError as exc:
        raise TraceFormatError(f"line {lineno}: {exc}") from None


def parse_trace(stream: IO[str] | str, slot_duration_s: float = 1.0,
                run_id: str = "") -> SnrTrace:
    """Parse trace CSV from a text stream or string into a validated SnrTrace.

    Rows violating per-row validity raise (they are never skipped). A run whose
    positions decrease monotonically is treated as a reverse-direction run and
    normalized: sample order is reversed and slots are remapped to
    ``max(slot) - slot`` so they increase again. slot_duration_s is carried as
    metadata; the CSV format does not encode it.
    """
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = stream.read().splitlines()
    if not lines:
        raise TraceFormatError("empty trace input")
    header = lines[0].strip()
    if header != TRACE_CSV_HEADER:
        raise TraceFormatError(f"line 1: expected header {TRACE_CSV_HEADER!r}, got {header!r}")
    samples = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        samples.append(_parse_row(line, lineno))
    if len(samples) < 2:
        raise TraceFormatError(f"fewer than 2 valid samples ({len(samples)})")

    slots = np.array([s.slot for s in samples], dtype=np.int64)
    if np.any(np.diff(slots) <= 0):
        raise TraceFormatError("non-monotonic slots")
    pos = np.array([s.position_m for s in samples], dtype=np.float64)
    snr = np.array([s.snr_db for s in samples], dtype=np.float64)

    dpos = np.diff(pos)
    if np.any(dpos < 0):
        if np.any(dpos > 0):
            raise TraceFormatError("positions are neither non-decreasing nor non-increasing")
        # reverse run: flip order, remap slots to keep them strictly increasing
        pos = pos[::-1].copy()
        snr = snr[::-1].copy()
        slots = (slots[-1] - slots[::-1]).copy()
    return SnrTrace(pos, slots, snr, slot_duration_s=slot_duration_s, run_id=run_id)


def format_trace_csv(trace: SnrTrace) -> str:
    """Render a trace in the trace CSV format (LF line endings, repr floats)."""
    lines = [TRACE_CSV_HEADER]
    for p, k, s in zip(trace.positions_m, trace.slots, trace.snr_db):
        lines.append(f"{float(p)!r},{int(k)},{float(s)!r}")
    return "\n".join(lines) + "\n"


def write_trace_csv(trace: SnrTrace, fp: IO[str]) -> None:
    fp.write(format_trace_csv(trace))


def _segments(trace: SnrTrace, bin_width_m: float, n_bins: int) -> list[TraceSegment]:
    # Positions are non-decreasing, so each bin is a contiguous slice of the trace.
    idx = np.floor(trace.positions_m / bin_width_m).astype(np.int64)
    np.minimum(idx, n_bins - 1, out=idx)  # clamp samples at/past the section end
    bounds = np.searchsorted(idx, np.arange(n_bins + 1))
    out = []
    for k in range(n_bins):
        lo, hi = int(bounds[k]), int(bounds[k + 1])
        out.append(TraceSegment(
            index=k,
            positions_m=trace.positions_m[lo:hi],
            slots=trace.slots[lo:hi],
            snr_db=trace.snr_db[lo:hi],
        ))
    return out


def partition_by_intervals(trace: SnrTrace, interval_m: float,
                           geometry: TrackGeometry) -> list[TraceSegment]:
    """Assign every sample to the half-open spatial bin floor(position / interval_m).

    Returns one segment per interval, empty intervals included. The final
    interval may be shorter than interval_m; samples at or past the section
    end are clamped into it.
    """
    if not (interval_m > 0):
        raise ValueError(f"interval_m must be positive, got {interval_m}")
    if interval_m > geometry.section_length_m:
        raise ValueError(
            f"interval_m {interval_m} exceeds section length {geometry.section_length_m}")
    n_bins = int(math.ceil(geometry.section_length_m / interval_m))
    return _segments(trace, interval_m, n_bins)


def window_by_wavelengths(trace: SnrTrace, n_wavelengths: int,
                          geometry: TrackGeometry) -> list[TraceSegment]:
    """Partition a trace into windows of n_wavelengths carrier wavelengths each."""
    if n_wavelengths < 1:
        raise ValueError(f"n_wavelengths must be >= 1, got {n_wavelengths}")
    width = n_wavelengths * geometry.wavelength_m
    n_bins = int(math.ceil(geometry.section_length_m / width))
    return _segments(trace, width, n_bins)


def interval_span(index: int, interval_m: float, geometry: TrackGeometry) -> tuple[float, float]:
    """[start, end) span of one interval; the last interval ends at the section end."""
    start = index * interval_m
    end = min((index + 1) * interval_m, geometry.section_length_m)
    return (start, end)


def slot_positions(section_length_m: float, step_m: float) -> np.ndarray:
    """Positions k*step_m for k = 0, 1, ... while strictly inside the section."""
    if not (step_m > 0):
        raise ValueError(f"step must be positive, got {step_m}")
    n = int(math.floor(section_length_m / step_m)) + 1
    pos = np.arange(n, dtype=np.float64) * step_m
    return pos[pos < section_length_m]
