"""Command-line pipeline: synth, fit, thresholds, simulate, validate, sweep.

Identical argument vectors plus identical input files produce byte-identical
output files. Every stochastic stage requires --seed; per-run seeds derive
from it by the documented splitting rule (numpy SeedSequence spawn keys, see
validate.child_seed).

Exit codes: 0 success, 2 usage error (unknown subcommand or flags), 3 missing
input file, 4 malformed input file, 5 fitting/model/computation error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys

import numpy as np

from . import distfit, fsmc, synth, validate
from .errors import PipelineError, TraceFormatError, ModelValidationError
from .simulate import DITHER_MODES, simulate_run
from .trace import (SnrTrace, TraceSegment, TrackGeometry, parse_trace,
                    partition_by_intervals, window_by_wavelengths, write_trace_csv)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_INPUT = 4
EXIT_COMPUTE = 5

_EPILOG = """\
exit codes:
  0  success
  2  usage error (unknown subcommand, bad flags)
  3  missing input file
  4  malformed input file (trace CSV or model JSON)
  5  fitting, model or computation error

The hot simulation kernels are numba-compiled; set LWFSMC_NO_NUMBA=1 to force
the pure-Python fallback (outputs are bit-identical either way).
"""


def _geometry(args) -> TrackGeometry:
    return TrackGeometry(section_length_m=args.section_length, carrier_hz=args.carrier_hz)


def _check_states(n: int) -> None:
    if n < 2 or (n & (n - 1)) != 0:
        raise ValueError(f"states must be a power of two >= 2, got {n}")


def _read_traces(paths, slot_duration_s: float) -> list[SnrTrace]:
    traces = []
    for i, path in enumerate(paths):
        with open(path, "r", encoding="utf-8") as fp:
            traces.append(parse_trace(fp, slot_duration_s=slot_duration_s, run_id=f"run{i}"))
    return traces


def _merge_window_segments(per_run_segments) -> list[TraceSegment]:
    merged = []
    for k in range(len(per_run_segments[0])):
        segs = [runs[k] for runs in per_run_segments]
        merged.append(TraceSegment(
            index=k,
            positions_m=np.concatenate([s.positions_m for s in segs]),
            slots=np.concatenate([s.slots for s in segs]),
            snr_db=np.concatenate([s.snr_db for s in segs]),
        ))
    return merged


def _add_geometry_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--section-length", type=float, default=300.0,
                   help="modeled waveguide span in meters")
    p.add_argument("--carrier-hz", type=float, default=2.412e9,
                   help="carrier frequency in Hz")


def _cmd_synth(args) -> int:
    profile = synth.GroundTruthProfile(
        mean_db_at_origin=args.mean_db, slope_db_per_m=args.slope_db_per_m,
        sigma_db=args.sigma_db, seed=args.seed)
    trace = synth.generate_trace(profile, _geometry(args), args.speed,
                                 args.slot_duration, correlation=args.correlation,
                                 run_id=args.run_id)
    with open(args.out, "w", encoding="utf-8", newline="") as fp:
        write_trace_csv(trace, fp)
    print(f"wrote {len(trace)} samples to {args.out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    _check_states(args.states)
    geometry = _geometry(args)
    traces = _read_traces(args.trace, args.slot_duration)

    per_run = [window_by_wavelengths(t, args.window_wavelengths, geometry) for t in traces]
    windows, skipped = distfit.fit_windows(_merge_window_segments(per_run))
    family, table = distfit.select_family(windows)
    scored = sum(table.values())
    print(f"best family by AICc wins: {family.value} ({table.get(family, 0)}/{scored} windows)")
    if args.fit_report:
        with open(args.fit_report, "w", encoding="utf-8", newline="") as fp:
            distfit.write_fit_report(windows, skipped, fp)

    model = fsmc.build_model(traces, geometry, args.interval_m, args.states)
    with open(args.out, "w", encoding="utf-8", newline="") as fp:
        fsmc.write_model(model, fp)
    print(f"wrote model with {len(model.intervals)} intervals to {args.out}")

    if args.thresholds_out:
        pooled = fsmc.pooled_interval_samples(traces, geometry, args.interval_m)
        dists = [distfit.dist_from_db_samples(s) for s in pooled]
        with open(args.thresholds_out, "w", encoding="utf-8", newline="") as fp:
            fsmc.write_threshold_report(model, fp, dists=dists)
    return EXIT_OK


def _cmd_thresholds(args) -> int:
    with open(args.model, "r", encoding="utf-8") as fp:
        model = fsmc.read_model(fp)
    dists = None
    if args.trace:
        traces = _read_traces(args.trace, model.slot_duration_s)
        pooled = fsmc.pooled_interval_samples(traces, model.geometry, model.interval_m)
        dists = [distfit.dist_from_db_samples(s) for s in pooled]
    with open(args.out, "w", encoding="utf-8", newline="") as fp:
        fsmc.write_threshold_report(model, fp, dists=dists)
    print(f"wrote thresholds for {len(model.intervals)} intervals to {args.out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    with open(args.model, "rb") as fp:
        model_bytes = fp.read()
    model = fsmc.model_from_json(model_bytes.decode("utf-8"))
    trace = simulate_run(model, args.speed, args.seed, dither=args.dither)
    with open(args.out, "w", encoding="utf-8", newline="") as fp:
        write_trace_csv(trace, fp)
    meta_path = args.meta if args.meta else args.out + ".meta"
    with open(meta_path, "w", encoding="utf-8", newline="") as fp:
        fp.write(f"model_sha256={hashlib.sha256(model_bytes).hexdigest()}\n")
        fp.write(f"seed={args.seed}\n")
        fp.write(f"speed_m_per_s={args.speed!r}\n")
        fp.write(f"dither={args.dither}\n")
    print(f"wrote {len(trace)} simulated samples to {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    with open(args.model, "r", encoding="utf-8") as fp:
        model = fsmc.read_model(fp)
    with open(args.heldout, "r", encoding="utf-8") as fp:
        heldout = parse_trace(fp, slot_duration_s=model.slot_duration_s, run_id="heldout")

    centers, meas, sim = validate.overlay_curves(
        model, heldout, args.speed, args.n_runs, args.seed,
        dither=args.dither, bin_width_m=args.bin_width)
    mse = float(np.mean((sim - meas) ** 2))

    comparisons = []
    segments = partition_by_intervals(heldout, model.interval_m, model.geometry)
    for iv, seg in zip(model.intervals, segments):
        if len(seg) < 2:
            print(f"note: interval {iv.interval_index} has {len(seg)} held-out samples; "
                  "skipping matrix comparison", file=sys.stderr)
            continue
        empirical, diff = validate.compare_matrices(iv, seg)
        comparisons.append(validate.MatrixComparison(iv.span, iv.matrix, empirical, diff))
    report = validate.ValidationReport((model.interval_m,), (mse,), tuple(comparisons),
                                       model.n_states)

    with open(args.out_prefix + "_mse.csv", "w", encoding="utf-8", newline="") as fp:
        validate.write_mse_csv(list(zip(report.interval_lengths_m,
                                        report.mse_per_interval_length)), fp)
    with open(args.out_prefix + "_matrices.csv", "w", encoding="utf-8", newline="") as fp:
        validate.write_matrix_comparison_csv(report.matrix_comparisons, fp)
    with open(args.out_prefix + "_overlay.csv", "w", encoding="utf-8", newline="") as fp:
        validate.write_overlay_csv(centers, meas, sim, fp)
    print(f"mse={mse!r} over {centers.size} bins; "
          f"{len(report.matrix_comparisons)} interval matrix comparisons")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    _check_states(args.states)
    geometry = _geometry(args)
    traces = _read_traces(args.trace, args.slot_duration)
    if args.heldout:
        with open(args.heldout, "r", encoding="utf-8") as fp:
            heldout = parse_trace(fp, slot_duration_s=args.slot_duration, run_id="heldout")
    else:
        heldout = traces[0]

    lengths = [float(s) for s in args.intervals.split(",") if s.strip()]
    if not lengths:
        raise ValueError("empty interval list")
    rows = []
    for interval_m in lengths:
        model = fsmc.build_model(traces, geometry, interval_m, args.states)
        mse = validate.mse_against_trace(model, heldout, args.speed, args.n_runs,
                                         args.seed, dither=args.dither,
                                         bin_width_m=args.bin_width)
        rows.append((interval_m, mse))
        print(f"interval {interval_m} m: mse={mse!r}")
    with open(args.out, "w", encoding="utf-8", newline="") as fp:
        validate.write_mse_csv(rows, fp)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lwfsmc",
        description="Location-dependent finite-state Markov channel models "
                    "from position-stamped SNR traces.",
        epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="generate a synthetic ground-truth trace CSV",
                       formatter_class=fmt)
    p.add_argument("--out", required=True, help="output trace CSV path")
    p.add_argument("--seed", type=int, required=True, help="PCG64 seed")
    p.add_argument("--mean-db", type=float, default=49.0, help="mean SNR at position 0")
    p.add_argument("--slope-db-per-m", type=float, default=-0.03,
                   help="transmission-loss decay of the mean")
    p.add_argument("--sigma-db", type=float, default=2.0, help="shadowing std dev")
    p.add_argument("--correlation", type=float, default=0.95,
                   help="per-slot AR(1) shadowing correlation in [0, 1)")
    p.add_argument("--speed", type=float, default=10.0, help="receiver speed m/s")
    p.add_argument("--slot-duration", type=float, default=0.005, help="slot duration s")
    p.add_argument("--run-id", default="synth", help="run label stored in memory only")
    _add_geometry_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="fit the location-dependent model from trace CSVs",
                       formatter_class=fmt)
    p.add_argument("--trace", action="append", required=True,
                   help="input trace CSV (repeat for multiple runs)")
    p.add_argument("--interval-m", type=float, required=True, help="distance interval length")
    p.add_argument("--states", type=int, default=4, help="number of states (power of two)")
    p.add_argument("--seed", type=int, default=None,
                   help="accepted for interface uniformity; fitting is deterministic")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--fit-report", default=None, help="optional per-window AICc report CSV")
    p.add_argument("--thresholds-out", default=None, help="optional threshold report CSV")
    p.add_argument("--window-wavelengths", type=int, default=40,
                   help="distribution-fit window length in carrier wavelengths")
    p.add_argument("--slot-duration", type=float, default=0.005,
                   help="slot duration metadata (the trace CSV does not carry it)")
    _add_geometry_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("thresholds", help="export a model's threshold report CSV",
                       formatter_class=fmt)
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--out", required=True, help="output threshold CSV path")
    p.add_argument("--trace", action="append", default=None,
                   help="optional training trace CSV(s); enables the distortion column "
                        "(the model file does not carry the fitted densities)")
    p.set_defaults(func=_cmd_thresholds)

    p = sub.add_parser("simulate", help="simulate a trace CSV from a model",
                       formatter_class=fmt)
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--speed", type=float, default=10.0, help="receiver speed m/s")
    p.add_argument("--seed", type=int, required=True, help="PCG64 seed")
    p.add_argument("--out", required=True, help="output trace CSV path")
    p.add_argument("--dither", choices=DITHER_MODES, default="uniform",
                   help="emit representatives with uniform in-cell dither, or bare")
    p.add_argument("--meta", default=None,
                   help="sidecar metadata path (default: <out>.meta)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("validate", help="compare a model against a held-out trace",
                       formatter_class=fmt)
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--heldout", required=True, help="held-out trace CSV path")
    p.add_argument("--speed", type=float, default=10.0, help="simulation speed m/s")
    p.add_argument("--n-runs", type=int, default=4, help="simulation runs to average")
    p.add_argument("--seed", type=int, required=True, help="PCG64 seed (split per run)")
    p.add_argument("--dither", choices=DITHER_MODES, default="uniform")
    p.add_argument("--bin-width", type=float, default=None,
                   help="position bin width in meters (default: one carrier wavelength)")
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>_mse.csv, <prefix>_matrices.csv, <prefix>_overlay.csv")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("sweep", help="fit and score a list of interval lengths",
                       formatter_class=fmt)
    p.add_argument("--trace", action="append", required=True,
                   help="training trace CSV (repeat for multiple runs)")
    p.add_argument("--heldout", default=None,
                   help="held-out trace CSV (default: the first training trace)")
    p.add_argument("--intervals", default="5,10,20,25,40,50,100,300",
                   help="comma-separated interval lengths in meters")
    p.add_argument("--states", type=int, default=4, help="number of states (power of two)")
    p.add_argument("--seed", type=int, required=True, help="PCG64 seed (split per run)")
    p.add_argument("--speed", type=float, default=10.0, help="simulation speed m/s")
    p.add_argument("--n-runs", type=int, default=4, help="simulation runs per sweep point")
    p.add_argument("--dither", choices=DITHER_MODES, default="uniform")
    p.add_argument("--bin-width", type=float, default=None,
                   help="position bin width in meters (default: one carrier wavelength)")
    p.add_argument("--slot-duration", type=float, default=0.005,
                   help="slot duration metadata (the trace CSV does not carry it)")
    p.add_argument("--out", required=True, help="output MSE sweep CSV path")
    _add_geometry_flags(p)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (TraceFormatError, ModelValidationError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
