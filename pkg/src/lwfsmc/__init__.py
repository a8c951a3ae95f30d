"""Location-dependent finite-state Markov channel models for leaky-waveguide links.

Pipeline: ingest position-stamped SNR traces (trace), pick the SNR
distribution family per spatial window by AICc (distfit), place Lloyd-Max
thresholds per distance interval (quantizer), estimate per-interval
tridiagonal transition matrices (fsmc), simulate traces from the model
(simulate) and score the agreement against held-out data (validate).
"""

from .distfit import (CandidateFamily, FittedWindow, MleFit, SnrDistribution,
                      aicc, amplitude_from_db, dist_from_db_samples, fit_mle,
                      fit_window, fit_windows, select_family, snr_pdf)
from .errors import (ConvergenceError, DegenerateCellError, DegenerateFitError,
                     InsufficientDataError, ModelValidationError, PipelineError,
                     TraceFormatError)
from .fsmc import (FsmcModel, IntervalModel, TransitionMatrix, build_model,
                   estimate_matrix, estimate_matrix_runs, model_from_json,
                   model_to_json, read_model, states_from_trace, write_model,
                   write_threshold_report)
from .quantizer import (GaussianDbDensity, ThresholdSet, UniformDensity,
                        distortion, lloyd_max)
from .simulate import simulate_run, stationary_distribution
from .synth import GroundTruthProfile, generate_markov_trace, generate_trace
from .trace import (SnrSample, SnrTrace, TraceSegment, TrackGeometry,
                    parse_trace, partition_by_intervals, window_by_wavelengths,
                    write_trace_csv)
from .validate import (MatrixComparison, ValidationReport, child_seed,
                       compare_matrices, mse_against_trace, overlay_curves)

__version__ = "0.1.0"
