"""Blind estimation of multiple carrier frequency offsets in a distributed
multi-user antenna system, with symbol recovery and bound evaluation.

The received baseband signal is oversampled and its polyphase branches are
treated as outputs of a virtual multichannel mixture; fourth-order blind
identification recovers the mixing matrix, whose column phases yield per-user
CFO estimates over the full identifiable range.  A decision-directed tracker
removes the residual rotation, and a Monte-Carlo harness benchmarks the
estimator against the stochastic lower bound.
"""
from .cfo import CfoEstimate, PhaseMatrix, compensate, fold_frequency, ls_cfo_fit, phase_matrix
from .crb import CrbReport, covariance, crb_f, crb_report, dcov_df, dcov_dtau
from .harness import (
    ExperimentConfig,
    TrialResult,
    ber,
    mse_cfo,
    resolve_ambiguity,
    run_trial,
    sweep,
    write_csv,
)
from .jade import (
    SeparationError,
    SeparationResult,
    estimate_mixing,
    joint_diagonalize,
    separate,
)
from .pll import BACKEND, PllConfig, PllTrace, pll_track, slice_symbol
from .signal_model import (
    ChannelMatrix,
    QAM4_POINTS,
    SampleFrame,
    SymbolFrame,
    SystemParams,
    build_virtual_channel,
    generate_symbols,
    pulse_derivative,
    pulse_value,
    synthesize_received,
)

__version__ = "0.1.0"
