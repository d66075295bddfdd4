"""Config-driven Monte-Carlo experiments over the blind recovery pipeline.

A sweep iterates the Cartesian product of the list-valued settings (P, N,
SNR), draws ``n_channels`` independent channel realizations per cell and runs
``n_mc`` packets per channel.  Channel draws are keyed by the master seed and
the channel index only, so every cell sees the same channel population; that
keeps per-cell aggregates comparable across N and SNR and lets the bound
(which scales exactly as 1/N per channel) serve as a slope reference.

Each trial runs the full blind chain (separation, phase-slope fit,
derotation, decision-directed tracking), aligns the outcome to the ground
truth only for metric computation, and reports:

* ``mse_cfo``: (1/K) sum_k [(fhat_k - f_k) P]^2 with the error folded into
  [-0.5, 0.5) first -- the oversampling-invariant estimator metric;
* ``ber``: Gray-mapped bit error rate of the post-loop decisions;
* flags for audit: failed separations, residuals beyond the tracker's
  quarter-symmetry pull-in bound, and coarse fits whose unwrapped phases
  deviate from linearity (untrustworthy slope).  Flagged trials stay in the
  BER average (the symbol path still ran) but are excluded from the MSE
  average, with counts reported per cell.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cfo import compensate, fold_frequency, ls_cfo_fit, phase_matrix
from .crb import crb_f as crb_f_diag
from .jade import SeparationError, estimate_mixing
from .pll import PllConfig, pll_track, slice_symbol
from .signal_model import (
    SampleFrame,
    SymbolFrame,
    SystemParams,
    build_virtual_channel,
    constellation_points,
    generate_symbols,
    synthesize_received,
)

SUPPORTED_PULSES = ("hamming",)

# Residual rotation at or beyond this bound (|P*(fhat-f)|) aliases in the
# 4-fold-symmetric tracker: counted as a lock failure.
PULL_IN_BOUND = 1.0 / 8.0

# RMS deviation (radians) of the unwrapped phases from the fitted line above
# which the coarse estimate is flagged as untrustworthy.
PHASE_RESIDUAL_LIMIT = 0.35

CSV_COLUMNS = (
    "method", "K", "P", "N", "snr_db", "channel_id", "mc_id", "user",
    "f_true", "f_hat", "mse_cfo", "ber", "crb_f", "flags",
)

FLAG_SEPARATION = "separation_failed"
FLAG_AMBIGUITY = "pll_ambiguity"
FLAG_PHASE_FIT = "phase_fit_outlier"
FLAG_KURTOSIS = "weak_kurtosis"


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep settings; P, N and snr_db may be scalars or lists.

    ``cfo_range_mode`` selects the CFO draw: "paper" draws the normalized
    offsets uniformly over one oversampled bin [-1/(2P), 1/(2P)); "full"
    stresses the whole identifiable range (-0.5, 0.5).  ``snr_db`` may be
    ``inf`` for noiseless packets.
    """

    K: int = 2
    P: object = 4
    N: object = 1024
    snr_db: object = 30.0
    Ts: float = 1.0
    n_channels: int = 300
    n_mc: int = 20
    constellation: str = "4qam"
    pulse: str = "hamming"
    cfo_range_mode: str = "paper"
    seed: int = 0
    pll: PllConfig = field(default_factory=PllConfig)

    def __post_init__(self):
        for name in ("P", "N", "snr_db"):
            value = getattr(self, name)
            seq = tuple(value) if isinstance(value, (list, tuple)) else (value,)
            if not seq:
                raise ValueError(f"{name} list must be non-empty")
            object.__setattr__(self, name, seq)
        if self.K < 1 or self.n_channels < 1 or self.n_mc < 1:
            raise ValueError("K, n_channels and n_mc must all be >= 1")
        if self.pulse not in SUPPORTED_PULSES:
            raise ValueError(f"unsupported pulse {self.pulse!r}; supported: {SUPPORTED_PULSES}")
        if self.cfo_range_mode not in ("paper", "full"):
            raise ValueError("cfo_range_mode must be 'paper' or 'full'")
        constellation_points(self.constellation)  # validates the name

    def cells(self):
        """Scalar-valued configs for every (P, N, snr_db) combination."""
        for P, N, snr in itertools.product(self.P, self.N, self.snr_db):
            yield replace(self, P=P, N=N, snr_db=snr)


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one packet, aligned to the ground truth."""

    f_true: np.ndarray
    f_hat: np.ndarray
    f_hat_refined: np.ndarray
    mse_cfo: float
    ber: float
    lock_failures: int
    flags: tuple


def channel_seed(master_seed, channel_id):
    """Seed for a channel draw; independent of the sweep cell by design."""
    return (int(master_seed), 0x5EED, int(channel_id))


def noise_seed(master_seed, channel_id, mc_id):
    """Seed for the symbols-and-noise draw of one packet."""
    return (int(master_seed), 0x4015E, int(channel_id), int(mc_id))


def draw_scenario(cfg: ExperimentConfig, seed) -> SystemParams:
    """Draw one ground-truth scenario: fades, delays, CFOs and noise power.

    Fades are unit-variance circular complex Gaussian, delays uniform over
    one oversampling period, CFOs per ``cfo_range_mode``; the noise variance
    realizes SNR = E||A s~||^2 / (P sigma2) for the drawn channel.
    """
    P = _scalar(cfg.P, "P")
    N = _scalar(cfg.N, "N")
    snr_db = _scalar(cfg.snr_db, "snr_db")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    a = (rng.standard_normal(cfg.K) + 1j * rng.standard_normal(cfg.K)) / np.sqrt(2.0)
    tau = rng.uniform(0.0, cfg.Ts / P, cfg.K)
    if cfg.cfo_range_mode == "paper":
        f = rng.uniform(-0.5 / P, 0.5 / P, cfg.K)
    else:
        f = rng.uniform(-0.5, 0.5, cfg.K)
    params = SystemParams(K=cfg.K, P=P, f=f, tau=tau, a=a, sigma2_w=0.0, N=N, Ts=cfg.Ts)
    sigma2 = noise_variance_for_snr(params, snr_db)
    return replace(params, sigma2_w=sigma2)


def noise_variance_for_snr(params: SystemParams, snr_db):
    """Noise variance realizing the SNR convention E||A s~||^2 / (P sigma2)."""
    if np.isinf(snr_db):
        return 0.0
    A = build_virtual_channel(params).A
    signal_power = float(np.sum(np.abs(A) ** 2))
    return signal_power / (params.P * 10.0 ** (snr_db / 10.0))


def resolve_ambiguity(est, truth, constellation="4qam"):
    """Undo the trivial blind ambiguities for metric computation only.

    Picks the stream permutation maximizing the summed correlation magnitudes
    against the true symbol streams (exhaustive for K <= 6, greedy above) and
    quantizes each stream's phase offset to the constellation's rotational
    symmetry.  Returns (permutation, phases, aligned) where ``aligned[k]``
    estimates ``truth[k]``.
    """
    est = np.asarray(est)
    truth = np.asarray(truth)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: est {est.shape} vs truth {truth.shape}")
    K = est.shape[0]
    inner = est @ truth.conj().T  # inner[j, k] = <est_j, truth_k>
    gain = np.abs(inner)
    if K <= 6:
        best, perm = -1.0, tuple(range(K))
        for candidate in itertools.permutations(range(K)):
            score = sum(gain[candidate[k], k] for k in range(K))
            if score > best:
                best, perm = score, candidate
    else:
        perm = [-1] * K
        taken = set()
        for j, k in sorted(np.ndindex(K, K), key=lambda jk: -gain[jk]):
            if perm[k] < 0 and j not in taken:
                perm[k] = j
                taken.add(j)
        perm = tuple(perm)
    order = len(constellation_points(constellation))  # rotational symmetry of QAM4
    step = 2.0 * np.pi / order
    phases = np.array(
        [step * np.round(np.angle(inner[perm[k], k]) / step) % (2.0 * np.pi) for k in range(K)]
    )
    aligned = est[list(perm)] * np.exp(-1j * phases)[:, None]
    return np.array(perm), phases, aligned


def mse_cfo(f_hat, f_true, P):
    """(1/K) sum_k [(fhat_k - f_k) P]^2 with differences folded into [-0.5, 0.5)."""
    f_hat = np.atleast_1d(np.asarray(f_hat, dtype=float))
    f_true = np.atleast_1d(np.asarray(f_true, dtype=float))
    if f_hat.shape != f_true.shape:
        raise ValueError("estimate and truth vectors must have equal length")
    err = fold_frequency(f_hat - f_true)
    return float(np.mean((err * P) ** 2))


def ber(decisions, truth):
    """Gray-mapped bit error rate: sign of I and Q carry one bit each."""
    decisions = np.asarray(decisions)
    truth = np.asarray(truth)
    if decisions.shape != truth.shape:
        raise ValueError("decision and truth frames must have equal shape")
    errors = np.count_nonzero((decisions.real < 0) != (truth.real < 0))
    errors += np.count_nonzero((decisions.imag < 0) != (truth.imag < 0))
    return errors / (2.0 * truth.size)


def _scalar(value, name):
    if isinstance(value, tuple):
        if len(value) != 1:
            raise ValueError(f"{name} must be scalar here (got list {value})")
        return value[0]
    return value


def _phase_fit_residual(psi):
    """Worst per-column RMS deviation of the unwrapped phases from a line."""
    Psi = psi.Psi
    P = Psi.shape[0]
    design = np.column_stack([np.arange(1, P + 1, dtype=float), np.ones(P)])
    _, res, _, _ = np.linalg.lstsq(design, Psi, rcond=None)
    if res.size == 0:  # P == 2: interpolating fit
        return 0.0
    return float(np.sqrt(np.max(res) / P))


def run_trial(cfg: ExperimentConfig, chan_seed, noi_seed) -> TrialResult:
    """Synthesize one packet and run the full blind chain on it.

    Deterministic given the two seeds.  A failed separation is reported as a
    flagged result with NaN metrics rather than an exception.
    """
    params = draw_scenario(cfg, chan_seed)
    ss = np.random.SeedSequence(noi_seed)
    sym_seed, w_seed = ss.spawn(2)
    symbols = generate_symbols(cfg.K, params.N, cfg.constellation, seed=sym_seed)
    frame = synthesize_received(params, symbols, seed=w_seed)
    return run_pipeline(cfg, params, symbols, frame)


def run_pipeline(cfg: ExperimentConfig, params: SystemParams, symbols: SymbolFrame,
                 frame: SampleFrame) -> TrialResult:
    """Blind chain on an existing frame; ground truth enters metrics only."""
    P = params.P
    flags = []
    try:
        separation = estimate_mixing(frame, cfg.K)
    except SeparationError:
        nan = np.full(cfg.K, np.nan)
        return TrialResult(
            f_true=params.f.copy(), f_hat=nan, f_hat_refined=nan.copy(),
            mse_cfo=float("nan"), ber=float("nan"),
            lock_failures=0, flags=(FLAG_SEPARATION,),
        )
    if separation.kurtosis_warning:
        flags.append(FLAG_KURTOSIS)

    psi = phase_matrix(separation.A_hat)
    fit = ls_cfo_fit(psi)
    if _phase_fit_residual(psi) > PHASE_RESIDUAL_LIMIT:
        flags.append(FLAG_PHASE_FIT)

    derotated = compensate(separation.s_tilde_hat, fit, P)
    corrected = np.empty_like(derotated)
    refined = np.empty(cfg.K)
    for j in range(cfg.K):
        trace = pll_track(derotated[j], cfg.pll)
        corrected[j] = trace.corrected
        refined[j] = fold_frequency(fit.f_hat[j] + trace.freq / (2.0 * np.pi * P))

    perm, _, aligned = resolve_ambiguity(corrected, symbols.s, cfg.constellation)
    f_hat = fit.f_hat[perm]
    f_refined = refined[perm]
    decisions = slice_symbol(aligned, cfg.constellation)

    residual = np.abs(fold_frequency(f_hat - params.f) * P)
    lock_failures = int(np.count_nonzero(residual >= PULL_IN_BOUND))
    if lock_failures:
        flags.append(FLAG_AMBIGUITY)

    return TrialResult(
        f_true=params.f.copy(),
        f_hat=f_hat,
        f_hat_refined=f_refined,
        mse_cfo=mse_cfo(f_hat, params.f, P),
        ber=ber(decisions, symbols.s),
        lock_failures=lock_failures,
        flags=tuple(flags),
    )


def _run_cell_trial(args):
    cfg, channel_id, mc_id = args
    result = run_trial(
        cfg,
        channel_seed(cfg.seed, channel_id),
        noise_seed(cfg.seed, channel_id, mc_id),
    )
    return channel_id, mc_id, result


_EXCLUDING_FLAGS = frozenset({FLAG_SEPARATION, FLAG_AMBIGUITY, FLAG_PHASE_FIT})


def sweep(cfg: ExperimentConfig, threads=1):
    """Run the full grid; returns (rows, per-cell aggregates).

    ``rows`` hold one dict per (cell, channel, mc, user) in deterministic
    order and map 1:1 to the CSV schema; aggregates carry the per-cell means
    with flagged-trial accounting.  The bound column is the per-user CRB
    diagonal scaled by P^2, directly comparable to ``mse_cfo``.

    MSE exclusion is grid-consistent within each (P, snr_db) group: cells in
    a group share the channel population (channel draws do not depend on N),
    so a packet flagged anywhere in the group is dropped from the MSE mean of
    every cell in it.  That keeps the averaged population identical along an
    N-sweep, which is what makes the MSE curve comparable point-to-point
    against the bound (the bound scales exactly as 1/N per channel).  BER
    averages keep every trial that produced decisions.
    """
    cells = list(cfg.cells())
    results = []
    for cell in cells:
        P = _scalar(cell.P, "P")
        N = _scalar(cell.N, "N")
        snr_db = _scalar(cell.snr_db, "snr_db")

        bounds = np.full((cfg.n_channels, cfg.K), np.nan)
        if not np.isinf(snr_db):
            for c in range(cfg.n_channels):
                params = draw_scenario(cell, channel_seed(cfg.seed, c))
                try:
                    bounds[c] = P**2 * crb_f_diag(params, N)
                except np.linalg.LinAlgError:
                    pass  # bound undefined for this scenario; leave NaN

        jobs = [(cell, c, m) for c in range(cfg.n_channels) for m in range(cfg.n_mc)]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(_run_cell_trial, jobs, chunksize=8))
        else:
            outcomes = [_run_cell_trial(job) for job in jobs]
        results.append((P, N, snr_db, bounds, outcomes))

    # packets flagged anywhere in a (P, snr) group are excluded group-wide
    group_excluded = {}
    for P, N, snr_db, _, outcomes in results:
        bad = group_excluded.setdefault((P, snr_db), set())
        bad.update(
            (channel_id, mc_id)
            for channel_id, mc_id, res in outcomes
            if set(res.flags) & _EXCLUDING_FLAGS
        )

    rows = []
    aggregates = []
    for P, N, snr_db, bounds, outcomes in results:
        excluded = group_excluded[(P, snr_db)]
        kept_mse, kept_ber = [], []
        counts = {FLAG_SEPARATION: 0, FLAG_AMBIGUITY: 0, FLAG_PHASE_FIT: 0}
        for channel_id, mc_id, res in outcomes:
            for flag in counts:
                counts[flag] += flag in res.flags
            if (channel_id, mc_id) not in excluded:
                kept_mse.append(res.mse_cfo)
            if FLAG_SEPARATION not in res.flags:
                kept_ber.append(res.ber)
            flag_text = "+".join(res.flags)
            for user in range(cfg.K):
                rows.append({
                    "method": "blind", "K": cfg.K, "P": P, "N": N,
                    "snr_db": snr_db, "channel_id": channel_id, "mc_id": mc_id,
                    "user": user,
                    "f_true": res.f_true[user], "f_hat": res.f_hat[user],
                    "mse_cfo": res.mse_cfo, "ber": res.ber,
                    "crb_f": bounds[channel_id, user], "flags": flag_text,
                })
        aggregates.append({
            "K": cfg.K, "P": P, "N": N, "snr_db": snr_db,
            "n_trials": len(outcomes),
            "mean_mse_cfo": float(np.mean(kept_mse)) if kept_mse else float("nan"),
            "mean_ber": float(np.mean(kept_ber)) if kept_ber else float("nan"),
            "mean_crb_f": float(np.nanmean(bounds)) if not np.all(np.isnan(bounds)) else float("nan"),
            "n_mse_excluded": len(outcomes) - len(kept_mse),
            "n_separation_failed": counts[FLAG_SEPARATION],
            "n_pll_ambiguity": counts[FLAG_AMBIGUITY],
            "n_phase_fit_outlier": counts[FLAG_PHASE_FIT],
        })
    return rows, aggregates


def _format_value(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(rows, path):
    """Write trial rows in the fixed column order, floats at 17 significant digits."""
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_format_value(row[c]) for c in CSV_COLUMNS) + "\n")
