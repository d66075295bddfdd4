"""Per-user CFO recovery from the phase structure of the mixing estimate.

Each column of the mixing matrix carries a phase ramp 2 pi f_k m + phi_k over
the branch index m = 1..P.  Unwrapping the column phases and fitting a line by
least squares yields the normalized CFO as slope / 2 pi, independent of the
blind per-column phase ambiguity (which only shifts the intercept).  The fit
covers the full identifiable range |f_k| < 1/2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import ChannelMatrix


@dataclass(frozen=True)
class PhaseMatrix:
    """Unwrapped column phases of a mixing estimate.

    ``Psi[m-1, k]`` is the unwrapped phase of entry (m, k) in radians; the raw
    entry magnitudes are kept as a diagnostic because rows sampled near the
    pulse edges have small magnitude and correspondingly noisy phases.
    """

    Psi: np.ndarray
    row_magnitude: np.ndarray


@dataclass(frozen=True)
class CfoEstimate:
    """Per-user normalized CFO estimates, in the column order of the input."""

    f_hat: np.ndarray
    intercepts: np.ndarray


def fold_frequency(f):
    """Map normalized frequencies into the identifiable interval [-0.5, 0.5)."""
    return (np.asarray(f, dtype=float) + 0.5) % 1.0 - 0.5


def _unwrap_column(raw):
    """Cumulative unwrap with successive differences mapped into (-pi, pi]."""
    out = np.empty_like(raw)
    out[0] = raw[0]
    d = np.diff(raw)
    d -= 2.0 * np.pi * np.ceil((d - np.pi) / (2.0 * np.pi))
    out[1:] = raw[0] + np.cumsum(d)
    return out


def phase_matrix(A_hat) -> PhaseMatrix:
    """Elementwise argument of a mixing estimate, unwrapped down each column.

    Raises if any entry is exactly zero (its phase would be undefined); the
    pulse is nonzero at every admissible sampling offset, so a zero entry
    means a degenerate estimate, not a valid channel.
    """
    A = A_hat.A if isinstance(A_hat, ChannelMatrix) else np.asarray(A_hat)
    mags = np.abs(A)
    zeros = np.argwhere(mags == 0.0)
    if zeros.size:
        m, k = zeros[0]
        raise ValueError(f"phase undefined at entry (m={m + 1}, k={k}): zero magnitude")
    raw = np.angle(A)
    Psi = np.column_stack([_unwrap_column(raw[:, k]) for k in range(A.shape[1])])
    return PhaseMatrix(Psi=Psi, row_magnitude=mags)


def ls_cfo_fit(psi) -> CfoEstimate:
    """Least-squares line fit of each unwrapped phase column.

    With branch indices p = 1..P the slope estimate for column k is

        f_hat_k = (1 / 2 pi) * [P * sum(p * Psi_pk) - sum(p) * sum(Psi_pk)]
                  / [P * sum(p^2) - (sum p)^2]

    and the estimate is folded into [-0.5, 0.5).  The intercept (diagnostic)
    absorbs the fade phase plus the blind scalar ambiguity.
    """
    Psi = psi.Psi if isinstance(psi, PhaseMatrix) else np.asarray(psi, dtype=float)
    if Psi.ndim == 1:
        Psi = Psi[:, None]
    P = Psi.shape[0]
    if P < 2:
        raise ValueError("slope unidentifiable: need at least P=2 phase rows")
    p = np.arange(1, P + 1, dtype=float)
    sum_p = p.sum()
    den = P * np.sum(p**2) - sum_p**2
    num = P * (p @ Psi) - sum_p * Psi.sum(axis=0)
    slope = num / den / (2.0 * np.pi)
    intercept = Psi.mean(axis=0) - 2.0 * np.pi * slope * p.mean()
    return CfoEstimate(f_hat=fold_frequency(slope), intercepts=intercept)


def compensate(streams, f_hat, P):
    """Remove the estimated rotation exp(j 2 pi f_hat_k i P) from each stream.

    Stream order must match the estimate order; both inherit the same column
    shuffle from the separation stage, so this holds by construction.  With a
    residual error eps_k = f_hat_k - f_k the output still rotates by
    -2 pi eps_k P per symbol, which the tracking loop removes downstream.
    """
    z = np.atleast_2d(np.asarray(streams))
    f = f_hat.f_hat if isinstance(f_hat, CfoEstimate) else np.atleast_1d(np.asarray(f_hat, dtype=float))
    if z.shape[0] != f.shape[0]:
        raise ValueError(f"stream count {z.shape[0]} does not match estimate count {f.shape[0]}")
    i = np.arange(z.shape[1])
    out = z * np.exp(-2j * np.pi * P * np.outer(f, i))
    return out if np.asarray(streams).ndim > 1 else out[0]
