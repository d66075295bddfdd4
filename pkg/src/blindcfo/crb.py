"""Stochastic lower bound on the CFO estimates under a Gaussian model.

The received frame is approximated as zero-mean complex Gaussian with
covariance C = A A^H + sigma2 I, parameterized by the CFOs (wanted), the
delays and the noise power (nuisance).  The information matrix for T
snapshots follows the standard trace form

    FIM[l, n] = T * Tr(dC/da_l C^{-1} dC/da_n C^{-1})

which factorizes through whitened derivative vectors g_l = vec(C^{-1/2}
(dC/da_l) C^{-1/2}): stacking the CFO columns as G and the nuisance columns
as Delta gives the bound on the CFO block as inv(G^H Pperp_Delta G) / T with
Pperp_Delta the projector onto the orthogonal complement of Delta.  All
covariance derivatives are the analytic derivatives of the virtual channel
entries, cross-checked against finite differences in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import SystemParams, build_virtual_channel, pulse_derivative


@dataclass(frozen=True)
class CrbReport:
    """Bound evaluation with its intermediate factors.

    ``fim`` is the (2K+1) x (2K+1) information matrix per the trace form
    (parameters ordered CFOs, delays, noise power); ``G`` and ``Delta`` are
    the whitened derivative blocks; ``crb_f`` is the diagonal of the CFO
    bound for the given snapshot count.
    """

    C_y: np.ndarray
    G: np.ndarray
    Delta: np.ndarray
    crb_f: np.ndarray
    fim: np.ndarray


def covariance(A, sigma2_w):
    """Snapshot covariance A A^H + sigma2 I (unit-power uncorrelated inputs)."""
    A = np.asarray(A)
    return A @ A.conj().T + sigma2_w * np.eye(A.shape[0])


def _column_dfreq(params: SystemParams, A, k):
    """Derivative of mixing column k w.r.t. its normalized CFO: j 2 pi m ramp."""
    m = np.arange(1, params.P + 1)
    return 2j * np.pi * m * A[:, k]


def _column_ddelay(params: SystemParams, k):
    """Derivative of mixing column k w.r.t. its delay: fade ramp times -p'."""
    m = np.arange(1, params.P + 1)
    ramp = params.a[k] * np.exp(2j * np.pi * m * params.f[k])
    return ramp * (-pulse_derivative(m / params.P * params.Ts - params.tau[k], params.Ts))


def _sandwich(A, col, k):
    """dC from perturbing mixing column k: col e_k^H A^H + A e_k col^H."""
    D = np.zeros_like(A)
    D[:, k] = col
    return D @ A.conj().T + A @ D.conj().T


def dcov_df(params: SystemParams, k):
    """P x P derivative of the covariance w.r.t. normalized CFO f_k (Hermitian)."""
    if not 0 <= k < params.K:
        raise IndexError(f"user index {k} out of range for K={params.K}")
    A = build_virtual_channel(params).A
    return _sandwich(A, _column_dfreq(params, A, k), k)


def dcov_dtau(params: SystemParams, k):
    """P x P derivative of the covariance w.r.t. delay tau_k (Hermitian)."""
    if not 0 <= k < params.K:
        raise IndexError(f"user index {k} out of range for K={params.K}")
    A = build_virtual_channel(params).A
    return _sandwich(A, _column_ddelay(params, k), k)


def _inv_sqrt_hermitian(C):
    w, U = np.linalg.eigh(C)
    if w[0] <= 0:
        raise np.linalg.LinAlgError("covariance not positive definite")
    return (U / np.sqrt(w)) @ U.conj().T


def _near_singular(H, rtol=1e-10):
    w = np.abs(np.linalg.eigvalsh(H))
    return w.min() <= rtol * w.max()


def crb_report(params: SystemParams, T) -> CrbReport:
    """Evaluate the CFO bound and its factors for T snapshots."""
    if params.sigma2_w <= 0:
        raise ValueError("bound requires sigma2_w > 0 (covariance must be invertible)")
    if T < 1:
        raise ValueError("snapshot count T must be >= 1")
    K, P = params.K, params.P
    A = build_virtual_channel(params).A
    C = covariance(A, params.sigma2_w)
    Cinv_h = _inv_sqrt_hermitian(C)

    derivs = [_sandwich(A, _column_dfreq(params, A, k), k) for k in range(K)]
    derivs += [_sandwich(A, _column_ddelay(params, k), k) for k in range(K)]
    derivs.append(np.eye(P, dtype=complex))  # d/d sigma2

    cols = np.column_stack([(Cinv_h @ D @ Cinv_h).reshape(-1) for D in derivs])
    fim = T * np.real(cols.conj().T @ cols)

    G = cols[:, :K]
    Delta = cols[:, K:]
    gram_d = Delta.conj().T @ Delta
    if _near_singular(gram_d):
        raise np.linalg.LinAlgError("nuisance FIM singular: degenerate scenario")
    proj = Delta @ np.linalg.solve(gram_d, Delta.conj().T)
    info = np.real(G.conj().T @ (G - proj @ G))
    if _near_singular(info):
        raise np.linalg.LinAlgError(
            "CFO information singular after nuisance projection: scenario "
            "unidentifiable (e.g. P^2 < 2K+1 covariance degrees of freedom)"
        )
    crb = np.linalg.inv(info) / T
    return CrbReport(C_y=C, G=G, Delta=Delta, crb_f=np.diag(crb).copy(), fim=fim)


def crb_f(params: SystemParams, T):
    """Diagonal of the CFO bound (one variance floor per user) for T snapshots."""
    return crb_report(params, T).crb_f
