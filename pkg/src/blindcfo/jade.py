"""Blind identification of the mixing matrix from fourth-order statistics.

Pipeline (complex-valued JADE):

1. whiten the P-branch frame down to the K-dimensional signal subspace,
   subtracting the noise floor estimated from the P-K smallest eigenvalues
   of the sample covariance;
2. estimate the K^2 x K^2 quadricovariance (fourth-order cumulants with two
   conjugated arguments) of the whitened process and take its eigen-matrices;
3. jointly diagonalize the eigenvalue-weighted eigen-matrices with complex
   Givens rotations;
4. un-whiten the resulting unitary basis to obtain the mixing estimate and
   equalize the frame with its least-squares inverse.

The output mixing matrix equals the true one up to a column permutation and
per-column complex scales; the equalized streams inherit the same shuffle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_model import SampleFrame

# Minimum snapshots per source for usable fourth-order statistics.
MIN_SNAPSHOTS_PER_SOURCE = 50

# |normalized kurtosis| below this flags a source as unusably close to Gaussian.
KURTOSIS_FLOOR = 0.1


class SeparationError(RuntimeError):
    """Raised when the frame cannot support a blind separation."""


@dataclass(frozen=True)
class SeparationResult:
    """Mixing estimate plus the decoupled (still rotating) streams.

    Attributes
    ----------
    A_hat : ndarray, shape (P, K)
        Estimated mixing matrix (true matrix times permutation and diagonal).
    s_tilde_hat : ndarray, shape (K, N)
        Least-squares equalized streams, one rotating user stream per row.
    whitener : ndarray, shape (K, P)
        Signal-subspace whitening matrix (diagnostic).
    sigma2_hat : float
        Noise variance estimate used during whitening (0 when P == K).
    stream_kurtosis : ndarray, shape (K,)
        Normalized empirical kurtosis of each equalized stream.
    kurtosis_warning : bool
        True when any stream's kurtosis magnitude is below the usable floor,
        i.e. the nonzero-kurtosis source assumption looks violated.
    """

    A_hat: np.ndarray
    s_tilde_hat: np.ndarray
    whitener: np.ndarray
    sigma2_hat: float
    stream_kurtosis: np.ndarray
    kurtosis_warning: bool


def joint_diagonalize(matrices, tol=1e-8, max_sweeps=100):
    """Approximately diagonalize a set of square matrices by one unitary V.

    Jacobi-style sweeps over index pairs; each step applies the complex Givens
    rotation maximizing the summed squared diagonal of the rotated set.
    Terminates when every rotation angle in a full sweep falls below ``tol``
    (or after ``max_sweeps``).  Returns V with V^H M V approximately diagonal
    for every input M; for a single Hermitian matrix this is its eigenbasis.
    """
    ms = [np.array(M, dtype=complex, copy=True) for M in matrices]
    if not ms:
        raise ValueError("need at least one matrix to diagonalize")
    n = ms[0].shape[0]
    for M in ms:
        if M.ndim != 2 or M.shape != (n, n):
            raise ValueError("all matrices must be square with identical dimensions")
    V = np.eye(n, dtype=complex)
    if n == 1:
        return V
    stack = np.stack(ms)  # (R, n, n)
    for _ in range(max_sweeps):
        largest = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                # Rotation statistics for the (p, q) plane across the set.
                h = np.stack(
                    [
                        stack[:, p, p] - stack[:, q, q],
                        stack[:, p, q] + stack[:, q, p],
                        1j * (stack[:, q, p] - stack[:, p, q]),
                    ]
                )
                G3 = np.real(h @ h.conj().T)
                w3, vecs = np.linalg.eigh(G3)
                if w3[-1] <= 0.0:
                    continue  # nothing to gain in this plane
                x, y, z = vecs[:, -1]
                if x < 0.0:
                    x, y, z = -x, -y, -z
                r = np.sqrt(x * x + y * y + z * z)
                c = np.sqrt((x + r) / (2.0 * r))
                s = (y - 1j * z) / np.sqrt(2.0 * r * (x + r))
                angle = float(np.arcsin(min(abs(s), 1.0)))
                largest = max(largest, angle)
                if angle > tol:
                    G = np.array([[c, -np.conj(s)], [s, c]])
                    stack[:, [p, q], :] = np.einsum(
                        "ab,rbn->ran", G.conj().T, stack[:, [p, q], :]
                    )
                    stack[:, :, [p, q]] = stack[:, :, [p, q]] @ G
                    V[:, [p, q]] = V[:, [p, q]] @ G
        if largest <= tol:
            break
    return V


def _quadricovariance(Z):
    """K^2 x K^2 Hermitian matrix of fourth-order cumulants of the rows of Z.

    Entry ((i,j),(k,l)) holds Cum(z_i, z_j*, z_k*, z_l): the fourth moment
    E[z_i z_j* z_k* z_l] minus its three Gaussian pairings.
    """
    K, N = Z.shape
    R = Z @ Z.conj().T / N
    C = Z @ Z.T / N
    E4 = np.einsum("it,jt,kt,lt->ijkl", Z, Z.conj(), Z.conj(), Z, optimize=True) / N
    Q = (
        E4
        - np.einsum("ij,lk->ijkl", R, R)
        - np.einsum("ik,lj->ijkl", R, R)
        - np.einsum("il,jk->ijkl", C, C.conj())
    )
    return Q.reshape(K * K, K * K)


def _normalized_kurtosis(z):
    """Empirical Cum(z, z*, z, z*) scaled by squared power (unit-power -> -1 for 4QAM)."""
    p2 = np.mean(np.abs(z) ** 2)
    if p2 == 0:
        return 0.0
    m4 = np.mean(np.abs(z) ** 4)
    c2 = np.mean(z * z)
    kurt = m4 - 2.0 * p2**2 - abs(c2) ** 2
    return float(kurt / p2**2)


def estimate_mixing(frame, K) -> SeparationResult:
    """Blindly estimate the P x K mixing matrix from a received frame.

    Parameters
    ----------
    frame : SampleFrame or ndarray, shape (P, N)
        Received polyphase samples.
    K : int
        Number of sources to extract (K <= P).

    Raises
    ------
    SeparationError
        If N < 50*K (fourth-order statistics too unstable) or the sample
        covariance does not expose K signal dimensions above the noise floor.
    """
    y = frame.y if isinstance(frame, SampleFrame) else np.asarray(frame)
    P, N = y.shape
    if K < 1 or K > P:
        raise ValueError(f"K={K} must satisfy 1 <= K <= P={P}")
    if N < MIN_SNAPSHOTS_PER_SOURCE * K:
        raise SeparationError(
            f"insufficient snapshots: N={N} < {MIN_SNAPSHOTS_PER_SOURCE}*K={MIN_SNAPSHOTS_PER_SOURCE * K}"
        )

    cov = y @ y.conj().T / N
    eigval, eigvec = np.linalg.eigh(cov)  # ascending
    sigma2_hat = float(np.mean(eigval[:-K])) if P > K else 0.0
    signal_power = eigval[-K:] - sigma2_hat
    if signal_power[0] <= max(1e-12 * max(eigval[-1], 0.0), 0.0):
        raise SeparationError("insufficient excitation: sample covariance rank < K")

    basis = eigvec[:, -K:]
    whitener = (basis / np.sqrt(signal_power)).conj().T  # K x P
    unwhitener = basis * np.sqrt(signal_power)  # P x K
    Z = whitener @ y

    quad = _quadricovariance(Z)
    lam, U = np.linalg.eigh(quad)
    eigen_matrices = [lam[r] * U[:, r].reshape(K, K) for r in range(K * K)]
    V = joint_diagonalize(eigen_matrices)

    A_hat = unwhitener @ V
    streams = separate(A_hat, y)
    kurt = np.array([_normalized_kurtosis(streams[k]) for k in range(K)])
    return SeparationResult(
        A_hat=A_hat,
        s_tilde_hat=streams,
        whitener=whitener,
        sigma2_hat=sigma2_hat,
        stream_kurtosis=kurt,
        kurtosis_warning=bool(np.any(np.abs(kurt) < KURTOSIS_FLOOR)),
    )


def separate(result_or_A, frame):
    """Least-squares equalization: recover K decoupled streams from the frame.

    Computes (A^H A)^{-1} A^H y columnwise.  Each output stream equals one
    user's rotating symbol stream scaled by the inverse of that column's
    scalar ambiguity, asymptotically.
    """
    A = result_or_A.A_hat if isinstance(result_or_A, SeparationResult) else np.asarray(result_or_A)
    y = frame.y if isinstance(frame, SampleFrame) else np.asarray(frame)
    gram = A.conj().T @ A
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise SeparationError("mixing estimate is rank deficient; cannot equalize")
    return np.linalg.solve(gram, A.conj().T @ y)
