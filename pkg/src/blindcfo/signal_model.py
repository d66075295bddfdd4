"""Scenario generation and synthesis of the oversampled multi-user baseband signal.

K users transmit pulse-shaped symbol streams through flat quasi-static fades,
each with its own carrier frequency offset and sub-sample delay.  Sampling the
sum at P samples per symbol and stacking the P polyphase branches turns the
superposition into a time-invariant P x K mixture driven by per-user rotating
symbol streams: column i of the received frame is

    y(i) = A @ s_tilde(i) + w(i),   s_tilde_k(i) = s_k(i) * exp(j 2 pi f_k i P)

where A is the virtual channel matrix built by :func:`build_virtual_channel`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Unit-power 4QAM alphabet, ordered by angle in [0, 2pi).
QAM4_POINTS = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)

CONSTELLATIONS = {"4qam": QAM4_POINTS}


def constellation_points(name):
    """Return the unit-power alphabet for a named constellation."""
    key = str(name).lower()
    try:
        return CONSTELLATIONS[key]
    except KeyError:
        raise ValueError(
            f"unsupported constellation {name!r}; supported: {sorted(CONSTELLATIONS)}"
        ) from None


@dataclass(frozen=True)
class SystemParams:
    """Ground-truth scenario for one packet.

    Attributes
    ----------
    K : int
        Number of users.
    P : int
        Oversampling factor (polyphase branches per symbol), P >= K.
    f : ndarray, shape (K,)
        Normalized CFOs in cycles per oversampled sample, |f_k| <= 0.5.
    tau : ndarray, shape (K,)
        Path delays in seconds, 0 <= tau_k < Ts / P.
    a : ndarray, shape (K,)
        Complex fading gains (carry the per-user phase offset).
    sigma2_w : float
        Noise variance per complex sample.
    N : int
        Packet length in symbols.
    Ts : float
        Symbol period in seconds.
    """

    K: int
    P: int
    f: np.ndarray
    tau: np.ndarray
    a: np.ndarray
    sigma2_w: float
    N: int
    Ts: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "f", np.atleast_1d(np.asarray(self.f, dtype=float)))
        object.__setattr__(self, "tau", np.atleast_1d(np.asarray(self.tau, dtype=float)))
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=complex)))
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.P < self.K:
            raise ValueError(f"oversampling factor P={self.P} must be >= K={self.K}")
        if self.f.shape != (self.K,) or self.tau.shape != (self.K,) or self.a.shape != (self.K,):
            raise ValueError("f, tau, a must all have shape (K,)")
        if np.any(np.abs(self.f) > 0.5):
            raise ValueError("normalized CFOs must satisfy |f_k| <= 0.5")
        if np.any(self.tau < 0) or np.any(self.tau >= self.Ts / self.P):
            raise ValueError("delays must satisfy 0 <= tau_k < Ts/P (pulse-overlap condition)")
        if self.sigma2_w < 0:
            raise ValueError("sigma2_w must be >= 0")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.Ts <= 0:
            raise ValueError("Ts must be > 0")


@dataclass(frozen=True)
class SymbolFrame:
    """K x N matrix of transmitted constellation symbols."""

    s: np.ndarray
    constellation: str = "4qam"

    @property
    def K(self):
        return self.s.shape[0]

    @property
    def N(self):
        return self.s.shape[1]


@dataclass(frozen=True)
class ChannelMatrix:
    """P x K virtual mixing matrix; entry (m, k) couples branch m to user k."""

    A: np.ndarray

    @property
    def P(self):
        return self.A.shape[0]

    @property
    def K(self):
        return self.A.shape[1]


@dataclass(frozen=True)
class SampleFrame:
    """P x N matrix of received polyphase samples; column i belongs to symbol i."""

    y: np.ndarray

    @property
    def P(self):
        return self.y.shape[0]

    @property
    def N(self):
        return self.y.shape[1]


def pulse_value(t, Ts=1.0):
    """Hamming-window transmit pulse, supported on [0, Ts].

    Returns 0.54 - 0.46*cos(2 pi t / Ts) inside the support and exactly 0
    outside.  Total function: accepts scalars or arrays.
    """
    t = np.asarray(t, dtype=float)
    inside = (t >= 0.0) & (t <= Ts)
    out = np.where(inside, 0.54 - 0.46 * np.cos(2.0 * np.pi * t / Ts), 0.0)
    return out if out.ndim else float(out)


def pulse_derivative(t, Ts=1.0):
    """Derivative of :func:`pulse_value` w.r.t. t, one-sided at the endpoints."""
    t = np.asarray(t, dtype=float)
    inside = (t >= 0.0) & (t <= Ts)
    out = np.where(inside, 0.46 * (2.0 * np.pi / Ts) * np.sin(2.0 * np.pi * t / Ts), 0.0)
    return out if out.ndim else float(out)


def generate_symbols(K, N, constellation="4qam", seed=0):
    """Draw a K x N frame of i.i.d. uniform symbols from the unit-power alphabet.

    Deterministic for a fixed seed.
    """
    if K < 1 or N < 1:
        raise ValueError("K and N must be >= 1")
    points = constellation_points(constellation)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(points), size=(K, N))
    return SymbolFrame(s=points[idx], constellation=str(constellation).lower())


def build_virtual_channel(params: SystemParams) -> ChannelMatrix:
    """Build the P x K virtual mixing matrix for a scenario.

    Entry (m, k), with branch index m = 1..P, is

        a_k * exp(j 2 pi m f_k) * p((m/P) Ts - tau_k)

    so each column is the user's fade times a phase ramp in m sampled on the
    pulse.  The delay bound tau_k < Ts/P keeps every pulse argument inside
    (0, Ts]: one symbol per sample and no inter-symbol interference.
    """
    m = np.arange(1, params.P + 1)
    ramp = np.exp(2j * np.pi * np.outer(m, params.f))
    gain = pulse_value(np.subtract.outer(m / params.P * params.Ts, params.tau), params.Ts)
    return ChannelMatrix(A=params.a[None, :] * ramp * gain)


def synthesize_received(params: SystemParams, symbols: SymbolFrame, seed=0) -> SampleFrame:
    """Synthesize the received P x N polyphase frame for one packet.

    Applies the per-user rotation exp(j 2 pi f_k i P) to the symbols, mixes
    through the virtual channel, and adds i.i.d. circular complex Gaussian
    noise of total variance sigma2_w per sample.  Deterministic given seed.
    """
    if symbols.s.shape != (params.K, params.N):
        raise ValueError(
            f"symbol frame shape {symbols.s.shape} does not match (K, N)="
            f"{(params.K, params.N)}"
        )
    A = build_virtual_channel(params).A
    i = np.arange(params.N)
    s_tilde = symbols.s * np.exp(2j * np.pi * params.P * np.outer(params.f, i))
    y = A @ s_tilde
    if params.sigma2_w > 0:
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((params.P, params.N)) + 1j * rng.standard_normal(
            (params.P, params.N)
        )
        y = y + np.sqrt(params.sigma2_w / 2.0) * w
    return SampleFrame(y=y)
