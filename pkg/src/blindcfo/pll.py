"""Decision-directed phase tracking for the compensated symbol streams.

A second-order loop (proportional gain plus frequency integrator) driven by
the nearest-constellation decision error removes the residual rotation left
by the coarse CFO stage.  Acquisition is handled by two standard receiver
techniques, both exposed through :class:`PllConfig`:

* the loop state is initialized from a fourth-power block estimate of the
  input's phase and rotation rate (modulation-free for 4QAM), whose
  unambiguous range coincides with the loop's own quarter-symmetry bound
  |P eps| < 1/8;
* the loop runs with boosted gains until an error-magnitude average drops
  below a lock threshold, then shifts once to the (narrow) tracking gains.

Rotation rates at or beyond the quarter-symmetry bound alias: the loop then
settles on a rotated constellation, which is exactly the ambiguity the coarse
estimator exists to prevent.

The per-symbol recursion is sequential by nature, so the inner loop is
implemented as a compiled extension with a pure-Python fallback selected at
import time (set ``BLINDCFO_PURE_PYTHON=1`` to force the fallback).
"""
from __future__ import annotations

import cmath
import os
from dataclasses import dataclass

import numpy as np

from .signal_model import constellation_points

try:
    from . import _tracking as _compiled
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

_FORCE_PURE = os.environ.get("BLINDCFO_PURE_PYTHON", "") not in ("", "0")
BACKEND = "compiled" if (_compiled is not None and not _FORCE_PURE) else "python"


@dataclass(frozen=True)
class PllConfig:
    """Loop gains and acquisition settings.

    ``kp``/``ki`` are the steady-state (tracking) gains; ``acq_kp``/``acq_ki``
    apply until lock is detected.  Lock detection: an exponential moving
    average of |error| (coefficient ``lock_alpha``) falling below
    ``lock_threshold`` after at least ``min_acquire`` symbols, which is also
    the length of the fourth-power initialization block.  Setting both kp and
    ki to zero turns the loop into an exact pass-through.
    """

    kp: float = 0.05
    ki: float = 0.005
    constellation: str = "4qam"
    acq_kp: float = 0.6
    acq_ki: float = 0.02
    lock_threshold: float = 0.25
    lock_alpha: float = 1.0 / 64.0
    min_acquire: int = 64

    def __post_init__(self):
        if self.kp == 0.0 and self.ki == 0.0:
            return  # pass-through mode
        if not (self.kp > 0.0 and 0.0 <= self.ki < self.kp):
            raise ValueError("loop gains must satisfy kp > 0 and 0 <= ki < kp")
        if not (self.acq_kp > 0.0 and 0.0 <= self.acq_ki < self.acq_kp):
            raise ValueError("acquisition gains must satisfy acq_kp > 0 and 0 <= acq_ki < acq_kp")
        if not (0.0 < self.lock_alpha <= 1.0):
            raise ValueError("lock_alpha must lie in (0, 1]")
        if self.lock_threshold <= 0.0 or self.min_acquire < 1:
            raise ValueError("lock_threshold must be > 0 and min_acquire >= 1")


@dataclass(frozen=True)
class PllTrace:
    """Loop output: corrected(i) = input(i) * exp(-j * phase(i)).

    ``freq`` is the final integrator value in radians per symbol; ``lock_index``
    is the symbol at which the gains shifted to tracking (-1 if they never did).
    """

    corrected: np.ndarray
    phase: np.ndarray
    freq: float
    lock_index: int = -1


def slice_symbol(z, constellation="4qam"):
    """Nearest constellation point; ties go to the point of smallest angle.

    The alphabets are stored ordered by angle in [0, 2 pi), so a strict argmin
    resolves distance ties deterministically toward the smaller angle.
    """
    points = constellation_points(constellation)
    z = np.asarray(z)
    idx = np.argmin(np.abs(z[..., None] - points), axis=-1)
    out = points[idx]
    return out if z.ndim else complex(out)


def _quartic_init(x, block):
    """Phase and rotation-rate seed from the fourth power of the first symbols.

    Raising unit-power 4QAM to the fourth power collapses the modulation to
    -1, leaving a pure tone at four times the residual rotation rate; its
    one-lag autocorrelation gives the rate (unambiguous while |rate| < pi/4)
    and the derotated block average gives the phase.
    """
    u = x[: min(block, len(x))] ** 4
    if len(u) > 1:
        w4 = float(np.angle(np.sum(u[1:] * np.conj(u[:-1]))))
    else:
        w4 = 0.0
    z = np.sum(u * np.exp(-1j * w4 * np.arange(len(u))))
    phase0 = float(np.angle(-z) / 4.0) if abs(z) > 0 else 0.0
    return phase0, w4 / 4.0


def _track_python(x, points, kp, ki, acq_kp, acq_ki, thresh, alpha, min_acquire,
                  phase0, v0):
    """Pure-Python reference loop; matches the compiled kernel to rounding."""
    n = len(x)
    corrected = np.empty(n, dtype=complex)
    phase_log = np.empty(n, dtype=float)
    pts = [complex(p) for p in points]
    phase = phase0
    v = v0
    ema = 0.5
    locked = -1
    gp, gi = acq_kp, acq_ki
    for i in range(n):
        c = complex(x[i]) * cmath.exp(-1j * phase)
        best = pts[0]
        bestd = abs(c - pts[0])
        for p in pts[1:]:
            d = abs(c - p)
            if d < bestd:
                bestd = d
                best = p
        dd = best.real * best.real + best.imag * best.imag
        e = (c * best.conjugate()).imag / dd if dd > 0.0 else 0.0
        corrected[i] = c
        phase_log[i] = phase
        v += gi * e
        phase += gp * e + v
        ema = (1.0 - alpha) * ema + alpha * abs(e)
        if locked < 0 and i + 1 >= min_acquire and ema < thresh:
            locked = i
            gp, gi = kp, ki
    return corrected, phase_log, v, locked


def pll_track(stream, cfg: PllConfig = PllConfig()) -> PllTrace:
    """Run the decision-directed loop over one stream.

    Returns the derotated stream, the applied phase trajectory and the final
    integrator value (the loop's own estimate of the input rotation rate in
    radians per symbol).
    """
    x = np.asarray(stream, dtype=complex)
    if x.ndim != 1:
        raise ValueError("pll_track expects a one-dimensional stream")
    if len(x) == 0:
        return PllTrace(corrected=x.copy(), phase=np.empty(0), freq=0.0)
    if cfg.kp == 0.0 and cfg.ki == 0.0:
        return PllTrace(corrected=x.copy(), phase=np.zeros(len(x)), freq=0.0)
    points = np.asarray(constellation_points(cfg.constellation), dtype=complex)
    phase0, v0 = _quartic_init(x, cfg.min_acquire)
    args = (x, points, cfg.kp, cfg.ki, cfg.acq_kp, cfg.acq_ki,
            cfg.lock_threshold, cfg.lock_alpha, cfg.min_acquire, phase0, v0)
    if BACKEND == "compiled":
        corrected, phase_log, v, locked = _compiled.track(*args)
    else:
        corrected, phase_log, v, locked = _track_python(*args)
    return PllTrace(corrected=corrected, phase=phase_log, freq=float(v),
                    lock_index=int(locked))
