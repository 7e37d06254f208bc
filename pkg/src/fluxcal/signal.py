"""Uniformly sampled waveforms and causal LTI channel kernels.

Discrete convention used throughout the package: a channel is represented
by a kernel ``h`` carrying an implicit 1/dt normalization, and

    out[n] = sum_k input[n - k] * h[k] * dt

so the identity channel is ``h[0] = 1/dt`` and the dc gain of a channel is
``sum(h) * dt``.  With this convention the kernel obtained from a sampled
step response reproduces that step exactly when applied to a unit step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as _scipy_signal

from .errors import IncompatibleSamplingError, InvalidArgumentError

# Uniform-grid tolerance for CSV readers, in ns.
_GRID_TOL_NS = 1e-9


def _as_readonly(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Waveform:
    """A real waveform sampled on the uniform grid t_n = n * dt_ns.

    Attributes:
        dt_ns: sample spacing in nanoseconds, strictly positive.
        samples: float64 amplitudes, at least one sample, all finite.
    """

    dt_ns: float
    samples: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.dt_ns) or self.dt_ns <= 0:
            raise InvalidArgumentError(f"dt_ns must be finite and > 0, got {self.dt_ns}")
        object.__setattr__(self, "samples", _as_readonly(self.samples))
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InvalidArgumentError("samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidArgumentError("samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_ns(self) -> float:
        return self.samples.size * self.dt_ns

    @property
    def times_ns(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt_ns


@dataclass(frozen=True)
class ImpulseResponse:
    """A causal channel kernel over the same grid as the waveforms it acts on.

    The kernel carries the 1/dt normalization described in the module
    docstring; ``dc_gain`` is the settled response to a unit step.
    """

    dt_ns: float
    kernel: np.ndarray
    dc_gain: float = field(init=False)

    def __post_init__(self):
        if not np.isfinite(self.dt_ns) or self.dt_ns <= 0:
            raise InvalidArgumentError(f"dt_ns must be finite and > 0, got {self.dt_ns}")
        object.__setattr__(self, "kernel", _as_readonly(self.kernel))
        if self.kernel.ndim != 1 or self.kernel.size == 0:
            raise InvalidArgumentError("kernel must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.kernel)):
            raise InvalidArgumentError("kernel must be finite")
        object.__setattr__(self, "dc_gain", float(np.sum(self.kernel) * self.dt_ns))

    def __len__(self) -> int:
        return self.kernel.size

    def deviation_from_identity(self) -> float:
        """L1 distance (including the dt weight) between this kernel and the
        identity kernel delta[0] = 1/dt.  Zero for a distortion-free channel."""
        delta = np.zeros_like(self.kernel)
        delta[0] = 1.0 / self.dt_ns
        return float(np.sum(np.abs(self.kernel - delta)) * self.dt_ns)


def identity_kernel(dt_ns: float, n: int = 1) -> ImpulseResponse:
    """The distortion-free channel: a single impulsive weight 1/dt."""
    if n < 1:
        raise InvalidArgumentError("kernel length must be >= 1")
    kernel = np.zeros(n)
    kernel[0] = 1.0 / dt_ns
    return ImpulseResponse(dt_ns=dt_ns, kernel=kernel)


def require_same_grid(a, b):
    if abs(a.dt_ns - b.dt_ns) > _GRID_TOL_NS:
        raise IncompatibleSamplingError(
            f"time bases differ: dt={a.dt_ns} ns vs dt={b.dt_ns} ns"
        )


def heaviside_step(amplitude: float, duration_ns: float, dt_ns: float) -> Waveform:
    """A step of the given amplitude starting at t = 0.

    The grid holds round(duration / dt) samples, all equal to ``amplitude``.
    """
    if not np.isfinite(amplitude):
        raise InvalidArgumentError("amplitude must be finite")
    if duration_ns <= 0 or dt_ns <= 0:
        raise InvalidArgumentError("duration_ns and dt_ns must be > 0")
    n = int(round(duration_ns / dt_ns))
    if n < 1:
        raise InvalidArgumentError("duration shorter than one sample")
    return Waveform(dt_ns=dt_ns, samples=np.full(n, float(amplitude)))


def convolve(waveform: Waveform, response: ImpulseResponse) -> Waveform:
    """Causal convolution of a waveform with a channel kernel.

    Returns a waveform of the same length as the input; the input is taken
    to be zero before t = 0.
    """
    require_same_grid(waveform, response)
    n = len(waveform)
    # method='auto' switches to FFT for long inputs; values agree with the
    # direct sum to round-off.
    full = _scipy_signal.convolve(waveform.samples, response.kernel, mode="full", method="auto")
    return Waveform(dt_ns=waveform.dt_ns, samples=full[:n] * waveform.dt_ns)


def step_to_impulse(step: Waveform) -> ImpulseResponse:
    """Kernel of the channel whose unit-step response is ``step``.

    The kernel is the discrete derivative of the step plus an impulsive
    term step[0]/dt at n = 0, so that convolve(unit_step, kernel)
    reproduces ``step`` exactly (telescoping sum).
    """
    s = step.samples
    kernel = np.empty_like(s)
    kernel[0] = s[0] / step.dt_ns
    kernel[1:] = np.diff(s) / step.dt_ns
    return ImpulseResponse(dt_ns=step.dt_ns, kernel=kernel)


def negate_compensation(waveform: Waveform, v_step: float) -> Waveform:
    """Convert measured compensation amplitudes into a distortion curve.

    The compensation offsets cancel the distortion, so the underlying
    distortion is -V(t)/V_step.  With v_step = 1 the operation is its own
    inverse.
    """
    if v_step == 0 or not np.isfinite(v_step):
        raise InvalidArgumentError("v_step must be finite and nonzero")
    return Waveform(dt_ns=waveform.dt_ns, samples=-waveform.samples / v_step)


def write_waveform_csv(path, waveform: Waveform) -> None:
    """Write ``t_ns,amplitude`` rows with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_ns", "amplitude"])
        for t, a in zip(waveform.times_ns, waveform.samples):
            writer.writerow([f"{t:.17g}", f"{a:.17g}"])


def read_waveform_csv(path) -> Waveform:
    """Read a ``t_ns,amplitude`` file, validating grid uniformity."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["t_ns", "amplitude"]:
            raise InvalidArgumentError(f"{path}: expected header 't_ns,amplitude'")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        raise InvalidArgumentError(f"{path}: no samples")
    t = np.array([r[0] for r in rows])
    a = np.array([r[1] for r in rows])
    if len(t) == 1:
        raise InvalidArgumentError(f"{path}: cannot infer dt from a single sample")
    dt = t[1] - t[0]
    if dt <= 0:
        raise InvalidArgumentError(f"{path}: time column must increase")
    if np.max(np.abs(np.diff(t) - dt)) > _GRID_TOL_NS:
        raise IncompatibleSamplingError(f"{path}: time grid is not uniform within 1e-9 ns")
    return Waveform(dt_ns=float(dt), samples=a)
