"""Benchmarking statistics: decay fits and gate-fidelity estimates.

Sequence fidelity versus depth is modeled as F(n) = A p^n + B, where the
constants absorb state preparation and measurement error.  Reference and
interleaved depolarization parameters combine into a gate fidelity

    F_gate = 1 - (1 - p_gate / p_ref) * (D - 1) / D

with D the Hilbert space dimension (4 for a two-qubit gate).  Standard
errors propagate to first order through the exact partial derivatives.
For cross-entropy benchmarking the reference is built from simultaneous
single-qubit decays, combined as p = (p1 + p2 + 3 p1 p2) / 5 before the
same fidelity formula applies.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .errors import DegenerateFitError, FitFailedError, InvalidArgumentError

SCHEMES = ("rb", "xeb")


@dataclass(frozen=True)
class DecayFit:
    """Exponential decay of sequence fidelity with depth."""

    amplitude: float
    p: float
    offset: float
    sigma_p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise InvalidArgumentError(f"decay rate p must be in (0, 1], got {self.p}")
        if self.sigma_p < 0 or not math.isfinite(self.sigma_p):
            raise InvalidArgumentError("sigma_p must be finite and >= 0")


@dataclass(frozen=True)
class FidelityEstimate:
    """A gate fidelity with its standard error and provenance."""

    fidelity: float
    sigma: float
    scheme: str
    dimension: int

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise InvalidArgumentError(
                f"fidelity must be in [0, 1], got {self.fidelity}"
            )
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise InvalidArgumentError("sigma must be finite and >= 0")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {SCHEMES}")
        if self.dimension < 2:
            raise InvalidArgumentError("dimension must be >= 2")


def _decay(n, amplitude, p, offset):
    return amplitude * np.power(p, n) + offset


def fit_decay(lengths, fidelities) -> DecayFit:
    """Fit F(n) = A p^n + B to sequence fidelities.

    Requires at least five distinct sequence lengths and fidelities in
    [0, 1].  The decay rate is bounded to (0, 1]; the amplitude and offset
    are unconstrained, with a warning if they land outside [0, 1].
    ``sigma_p`` is the one-standard-error from the fit covariance.
    """
    n = np.asarray(lengths, dtype=float)
    f = np.asarray(fidelities, dtype=float)
    if n.ndim != 1 or f.shape != n.shape:
        raise InvalidArgumentError("lengths and fidelities must be matching 1-D arrays")
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(f))):
        raise InvalidArgumentError("lengths and fidelities must be finite")
    if np.any(n < 0):
        raise InvalidArgumentError("sequence lengths must be >= 0")
    if np.unique(n).size < 5:
        raise InvalidArgumentError("need at least 5 distinct sequence lengths")
    if np.any(f < 0) or np.any(f > 1):
        raise InvalidArgumentError("fidelities must lie in [0, 1]")
    if np.ptp(f) < 1e-12:
        raise DegenerateFitError("constant fidelities: decay rate is unidentifiable")

    offset0 = float(f[-1])
    amp0 = float(f[0] - offset0)
    if amp0 == 0.0:
        amp0 = float(np.ptp(f))
    # crude rate guess from the endpoint decay, kept inside the bounds
    span = float(n[-1] - n[0]) if n[-1] > n[0] else 1.0
    mid = float(np.interp(0.5 * (n[0] + n[-1]), n, f))
    ratio = abs((mid - offset0) / amp0) if amp0 != 0.0 else 0.5
    p0 = min(max(ratio ** (2.0 / span), 0.5), 0.999)
    try:
        popt, pcov = curve_fit(
            _decay,
            n,
            f,
            p0=(amp0, p0, offset0),
            bounds=([-np.inf, 1e-9, -np.inf], [np.inf, 1.0, np.inf]),
            maxfev=20000,
        )
    except RuntimeError as exc:
        raise FitFailedError(f"decay fit did not converge: {exc}") from None
    amplitude, p, offset = (float(v) for v in popt)
    sigma_p = float(np.sqrt(pcov[1, 1]))
    if not math.isfinite(sigma_p):
        raise DegenerateFitError("decay rate uncertainty is unbounded")
    if not (0.0 <= amplitude <= 1.0 and 0.0 <= offset <= 1.0):
        warnings.warn(
            f"decay amplitude {amplitude:.4g} / offset {offset:.4g} outside [0, 1]; "
            "check preparation and measurement levels",
            RuntimeWarning,
            stacklevel=2,
        )
    return DecayFit(amplitude=amplitude, p=p, offset=offset, sigma_p=sigma_p)


def _interleaved_fidelity(
    gate: DecayFit, reference: DecayFit, dimension: int, scheme: str
) -> FidelityEstimate:
    if dimension < 2:
        raise InvalidArgumentError("dimension must be >= 2")
    if reference.p <= 0.0:
        raise InvalidArgumentError("reference decay rate must be positive")
    frac = (dimension - 1) / dimension
    ratio = gate.p / reference.p
    fidelity = 1.0 - (1.0 - ratio) * frac
    sigma = frac * ratio * math.hypot(gate.sigma_p / gate.p, reference.sigma_p / reference.p)
    return FidelityEstimate(fidelity=fidelity, sigma=sigma, scheme=scheme, dimension=dimension)


def rb_fidelity(gate: DecayFit, reference: DecayFit, dimension: int = 4) -> FidelityEstimate:
    """Interleaved randomized-benchmarking gate fidelity with its error."""
    return _interleaved_fidelity(gate, reference, dimension, "rb")


def xeb_parallel_combine(fit_q1: DecayFit, fit_q2: DecayFit) -> DecayFit:
    """Combine simultaneous single-qubit decay rates into the two-qubit
    reference rate (p1 + p2 + 3 p1 p2) / 5, with propagated uncertainty."""
    p1, p2 = fit_q1.p, fit_q2.p
    p_sq = (p1 + p2 + 3.0 * p1 * p2) / 5.0
    dp1 = (1.0 + 3.0 * p2) / 5.0
    dp2 = (1.0 + 3.0 * p1) / 5.0
    sigma = math.hypot(dp1 * fit_q1.sigma_p, dp2 * fit_q2.sigma_p)
    return DecayFit(amplitude=1.0, p=p_sq, offset=0.0, sigma_p=sigma)


def xeb_fidelity(gate: DecayFit, reference: DecayFit, dimension: int = 4) -> FidelityEstimate:
    """Cross-entropy-benchmarking gate fidelity against the combined
    simultaneous-reference decay rate."""
    return _interleaved_fidelity(gate, reference, dimension, "xeb")


def write_decay_csv(path, lengths, fidelities) -> None:
    n = np.asarray(lengths)
    f = np.asarray(fidelities)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "fidelity"])
        for ni, fi in zip(n, f):
            writer.writerow([f"{int(ni)}", f"{float(fi):.17g}"])


def read_decay_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["n", "fidelity"]:
            raise InvalidArgumentError(f"{path}: expected header 'n,fidelity'")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        raise InvalidArgumentError(f"{path}: no data rows")
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])
