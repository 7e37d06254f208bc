"""Parameter extraction from calibration measurements.

Covers the three fits the calibration workflow needs:

* multi-exponential fits of short-time compensation sweeps;
* single-exponential fits of long-time (microsecond) settling sweeps;
* anti-crossing fits that extract the qubit-coupler coupling strength and
  the Z-line crosstalk coefficient from branch-resolved spectroscopy.

Compensation data convention: a run stores the offset V(t) that maximizes
the excited-state population at each delay.  The underlying distortion is
-V(t)/v_step, and the measured normalized step response is 1 - V(t)/v_step.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    DegenerateFitError,
    DegenerateFitWarning,
    FitFailedError,
    InvalidArgumentError,
)
from .models import LONG_LEVEL_BAND, LongTimeModel, ShortTimeModel

REGIMES = ("short", "long")

# Two time constants closer than this (relative) cannot be distinguished.
TAU_COLLAPSE_REL = 0.05

MIN_POINTS_PER_BRANCH = 8


@dataclass(frozen=True)
class CalibrationRun:
    """Compensation-versus-delay data from one calibration sweep."""

    delays_ns: np.ndarray
    compensation: np.ndarray
    v_step: float
    regime: str

    def __post_init__(self):
        d = np.asarray(self.delays_ns, dtype=float).copy()
        c = np.asarray(self.compensation, dtype=float).copy()
        d.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "delays_ns", d)
        object.__setattr__(self, "compensation", c)
        if d.ndim != 1 or d.size < 2 or c.shape != d.shape:
            raise InvalidArgumentError("need matching 1-D delay and compensation arrays, >= 2 points")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(c))):
            raise InvalidArgumentError("delays and compensation must be finite")
        if d[0] < 0 or np.any(np.diff(d) <= 0):
            raise InvalidArgumentError("delays must be >= 0 and strictly increasing")
        if self.v_step == 0 or not np.isfinite(self.v_step):
            raise InvalidArgumentError("v_step must be finite and nonzero")
        if self.regime not in REGIMES:
            raise InvalidArgumentError(f"regime must be one of {REGIMES}, got {self.regime!r}")

    @property
    def span_ns(self) -> float:
        return float(self.delays_ns[-1] - self.delays_ns[0])


@dataclass(frozen=True)
class AnticrossingData:
    """Branch-resolved spectroscopy near a qubit-coupler anti-crossing.

    ``branch`` holds "lower" or "upper" per point; both branches need at
    least eight points for the product fit to be stable.
    """

    zpa: np.ndarray
    freq_ghz: np.ndarray
    branch: tuple[str, ...]

    def __post_init__(self):
        z = np.asarray(self.zpa, dtype=float).copy()
        f = np.asarray(self.freq_ghz, dtype=float).copy()
        z.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "zpa", z)
        object.__setattr__(self, "freq_ghz", f)
        object.__setattr__(self, "branch", tuple(self.branch))
        if z.ndim != 1 or f.shape != z.shape or len(self.branch) != z.size:
            raise InvalidArgumentError("zpa, freq_ghz and branch must have matching lengths")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(f))):
            raise InvalidArgumentError("zpa and freq_ghz must be finite")
        for name in self.branch:
            if name not in ("lower", "upper"):
                raise InvalidArgumentError(f"branch labels must be 'lower'/'upper', got {name!r}")
        for name in ("lower", "upper"):
            count = sum(1 for b in self.branch if b == name)
            if count < MIN_POINTS_PER_BRANCH:
                raise InvalidArgumentError(
                    f"{name} branch has {count} points, need >= {MIN_POINTS_PER_BRANCH}"
                )

    def branch_mask(self, name: str) -> np.ndarray:
        return np.array([b == name for b in self.branch])


@dataclass(frozen=True)
class CrosstalkModel:
    """Linear Z-crosstalk description: the qubit frequency responds to the
    coupler zpa as k_eff * zpa + b_eff, where k_eff = k_q * coeff_zxtalk."""

    k_q: float
    b_q: float
    k_eff: float
    b_eff: float
    coeff_zxtalk: float

    def __post_init__(self):
        if not abs(self.coeff_zxtalk) <= 0.1:
            raise InvalidArgumentError(
                f"crosstalk coefficient {self.coeff_zxtalk} outside the sanity range [-0.1, 0.1]"
            )


@dataclass(frozen=True)
class AnticrossingFit:
    """Result of the constant-product anti-crossing fit."""

    g_qc_mhz: float
    coupler_slope_ghz: float
    coupler_intercept_ghz: float
    crosstalk: CrosstalkModel
    residual_std: float  # GHz^2, std of the branch product at the optimum


@dataclass(frozen=True)
class FitDiagnostics:
    """Bookkeeping from an iterative fit."""

    residual_trace: tuple[float, ...]
    residual_rms: float
    n_starts: int
    degenerate: bool = False
    messages: tuple[str, ...] = field(default_factory=tuple)


def _exp_design_matrix(t: np.ndarray, taus: np.ndarray) -> np.ndarray:
    return np.exp(-t[:, None] / taus[None, :])


def fit_short_time(
    run: CalibrationRun,
    n_terms: int,
    rms_threshold: float = 0.05,
    seed: int = 0,
    n_random_starts: int = 8,
    full_output: bool = False,
):
    """Fit a sum of ``n_terms`` decaying exponentials to a short-time run.

    The target curve is -compensation / v_step.  Amplitudes are solved
    linearly for each candidate set of time constants (log-spaced plus
    seeded random starts), then all parameters are polished jointly with
    bounded least squares.  Time constants are reported ascending.

    Raises DegenerateFitError if two fitted time constants collapse within
    5% of each other, and FitFailedError if the relative residual RMS
    exceeds ``rms_threshold``.
    """
    if run.regime != "short":
        raise InvalidArgumentError(f"expected a short-regime run, got {run.regime!r}")
    if not 1 <= n_terms <= 6:
        raise InvalidArgumentError(f"n_terms must be 1..6, got {n_terms}")
    t = run.delays_ns
    y = -run.compensation / run.v_step
    if t.size < 2 * n_terms + 1:
        raise InvalidArgumentError(
            f"{t.size} points cannot constrain {n_terms} exponentials"
        )
    span = run.span_ns
    tau_lo = max(float(np.min(np.diff(t))), 1e-9 * span)
    tau_hi = 10.0 * span

    scale = float(np.max(np.abs(y)))
    if scale == 0.0:
        # Nothing to fit: zero amplitudes on distinct placeholder constants.
        taus = np.geomspace(10 * tau_lo, span, n_terms)
        model = ShortTimeModel.from_arrays(np.zeros(n_terms), taus)
        diag = FitDiagnostics((0.0,), 0.0, 1)
        return (model, diag) if full_output else model

    def residuals(theta):
        p, taus = theta[:n_terms], theta[n_terms:]
        return _exp_design_matrix(t, taus) @ p - y

    rng = np.random.default_rng(seed)
    starts = [np.geomspace(max(tau_lo * 2, span * 1e-3), span, n_terms)]
    starts.append(np.geomspace(max(tau_lo * 2, span * 3e-3), span / 3.0, n_terms))
    for _ in range(n_random_starts):
        lo, hi = np.log(tau_lo * 2), np.log(span)
        starts.append(np.exp(np.sort(rng.uniform(lo, hi, n_terms))))

    best = None
    trace = []
    for taus0 in starts:
        design = _exp_design_matrix(t, taus0)
        p0, *_ = np.linalg.lstsq(design, y, rcond=None)
        p0 = np.clip(p0, -0.499, 0.499)
        theta0 = np.concatenate([p0, taus0])
        lower = np.concatenate([np.full(n_terms, -0.5), np.full(n_terms, tau_lo)])
        upper = np.concatenate([np.full(n_terms, 0.5), np.full(n_terms, tau_hi)])
        try:
            sol = least_squares(residuals, theta0, bounds=(lower, upper), method="trf")
        except Exception:
            continue
        cost = float(np.sqrt(np.mean(sol.fun**2)))
        if best is None or cost < best[0]:
            best = (cost, sol.x)
        trace.append(best[0])
    if best is None:
        raise FitFailedError("no optimizer start converged")

    rms, theta = best
    p, taus = theta[:n_terms], theta[n_terms:]
    order = np.argsort(taus)
    p, taus = p[order], taus[order]
    for a, b in zip(taus, taus[1:]):
        if (b - a) / b < TAU_COLLAPSE_REL:
            raise DegenerateFitError(
                f"time constants {a:.4g} and {b:.4g} ns collapse within "
                f"{TAU_COLLAPSE_REL:.0%}; reduce n_terms"
            )
    if rms > rms_threshold * scale:
        raise FitFailedError(
            f"residual RMS {rms:.3g} exceeds {rms_threshold} x max|target| = "
            f"{rms_threshold * scale:.3g}"
        )
    model = ShortTimeModel.from_arrays(p, taus)
    diag = FitDiagnostics(tuple(trace), rms, len(starts))
    return (model, diag) if full_output else model


def fit_long_time(
    run: CalibrationRun,
    rms_threshold: float = 0.05,
    full_output: bool = False,
):
    """Fit the single-exponential settling model to a long-time run.

    The target curve is the measured normalized step response
    1 - compensation / v_step, with delays converted to microseconds.
    Constant data yields a degenerate fit (settled = initial) and a
    DegenerateFitWarning, since the time constant is then meaningless.
    """
    if run.regime != "long":
        raise InvalidArgumentError(f"expected a long-regime run, got {run.regime!r}")
    t_us = run.delays_ns / 1000.0
    y = 1.0 - run.compensation / run.v_step
    span_us = float(t_us[-1] - t_us[0])
    lo, hi = LONG_LEVEL_BAND
    if np.ptp(y) < 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        level = float(np.clip(np.mean(y), lo + 1e-9, hi - 1e-9))
        warnings.warn(
            "constant settling data: time constant is unidentifiable",
            DegenerateFitWarning,
            stacklevel=2,
        )
        model = LongTimeModel(settled=level, initial=level, tau_us=span_us / 3.0)
        diag = FitDiagnostics((0.0,), 0.0, 1, degenerate=True)
        return (model, diag) if full_output else model

    def residuals(theta):
        settled, initial, tau = theta
        return (initial - settled) * np.exp(-t_us / tau) + settled - y

    tau_lo = max(float(np.min(np.diff(t_us))), 1e-9 * span_us)
    theta0 = np.array(
        [
            np.clip(y[-1], lo + 1e-6, hi - 1e-6),
            np.clip(y[0], lo + 1e-6, hi - 1e-6),
            np.clip(span_us / 3.0, tau_lo * 1.01, 10.0 * span_us * 0.99),
        ]
    )
    sol = least_squares(
        residuals,
        theta0,
        bounds=([lo, lo, tau_lo], [hi, hi, 10.0 * span_us]),
        method="trf",
    )
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    scale = max(float(np.max(np.abs(y))), 1e-30)
    if rms > rms_threshold * scale:
        raise FitFailedError(
            f"residual RMS {rms:.3g} exceeds {rms_threshold} x max|target|"
        )
    settled, initial, tau = sol.x
    messages = []
    if span_us < 3.0 * tau:
        messages.append(
            f"delay span {span_us:.3g} us is below 3 x fitted tau {tau:.3g} us; "
            "the settling constant is weakly constrained"
        )
        warnings.warn(messages[-1], DegenerateFitWarning, stacklevel=2)
    model = LongTimeModel(settled=float(settled), initial=float(initial), tau_us=float(tau))
    diag = FitDiagnostics((rms,), rms, 1, messages=tuple(messages))
    return (model, diag) if full_output else model


def _branch_line_inits(data: AnticrossingData):
    """Initial (qubit line, coupler line) guesses for the two possible
    branch geometries (coupler frequency falling or rising with zpa)."""
    z, f = data.zpa, data.freq_ghz
    lower = data.branch_mask("lower")
    upper = ~lower
    zmid = float(np.median(z))
    inits = []
    for falling in (True, False):
        if falling:
            qubit_sel = (lower & (z <= zmid)) | (upper & (z > zmid))
        else:
            qubit_sel = (lower & (z > zmid)) | (upper & (z <= zmid))
        coupler_sel = ~qubit_sel
        guesses = []
        for sel in (qubit_sel, coupler_sel):
            if np.count_nonzero(sel) >= 2 and np.ptp(z[sel]) > 0:
                guesses.append(np.polyfit(z[sel], f[sel], 1))
            else:
                guesses.append(np.array([0.0, float(np.median(f))]))
        inits.append(np.array([guesses[0][0], guesses[0][1], guesses[1][0], guesses[1][1]]))
    return inits


def fit_anticrossing(
    data: AnticrossingData,
    k_q: float,
    rel_std_threshold: float = 0.5,
    full_output: bool = False,
):
    """Extract coupling strength and crosstalk from anti-crossing branches.

    Both branch frequencies satisfy (f - f_q(zpa)) * (f - f_c(zpa)) = g^2
    when f_q and f_c are the correct uncoupled lines, so the fit adjusts
    two lines to make that product constant across all points (minimum
    standard deviation) and reads g^2 off the product mean.

    ``k_q`` is the qubit's direct Z response slope (GHz per zpa unit),
    needed to convert the fitted effective slope into a crosstalk
    coefficient.
    """
    if k_q == 0 or not np.isfinite(k_q):
        raise InvalidArgumentError("k_q must be finite and nonzero")
    z, f = data.zpa, data.freq_ghz

    def products(theta):
        kq_eff, bq_eff, kc, bc = theta
        return (f - (kq_eff * z + bq_eff)) * (f - (kc * z + bc))

    def residuals(theta):
        prod = products(theta)
        return prod - np.mean(prod)

    best = None
    trace = []
    for theta0 in _branch_line_inits(data):
        sol = least_squares(residuals, theta0, method="lm")
        cost = float(np.sqrt(np.mean(sol.fun**2)))
        if best is None or cost < best[0]:
            best = (cost, sol.x)
        trace.append(best[0])

    _, theta = best
    # The product form is symmetric in the two lines; the qubit line is the
    # flat one (it moves only through crosstalk), so order by slope.
    if abs(theta[0]) > abs(theta[2]):
        theta = np.array([theta[2], theta[3], theta[0], theta[1]])
    prod = products(theta)
    mean_prod = float(np.mean(prod))
    std_prod = float(np.std(prod))
    if mean_prod <= 0:
        raise DegenerateFitError(
            "branch product is not positive: branches touch or cross (g = 0?)"
        )
    if std_prod > rel_std_threshold * mean_prod:
        raise FitFailedError(
            f"branch product spread {std_prod:.3g} exceeds "
            f"{rel_std_threshold} x mean {mean_prod:.3g}; branches not separable"
        )
    g_ghz = float(np.sqrt(mean_prod))
    kq_eff, bq_eff, kc, bc = (float(v) for v in theta)
    crosstalk = CrosstalkModel(
        k_q=float(k_q),
        b_q=bq_eff,
        k_eff=kq_eff,
        b_eff=bq_eff,
        coeff_zxtalk=kq_eff / float(k_q),
    )
    fit = AnticrossingFit(
        g_qc_mhz=g_ghz * 1e3,
        coupler_slope_ghz=kc,
        coupler_intercept_ghz=bc,
        crosstalk=crosstalk,
        residual_std=std_prod,
    )
    diag = FitDiagnostics(tuple(trace), best[0], len(trace))
    return (fit, diag) if full_output else fit


def estimate_kq(zpa, freq_ghz, coeff_zxtalk: float) -> float:
    """Direct qubit Z slope from a qubit-frequency-vs-coupler-zpa scan.

    Uses the endpoint frequencies of the scan: the observed shift divided
    by the crosstalk coefficient and the zpa span.
    """
    if coeff_zxtalk == 0 or not np.isfinite(coeff_zxtalk):
        raise InvalidArgumentError("coeff_zxtalk must be finite and nonzero")
    z = np.asarray(zpa, dtype=float)
    f = np.asarray(freq_ghz, dtype=float)
    if z.ndim != 1 or z.size < 2 or f.shape != z.shape:
        raise InvalidArgumentError("need matching 1-D arrays with >= 2 points")
    imin, imax = int(np.argmin(z)), int(np.argmax(z))
    dz = z[imax] - z[imin]
    if dz == 0:
        raise InvalidArgumentError("zpa scan has zero span")
    return float((f[imax] - f[imin]) / (coeff_zxtalk * dz))


def synthesize_calibration_run(
    resp,
    delays_ns,
    regime: str,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> CalibrationRun:
    """Generate the compensation curve a calibration sweep would measure
    for a known channel: V(t) = v_step * (1 - s(t)), plus optional Gaussian
    noise of standard deviation ``noise_sigma`` (in units of v_step)."""
    from .models import eval_step_response

    t = np.asarray(delays_ns, dtype=float)
    comp = resp.v_step * (1.0 - eval_step_response(resp, t))
    if noise_sigma:
        if rng is None:
            rng = np.random.default_rng(0)
        comp = comp + abs(resp.v_step) * rng.normal(0.0, noise_sigma, t.shape)
    return CalibrationRun(delays_ns=t, compensation=comp, v_step=resp.v_step, regime=regime)


def write_calibration_csv(path, run: CalibrationRun) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_ns", "v_oft"])
        for t, v in zip(run.delays_ns, run.compensation):
            writer.writerow([f"{t:.17g}", f"{v:.17g}"])


def read_calibration_csv(path, v_step: float, regime: str) -> CalibrationRun:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["t_ns", "v_oft"]:
            raise InvalidArgumentError(f"{path}: expected header 't_ns,v_oft'")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if len(rows) < 2:
        raise InvalidArgumentError(f"{path}: need at least two rows")
    return CalibrationRun(
        delays_ns=np.array([r[0] for r in rows]),
        compensation=np.array([r[1] for r in rows]),
        v_step=v_step,
        regime=regime,
    )


def write_anticrossing_csv(path, data: AnticrossingData) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["zpa_c", "f_ghz", "branch"])
        for z, f, b in zip(data.zpa, data.freq_ghz, data.branch):
            writer.writerow([f"{z:.17g}", f"{f:.17g}", b])


def read_anticrossing_csv(path) -> AnticrossingData:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["zpa_c", "f_ghz", "branch"]:
            raise InvalidArgumentError(f"{path}: expected header 'zpa_c,f_ghz,branch'")
        rows = [(float(r[0]), float(r[1]), r[2].strip()) for r in reader if r]
    return AnticrossingData(
        zpa=np.array([r[0] for r in rows]),
        freq_ghz=np.array([r[1] for r in rows]),
        branch=tuple(r[2] for r in rows),
    )
