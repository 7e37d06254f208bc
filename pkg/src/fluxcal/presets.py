"""Measured device characterizations used as fixtures and demo inputs.

Two processors are represented: a planar device (symmetric coupler SQUID,
noticeable long-time settling on the coupler Z line) and a flip-chip device
(asymmetric coupler SQUID, short-time distortion only).  The numbers are
measured step-response fits and device spectroscopy values for this class
of hardware; they are the reference inputs for the round-trip and
predistortion accuracy checks.
"""

from __future__ import annotations

from .models import CombinedResponse, LongTimeModel, ShortTimeModel
from .simulator import CouplerMap, SystemParams

# Short-time distortion fits, (amplitude, tau_ns) per exponential.
PLANAR_SHORT_TIME = ShortTimeModel.from_arrays(
    amplitudes=[-0.024, -0.011, -0.006],
    taus_ns=[17.61, 132.07, 1305.15],
)

FLIPCHIP_SHORT_TIME = ShortTimeModel.from_arrays(
    amplitudes=[-0.019, -0.021],
    taus_ns=[47.83, 528.10],
)

# Long-time settling of the planar coupler line; the flip-chip device shows
# none within measurement resolution.
PLANAR_LONG_TIME = LongTimeModel(settled=1.0127, initial=0.9935, tau_us=18.684)

# Z-line crosstalk coefficients (coupler drive into qubit frequency), as
# fractions of the direct qubit Z response.
PLANAR_COUPLER_TO_QUBIT_XTALK = 0.0375
FLIPCHIP_COUPLER_TO_QUBIT_XTALK = 0.0016


def planar_channel(v_step: float = 1.0) -> CombinedResponse:
    """Combined short + long response of the planar coupler Z line."""
    return CombinedResponse(short=PLANAR_SHORT_TIME, long=PLANAR_LONG_TIME, v_step=v_step)


def flipchip_channel(v_step: float = 1.0) -> CombinedResponse:
    """Short-time-only response of the flip-chip coupler Z line."""
    return CombinedResponse(short=FLIPCHIP_SHORT_TIME, long=None, v_step=v_step)


def planar_system() -> SystemParams:
    """Qubit-coupler pair on the planar device, coupler tuned from its
    sweet spot down through the qubit resonance."""
    return SystemParams(
        omega_q_ghz=4.5780,
        g_qc_ghz=0.0789,
        coupler=CouplerMap(
            f_max_ghz=6.3031,
            curvature_ghz=0.299,
            asymmetry=0.0,
            zpa_to_flux=1.0,
            zpa_range=(0.0, 0.45),
        ),
        coeff_zxtalk=PLANAR_COUPLER_TO_QUBIT_XTALK,
        qubit_zpa_slope_ghz=4.0,
    )


def flipchip_system() -> SystemParams:
    """Qubit-coupler pair on the flip-chip device (asymmetric SQUID)."""
    return SystemParams(
        omega_q_ghz=4.9030,
        g_qc_ghz=0.0834,
        coupler=CouplerMap(
            f_max_ghz=8.3157,
            curvature_ghz=0.300,
            asymmetry=0.3,
            zpa_to_flux=1.0,
            zpa_range=(0.0, 0.48),
        ),
        coeff_zxtalk=FLIPCHIP_COUPLER_TO_QUBIT_XTALK,
        qubit_zpa_slope_ghz=4.0,
    )
