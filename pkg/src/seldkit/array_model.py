"""Analytic directional responses of the two four-channel recording formats.

FOA channels are the first-order real orthonormalized spherical harmonics
(frequency independent). The MIC format models four capsules of a rigid
spherical baffle (Eigenmike channels 6/10/26/22) via a truncated
Legendre / spherical-Hankel expansion of the scattered surface pressure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import Doa

FORMAT_FOA = "foa"
FORMAT_MIC = "mic"
FORMATS = (FORMAT_FOA, FORMAT_MIC)

#: Lowest frequency the rigid-sphere expansion is evaluated at; the DC bin
#: of MIC steering vectors is pinned to this evaluation.
MIN_SPHERE_FREQ_HZ = 0.1

_MAX_DEGREE = 60


@dataclass(frozen=True)
class MicChannel:
    """One capsule: its source channel label and position on the baffle."""

    label: int
    azimuth: float
    elevation: float
    radius: float

    def unit_vector(self) -> np.ndarray:
        ce = math.cos(self.elevation)
        return np.array([ce * math.cos(self.azimuth),
                         ce * math.sin(self.azimuth),
                         math.sin(self.elevation)])


@dataclass(frozen=True)
class MicGeometry:
    """Four capsules on a common rigid-sphere radius."""

    channels: tuple[MicChannel, ...]

    def __post_init__(self):
        if len(self.channels) != 4:
            raise ValueError("geometry must have exactly four channels")
        radii = {ch.radius for ch in self.channels}
        if len(radii) != 1 or next(iter(radii)) <= 0:
            raise ValueError("all channels must share one positive radius")

    @property
    def radius(self) -> float:
        return self.channels[0].radius


def _mic(label: int, az_deg: float, el_deg: float) -> MicChannel:
    return MicChannel(label, math.radians(az_deg), math.radians(el_deg), 0.042)


#: Near-uniform tetrahedral selection from the 32-capsule sphere:
#: channels 6, 10, 26, 22 at (45, 35), (-45, -35), (135, -35), (-135, 35)
#: degrees, radius 4.2 cm.
EIGENMIKE_TETRA = MicGeometry(channels=(
    _mic(6, 45.0, 35.0),
    _mic(10, -45.0, -35.0),
    _mic(26, 135.0, -35.0),
    _mic(22, -135.0, 35.0),
))


@dataclass(frozen=True)
class PhysicalConstants:
    speed_of_sound: float = 343.0
    expansion_terms: int = 30

    def __post_init__(self):
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be > 0")
        if not 0 <= self.expansion_terms <= _MAX_DEGREE:
            raise ValueError(f"expansion_terms must be in [0, {_MAX_DEGREE}]")


DEFAULT_CONSTANTS = PhysicalConstants()


def foa_response(doa: Doa) -> np.ndarray:
    """First-order Ambisonic channel gains (real, frequency independent).

    (H1, H2, H3, H4) = (1, sqrt3*sin(az)*cos(el), sqrt3*sin(el),
    sqrt3*cos(az)*cos(el)).
    """
    s3 = math.sqrt(3.0)
    ce = math.cos(doa.elevation)
    return np.array([
        1.0,
        s3 * math.sin(doa.azimuth) * ce,
        s3 * math.sin(doa.elevation),
        s3 * math.cos(doa.azimuth) * ce,
    ])


def legendre_p(n: int, x: float) -> float:
    """Unnormalized Legendre polynomial P_n(x) by the Bonnet recurrence."""
    if n < 0 or n > _MAX_DEGREE:
        raise ValueError(f"degree must be in [0, {_MAX_DEGREE}]")
    if abs(x) > 1.0:
        raise ValueError("argument must lie in [-1, 1]")
    if n == 0:
        return 1.0
    p_prev, p = 1.0, x
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    return p


def sph_hankel2_deriv(n: int, x: float) -> complex:
    """Derivative of the spherical Hankel function of the second kind.

    h_n'(2)(x) = j_n'(x) - i y_n'(x), evaluated with scipy's stable
    spherical Bessel routines.
    """
    if n < 0 or n > _MAX_DEGREE:
        raise ValueError(f"degree must be in [0, {_MAX_DEGREE}]")
    if x <= 0:
        raise ValueError("argument must be > 0")
    jd = special.spherical_jn(n, x, derivative=True)
    yd = special.spherical_yn(n, x, derivative=True)
    return complex(jd, -yd)


def _sphere_sum(cos_gamma: float, x: np.ndarray, max_order: int) -> np.ndarray:
    """Rigid-sphere surface response at normalized frequencies x = omega*R/c.

    (1/x^2) * sum_{n=0}^{max_order} i^(n-1) / h_n'(2)(x) * (2n+1) * P_n(cos_gamma).
    Terms whose Hankel derivative overflows (deep sub-audio x at high n)
    contribute nothing and are dropped.
    """
    x = np.asarray(x, dtype=np.float64)
    total = np.zeros(x.shape, dtype=np.complex128)
    for n in range(max_order + 1):
        jd = special.spherical_jn(n, x, derivative=True)
        yd = special.spherical_yn(n, x, derivative=True)
        hd = jd - 1j * yd
        finite = np.isfinite(hd)
        coef = (1j ** (n - 1)) * (2 * n + 1) * legendre_p(n, cos_gamma)
        term = np.zeros_like(total)
        term[finite] = coef / hd[finite]
        total += term
    return total / x ** 2


def rigid_sphere_response(mic: MicChannel, doa: Doa, freq: float,
                          constants: PhysicalConstants = DEFAULT_CONSTANTS) -> complex:
    """Complex gain of one rigid-sphere capsule toward a DOA at one frequency.

    Depends on direction only through the angle between the capsule and the
    DOA. Frequencies below 0.1 Hz are rejected (the expansion prefactor
    1/(omega R / c)^2 degenerates).
    """
    if freq < MIN_SPHERE_FREQ_HZ:
        raise ValueError(f"frequency must be >= {MIN_SPHERE_FREQ_HZ} Hz")
    if freq > 24000.0:
        raise ValueError("frequency must be <= 24 kHz (Nyquist at 48 kHz)")
    cos_gamma = float(np.dot(mic.unit_vector(), doa.unit_vector()))
    cos_gamma = min(1.0, max(-1.0, cos_gamma))
    x = 2.0 * math.pi * freq * mic.radius / constants.speed_of_sound
    return complex(_sphere_sum(cos_gamma, np.array([x]), constants.expansion_terms)[0])


def steering_vectors(fmt: str, doa: Doa, freq_grid: np.ndarray,
                     geometry: MicGeometry = EIGENMIKE_TETRA,
                     constants: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Per-channel complex response toward a DOA on a frequency grid.

    Returns a (4, len(freq_grid)) matrix. FOA rows replicate the
    frequency-independent harmonic gains; MIC rows evaluate the rigid-sphere
    expansion per capsule, with sub-0.1 Hz bins (the DC bin) pinned to the
    0.1 Hz evaluation.
    """
    freqs = np.asarray(freq_grid, dtype=np.float64)
    if freqs.ndim != 1 or freqs.size == 0:
        raise ValueError("freq_grid must be a non-empty 1-D array")
    if fmt == FORMAT_FOA:
        gains = foa_response(doa)
        return np.repeat(gains[:, None], freqs.size, axis=1).astype(np.complex128)
    if fmt != FORMAT_MIC:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if np.any(freqs > 24000.0):
        raise ValueError("frequency grid exceeds 24 kHz")
    eval_freqs = np.maximum(freqs, MIN_SPHERE_FREQ_HZ)
    x = 2.0 * math.pi * eval_freqs * geometry.radius / constants.speed_of_sound
    doa_vec = doa.unit_vector()
    rows = []
    for mic in geometry.channels:
        cos_gamma = float(np.dot(mic.unit_vector(), doa_vec))
        cos_gamma = min(1.0, max(-1.0, cos_gamma))
        rows.append(_sphere_sum(cos_gamma, x, constants.expansion_terms))
    return np.stack(rows)


def measurement_doa_grid() -> tuple[Doa, ...]:
    """The 504 measured source positions.

    36 azimuths every 10 degrees, with 9 elevations (-40..40) at 1 m and 5
    elevations (-20..20) at 2 m. Ordered by (distance, elevation, azimuth).
    """
    doas = []
    for distance, el_span in ((1.0, 40), (2.0, 20)):
        for el_deg in range(-el_span, el_span + 1, 10):
            for az_deg in range(-180, 180, 10):
                doas.append(Doa.from_degrees(az_deg, el_deg, distance))
    return tuple(doas)
