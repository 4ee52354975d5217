"""Array geometry, parameter conversions and the five channel-model variants.

Arrays returned by the vectorized helpers are indexed ``[..., k, n]``: subcarrier
first, antenna second.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .config import SPEED_OF_LIGHT, ScenarioConfig


class ModelKind(enum.Enum):
    MM = "MM"
    TM = "TM"
    TM_SNS = "TM-SNS"
    TM_SWM = "TM-SWM"
    TM_BSE = "TM-BSE"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        text = str(value).upper().replace("_", "-")
        for kind in cls:
            if kind.value == text or kind.name == text.replace("-", "_"):
                return kind
        raise ValueError(f"unknown model kind {value!r}")


TRUE_MODELS = (ModelKind.TM, ModelKind.TM_SNS, ModelKind.TM_SWM, ModelKind.TM_BSE)


@dataclass(frozen=True)
class ArrayGeometry:
    positions: np.ndarray  # (N, 2)
    aperture: float
    carrier_wavelength: float

    @property
    def n_antennas(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class ChannelParams:
    aoa: float
    toa: float
    gain_magnitude: float
    gain_phase: float

    def __post_init__(self):
        if not -np.pi / 2 < self.aoa < np.pi / 2:
            raise ValueError(f"aoa {self.aoa} outside (-pi/2, pi/2)")
        if not self.toa > 0:
            raise ValueError("toa must be positive")
        if not self.gain_magnitude > 0:
            raise ValueError("gain magnitude must be positive")

    @property
    def alpha(self) -> complex:
        return self.gain_magnitude * np.exp(-1j * self.gain_phase)

    def as_array(self) -> np.ndarray:
        return np.array([self.aoa, self.toa, self.gain_magnitude, self.gain_phase])

    @classmethod
    def from_array(cls, theta) -> "ChannelParams":
        aoa, toa, rho, xi = (float(v) for v in theta)
        return cls(aoa, toa, rho, xi % (2 * np.pi))

    def to_state(self) -> "StateParams":
        return StateParams(position_from_params(self.aoa, self.toa), self.gain_magnitude, self.gain_phase)


@dataclass(frozen=True)
class StateParams:
    position: np.ndarray
    gain_magnitude: float
    gain_phase: float

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(2)
        object.__setattr__(self, "position", p)
        if not np.linalg.norm(p) > 0:
            raise ValueError("position must be nonzero")
        if not self.gain_magnitude > 0:
            raise ValueError("gain magnitude must be positive")

    @property
    def alpha(self) -> complex:
        return self.gain_magnitude * np.exp(-1j * self.gain_phase)

    def as_array(self) -> np.ndarray:
        return np.array([self.position[0], self.position[1], self.gain_magnitude, self.gain_phase])

    @classmethod
    def from_array(cls, theta) -> "StateParams":
        return cls(np.asarray(theta[:2], dtype=float), float(theta[2]), float(theta[3]))

    @classmethod
    def at(cls, position, config: ScenarioConfig, gain_phase: float = 0.0) -> "StateParams":
        """State with the free-space gain magnitude implied by ``position``."""
        p = np.asarray(position, dtype=float)
        rho = config.wavelength / (4 * np.pi * np.linalg.norm(p))
        return cls(p, rho, gain_phase)

    def to_channel(self) -> ChannelParams:
        aoa, toa = params_from_position(self.position)
        return ChannelParams(aoa, toa, self.gain_magnitude, self.gain_phase)


def antenna_positions(config: ScenarioConfig) -> ArrayGeometry:
    n = config.n_antennas
    lam = config.wavelength
    y = (2 * np.arange(1, n + 1) - n - 1) * lam / 4
    positions = np.stack([np.zeros(n), y], axis=1)
    positions.setflags(write=False)
    return ArrayGeometry(positions, (n - 1) * lam / 2, lam)


def params_from_position(p) -> tuple[float, float]:
    p = np.asarray(p, dtype=float)
    r = float(np.hypot(p[0], p[1]))
    if r == 0:
        raise ValueError("position must be nonzero")
    if p[0] <= 0:
        raise ValueError("position must lie in the front half-plane (p_x > 0)")
    return float(np.arctan2(p[1], p[0])), r / SPEED_OF_LIGHT


def position_from_params(aoa: float, toa: float) -> np.ndarray:
    if not -np.pi / 2 < aoa < np.pi / 2:
        raise ValueError(f"aoa {aoa} outside (-pi/2, pi/2)")
    if not toa > 0:
        raise ValueError("toa must be positive")
    return toa * SPEED_OF_LIGHT * np.array([np.cos(aoa), np.sin(aoa)])


def path_gain(p, xi: float, geometry: ArrayGeometry) -> complex:
    r = float(np.linalg.norm(p))
    if r == 0:
        raise ValueError("position must be nonzero")
    return geometry.carrier_wavelength / (4 * np.pi * r) * np.exp(-1j * xi)


def _element_offsets(n_antennas: int) -> np.ndarray:
    """``2n - N - 1`` for n = 1..N."""
    return 2 * np.arange(1, n_antennas + 1) - n_antennas - 1


def steering_vector(aoa: float, n_antennas: int) -> np.ndarray:
    return np.exp(0.5j * np.pi * _element_offsets(n_antennas) * np.sin(aoa))


def steering_vector_bse(aoa: float, k: int, config: ScenarioConfig) -> np.ndarray:
    i = config.check_subcarrier(k)
    ratio = config.wavelength / config.subcarrier_wavelengths[i]
    return np.exp(0.5j * np.pi * _element_offsets(config.n_antennas) * np.sin(aoa) * ratio)


def delay_term(p, k: int, config: ScenarioConfig) -> complex:
    i = config.check_subcarrier(k)
    r = float(np.linalg.norm(p))
    return np.exp(-2j * np.pi * r / config.subcarrier_wavelengths[i])


def _distances(p, geometry: ArrayGeometry) -> np.ndarray:
    d = np.linalg.norm(np.asarray(p, dtype=float) - geometry.positions, axis=-1)
    if np.any(d == 0):
        raise ValueError("UE coincides with an antenna")
    return d


def sns_amplitude(p, k: int, n: int, geometry: ArrayGeometry, config: ScenarioConfig) -> float:
    """Per-antenna amplitude factor; ``n`` is 1-based."""
    i = config.check_subcarrier(k)
    dist = _distances(p, geometry)[n - 1]
    ratio = config.subcarrier_wavelengths[i] / config.wavelength if config.amplitude_freq_scaling else 1.0
    return float(ratio * np.linalg.norm(p) / dist)


def spherical_phase(p, k: int, n: int, geometry: ArrayGeometry, config: ScenarioConfig) -> complex:
    """Per-antenna spherical-wavefront phase relative to the array centre; ``n`` is 1-based."""
    i = config.check_subcarrier(k)
    dist = _distances(p, geometry)[n - 1]
    return np.exp(-2j * np.pi / config.subcarrier_wavelengths[i] * (dist - np.linalg.norm(p)))


def channel_shapes(kind: ModelKind, positions, config: ScenarioConfig, geometry: ArrayGeometry | None = None) -> np.ndarray:
    """Unit-gain channel ``h_k / alpha`` for every subcarrier and antenna.

    ``positions`` has shape ``(..., 2)``; the result has shape ``(..., K, N)``.
    No validation is done here: the caller guarantees ``p_x > 0``.
    """
    kind = ModelKind.parse(kind)
    geometry = geometry or antenna_positions(config)
    p = np.asarray(positions, dtype=float)[..., None, :]  # (..., 1, 2)
    r = np.linalg.norm(p, axis=-1)  # (..., 1)
    lam_c = config.wavelength
    lam_k = config.subcarrier_wavelengths[:, None]  # (K, 1)
    delay = np.exp(-2j * np.pi * r[..., None, :] / lam_k)  # (..., K, 1)

    if kind in (ModelKind.MM, ModelKind.TM_SNS, ModelKind.TM_BSE):
        sin_aoa = (p[..., 1] / r)[..., None, :]  # (..., 1, 1)
        offsets = _element_offsets(config.n_antennas)
        if kind is ModelKind.TM_BSE:
            steer = np.exp(0.5j * np.pi * offsets * sin_aoa * (lam_c / lam_k))
        else:
            steer = np.exp(0.5j * np.pi * offsets * sin_aoa)
    if kind in (ModelKind.TM, ModelKind.TM_SNS, ModelKind.TM_SWM):
        dist = np.linalg.norm(p - geometry.positions, axis=-1)[..., None, :]  # (..., 1, N)
        excess = dist - r[..., None, :]
    if kind in (ModelKind.TM, ModelKind.TM_SNS):
        amp = r[..., None, :] / dist
        if config.amplitude_freq_scaling:
            amp = amp * (lam_k / lam_c)

    if kind is ModelKind.MM or kind is ModelKind.TM_BSE:
        return steer * delay
    if kind is ModelKind.TM:
        return amp * np.exp(-2j * np.pi * excess / lam_k) * delay
    if kind is ModelKind.TM_SNS:
        return amp * steer * delay
    # TM_SWM: carrier-wavelength spherical phase only
    return np.exp(-2j * np.pi * excess / lam_c) * delay


def channel_matrix(kind: ModelKind, state: StateParams, config: ScenarioConfig, geometry: ArrayGeometry | None = None) -> np.ndarray:
    """``(K, N)`` channel of all subcarriers for a validated state."""
    params_from_position(state.position)
    return state.alpha * channel_shapes(kind, state.position, config, geometry)


def channel_vector(kind: ModelKind, state: StateParams, k: int, geometry: ArrayGeometry, config: ScenarioConfig) -> np.ndarray:
    i = config.check_subcarrier(k)
    _distances(state.position, geometry)
    return channel_matrix(kind, state, config, geometry)[i]


def fresnel_fraunhofer(geometry: ArrayGeometry) -> tuple[float, float]:
    """Inner (Fresnel) and outer (Fraunhofer) radii of the radiating near field."""
    R, lam = geometry.aperture, geometry.carrier_wavelength
    return 0.62 * np.sqrt(R**3 / lam), 2 * R**2 / lam
