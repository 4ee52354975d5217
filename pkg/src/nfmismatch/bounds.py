"""Channel derivatives, Fisher information, Jacobian transforms and CRB-derived bounds.

Parameter orders: channel ``[aoa, toa, rho, xi]`` and state ``[p_x, p_y, rho, xi]``.
Derivative arrays have shape ``(K, N, 4)``, one slice per parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import (
    ArrayGeometry,
    ChannelParams,
    ModelKind,
    StateParams,
    _element_offsets,
    antenna_positions,
    channel_shapes,
    params_from_position,
)
from .config import SPEED_OF_LIGHT, ScenarioConfig
from .observation import CombinerSet, PilotSet, make_combiners, make_pilots, stack_blocks

CONDITION_LIMIT = 1e12


class SingularFimError(np.linalg.LinAlgError):
    def __init__(self, message, rank=None, condition=None):
        super().__init__(message)
        self.rank = rank
        self.condition = condition


@dataclass(frozen=True)
class FimMatrix:
    matrix: np.ndarray
    parameterization: str  # "channel" or "state"
    kind: ModelKind


@dataclass(frozen=True)
class BoundReport:
    peb: float
    aeb: float
    deb: float
    fim_state: np.ndarray
    fim_channel: np.ndarray
    crb_state: np.ndarray
    crb_channel: np.ndarray


# derivatives


def shape_position_log_gradient(kind: ModelKind, position, config: ScenarioConfig, geometry: ArrayGeometry | None = None) -> np.ndarray:
    """``d log(h_k,n) / dp`` for the given model; shape ``(..., K, N, 2)``.

    ``h = alpha * shape``; the gain does not depend on ``p`` in the estimation
    model, so this is also ``(dh/dp) / h``.
    """
    kind = ModelKind.parse(kind)
    geometry = geometry or antenna_positions(config)
    p = np.asarray(position, dtype=float)[..., None, None, :]  # (..., 1, 1, 2)
    r2 = np.sum(p**2, axis=-1, keepdims=True)
    r = np.sqrt(r2)
    lam_c = config.wavelength
    lam_k = config.subcarrier_wavelengths[:, None, None]  # (K, 1, 1)
    grad = -2j * np.pi / lam_k * (p / r)  # delay term, (..., K, 1, 2)

    if kind in (ModelKind.MM, ModelKind.TM_SNS, ModelKind.TM_BSE):
        daoa = np.concatenate([-p[..., 1:], p[..., :1]], axis=-1) / r2  # (..., 1, 1, 2)
        cos_aoa = p[..., :1] / r
        phase_rate = 0.5j * np.pi * _element_offsets(config.n_antennas)[:, None] * cos_aoa  # (..., 1, N, 1)
        if kind is ModelKind.TM_BSE:
            phase_rate = phase_rate * (lam_c / lam_k)
        grad = grad + phase_rate * daoa
    if kind in (ModelKind.TM, ModelKind.TM_SNS, ModelKind.TM_SWM):
        diff = p - geometry.positions[:, None, :].reshape(1, -1, 2)  # (..., 1, N, 2)
        d2 = np.sum(diff**2, axis=-1, keepdims=True)
        d = np.sqrt(d2)
    if kind in (ModelKind.TM, ModelKind.TM_SNS):
        grad = grad + (p / r2 - diff / d2)
    if kind in (ModelKind.TM, ModelKind.TM_SWM):
        lam = lam_k if kind is ModelKind.TM else lam_c
        grad = grad - 2j * np.pi / lam * (diff / d - p / r)
    return grad


def state_derivatives(kind: ModelKind, state: StateParams, config: ScenarioConfig, geometry: ArrayGeometry | None = None) -> np.ndarray:
    """``dh_k/d[p_x, p_y, rho, xi]`` as a ``(K, N, 4)`` array."""
    params_from_position(state.position)
    h = state.alpha * channel_shapes(kind, state.position, config, geometry)
    grad = shape_position_log_gradient(kind, state.position, config, geometry)
    out = np.empty(h.shape + (4,), dtype=complex)
    out[..., :2] = h[..., None] * grad
    out[..., 2] = h / state.gain_magnitude
    out[..., 3] = -1j * h
    return out


def tm_state_derivatives(state: StateParams, config: ScenarioConfig, geometry: ArrayGeometry | None = None) -> np.ndarray:
    return state_derivatives(ModelKind.TM, state, config, geometry)


def mm_log_derivatives(theta_c, config: ScenarioConfig) -> np.ndarray:
    """``d log(h) / d theta_c`` for the far-field model; ``(K, N, 4)``."""
    aoa, _, rho, _ = theta_c
    K, N = config.n_subcarriers, config.n_antennas
    out = np.empty((K, N, 4), dtype=complex)
    out[..., 0] = (0.5j * np.pi * _element_offsets(N) * np.cos(aoa))[None, :]
    out[..., 1] = (-2j * np.pi * config.subcarrier_freqs)[:, None]
    out[..., 2] = 1.0 / rho
    out[..., 3] = -1j
    return out


def mm_channel(theta_c, config: ScenarioConfig) -> np.ndarray:
    aoa, toa, rho, xi = theta_c
    steer = np.exp(0.5j * np.pi * _element_offsets(config.n_antennas) * np.sin(aoa))
    delay = np.exp(-2j * np.pi * config.subcarrier_freqs * toa)
    return rho * np.exp(-1j * xi) * delay[:, None] * steer[None, :]


def mm_param_derivatives(theta_c, config: ScenarioConfig) -> np.ndarray:
    """``dh_k/d[aoa, toa, rho, xi]`` of the far-field model, ``(K, N, 4)``."""
    theta_c = np.asarray(theta_c, dtype=float)
    return mm_channel(theta_c, config)[..., None] * mm_log_derivatives(theta_c, config)


def mm_param_second_derivatives(theta_c, config: ScenarioConfig) -> np.ndarray:
    """Hessian of the far-field channel, ``(K, N, 4, 4)``."""
    theta_c = np.asarray(theta_c, dtype=float)
    aoa, _, rho, _ = theta_c
    h = mm_channel(theta_c, config)
    L = mm_log_derivatives(theta_c, config)
    second = L[..., :, None] * L[..., None, :]
    second[..., 0, 0] += (-0.5j * np.pi * _element_offsets(config.n_antennas) * np.sin(aoa))[None, :]
    second[..., 2, 2] -= 1.0 / rho**2
    return h[..., None, None] * second


def position_jacobian(aoa: float, toa: float) -> np.ndarray:
    """``dp / d[aoa, toa]``, rows indexed by ``p``."""
    c = SPEED_OF_LIGHT
    s, co = np.sin(aoa), np.cos(aoa)
    return np.array([[-c * toa * s, c * co], [c * toa * co, c * s]])


def channel_derivatives(kind: ModelKind, theta_c, config: ScenarioConfig, geometry: ArrayGeometry | None = None) -> np.ndarray:
    """``dh_k / d theta_c`` for any model (near-field ones through ``dp/d(aoa, toa)``)."""
    kind = ModelKind.parse(kind)
    theta_c = np.asarray(theta_c, dtype=float)
    if kind is ModelKind.MM:
        return mm_param_derivatives(theta_c, config)
    state = ChannelParams.from_array(theta_c).to_state()
    ds = state_derivatives(kind, state, config, geometry)
    out = ds.copy()
    out[..., :2] = ds[..., :2] @ position_jacobian(theta_c[0], theta_c[1])
    return out


def position_state_derivatives(kind: ModelKind, theta_s, config: ScenarioConfig, geometry: ArrayGeometry | None = None) -> np.ndarray:
    return state_derivatives(kind, StateParams.from_array(theta_s), config, geometry)


# Jacobians


def jacobian_state_from_channel(theta_c) -> np.ndarray:
    """4x4 ``J_s`` with ``I(theta_s) = J_s I(theta_c) J_s^T``.

    The 2x2 block holds ``[d aoa/dp, d toa/dp]`` as columns, with
    ``d toa/dp = p / (c |p|)``.
    """
    aoa, toa = float(theta_c[0]), float(theta_c[1])
    if not toa > 0:
        raise ValueError("toa must be positive")
    c = SPEED_OF_LIGHT
    s, co = np.sin(aoa), np.cos(aoa)
    J = np.eye(4)
    J[:2, 0] = np.array([-s, co]) / (c * toa)
    J[:2, 1] = np.array([co, s]) / c
    return J


def jacobian_channel_from_state(theta_s) -> np.ndarray:
    """4x4 ``J_c`` with ``I(theta_c) = J_c I(theta_s) J_c^T``; rows ``(dp/d aoa)^T, (dp/d toa)^T``."""
    aoa, toa = params_from_position(theta_s[:2])
    J = np.eye(4)
    J[:2, :2] = position_jacobian(aoa, toa).T
    return J


# Fisher information


def fim_from_derivatives(dh: np.ndarray, variance: float, combiners: CombinerSet, pilots: PilotSet) -> np.ndarray:
    dmu = stack_blocks(dh, combiners, pilots).reshape(-1, dh.shape[-1])
    fim = 2.0 / variance * np.real(dmu.conj().T @ dmu)
    return 0.5 * (fim + fim.T)


def fim(kind: ModelKind, theta, parameterization: str, config: ScenarioConfig, combiners: CombinerSet | None = None, geometry: ArrayGeometry | None = None) -> FimMatrix:
    """Fisher information of ``theta`` (channel or state vector) for one model."""
    kind = ModelKind.parse(kind)
    combiners = combiners or make_combiners(config)
    pilots = make_pilots(config)
    theta = np.asarray(theta, dtype=float)
    if parameterization == "state":
        dh = position_state_derivatives(kind, theta, config, geometry)
    elif parameterization == "channel":
        dh = channel_derivatives(kind, theta, config, geometry)
    else:
        raise ValueError(f"unknown parameterization {parameterization!r}")
    matrix = fim_from_derivatives(dh, config.noise_variance, combiners, pilots)
    if not np.all(np.isfinite(matrix)):
        raise SingularFimError("non-finite FIM entries (degenerate geometry)")
    return FimMatrix(matrix, parameterization, kind)


def transform_fim(matrix: np.ndarray, jacobian: np.ndarray) -> np.ndarray:
    out = jacobian @ matrix @ jacobian.T
    return 0.5 * (out + out.T)


def equilibrated_inverse(matrix: np.ndarray, limit: float = CONDITION_LIMIT) -> np.ndarray:
    """Invert a symmetric positive matrix after diagonal scaling.

    Raw FIMs mix units (seconds, radians, gains) and their unscaled condition
    number is meaningless, so the guard is applied to ``D^-1/2 I D^-1/2``.
    """
    matrix = np.asarray(matrix, dtype=float)
    diag = np.diag(matrix)
    if np.any(diag <= 0) or not np.all(np.isfinite(matrix)):
        rank = int(np.linalg.matrix_rank(matrix)) if np.all(np.isfinite(matrix)) else None
        raise SingularFimError("FIM has a nonpositive diagonal", rank=rank)
    scale = 1.0 / np.sqrt(diag)
    scaled = matrix * np.outer(scale, scale)
    cond = np.linalg.cond(scaled)
    if not cond < limit:
        rank = int(np.linalg.matrix_rank(scaled, tol=np.max(np.abs(scaled)) / limit))
        raise SingularFimError(f"FIM is singular (condition {cond:.3g}, rank {rank})", rank=rank, condition=cond)
    inv = np.linalg.inv(scaled) * np.outer(scale, scale)
    return 0.5 * (inv + inv.T)


def error_bounds(fim_state: np.ndarray, fim_channel: np.ndarray) -> BoundReport:
    crb_s = equilibrated_inverse(fim_state)
    crb_c = equilibrated_inverse(fim_channel)
    return BoundReport(
        peb=float(np.sqrt(np.trace(crb_s[:2, :2]))),
        aeb=float(np.sqrt(crb_c[0, 0])),
        deb=float(np.sqrt(crb_c[1, 1])),
        fim_state=fim_state,
        fim_channel=fim_channel,
        crb_state=crb_s,
        crb_channel=crb_c,
    )


def carrier_phase_jacobian(theta, parameterization: str, carrier_freq: float) -> np.ndarray:
    """``d theta / d theta'`` where ``theta'`` swaps ``xi`` for ``xi + 2 pi f_c toa``.

    With a narrow band the delay column of the derivatives is almost parallel to
    the phase column (both are ~ ``-j 2 pi f_c mu``) and the FIM loses every
    digit to that collinearity. Referencing the phase to the carrier removes
    the common part without changing the aoa, toa or position bounds. The same
    ``xi'`` serves both parameterizations, so the channel/state Jacobians
    carry over unchanged.
    """
    theta = np.asarray(theta, dtype=float)
    m = np.eye(4)
    if parameterization == "channel":
        m[3, 1] = -2 * np.pi * carrier_freq
    elif parameterization == "state":
        p = theta[:2]
        m[3, :2] = -2 * np.pi * carrier_freq * p / (SPEED_OF_LIGHT * np.linalg.norm(p))
    else:
        raise ValueError(f"unknown parameterization {parameterization!r}")
    return m


def _back(m: np.ndarray, crb_ref: np.ndarray) -> np.ndarray:
    out = m @ crb_ref @ m.T
    return 0.5 * (out + out.T)


def _forward_fim(m: np.ndarray, fim_ref: np.ndarray) -> np.ndarray:
    m_inv = np.linalg.inv(m)
    return transform_fim(fim_ref, m_inv.T)


def crb_report(kind: ModelKind, state: StateParams, config: ScenarioConfig, combiners: CombinerSet | None = None) -> BoundReport:
    """PEB/AEB/DEB of one model at one state.

    The FIM is built in the model's native parameterization (state for the
    near-field models, channel for the far-field model) with the carrier-
    referenced phase, mapped to the other parameterization with the Jacobian,
    inverted, and taken back to the plain phase.
    """
    kind = ModelKind.parse(kind)
    combiners = combiners or make_combiners(config)
    pilots = make_pilots(config)
    geometry = antenna_positions(config)
    theta_s = state.as_array()
    theta_c = state.to_channel().as_array()
    m_s = carrier_phase_jacobian(theta_s, "state", config.carrier_freq)
    m_c = carrier_phase_jacobian(theta_c, "channel", config.carrier_freq)
    if kind is ModelKind.MM:
        dh = channel_derivatives(kind, theta_c, config, geometry) @ m_c
        ref_c = fim_from_derivatives(dh, config.noise_variance, combiners, pilots)
        ref_s = transform_fim(ref_c, jacobian_state_from_channel(theta_c))
    else:
        dh = position_state_derivatives(kind, theta_s, config, geometry) @ m_s
        ref_s = fim_from_derivatives(dh, config.noise_variance, combiners, pilots)
        ref_c = transform_fim(ref_s, jacobian_channel_from_state(theta_s))
    if not (np.all(np.isfinite(ref_s)) and np.all(np.isfinite(ref_c))):
        raise SingularFimError("non-finite FIM entries (degenerate geometry)")
    crb_s = _back(m_s, equilibrated_inverse(ref_s))
    crb_c = _back(m_c, equilibrated_inverse(ref_c))
    return BoundReport(
        peb=float(np.sqrt(np.trace(crb_s[:2, :2]))),
        aeb=float(np.sqrt(crb_c[0, 0])),
        deb=float(np.sqrt(crb_c[1, 1])),
        fim_state=_forward_fim(m_s, ref_s),
        fim_channel=_forward_fim(m_c, ref_c),
        crb_state=crb_s,
        crb_channel=crb_c,
    )
