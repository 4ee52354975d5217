"""Misspecified CRB: pseudo-true parameters, the A/B matrices, the lower bound and the MME.

The estimation model is always the far-field model ``MM`` in channel
parameters ``[aoa, toa, rho, xi]``; the data model is any ``ModelKind``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bounds import (
    SingularFimError,
    carrier_phase_jacobian,
    crb_report,
    equilibrated_inverse,
    mm_channel,
    mm_param_derivatives,
    mm_param_second_derivatives,
    position_jacobian,
)
from .channel import ChannelParams, ModelKind, StateParams, _element_offsets, channel_matrix, position_from_params
from .config import SPEED_OF_LIGHT, ScenarioConfig
from .observation import CombinerSet, PilotSet, make_combiners, make_pilots, stack_blocks

DEFAULT_MME_DOMAIN = "rmse"
MME_FLOOR_DB = -120.0
ENDFIRE_MARGIN = 1e-6


class PseudoTrueError(ArithmeticError):
    """The mismatched fit ends on the edge of the parameter space (endfire or zero delay)."""


@dataclass(frozen=True)
class PseudoTrueResult:
    theta0: ChannelParams
    residual: float  # |eps|^2
    converged: bool
    iterations: int
    start_residual: float  # residual of the projection started at the true aoa/toa
    mean_power: float  # |mu_bar|^2


@dataclass(frozen=True)
class McrbResult:
    theta0: np.ndarray
    theta_bar: np.ndarray
    matrix_a: np.ndarray
    matrix_b: np.ndarray
    mcrb: np.ndarray
    bias_term: np.ndarray
    lb: np.ndarray
    lb_position: np.ndarray  # 2x2
    mcrb_position: np.ndarray
    bias_position: np.ndarray
    pseudo_true: PseudoTrueResult

    @property
    def peb(self) -> float:
        return float(np.sqrt(np.trace(self.lb_position)))

    @property
    def aeb(self) -> float:
        return float(np.sqrt(self.lb[0, 0]))

    @property
    def deb(self) -> float:
        return float(np.sqrt(self.lb[1, 1]))


@dataclass(frozen=True)
class MmeReport:
    mme_peb: float
    mme_aeb: float
    mme_deb: float
    crb_tm: dict
    lb: dict
    domain: str
    extra: dict = field(default_factory=dict)


class _MmProblem:
    """Stacked far-field means for a fixed scenario, with the gain split off."""

    def __init__(self, config: ScenarioConfig, combiners: CombinerSet, pilots: PilotSet):
        self.config = config
        self.combiners = combiners
        self.pilots = pilots
        self.freqs = config.subcarrier_freqs
        self.offsets = _element_offsets(config.n_antennas)

    def stack(self, channels):
        return stack_blocks(channels, self.combiners, self.pilots).reshape((-1,) + channels.shape[2:])

    def mean(self, theta):
        return self.stack(mm_channel(theta, self.config))

    def jac(self, theta):
        return self.stack(mm_param_derivatives(theta, self.config))

    def hess(self, theta):
        return self.stack(mm_param_second_derivatives(theta, self.config))

    def grid_objective(self, mu_bar, aoas, toas):
        """Concentrated residual ``|mu_bar|^2 - |eta^H mu_bar|^2 / |eta|^2`` on an aoa x toa grid."""
        G, K, M = self.config.n_transmissions, self.config.n_subcarriers, self.config.n_rfc
        blocks = mu_bar.reshape(G, K, M)
        steer = np.exp(0.5j * np.pi * self.offsets[None, :] * np.sin(aoas)[:, None])  # (A, N)
        if self.combiners.is_identity:
            combined = np.broadcast_to(steer[:, None, :], (len(aoas), G, M))
        else:
            combined = np.einsum("gnm,an->agm", self.combiners.matrices, steer)
        z = np.einsum("agm,gkm->agk", combined.conj(), blocks)  # (A, G, K)
        x = self.pilots.symbols  # (G, K)
        z = (z * x.conj()[None]).sum(axis=1)  # (A, K)
        phase = np.exp(2j * np.pi * np.outer(self.freqs, toas))  # (K, T)
        corr = z @ phase  # (A, T)
        norm2 = np.einsum("gk,agm->a", np.abs(x) ** 2, np.abs(combined) ** 2)
        return np.vdot(mu_bar, mu_bar).real - np.abs(corr) ** 2 / norm2[:, None]

    def best_gain(self, mu_bar, aoa, toa):
        eta = self.mean(np.array([aoa, toa, 1.0, 0.0]))
        return np.vdot(eta, mu_bar) / np.vdot(eta, eta).real


def true_mean(kind: ModelKind, state: StateParams, config: ScenarioConfig, combiners: CombinerSet, pilots: PilotSet) -> np.ndarray:
    return stack_blocks(channel_matrix(kind, state, config), combiners, pilots).reshape(-1)


def _refine(problem: _MmProblem, mu_bar, aoa, toa, max_iter=100):
    """Damped Newton on ``|mu_bar - mu(theta)|^2`` from the given aoa/toa.

    Uses the exact Hessian when it is positive definite and the Gauss-Newton
    matrix otherwise, each with backtracking. Returns ``(theta, residual,
    converged, iterations)``.
    """
    alpha = problem.best_gain(mu_bar, aoa, toa)
    theta = np.array([aoa, toa, max(abs(alpha), 1e-300), (-np.angle(alpha)) % (2 * np.pi)])
    eps = mu_bar - problem.mean(theta)
    f = float(np.vdot(eps, eps).real)
    power = float(np.vdot(mu_bar, mu_bar).real)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = problem.jac(theta)
        grad = -2 * np.real(d.conj().T @ eps)
        gn = 2 * np.real(d.conj().T @ d)
        hess = gn - 2 * np.real(np.einsum("lij,l->ij", problem.hess(theta).conj(), eps))
        scale = 1.0 / np.sqrt(np.diag(gn))
        # scale-free stationarity: |Re<d_i, eps>| / (|mu_bar| |d_i|)
        stationarity = float(np.max(np.abs(grad) * scale) / np.sqrt(2 * power))
        if stationarity < 1e-12:
            converged = True
            break
        step = None
        for matrix in (hess, gn):
            scaled = matrix * np.outer(scale, scale)
            try:
                chol = np.linalg.cholesky(scaled)
            except np.linalg.LinAlgError:
                continue
            step = -scale * np.linalg.solve(chol.T, np.linalg.solve(chol, grad * scale))
            break
        if step is None:
            step = -grad * scale**2
        slope = float(grad @ step)
        t = 1.0
        while t > 1e-12:
            trial = theta + t * step
            if trial[2] > 0 and trial[1] > 0:
                eps_t = mu_bar - problem.mean(trial)
                f_t = float(np.vdot(eps_t, eps_t).real)
                if f_t <= f + 1e-4 * t * slope:
                    break
            t *= 0.5
        else:
            converged = stationarity < 1e-9
            break
        theta, eps, f = trial, eps_t, f_t
        rel = np.abs(t * step) / np.array([1.0, theta[1], theta[2], 1.0])
        if np.max(rel) < 1e-13:
            converged = True
            break
    # the far-field mean depends on aoa only through sin(aoa)
    theta[0] = float(np.arcsin(np.clip(np.sin(theta[0]), -1.0, 1.0)))
    theta[3] = theta[3] % (2 * np.pi)
    eps = mu_bar - problem.mean(theta)
    return theta, float(np.vdot(eps, eps).real), converged, it


def pseudo_true(
    true_kind: ModelKind,
    state: StateParams,
    config: ScenarioConfig,
    combiners: CombinerSet | None = None,
    grid_shape: tuple[int, int] | None = None,
    max_iter: int = 100,
) -> PseudoTrueResult:
    """Least-squares projection of the true-model mean onto the far-field model.

    Under Gaussian noise the KL-divergence minimizer is the least-squares fit
    of the means. A concentrated-likelihood grid over aoa x range picks the
    basin; a damped Newton iteration on all four parameters polishes it.
    The refinement always starts at the true aoa/toa too, and the better
    solution is kept.
    """
    combiners = combiners or make_combiners(config)
    pilots = make_pilots(config)
    problem = _MmProblem(config, combiners, pilots)
    mu_bar = true_mean(ModelKind.parse(true_kind), state, config, combiners, pilots)
    power = float(np.vdot(mu_bar, mu_bar).real)

    theta_bar = state.to_channel()
    starts = [(theta_bar.aoa, theta_bar.toa)]
    n_aoa, n_range = grid_shape or (max(200, 4 * config.n_antennas), 200)
    if n_aoa > 0 and n_range > 0:
        aoas = np.linspace(-np.pi / 2 + 0.01, np.pi / 2 - 0.01, n_aoa)
        toas = np.linspace(0.1, 20.0, n_range) / SPEED_OF_LIGHT
        obj = problem.grid_objective(mu_bar, aoas, toas)
        ia, it = np.unravel_index(np.argmin(obj), obj.shape)
        # the mean is periodic in toa with period 1/spacing (the gain phase absorbs
        # the shift), so move the grid pick to the alias nearest the true toa
        period = 1.0 / config.subcarrier_spacing
        toa_grid = toas[it] - period * np.round((toas[it] - theta_bar.toa) / period)
        if toa_grid <= 0:
            toa_grid += period
        # a grid minimum next to the true aoa/toa sits in the basin already covered
        same_basin = abs(aoas[ia] - theta_bar.aoa) <= 2 * (aoas[1] - aoas[0]) and abs(toa_grid - theta_bar.toa) <= 2 * (toas[1] - toas[0])
        if not same_basin:
            starts.append((aoas[ia], toa_grid))

    best = None
    start_residual = None
    for aoa, toa in starts:
        found = _refine(problem, mu_bar, aoa, toa, max_iter)
        if start_residual is None:
            start_residual = found[1]
        if best is None or found[1] < best[1]:
            best = found
    theta, res, converged, iterations = best
    interior = abs(theta[0]) < np.pi / 2 - ENDFIRE_MARGIN and theta[1] > 0
    if not interior:
        raise PseudoTrueError(f"pseudo-true parameters on the boundary (aoa={theta[0]:.6g}, toa={theta[1]:.6g})")
    return PseudoTrueResult(ChannelParams.from_array(theta), res, converged, iterations, start_residual, power)


def _wrap(angle):
    return (angle + np.pi) % (2 * np.pi) - np.pi


def mismatch_residual(true_kind, state, theta0, config, combiners=None):
    combiners = combiners or make_combiners(config)
    pilots = make_pilots(config)
    problem = _MmProblem(config, combiners, pilots)
    mu_bar = true_mean(ModelKind.parse(true_kind), state, config, combiners, pilots)
    return problem, mu_bar - problem.mean(np.asarray(theta0, dtype=float))


def matrix_a(theta0, eps, problem: _MmProblem, variance: float, reparam: np.ndarray | None = None) -> np.ndarray:
    """Expected Hessian of the mismatched log-likelihood at ``theta0``.

    ``reparam`` is a constant ``d theta / d theta'``; the result is then with
    respect to ``theta'``.
    """
    d = problem.jac(theta0)
    dd = problem.hess(theta0)
    if reparam is not None:
        d = d @ reparam
        dd = np.einsum("ki,lkm,mj->lij", reparam, dd, reparam)
    curvature = np.real(np.einsum("lij,l->ij", dd.conj(), eps))
    gram = np.real(d.conj().T @ d)
    a = 2.0 / variance * (curvature - gram)
    return 0.5 * (a + a.T)


def matrix_b(theta0, eps, problem: _MmProblem, variance: float, reparam: np.ndarray | None = None) -> np.ndarray:
    """Expected outer product of the mismatched score at ``theta0``."""
    d = problem.jac(theta0)
    if reparam is not None:
        d = d @ reparam
    score = np.real(d.conj().T @ eps)
    gram = np.real(d.conj().T @ d)
    b = 4.0 / variance**2 * np.outer(score, score) + 2.0 / variance * gram
    return 0.5 * (b + b.T)


def lower_bound(
    true_kind: ModelKind,
    state: StateParams,
    config: ScenarioConfig,
    combiners: CombinerSet | None = None,
    pseudo: PseudoTrueResult | None = None,
) -> McrbResult:
    """``LB = A^-1 B A^-1 + (theta_bar - theta0)(theta_bar - theta0)^T`` in channel parameters.

    The position-domain bound maps the aoa/toa block through ``dp/d(aoa, toa)``
    at ``theta0``.
    """
    combiners = combiners or make_combiners(config)
    pseudo = pseudo or pseudo_true(true_kind, state, config, combiners)
    theta0 = pseudo.theta0.as_array()
    problem, eps = mismatch_residual(true_kind, state, theta0, config, combiners)
    var = config.noise_variance
    # the sandwich is formed with the carrier-referenced phase, where the
    # reparameterization is linear, and mapped back exactly
    m = carrier_phase_jacobian(theta0, "channel", config.carrier_freq)
    A_ref = matrix_a(theta0, eps, problem, var, m)
    B_ref = matrix_b(theta0, eps, problem, var, m)
    try:
        a_inv = -equilibrated_inverse(-A_ref)
    except SingularFimError as exc:
        raise SingularFimError(f"matrix A is singular: {exc}", rank=exc.rank, condition=exc.condition) from None
    m_inv = np.linalg.inv(m)
    A = m_inv.T @ A_ref @ m_inv
    B = m_inv.T @ B_ref @ m_inv
    A, B = 0.5 * (A + A.T), 0.5 * (B + B.T)
    mcrb = m @ (a_inv @ B_ref @ a_inv) @ m.T
    mcrb = 0.5 * (mcrb + mcrb.T)
    theta_bar = state.to_channel().as_array()
    diff = theta_bar - theta0
    diff[3] = _wrap(diff[3])
    bias = np.outer(diff, diff)
    lb = mcrb + bias
    jac = position_jacobian(theta0[0], theta0[1])
    mcrb_pos = jac @ mcrb[:2, :2] @ jac.T
    bias_pos = jac @ bias[:2, :2] @ jac.T
    return McrbResult(theta0, theta_bar, A, B, mcrb, bias, lb, mcrb_pos + bias_pos, mcrb_pos, bias_pos, pseudo)


def mme(crb_tm: float, lb: float, domain: str = DEFAULT_MME_DOMAIN) -> float:
    """Model mismatch error in dB.

    ``crb_tm`` and ``lb`` are variances (diagonal entries or traces of bound
    matrices). With ``domain="rmse"`` both are square-rooted first. The result
    is floored at ``MME_FLOOR_DB``.
    """
    if domain not in ("variance", "rmse"):
        raise ValueError(f"unknown MME domain {domain!r}")
    if not crb_tm > 0:
        raise ValueError("CRB of the true model must be positive")
    if domain == "rmse":
        crb_tm, lb = np.sqrt(crb_tm), np.sqrt(lb)
    ratio = abs(crb_tm - lb) / crb_tm
    if ratio <= 10 ** (MME_FLOOR_DB / 10):
        return MME_FLOOR_DB
    return float(10 * np.log10(ratio))


def mme_report(
    true_kind: ModelKind,
    state: StateParams,
    config: ScenarioConfig,
    domain: str = DEFAULT_MME_DOMAIN,
    combiners: CombinerSet | None = None,
) -> MmeReport:
    combiners = combiners or make_combiners(config)
    crb = crb_report(true_kind, state, config, combiners)
    lb = lower_bound(true_kind, state, config, combiners)
    crb_var = {"peb": crb.peb**2, "aeb": crb.aeb**2, "deb": crb.deb**2}
    lb_var = {"peb": float(np.trace(lb.lb_position)), "aeb": float(lb.lb[0, 0]), "deb": float(lb.lb[1, 1])}
    return MmeReport(
        mme_peb=mme(crb_var["peb"], lb_var["peb"], domain),
        mme_aeb=mme(crb_var["aeb"], lb_var["aeb"], domain),
        mme_deb=mme(crb_var["deb"], lb_var["deb"], domain),
        crb_tm=crb_var,
        lb=lb_var,
        domain=domain,
        extra={"theta0": lb.theta0, "converged": lb.pseudo_true.converged},
    )


def pseudo_true_position(result: PseudoTrueResult) -> np.ndarray:
    return position_from_params(result.theta0.aoa, result.theta0.toa)
