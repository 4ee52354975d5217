"""Concentrated maximum-likelihood position estimation and the Monte Carlo harness.

The complex gain is removed by least-squares projection, leaving a cost in the
2D position only. ``kind=TM`` (or any near-field variant) gives the MLE,
``kind=MM`` the mismatched MLE.
"""

from __future__ import annotations

import functools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import shape_position_log_gradient
from .channel import ModelKind, StateParams, antenna_positions, channel_shapes
from .config import ScenarioConfig
from .observation import CombinerSet, make_combiners, make_pilots, noise_free_observation, sample_observation, stack_blocks


@dataclass(frozen=True)
class EstimatorConfig:
    n_angle: int = 100
    n_range: int = 100
    angle_range_deg: tuple[float, float] = (-89.0, 89.0)
    range_interval: tuple[float, float] = (0.1, 20.0)
    max_iter: int = 200
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60
    grad_tol: float = 1e-14  # Newton decrement relative to |y|^2
    step_tol: float = 1e-10  # meters
    preconditioned: bool = True

    def __post_init__(self):
        lo, hi = self.angle_range_deg
        if not -90 < lo < hi < 90:
            raise ValueError("angle range must lie inside (-90, 90) degrees")
        rlo, rhi = self.range_interval
        if not 0 < rlo < rhi:
            raise ValueError("range interval must be positive and increasing")
        for name in ("n_angle", "n_range", "max_iter", "max_backtracks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.shrink < 1 and 0 < self.armijo < 1 and self.initial_step > 0):
            raise ValueError("bad line-search constants")

    def grid_positions(self) -> np.ndarray:
        """Polar grid, angle-major: linear index ``i_angle * n_range + i_range``."""
        angles = np.deg2rad(np.linspace(*self.angle_range_deg, self.n_angle))
        ranges = np.geomspace(*self.range_interval, self.n_range)
        a, r = np.meshgrid(angles, ranges, indexing="ij")
        return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1).reshape(-1, 2)


@dataclass(frozen=True)
class TrialResult:
    estimate: np.ndarray
    cost: float
    iterations: int
    converged: bool
    seed: int | None = None
    init: np.ndarray | None = None
    init_cost: float | None = None
    costs: tuple = ()


@dataclass(frozen=True)
class MonteCarloReport:
    rmse: float
    errors: np.ndarray
    n_trials: int
    n_nonconverged: int
    estimates: np.ndarray
    seeds: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    descriptor: dict = field(default_factory=dict)

    @property
    def mean_estimate(self) -> np.ndarray:
        return self.estimates.mean(axis=0)


class _Model:
    """Unit-gain stacked means ``eta(p)`` and their position derivatives for one scenario."""

    def __init__(self, kind: ModelKind, config: ScenarioConfig, combiners: CombinerSet | None = None):
        self.kind = ModelKind.parse(kind)
        self.config = config
        self.combiners = combiners or make_combiners(config)
        self.pilots = make_pilots(config)
        self.geometry = antenna_positions(config)

    def eta(self, p) -> np.ndarray:
        shape = channel_shapes(self.kind, p, self.config, self.geometry)
        return stack_blocks(shape, self.combiners, self.pilots).reshape(-1)

    def eta_and_grad(self, p):
        shape = channel_shapes(self.kind, p, self.config, self.geometry)
        grad = shape[..., None] * shape_position_log_gradient(self.kind, p, self.config, self.geometry)
        eta = stack_blocks(shape, self.combiners, self.pilots).reshape(-1)
        d_eta = stack_blocks(grad, self.combiners, self.pilots).reshape(-1, 2)
        return eta, d_eta


def _projection_cost(y, eta) -> float:
    q = np.vdot(eta, eta).real
    if not q > 0:
        raise ValueError("model direction has zero norm")
    r = y - (np.vdot(eta, y) / q) * eta
    return float(np.vdot(r, r).real)


def concentrated_cost(y, p, kind: ModelKind, config: ScenarioConfig, combiners: CombinerSet | None = None) -> float:
    """``|y - (eta^H y / |eta|^2) eta|^2`` with ``eta = mu / alpha`` of the chosen model."""
    p = np.asarray(p, dtype=float)
    if not p[0] > 0:
        raise ValueError("position must lie in the front half-plane")
    return _projection_cost(np.asarray(y), _Model(kind, config, combiners).eta(p))


@functools.lru_cache(maxsize=4)
def _dictionary(kind: ModelKind, config: ScenarioConfig, est: EstimatorConfig):
    # normalized conj(eta) rows; complex64 is enough to rank grid cells
    model = _Model(kind, config)
    positions = est.grid_positions()
    rows = []
    for chunk in np.array_split(positions, max(1, len(positions) // 500)):
        shape = channel_shapes(model.kind, chunk, config, model.geometry)  # (B, K, N)
        eta = stack_blocks(np.moveaxis(shape, 0, -1), model.combiners, model.pilots)  # (G, K, M, B)
        eta = eta.reshape(-1, len(chunk)).T
        eta /= np.linalg.norm(eta, axis=1, keepdims=True)
        rows.append(eta.conj().astype(np.complex64))
    return positions, np.concatenate(rows)


def _dictionary_key(config: ScenarioConfig) -> ScenarioConfig:
    # the grid only depends on geometry/waveform (and analog combiner seed)
    return config.replace(tx_power_dbm=0.0, noise_psd_dbm_hz=-170.0, noise_figure_db=0.0)


def grid_init(y, kind: ModelKind, config: ScenarioConfig, est: EstimatorConfig = EstimatorConfig()):
    """Grid cell minimizing the concentrated cost; ties go to the lowest linear index."""
    positions, dictionary = _dictionary(ModelKind.parse(kind), _dictionary_key(config), est)
    scores = np.abs(dictionary @ np.asarray(y, dtype=np.complex64)) ** 2
    best = int(np.argmax(scores))
    return positions[best].copy()


def _cost_grad_metric(model: _Model, y, p):
    eta, d_eta = model.eta_and_grad(p)
    q = np.vdot(eta, eta).real
    s = np.vdot(eta, y)
    alpha = s / q
    r = y - alpha * eta
    cost = float(np.vdot(r, r).real)
    dq = 2 * np.real(eta.conj() @ d_eta)  # (2,)
    ds = d_eta.conj().T @ y  # d(eta^H y) = (d eta)^H y
    grad = -(2 * np.real(np.conj(s) * ds) * q - abs(s) ** 2 * dq) / q**2
    perp = d_eta - np.outer(eta, (eta.conj() @ d_eta) / q)
    metric = 2 * abs(alpha) ** 2 * np.real(perp.conj().T @ perp)
    return cost, grad, metric


def refine(y, p_init, kind: ModelKind, config: ScenarioConfig, est: EstimatorConfig = EstimatorConfig(), combiners: CombinerSet | None = None) -> TrialResult:
    """Descent on the concentrated cost with Armijo backtracking.

    The descent direction is the negative gradient, preconditioned by the
    Gauss-Newton (variable projection) metric when ``est.preconditioned``;
    otherwise it is the normalized gradient. The cost never increases across
    accepted steps.
    """
    model = _Model(kind, config, combiners)
    y = np.asarray(y)
    y_energy = max(float(np.vdot(y, y).real), np.finfo(float).tiny)
    p = np.asarray(p_init, dtype=float).copy()
    cost, grad, metric = _cost_grad_metric(model, y, p)
    init_cost = cost
    costs = [cost]
    converged = False
    it = 0
    for it in range(est.max_iter + 1):
        direction = None
        if est.preconditioned:
            try:
                direction = -np.linalg.solve(metric, grad)
                if not np.all(np.isfinite(direction)) or grad @ direction >= 0:
                    direction = None
            except np.linalg.LinAlgError:
                direction = None
        if direction is None:
            norm = np.linalg.norm(grad)
            direction = -grad / norm if norm > 0 else np.zeros(2)
        slope = float(grad @ direction)
        decrement = -slope if est.preconditioned else np.linalg.norm(grad) ** 2 / max(np.trace(metric), np.finfo(float).tiny)
        if decrement <= est.grad_tol * y_energy:
            converged = True
            break
        if it == est.max_iter:
            break
        step = est.initial_step
        accepted = False
        for _ in range(est.max_backtracks):
            trial = p + step * direction
            if trial[0] > 0:
                trial_cost = _projection_cost(y, model.eta(trial))
                if trial_cost <= cost + est.armijo * step * slope:
                    accepted = True
                    break
            step *= est.shrink
        if not accepted:
            # no decrease representable in floating point
            converged = decrement <= 1e-8 * y_energy
            break
        moved = np.linalg.norm(step * direction)
        p = trial
        cost, grad, metric = _cost_grad_metric(model, y, p)
        costs.append(cost)
        if moved < est.step_tol:
            converged = True
            it += 1
            break
    return TrialResult(p, cost, len(costs) - 1, converged, init=np.asarray(p_init, dtype=float), init_cost=init_cost, costs=tuple(costs))


def estimate_position(y, kind: ModelKind, config: ScenarioConfig, est: EstimatorConfig = EstimatorConfig(), combiners: CombinerSet | None = None, seed=None) -> TrialResult:
    p0 = grid_init(y, kind, config, est)
    res = refine(y, p0, kind, config, est, combiners)
    return TrialResult(res.estimate, res.cost, res.iterations, res.converged, seed, res.init, res.init_cost, res.costs)


def _run_trials(args):
    config, state, kind_data, kind_est, est, seeds = args
    combiners = make_combiners(config)
    pilots = make_pilots(config)
    mu = noise_free_observation(kind_data, state, combiners, pilots, config)
    out = []
    for s in seeds:
        y = sample_observation(mu, config.noise_variance, int(s), combiners)
        res = estimate_position(y, kind_est, config, est, combiners, seed=int(s))
        out.append((res.estimate, res.iterations, res.converged))
    return out


def run_monte_carlo(
    config: ScenarioConfig,
    state: StateParams,
    kind_data: ModelKind,
    kind_estimator: ModelKind,
    n_trials: int,
    seed: int | None = None,
    est: EstimatorConfig = EstimatorConfig(),
    workers: int = 1,
) -> MonteCarloReport:
    """Repeat sample/estimate ``n_trials`` times; trial ``t`` uses seed ``seed + t``.

    Non-converged trials stay in the RMSE and are counted in the report.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    kind_data, kind_estimator = ModelKind.parse(kind_data), ModelKind.parse(kind_estimator)
    base = config.seed if seed is None else seed
    seeds = base + np.arange(n_trials)
    workers = max(1, min(workers, n_trials))
    chunks = np.array_split(seeds, workers)
    jobs = [(config, state, kind_data, kind_estimator, est, chunk) for chunk in chunks if len(chunk)]
    if workers == 1:
        results = [_run_trials(job) for job in jobs]
    else:
        # build the grid dictionary before forking so workers share it
        _dictionary(kind_estimator, _dictionary_key(config), est)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trials, jobs))
    flat = [r for chunk in results for r in chunk]
    estimates = np.array([r[0] for r in flat])
    iterations = np.array([r[1] for r in flat])
    converged = np.array([r[2] for r in flat])
    sq = np.sum((estimates - state.position) ** 2, axis=1)
    rmse = math.sqrt(math.fsum(sq) / n_trials)
    return MonteCarloReport(
        rmse=rmse,
        errors=np.sqrt(sq),
        n_trials=n_trials,
        n_nonconverged=int(np.sum(~converged)),
        estimates=estimates,
        seeds=seeds,
        iterations=iterations,
        converged=converged,
        descriptor={
            "kind_data": kind_data.value,
            "kind_estimator": kind_estimator.value,
            "position": state.position.tolist(),
            "tx_power_dbm": config.tx_power_dbm,
            "seed": int(base),
        },
    )


def default_workers() -> int:
    return os.cpu_count() or 1
