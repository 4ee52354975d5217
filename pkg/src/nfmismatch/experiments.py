"""Figure-style sweeps: power sweep with bounds and estimators, MME sweeps and MME maps.

Every sweep point is a pure function of ``(config, point)``, so points can be
farmed out to a process pool; results are always assembled in sweep order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bounds import SingularFimError, crb_report
from .channel import ModelKind, StateParams, TRUE_MODELS, antenna_positions
from .config import ScenarioConfig
from .contour import MISMATCH_THRESHOLD_DB, Polyline, mismatch_boundary, superlevel_area
from .estimators import EstimatorConfig, run_monte_carlo
from .mcrb import DEFAULT_MME_DOMAIN, PseudoTrueError, lower_bound, mme_report
from .observation import make_combiners

log = logging.getLogger(__name__)

EXPERIMENTS = ("fig2", "fig3_array", "fig3_distance", "fig4_map", "fig5_variants")
METRICS = ("peb", "aeb", "deb")
DEFAULT_POWERS_DBM = tuple(float(p) for p in np.linspace(-10.0, 30.0, 15))
DEFAULT_ARRAY_SIZES = (4, 9, 16, 25, 36, 49, 64, 81, 100, 121, 144)
DEFAULT_DISTANCES = tuple(float(d) for d in np.geomspace(0.25, 10.0, 60))


def default_base(experiment: str) -> ScenarioConfig:
    """Scenario each experiment starts from when no config file is given."""
    if experiment in ("fig3_array", "fig3_distance"):
        return ScenarioConfig(bandwidth=100e6, tx_power_dbm=20.0)
    if experiment in ("fig4_map", "fig5_variants"):
        return ScenarioConfig(tx_power_dbm=20.0)
    return ScenarioConfig()


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    position: tuple[float, float] = (2.0, 2.0)
    powers_dbm: tuple[float, ...] = DEFAULT_POWERS_DBM
    array_sizes: tuple[int, ...] = DEFAULT_ARRAY_SIZES
    distances: tuple[float, ...] = DEFAULT_DISTANCES
    ray_angle: float = np.pi / 4
    x_range: tuple[float, float] = (0.1, 6.0)
    y_range: tuple[float, float] = (-3.0, 3.0)
    grid_shape: tuple[int, int] = (60, 60)
    trials: int = 0
    mme_domain: str = DEFAULT_MME_DOMAIN
    threads: int = 1
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.trials < 0:
            raise ValueError("trials must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.mme_domain not in ("variance", "rmse"):
            raise ValueError(f"unknown MME domain {self.mme_domain!r}")
        if self.position[0] <= 0:
            raise ValueError("position must have p_x > 0")
        if min(self.array_sizes, default=1) < 1:
            raise ValueError("array sizes must be positive")
        if min(self.distances, default=1.0) <= 0:
            raise ValueError("distances must be positive")
        if not -np.pi / 2 < self.ray_angle < np.pi / 2:
            raise ValueError("ray angle must lie in (-pi/2, pi/2)")
        if self.x_range[0] <= 0 or self.x_range[1] <= self.x_range[0] or self.y_range[1] <= self.y_range[0]:
            raise ValueError("map ranges must be increasing with x > 0")
        if min(self.grid_shape) < 2:
            raise ValueError("map grid needs at least 2x2 points")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(*self.x_range, self.grid_shape[0]), np.linspace(*self.y_range, self.grid_shape[1])


def parallel_map(func: Callable, items: list, threads: int = 1) -> list:
    """``[func(x) for x in items]``, optionally in a process pool; order is preserved."""
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items, chunksize=chunk))


# ---- power sweep -----------------------------------------------------------


def _fig2_point(args):
    config, position = args
    state = StateParams.at(position, config)
    crb_tm = crb_report(ModelKind.TM, state, config)
    crb_mm = crb_report(ModelKind.MM, state, config)
    lb = lower_bound(ModelKind.TM, state, config)
    mcrb_var = float(np.trace(lb.mcrb_position))
    bias_var = float(np.trace(lb.bias_position))
    return {
        "P_dbm": config.tx_power_dbm,
        "crb_tm_peb_m": crb_tm.peb,
        "crb_mm_peb_m": crb_mm.peb,
        "lb_peb_m": lb.peb,
        "mcrb_peb_m": float(np.sqrt(mcrb_var)),
        "bias_peb_m": float(np.sqrt(bias_var)),
        "crb_tm_peb_var_m2": crb_tm.peb**2,
        "crb_mm_peb_var_m2": crb_mm.peb**2,
        "lb_peb_var_m2": lb.peb**2,
        "mcrb_peb_var_m2": mcrb_var,
        "bias_peb_var_m2": bias_var,
    }


def run_fig2(spec: ExperimentSpec, on_record: Callable[[list[dict]], None] | None = None) -> list[dict]:
    """Bounds (and, with ``trials > 0``, estimator RMSEs) against transmit power.

    ``on_record`` is called with the records so far after every power point.
    """
    configs = [spec.base.with_power(p) for p in spec.powers_dbm]
    records = []
    bound_rows = parallel_map(_fig2_point, [(c, spec.position) for c in configs], spec.threads)
    for config, row in zip(configs, bound_rows):
        if spec.trials > 0:
            state = StateParams.at(spec.position, config)
            for label, kind_est in (("mle", ModelKind.TM), ("mmle", ModelKind.MM)):
                rep = run_monte_carlo(config, state, ModelKind.TM, kind_est, spec.trials, config.seed, spec.estimator, spec.threads)
                row[f"rmse_{label}_m"] = rep.rmse
                row[f"nonconverged_{label}"] = rep.n_nonconverged
        records.append(row)
        if on_record is not None:
            on_record(records)
    return records


# ---- MME sweeps ------------------------------------------------------------


def _column(metric: str, kind: ModelKind) -> str:
    return f"mme_{metric}_db_{kind.value.lower().replace('-', '_')}"


def mme_columns(kinds=TRUE_MODELS) -> list[str]:
    return [_column(m, k) for k in kinds for m in METRICS]


def _safe_mme(config: ScenarioConfig, position, domain: str, combiners=None, kinds=(ModelKind.TM,)) -> dict | None:
    """MME values for each true-model kind, or ``None`` when the point cannot be evaluated."""
    p = np.asarray(position, dtype=float)
    geometry = antenna_positions(config)
    if p[0] <= 0 or np.min(np.linalg.norm(geometry.positions - p, axis=1)) < 1e-9:
        return None
    state = StateParams.at(p, config)
    out = {}
    try:
        for kind in kinds:
            rep = mme_report(kind, state, config, domain, combiners)
            out[kind] = rep
    except (PseudoTrueError, SingularFimError, FloatingPointError) as exc:
        log.warning("skipped point px=%.6g py=%.6g: %s", p[0], p[1], exc)
        return None
    return out


def _sweep_point(args):
    config, position, domain = args
    reps = _safe_mme(config, position, domain, kinds=TRUE_MODELS)
    row = {}
    for kind in TRUE_MODELS:
        for metric in METRICS:
            row[_column(metric, kind)] = float("nan") if reps is None else getattr(reps[kind], f"mme_{metric}")
    return row


def run_fig3(spec: ExperimentSpec) -> dict[str, list[dict]]:
    """MME of each true-model kind against array size and against distance.

    Returns ``{"fig3_array": rows, "fig3_distance": rows}``. The array sweep
    uses ``spec.position``; the distance sweep walks the ``spec.ray_angle`` ray
    with the base array size.
    """
    base = spec.base
    array_cfgs = [base.replace(n_antennas=int(n), n_rfc=int(n) if base.combiner == "digital" else base.n_rfc) for n in spec.array_sizes]
    array_rows = parallel_map(_sweep_point, [(c, spec.position, spec.mme_domain) for c in array_cfgs], spec.threads)
    direction = np.array([np.cos(spec.ray_angle), np.sin(spec.ray_angle)])
    dist_rows = parallel_map(_sweep_point, [(base, d * direction, spec.mme_domain) for d in spec.distances], spec.threads)
    arrays = [{"n_antennas": int(n), **row} for n, row in zip(spec.array_sizes, array_rows)]
    dists = [{"distance_m": float(d), **row} for d, row in zip(spec.distances, dist_rows)]
    return {"fig3_array": arrays, "fig3_distance": dists}


# ---- MME maps --------------------------------------------------------------


@dataclass
class MapResult:
    name: str
    config: ScenarioConfig
    xs: np.ndarray
    ys: np.ndarray
    fields: dict  # metric -> (nx, ny) array in dB
    contours: dict  # metric -> list[Polyline]
    areas: dict  # metric -> m^2 with MME >= threshold
    skipped: list = field(default_factory=list)

    def records(self) -> list[dict]:
        rows = []
        for i, x in enumerate(self.xs):
            for j, y in enumerate(self.ys):
                rows.append({"px": float(x), "py": float(y), **{f"mme_{m}_db": float(self.fields[m][i, j]) for m in METRICS}})
        return rows


def _map_row(args):
    config, xs_chunk, ys, domain = args
    combiners = make_combiners(config)
    out = []
    for x in xs_chunk:
        for y in ys:
            reps = _safe_mme(config, (x, y), domain, combiners)
            if reps is None:
                out.append(None)
            else:
                rep = reps[ModelKind.TM]
                out.append((rep.mme_peb, rep.mme_aeb, rep.mme_deb))
    return out


def mme_map(name: str, config: ScenarioConfig, spec: ExperimentSpec, threshold_db: float = MISMATCH_THRESHOLD_DB) -> MapResult:
    xs, ys = spec.axes()
    jobs = [(config, xs[i : i + 1], ys, spec.mme_domain) for i in range(len(xs))]
    rows = parallel_map(_map_row, jobs, spec.threads)
    values = np.full((len(xs), len(ys), 3), np.nan)
    skipped = []
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            if v is None:
                skipped.append((float(xs[i]), float(ys[j])))
                log.warning("map %s: no MME at px=%.6g py=%.6g", name, xs[i], ys[j])
            else:
                values[i, j] = v
    fields = {m: values[..., n] for n, m in enumerate(METRICS)}
    contours = {m: mismatch_boundary(xs, ys, fields[m], threshold_db) for m in METRICS}
    areas = {m: superlevel_area(xs, ys, fields[m], threshold_db) for m in METRICS}
    return MapResult(name, config, xs, ys, fields, contours, areas, skipped)


def run_fig4(spec: ExperimentSpec) -> MapResult:
    return mme_map("baseline", spec.base, spec)


def fig5_variants(base: ScenarioConfig) -> dict[str, ScenarioConfig]:
    return {
        "power_30dbm": base.with_power(30.0),
        "analog_g50": base.replace(combiner="analog", n_rfc=1, n_transmissions=50),
        "n32": base.replace(n_antennas=32, n_rfc=32 if base.combiner == "digital" else base.n_rfc),
        "w100mhz": base.replace(bandwidth=100e6),
    }


def run_fig5(spec: ExperimentSpec, baseline: MapResult | None = None) -> tuple[list[dict], dict[str, MapResult]]:
    """Maps for the four variant scenarios plus the baseline, and an area table.

    The table has one row per map with the enclosed area of every metric and
    the ratio to the baseline area.
    """
    maps = {"baseline": baseline or run_fig4(spec)}
    for name, cfg in fig5_variants(spec.base).items():
        maps[name] = mme_map(name, cfg, spec)
    ref = maps["baseline"].areas
    rows = []
    for name, result in maps.items():
        cfg = result.config
        row = {
            "variant": name,
            "n_antennas": cfg.n_antennas,
            "bandwidth_hz": cfg.bandwidth,
            "P_dbm": cfg.tx_power_dbm,
            "combiner": cfg.combiner,
            "n_transmissions": cfg.n_transmissions,
        }
        for m in METRICS:
            row[f"area_{m}_m2"] = result.areas[m]
        for m in METRICS:
            row[f"area_ratio_{m}"] = result.areas[m] / ref[m] if ref[m] > 0 else float("nan")
        row["n_skipped"] = len(result.skipped)
        rows.append(row)
    return rows, maps


def area_relations(rows: list[dict], metric: str = "peb") -> dict[str, bool]:
    """The three monotone area relations of the variant table."""
    area = {r["variant"]: r[f"area_{metric}_m2"] for r in rows}
    return {
        "power_up_area_up": area["power_30dbm"] > area["baseline"],
        "antennas_down_area_down": area["n32"] < area["baseline"],
        "bandwidth_down_area_down": area["w100mhz"] < area["baseline"],
    }


__all__ = [
    "EXPERIMENTS",
    "ExperimentSpec",
    "MapResult",
    "Polyline",
    "area_relations",
    "default_base",
    "fig5_variants",
    "mme_columns",
    "mme_map",
    "parallel_map",
    "run_fig2",
    "run_fig3",
    "run_fig4",
    "run_fig5",
]
