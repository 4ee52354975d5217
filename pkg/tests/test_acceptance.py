"""Acceptance checks, one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` or directly as a script.
Failures are reported as they are; tolerances are fixed below.
"""

import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nfmismatch.bounds import (  # noqa: E402
    crb_report,
    fim,
    jacobian_state_from_channel,
    mm_channel,
    mm_param_derivatives,
    position_jacobian,
    state_derivatives,
)
from nfmismatch.channel import ModelKind, StateParams, TRUE_MODELS, antenna_positions, channel_matrix, fresnel_fraunhofer  # noqa: E402
from nfmismatch.config import SPEED_OF_LIGHT as C, ScenarioConfig  # noqa: E402
from nfmismatch.estimators import run_monte_carlo  # noqa: E402
from nfmismatch.experiments import ExperimentSpec, area_relations, default_base, run_fig3, run_fig5  # noqa: E402
from nfmismatch.mcrb import DEFAULT_MME_DOMAIN, lower_bound, mme_report  # noqa: E402

import reference_data as ref  # noqa: E402
from oracles import central_diff, numeric_hessian, rel_err  # noqa: E402

THREADS = os.cpu_count() or 1
_capture = None


def report(n, passed, detail):
    line = f"CRITERION {n}: {'PASS' if passed else 'FAIL'} {detail}"
    if _capture is not None:
        with _capture.disabled():
            print(line, flush=True)
    else:
        print(line, flush=True)
    assert passed, line


@pytest.fixture(autouse=True)
def _expose_capsys(capsys):
    global _capture
    _capture = capsys
    yield
    _capture = None


def _ref_state(cfg):
    return StateParams.at([2.0, 2.0], cfg)


# ---------------------------------------------------------------------------


def test_criterion_1_crb_reproduction():
    t0 = time.perf_counter()
    base = ScenarioConfig()
    tm, mm = [], []
    for p in ref.POWERS_DBM:
        cfg = base.with_power(p)
        st = _ref_state(cfg)
        tm.append(crb_report(ModelKind.TM, st, cfg).peb)
        mm.append(crb_report(ModelKind.MM, st, cfg).peb)
    elapsed = time.perf_counter() - t0
    at10 = ref.POWERS_DBM.index(10)
    e_tm10 = abs(tm[at10] / 7.934e-3 - 1)
    e_mm10 = abs(mm[at10] / 7.925e-3 - 1)
    e_tm = max(abs(a / b - 1) for a, b in zip(tm, ref.CRB_TM))
    e_mm = max(abs(a / b - 1) for a, b in zip(mm, ref.CRB_MM))
    ok = e_tm10 < 0.02 and e_mm10 < 0.02 and e_tm < 0.03 and e_mm < 0.03 and elapsed < 10
    report(
        1,
        ok,
        f"CRB-TM(10dBm)={tm[at10]:.5e} (err {e_tm10:.2%}), CRB-MM(10dBm)={mm[at10]:.5e} (err {e_mm10:.2%}), "
        f"sweep max err TM {e_tm:.2%} MM {e_mm:.2%}, {elapsed:.2f} s",
    )


def test_criterion_2_lb_reproduction():
    t0 = time.perf_counter()
    base = ScenarioConfig()
    res = {}
    for p in (10.0, 30.0):
        cfg = base.with_power(p)
        res[p] = lower_bound(ModelKind.TM, _ref_state(cfg), cfg)
    elapsed = time.perf_counter() - t0
    e10 = abs(res[10.0].peb / 8.711e-3 - 1)
    e30 = abs(res[30.0].peb / 3.639e-3 - 1)
    share = np.trace(res[30.0].mcrb_position) / np.trace(res[30.0].lb_position)
    ok = e10 < 0.10 and e30 < 0.10 and share < 0.10 and elapsed < 60
    report(
        2,
        ok,
        f"LB(10dBm)={res[10.0].peb:.4e} (err {e10:.2%}), LB(30dBm)={res[30.0].peb:.4e} (err {e30:.2%}), "
        f"MCRB share at 30 dBm {share:.2%} of LB variance, {elapsed:.2f} s",
    )


@pytest.mark.slow
def test_criterion_3_estimator_efficiency():
    t0 = time.perf_counter()
    base = ScenarioConfig()
    runs = [("MLE-TM", ModelKind.TM, 10.0, 8.33e-3), ("MMLE", ModelKind.MM, 10.0, 9.05e-3), ("MMLE", ModelKind.MM, 30.0, 3.64e-3)]
    parts, ok = [], True
    for name, est_kind, p, target in runs:
        cfg = base.with_power(p)
        rep = run_monte_carlo(cfg, _ref_state(cfg), ModelKind.TM, est_kind, 500, cfg.seed, workers=THREADS)
        err = abs(rep.rmse / target - 1)
        ok &= err < 0.15
        parts.append(f"{name}@{p:g}dBm={rep.rmse:.4e} (err {err:.1%}, nonconv {rep.n_nonconverged})")
    report(3, ok, ", ".join(parts) + f", {time.perf_counter() - t0:.0f} s on {THREADS} worker(s)")


def test_criterion_4_mme_calibration():
    cfg = default_base("fig3_array")
    state = _ref_state(cfg)
    targets = dict(zip(TRUE_MODELS, (-17.16, -49.12, -22.49, -17.75)))
    summary, matching = [], []
    for domain in ("variance", "rmse"):
        vals = {k: mme_report(k, state, cfg, domain).mme_peb for k in TRUE_MODELS}
        worst = max(abs(vals[k] - targets[k]) for k in TRUE_MODELS)
        if worst <= 1.5:
            matching.append(domain)
        summary.append(f"{domain}: " + " ".join(f"{vals[k]:.2f}" for k in TRUE_MODELS) + f" (max dev {worst:.2f} dB)")
    ok = bool(matching) and DEFAULT_MME_DOMAIN in matching
    report(4, ok, f"matching={matching} default={DEFAULT_MME_DOMAIN}; " + "; ".join(summary))


@pytest.mark.slow
def test_criterion_5_orderings():
    base = default_base("fig3_array")
    out = run_fig3(ExperimentSpec("fig3_array", base=base, threads=THREADS))
    col = {k: f"mme_peb_db_{k.value.lower().replace('-', '_')}" for k in TRUE_MODELS}
    sns, swm, bse = (col[ModelKind.TM_SNS], col[ModelKind.TM_SWM], col[ModelKind.TM_BSE])
    arr = out["fig3_array"]
    bad_swm = [r["n_antennas"] for r in arr if not r[sns] < r[swm]]
    bad_bse = [r["n_antennas"] for r in arr if not r[sns] < r[bse]]
    dist = out["fig3_distance"]
    half = len(dist) // 2
    near_bad = [r["distance_m"] for r in dist[:half] if not r[swm] > r[bse]]
    far_bad = [r["distance_m"] for r in dist[half:] if not r[bse] > r[swm]]
    ok = not (bad_swm or bad_bse or near_bad or far_bad)
    fmt = lambda xs: "[" + ", ".join(f"{x:.3g}" for x in xs) + "]"  # noqa: E731
    report(
        5,
        ok,
        f"SNS<SWM violated at N={bad_swm}, SNS<BSE violated at N={bad_bse}, "
        f"SWM>BSE violated in near half at d={fmt(near_bad)}, BSE>SWM violated in far half at d={fmt(far_bad)}",
    )


def test_criterion_6_zero_mismatch():
    rng = np.random.default_rng(6)
    cfg = ScenarioConfig()
    worst = 0.0
    for _ in range(100):
        r, aoa, xi = rng.uniform(0.5, 20.0), rng.uniform(-1.3, 1.3), rng.uniform(0, 2 * math.pi)
        state = StateParams.at([r * math.cos(aoa), r * math.sin(aoa)], cfg, xi)
        lb = lower_bound(ModelKind.MM, state, cfg).lb
        crb = crb_report(ModelKind.MM, state, cfg).crb_channel
        d = np.sqrt(np.diag(crb))
        worst = max(worst, float(np.max(np.abs(lb - crb) / np.outer(d, d))))
    report(6, worst < 1e-6, f"max scaled |LB-CRB| over 100 states = {worst:.2e}")


def _loglik_fim(mean_fn, theta, steps, variance):
    mu0 = mean_fn(theta)

    def neg_loglik(t):
        e = mu0 - mean_fn(t)
        return float(np.vdot(e, e).real) / variance

    return numeric_hessian(neg_loglik, theta, steps)


def test_criterion_7_derivatives():
    rng = np.random.default_rng(7)
    cfg = ScenarioConfig()
    geometry = antenna_positions(cfg)
    worst_state = worst_mm = 0.0
    for _ in range(1000):
        r, aoa, xi = rng.uniform(0.3, 20.0), rng.uniform(-1.3, 1.3), rng.uniform(0, 2 * math.pi)
        state = StateParams.at([r * math.cos(aoa), r * math.sin(aoa)], cfg, xi)
        theta = state.as_array()
        steps = [1e-7, 1e-7, 1e-7 * state.gain_magnitude, 1e-7]
        for kind in TRUE_MODELS:
            analytic = state_derivatives(kind, state, cfg, geometry)
            fd = central_diff(lambda t: channel_matrix(kind, StateParams.from_array(t), cfg, geometry), theta, steps)
            errs = [rel_err(fd[..., :2], analytic[..., :2])] + [rel_err(fd[..., i], analytic[..., i]) for i in (2, 3)]
            worst_state = max(worst_state, *errs)
        tc = state.to_channel().as_array()
        analytic = mm_param_derivatives(tc, cfg)
        fd = central_diff(lambda t: mm_channel(t, cfg), tc, [1e-7, 2e-8 / C, 1e-7 * tc[2], 1e-7])
        worst_mm = max(worst_mm, *(rel_err(fd[..., i], analytic[..., i]) for i in range(4)))

    x = math.sqrt(cfg.tx_power)
    theta_mm = np.array([math.pi / 4, 2 * math.sqrt(2) / C, 6.0e-5, 0.4])
    h = _loglik_fim(lambda t: (mm_channel(t, cfg) * x).reshape(-1), theta_mm, [1e-6, 1e-16, 1e-8, 1e-4], cfg.noise_variance)
    m = fim(ModelKind.MM, theta_mm, "channel", cfg).matrix
    d = np.sqrt(np.diag(m))
    worst_fim = float(np.max(np.abs(h - m) / np.outer(d, d)))

    worst_jac = 0.0
    for _ in range(1000):
        aoa, toa = rng.uniform(-1.5, 1.5), rng.uniform(0.01, 100.0) / C
        js = jacobian_state_from_channel(np.array([aoa, toa, 1e-4, 0.1]))
        worst_jac = max(worst_jac, float(np.max(np.abs(js[:2, :2] @ position_jacobian(aoa, toa).T - np.eye(2)))))

    ok = worst_state < 1e-6 and worst_mm < 1e-6 and worst_fim < 1e-4 and worst_jac < 1e-12
    report(
        7,
        ok,
        f"state-derivative FD err {worst_state:.1e} (4 true kinds x 1000 states), MM FD err {worst_mm:.1e}, "
        f"FIM vs log-likelihood Hessian {worst_fim:.1e}, Jacobian product err {worst_jac:.1e}",
    )


def test_criterion_8_region_constants():
    d_n, d_f = fresnel_fraunhofer(antenna_positions(ScenarioConfig()))
    ok = abs(d_n / 0.235 - 1) < 0.005 and abs(d_f / 4.25 - 1) < 0.005
    report(8, ok, f"D_N={d_n:.4f} m, D_F={d_f:.4f} m")


@pytest.mark.slow
def test_criterion_9_contour_areas():
    t0 = time.perf_counter()
    spec = ExperimentSpec("fig5_variants", base=default_base("fig5_variants"), threads=THREADS)
    rows, _ = run_fig5(spec)
    rel = area_relations(rows, "peb")
    areas = ", ".join(f"{r['variant']}={r['area_peb_m2']:.3f}" for r in rows)
    info = "; ".join(f"{m}: {area_relations(rows, m)}" for m in ("aeb", "deb"))
    report(9, all(rel.values()), f"PEB relations {rel}; PEB areas m^2 {areas}; for information {info}; {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
