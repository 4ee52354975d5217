import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nfmismatch.channel import (
    ChannelParams,
    ModelKind,
    StateParams,
    antenna_positions,
    channel_matrix,
    channel_shapes,
    channel_vector,
    delay_term,
    fresnel_fraunhofer,
    params_from_position,
    path_gain,
    position_from_params,
    sns_amplitude,
    spherical_phase,
    steering_vector,
    steering_vector_bse,
)
from nfmismatch.config import SPEED_OF_LIGHT, ScenarioConfig

from oracles import channel_loop, rel_err

C = SPEED_OF_LIGHT
ALL_KINDS = list(ModelKind)
front = st.tuples(st.floats(0.05, 50.0), st.floats(-50.0, 50.0))


def test_two_element_positions():
    g = antenna_positions(ScenarioConfig(n_antennas=2, n_rfc=2))
    lam = C / 140e9
    assert lam == pytest.approx(2.1414e-3, rel=1e-4)
    np.testing.assert_allclose(g.positions, [[0, -lam / 4], [0, lam / 4]], rtol=0, atol=1e-18)


def test_aperture_and_single_antenna():
    g = antenna_positions(ScenarioConfig())
    assert g.aperture == pytest.approx(63 * (C / 140e9) / 2, rel=1e-15)
    assert g.aperture == pytest.approx(0.06745, rel=1e-3)
    assert np.ptp(g.positions[:, 1]) == pytest.approx(g.aperture, rel=1e-12)
    g1 = antenna_positions(ScenarioConfig(n_antennas=1, n_rfc=1))
    assert g1.aperture == 0 and np.all(g1.positions == 0)
    with pytest.raises(ValueError):
        g.positions[0, 0] = 1.0


def test_params_examples():
    aoa, toa = params_from_position([2, 2])
    assert aoa == pytest.approx(math.pi / 4, rel=1e-15) and toa == pytest.approx(2 * math.sqrt(2) / C, rel=1e-15)
    assert params_from_position([1, 0]) == (0.0, 1 / C)
    for bad in ([0, 0], [-1, 1], [0, 2]):
        with pytest.raises(ValueError):
            params_from_position(bad)
    np.testing.assert_allclose(position_from_params(math.pi / 4, 2 * math.sqrt(2) / C), [2, 2], rtol=1e-14)
    np.testing.assert_allclose(position_from_params(0.0, 10 / C), [10, 0], rtol=1e-15)
    np.testing.assert_allclose(position_from_params(-math.pi / 3, 2 / C), [1, -math.sqrt(3)], rtol=1e-14)
    for aoa, toa in ((math.pi / 2, 1e-9), (0.1, 0.0)):
        with pytest.raises(ValueError):
            position_from_params(aoa, toa)


@given(front)
def test_position_round_trip(p):
    back = position_from_params(*params_from_position(p))
    assert np.linalg.norm(back - np.array(p)) <= 1e-12 * np.linalg.norm(p)


@given(front, st.floats(1e-9, 1.0), st.floats(0, 2 * math.pi, exclude_max=True))
def test_state_channel_round_trip(p, rho, xi):
    state = StateParams(np.array(p), rho, xi)
    back = state.to_channel().to_state()
    assert np.linalg.norm(back.position - state.position) <= 1e-12 * np.linalg.norm(p)
    assert back.gain_magnitude == rho and back.gain_phase == xi


def test_path_gain_examples():
    g = antenna_positions(ScenarioConfig())
    alpha = path_gain([2, 2], 0.0, g)
    assert alpha.real == pytest.approx((C / 140e9) / (4 * math.pi * 2 * math.sqrt(2)), rel=1e-14)
    assert abs(alpha) == pytest.approx(6.025e-5, rel=1e-3)
    assert path_gain([2, 2], math.pi, g) == pytest.approx(-abs(alpha), rel=1e-14)
    assert abs(path_gain([4, 4], 0.0, g)) == pytest.approx(abs(alpha) / 2, rel=1e-14)
    with pytest.raises(ValueError):
        path_gain([0, 0], 0.0, g)


def test_steering_examples():
    assert np.all(steering_vector(0.0, 17) == 1)
    np.testing.assert_allclose(steering_vector(math.pi / 2, 2), [-1j, 1j], atol=1e-15)


def test_steering_matches_spherical_phase_far_away():
    cfg = ScenarioConfig(bandwidth=1e3)
    g = antenna_positions(cfg)
    aoa = math.pi / 4
    p = 1000 * np.array([math.cos(aoa), math.sin(aoa)])
    a = steering_vector(aoa, 64)
    lam = cfg.wavelength
    d = np.exp(-2j * np.pi / lam * (np.linalg.norm(p - g.positions, axis=1) - np.linalg.norm(p)))
    assert np.max(np.abs(np.angle(a / d))) < 1e-3
    for n in (1, 32, 64):
        assert abs(np.angle(spherical_phase(p, 0, n, g, cfg) / a[n - 1])) < 1e-3 + 3e-4  # lambda_0 differs from lambda_c by 1e-8


def test_bse_examples():
    cfg = ScenarioConfig(first_subcarrier=1)
    ratio = cfg.wavelength / cfg.subcarrier_wavelengths[-1]
    assert ratio == pytest.approx(1 + 400e6 / 140e9, rel=1e-15)
    assert ratio == pytest.approx(1.002857, rel=1e-6)
    aoa = 0.3
    a = steering_vector(aoa, 64)
    b = steering_vector_bse(aoa, 10, cfg)
    # element 64 has offset 2*64 - 64 - 1 = 63; its unwrapped phase scales by the ratio
    assert b[63] == pytest.approx(np.exp(0.5j * np.pi * 63 * math.sin(aoa) * ratio), abs=1e-12)
    assert np.all(steering_vector_bse(0.0, 3, cfg) == 1)
    narrow = ScenarioConfig(bandwidth=1e-6)
    np.testing.assert_allclose(steering_vector_bse(aoa, 0, narrow), a, atol=1e-12)
    with pytest.raises(ValueError):
        steering_vector_bse(aoa, 0, cfg)


def test_delay_examples():
    cfg = ScenarioConfig(first_subcarrier=1)
    lam1 = cfg.subcarrier_wavelengths[0]
    assert delay_term([5 * lam1, 0], 1, cfg) == pytest.approx(1.0, abs=1e-12)
    r = 2 * math.sqrt(2)
    expected = -2 * math.pi * (140e9 + 40e6) * r / C
    got = np.angle(delay_term([2, 2], 1, cfg))
    assert (got - expected + math.pi) % (2 * math.pi) - math.pi == pytest.approx(0, abs=1e-9)
    assert abs(delay_term([1e-12, 0], 1, cfg) - 1) < 1e-6


def test_sns_and_spherical_examples():
    cfg = ScenarioConfig(n_antennas=3, n_rfc=3, bandwidth=1e-6)
    g = antenna_positions(cfg)
    # centre antenna of an odd array sits at the origin
    assert sns_amplitude([1.0, 0.3], 0, 2, g, cfg) == pytest.approx(1.0, rel=1e-9)
    assert spherical_phase([1.0, 0.3], 0, 2, g, cfg) == pytest.approx(1.0, abs=1e-14)
    cfg64 = ScenarioConfig(first_subcarrier=1)
    g64 = antenna_positions(cfg64)
    far = sns_amplitude([1e7, 0.0], 3, 5, g64, cfg64)
    assert far == pytest.approx(cfg64.subcarrier_wavelengths[2] / cfg64.wavelength, rel=1e-12)
    p = np.array([0.25, 0.0])
    lam1 = C / (140e9 + 40e6)
    b64 = np.array([0.0, 63 * cfg64.wavelength / 4])
    oracle = lam1 * math.sqrt(0.25**2) / (cfg64.wavelength * math.sqrt((0.25 - b64[0]) ** 2 + (0 - b64[1]) ** 2))
    assert sns_amplitude(p, 1, 64, g64, cfg64) == pytest.approx(oracle, rel=1e-13)
    assert spherical_phase(p, 1, 1, g64, cfg64) == pytest.approx(spherical_phase(p, 1, 64, g64, cfg64), abs=1e-12)


def test_antenna_coincidence_rejected():
    cfg = ScenarioConfig(n_antennas=3, n_rfc=3)
    g = antenna_positions(cfg)
    with pytest.raises(ValueError):
        sns_amplitude(g.positions[0], 0, 1, g, cfg)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_channel_matches_scalar_oracle(kind, cfg):
    state = StateParams.at([2.0, 2.0], cfg, gain_phase=0.7)
    h = channel_matrix(kind, state, cfg)
    ref = channel_loop(kind.value, [2.0, 2.0], cfg, state.alpha)
    assert rel_err(h[5], ref[5]) < 1e-12
    assert np.max(np.abs(h - ref) / np.abs(ref)) < 1e-11
    geometry = antenna_positions(cfg)
    np.testing.assert_array_equal(channel_vector(kind, state, 5, geometry, cfg), h[5])


@given(front, st.sampled_from(ALL_KINDS))
def test_single_antenna_collapse(p, kind):
    geometric = ScenarioConfig(n_antennas=1, n_rfc=1, amplitude_freq_scaling=False)
    ref = channel_shapes(ModelKind.MM, p, geometric)
    np.testing.assert_allclose(channel_shapes(kind, p, geometric), ref, rtol=1e-12, atol=0)
    # with the wavelength ratio kept, the amplitude models carry lambda_k / lambda_c
    cfg = ScenarioConfig(n_antennas=1, n_rfc=1)
    ratio = cfg.subcarrier_wavelengths / cfg.wavelength
    expected = ref * (ratio[:, None] if kind in (ModelKind.TM, ModelKind.TM_SNS) else 1.0)
    np.testing.assert_allclose(channel_shapes(kind, p, cfg), expected, rtol=1e-12, atol=0)


@given(front)
def test_phase_factors_unit_modulus(p):
    cfg = ScenarioConfig()
    for kind in (ModelKind.MM, ModelKind.TM_SWM, ModelKind.TM_BSE):
        assert np.max(np.abs(np.abs(channel_shapes(kind, p, cfg)) - 1)) < 1e-14


def test_far_field_narrowband_limit():
    cfg = ScenarioConfig(bandwidth=1e3)
    aoa = 0.4
    p = 1000 * np.array([math.cos(aoa), math.sin(aoa)])
    tm = channel_shapes(ModelKind.TM, p, cfg)
    mm = channel_shapes(ModelKind.MM, p, cfg)
    assert rel_err(tm, mm) < 1e-3


def test_far_field_convergence_is_monotone():
    cfg = ScenarioConfig(bandwidth=1e3)
    _, d_f = fresnel_fraunhofer(antenna_positions(cfg))
    aoa = 0.5
    errs = []
    for scale in (10, 100, 1000):
        p = scale * d_f * np.array([math.cos(aoa), math.sin(aoa)])
        errs.append(np.max(np.abs(channel_shapes(ModelKind.TM, p, cfg) - channel_shapes(ModelKind.MM, p, cfg))))
    assert errs[0] > errs[1] > errs[2]


def test_zero_bandwidth_collapse():
    cfg = ScenarioConfig(bandwidth=1e-9, amplitude_freq_scaling=True)
    p = [0.7, -0.4]
    np.testing.assert_allclose(channel_shapes(ModelKind.TM_BSE, p, cfg), channel_shapes(ModelKind.MM, p, cfg), atol=1e-9)
    g = antenna_positions(cfg)
    amp = np.linalg.norm(p) / np.linalg.norm(np.array(p) - g.positions, axis=1)
    np.testing.assert_allclose(np.abs(channel_shapes(ModelKind.TM, p, cfg)), np.broadcast_to(amp, (10, 64)), rtol=1e-12)


@given(st.floats(0.05, 30.0))
def test_mirror_symmetry_on_boresight(x):
    cfg = ScenarioConfig()
    for kind in (ModelKind.MM, ModelKind.TM_SWM, ModelKind.TM, ModelKind.TM_SNS):
        h = channel_shapes(kind, [x, 0.0], cfg)
        np.testing.assert_allclose(h, h[:, ::-1], rtol=1e-9, atol=1e-12)


def test_region_constants():
    d_n, d_f = fresnel_fraunhofer(antenna_positions(ScenarioConfig()))
    assert d_n == pytest.approx(0.235, rel=5e-3)
    assert d_f == pytest.approx(4.25, rel=5e-3)
    lam = C / 140e9
    _, d_f32 = fresnel_fraunhofer(antenna_positions(ScenarioConfig(n_antennas=32, n_rfc=32)))
    assert d_f32 == pytest.approx(2 * (31 * lam / 2) ** 2 / lam, rel=1e-14)
    assert fresnel_fraunhofer(antenna_positions(ScenarioConfig(n_antennas=1, n_rfc=1))) == (0.0, 0.0)


@given(st.integers(2, 256))
def test_fresnel_below_fraunhofer(n):
    d_n, d_f = fresnel_fraunhofer(antenna_positions(ScenarioConfig(n_antennas=n, n_rfc=n)))
    assert d_n < d_f


def test_model_kind_parsing():
    assert ModelKind.parse("tm_sns") is ModelKind.TM_SNS
    assert ModelKind.parse("TM-BSE") is ModelKind.TM_BSE
    with pytest.raises(ValueError):
        ModelKind.parse("XM")


def test_channel_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(math.pi / 2, 1e-9, 1.0, 0.0)
    with pytest.raises(ValueError):
        ChannelParams(0.0, 1e-9, 0.0, 0.0)
    assert ChannelParams.from_array([0.1, 1e-9, 1.0, 7.0]).gain_phase == pytest.approx(7.0 - 2 * math.pi)
