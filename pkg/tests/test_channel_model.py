import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tucker_irs.channel_model import (
    SPEED_OF_LIGHT,
    BsIrsLink,
    ChannelRealization,
    SystemConfig,
    UePath,
    bs_response,
    cascaded_channel_matrix,
    cascaded_channel_tensor,
    ff_col_response,
    ff_row_response,
    in_near_field,
    incident_reflect_response,
    irs_aperture,
    load_scenario,
    nf_delta_distance,
    nf_response,
    rayleigh_distance,
    sample_scenario,
    save_scenario,
    with_tensors,
)

SMALL = SystemConfig(nz=3, ny=2, nrz=4, nry=3, subcarriers=4, pilots=16)


def geometric_delta(cfg, n_y, n_z, el, az, u):
    """Distance from a point source to element (n_y, n_z) minus ``u``, in Cartesian form."""
    src = u * np.array([np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)])
    elem = np.array([0.0, (n_y - 1) * cfg.d, (n_z - 1) * cfg.d])
    return np.linalg.norm(src - elem) - u


def test_table_defaults():
    cfg = SystemConfig()
    assert (cfg.nb, cfg.nr, cfg.fc, cfg.bandwidth, cfg.pilots, cfg.subcarriers) == (25, 256, 28e9, 2e9, 280, 6)
    assert cfg.d == pytest.approx(SPEED_OF_LIGHT / 28e9 / 2)


def test_frequency_grid():
    cfg = SystemConfig()
    assert cfg.frequency(cfg.subcarriers) == pytest.approx(cfg.fc + cfg.bandwidth / 2)
    M = cfg.subcarriers
    for m in range(1, M):
        # mirror pairs around f_c
        assert cfg.frequency(m) + cfg.frequency(M - m) == pytest.approx(2 * cfg.fc, rel=1e-15)
    with pytest.raises(ValueError):
        cfg.frequency(0)


@pytest.mark.parametrize(
    "kw",
    [dict(nz=0), dict(bandwidth=0.0), dict(fc=1e9, bandwidth=2e9), dict(spacing=-1.0), dict(pilots=2.5)],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SystemConfig(**kw)


def test_reference_element_has_zero_delta():
    assert nf_delta_distance(SMALL, 1, 1, 0.3, 1.2, 5.0) == 0.0


def test_delta_two_forms_agree():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n_y = int(rng.integers(1, SMALL.nry + 1))
        n_z = int(rng.integers(1, SMALL.nrz + 1))
        el, az = rng.uniform(0, 2 * np.pi, 2)
        u = rng.uniform(0.5, 20)
        got = nf_delta_distance(SMALL, n_y, n_z, el, az, u)
        assert got == pytest.approx(geometric_delta(SMALL, n_y, n_z, el, az, u), abs=1e-12)


def test_delta_planar_limit():
    u = 1e6
    rng = np.random.default_rng(1)
    for _ in range(20):
        n_y, n_z = 3, 4
        el, az = rng.uniform(0.2, 1.3, 2)
        planar = -(n_y - 1) * SMALL.d * np.sin(el) * np.sin(az) - (n_z - 1) * SMALL.d * np.cos(el)
        got = nf_delta_distance(SMALL, n_y, n_z, el, az, u)
        assert got == pytest.approx(planar, rel=1e-3)


@pytest.mark.parametrize("args", [(1, 1, 0, 0, 0.0), (1, 1, 0, 0, -1.0), (0, 1, 0, 0, 1.0), (1, 9, 0, 0, 1.0)])
def test_delta_rejects_bad_input(args):
    with pytest.raises(ValueError):
        nf_delta_distance(SMALL, *args)


def test_nf_response_unit_modulus_and_reference():
    a = nf_response(SMALL, 0.4, 2.0, 6.0, 2)
    assert a.shape == (SMALL.nr,)
    np.testing.assert_allclose(np.abs(a), 1, atol=1e-14)
    assert a[0] == 1


def test_nf_response_ordering_n_y_fastest():
    a = nf_response(SMALL, 0.4, 2.0, 6.0, 1)
    f = SMALL.frequency(1)
    for n_z in range(1, SMALL.nrz + 1):
        for n_y in range(1, SMALL.nry + 1):
            du = geometric_delta(SMALL, n_y, n_z, 0.4, 2.0, 6.0)
            r = (n_y - 1) + (n_z - 1) * SMALL.nry
            assert a[r] == pytest.approx(np.exp(-2j * np.pi * f / SPEED_OF_LIGHT * du), abs=1e-9)


def test_nf_response_scalar_example():
    cfg = SystemConfig(subcarriers=6)  # f_3 = f_c
    assert cfg.frequency(3) == 28e9
    a = nf_response(cfg, np.pi / 2, np.pi / 2, 5.0, 3)
    # element (n_y=2, n_z=1): delta u = |5 - d| - 5 = -d, phase = pi
    du = geometric_delta(cfg, 2, 1, np.pi / 2, np.pi / 2, 5.0)
    assert du == pytest.approx(-cfg.d)
    assert a[1] == pytest.approx(np.exp(-2j * np.pi * 28e9 * du / cfg.c), abs=1e-12)
    assert a[1] == pytest.approx(-1.0, abs=1e-9)


def test_ff_responses():
    np.testing.assert_allclose(ff_row_response(SMALL, 0.7, 0.0, 1), np.ones(SMALL.ny))
    np.testing.assert_allclose(ff_col_response(SMALL, np.pi / 2, 1), np.ones(SMALL.nz), atol=1e-15)


def test_bs_response_direct_oracle():
    rng = np.random.default_rng(2)
    el, az = rng.uniform(0, 2 * np.pi, 2)
    m = 3
    k = SMALL.frequency(m) / SMALL.c * SMALL.d
    want = np.empty(SMALL.nb, dtype=complex)
    for iy in range(SMALL.ny):
        for iz in range(SMALL.nz):
            phase = iy * np.sin(el) * np.sin(az) + iz * np.cos(el)
            want[iz + iy * SMALL.nz] = np.exp(-2j * np.pi * k * phase)
    np.testing.assert_allclose(bs_response(SMALL, el, az, m), want, atol=1e-12)


def _link(el=0.3, az=1.1, irs_el=0.9, irs_az=2.2, u=7.2153, gain=1.0 + 0j):
    return BsIrsLink(gain, el, az, irs_el, irs_az, u)


def test_incident_reflect_cancels_for_same_point():
    link = _link()
    p = UePath(1.0, 0.0, link.irs_elevation, link.irs_azimuth, link.distance)
    np.testing.assert_allclose(incident_reflect_response(SMALL, p, link, 1), np.ones(SMALL.nr), atol=1e-12)


def test_incident_reflect_elementwise():
    link = _link()
    p = UePath(1.0, 0.0, 1.7, 0.4, 6.3)
    b = incident_reflect_response(SMALL, p, link, 2)
    a = nf_response(SMALL, 1.7, 0.4, 6.3, 2)
    a2 = nf_response(SMALL, link.irs_elevation, link.irs_azimuth, link.distance, 2)
    np.testing.assert_allclose(np.abs(b), 1, atol=1e-14)
    np.testing.assert_allclose(b, np.conj(a) * a2, atol=1e-14)


def test_all_ones_tensor():
    # pi/2 elevation and zero azimuth give flat BS responses; a UE path at the
    # BS-link point makes b all ones; zero delays give kappa = 1
    cfg = SystemConfig(nz=2, ny=3, nrz=2, nry=2, subcarriers=1, pilots=4)
    p = UePath(1.0, 0.0, 0.5, 0.5, 3.0)
    # the link gain cancels the link delay phase
    comp = np.exp(2j * np.pi * cfg.frequency(1) * 3.0 / SPEED_OF_LIGHT)
    ch = ChannelRealization(cfg, BsIrsLink(comp, np.pi / 2, 0.0, 0.5, 0.5, 3.0), (p,))
    np.testing.assert_allclose(cascaded_channel_tensor(cfg, ch, 1), np.ones((2, 4, 3)), atol=1e-12)


def test_tensor_matches_matrix_oracle():
    ch = sample_scenario(SMALL, paths=2, rng=3)
    for m in range(1, SMALL.subcarriers + 1):
        # independent assembly: sum_l beta_l e^{-j 2 pi f tau_l} a_b (conj(a_r,l) * a_r')^H
        f = SMALL.frequency(m)
        a_b = bs_response(SMALL, ch.link.bs_elevation, ch.link.bs_azimuth, m)
        G = np.zeros((SMALL.nb, SMALL.nr), dtype=complex)
        for p in ch.paths:
            beta = p.gain * ch.link.gain
            tau = ch.link.delay + p.delay
            b = np.conj(nf_response(SMALL, p.elevation, p.azimuth, p.distance, m)) * nf_response(
                SMALL, ch.link.irs_elevation, ch.link.irs_azimuth, ch.link.distance, m
            )
            G += beta * np.exp(-2j * np.pi * f * tau) * np.outer(a_b, b.conj())
        np.testing.assert_allclose(cascaded_channel_matrix(SMALL, ch, m), G, atol=1e-12)
        T = ch.tensors[m - 1]
        assert T.shape == SMALL.channel_dims
        for iz in range(SMALL.nz):
            for iy in range(SMALL.ny):
                np.testing.assert_allclose(T[iz, :, iy], G[iz + iy * SMALL.nz, :], atol=1e-12)


def test_gain_delay_identities():
    ch = sample_scenario(SMALL, paths=3, rng=4)
    for l, p in enumerate(ch.paths):
        assert ch.cascaded_gains[l] == p.gain * ch.link.gain
        assert ch.cascaded_delays[l] == ch.link.delay + p.delay
        assert p.delay == p.distance / SPEED_OF_LIGHT
    assert ch.link.delay == ch.link.distance / SPEED_OF_LIGHT


def test_empty_paths_rejected():
    ch = ChannelRealization(SMALL, _link(), ())
    with pytest.raises(ValueError):
        cascaded_channel_tensor(SMALL, ch, 1)


def test_sample_scenario_defaults_and_determinism():
    a = sample_scenario(SMALL, rng=5)
    b = sample_scenario(SMALL, rng=5)
    assert a == b
    for x, y in zip(a.tensors, b.tensors):
        np.testing.assert_array_equal(x, y)
    assert len(a.paths) == 2
    assert a.link.distance == 7.2153
    assert all(5 <= p.distance <= 10 for p in a.paths)
    assert all(0 <= p.elevation < 2 * np.pi and 0 <= p.azimuth < 2 * np.pi for p in a.paths)


@pytest.mark.parametrize("rng_range", [(0.0, 5.0), (6.0, 5.0), (-1.0, 2.0)])
def test_sample_scenario_rejects_range(rng_range):
    with pytest.raises(ValueError):
        sample_scenario(SMALL, distance_range=rng_range, rng=0)


def test_sample_scenario_rejects_paths():
    with pytest.raises(ValueError):
        sample_scenario(SMALL, paths=0)


def test_gain_second_moment():
    tiny = SystemConfig(nz=1, ny=1, nrz=1, nry=1, subcarriers=1, pilots=1)
    rng = np.random.default_rng(6)
    g = []
    for _ in range(100):
        ch = sample_scenario(tiny, paths=1000, rng=rng)
        g.extend(p.gain for p in ch.paths)
    assert len(g) == 100_000
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, rel=0.02)


def test_rayleigh_distance():
    assert rayleigh_distance(0.338, 0.01071) == pytest.approx(21.3, abs=0.5)
    assert rayleigh_distance(0.0, 0.01) == 0.0
    assert rayleigh_distance(1.0, 0.5) == 4.0
    with pytest.raises(ValueError):
        rayleigh_distance(-1.0, 0.5)


def test_table_aperture():
    cfg = SystemConfig()
    assert irs_aperture(cfg) == pytest.approx(0.338, abs=1e-3)
    assert rayleigh_distance(irs_aperture(cfg), cfg.wavelength) == pytest.approx(21.3, abs=0.5)
    assert in_near_field(cfg, (5.0, 10.0))
    assert not in_near_field(cfg, (5.0, 30.0))


def test_scenario_round_trip(tmp_path):
    ch = sample_scenario(SMALL, paths=2, rng=7)
    path = tmp_path / "scenario.json"
    save_scenario(ch, path)
    back = load_scenario(path)
    assert back == ch
    for x, y in zip(back.tensors, ch.tensors):
        np.testing.assert_array_equal(x, y)


def test_with_tensors_dims():
    ch = with_tensors(ChannelRealization(SMALL, _link(), (UePath(1j, 1e-8, 0.1, 0.2, 6.0),)))
    assert len(ch.tensors) == SMALL.subcarriers
    assert all(t.shape == SMALL.channel_dims for t in ch.tensors)


@settings(max_examples=60, deadline=None)
@given(
    el=st.floats(0, 2 * math.pi),
    az=st.floats(0, 2 * math.pi),
    u=st.floats(0.05, 100),
    n_y=st.integers(1, 3),
    n_z=st.integers(1, 4),
)
def test_delta_property(el, az, u, n_y, n_z):
    got = nf_delta_distance(SMALL, n_y, n_z, el, az, u)
    assert got == pytest.approx(geometric_delta(SMALL, n_y, n_z, el, az, u), abs=1e-12)
    # triangle inequality: the path difference never exceeds the element offset
    assert abs(got) <= math.hypot((n_y - 1) * SMALL.d, (n_z - 1) * SMALL.d) + 1e-12
