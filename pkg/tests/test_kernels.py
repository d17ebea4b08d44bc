import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abnonlocal.errors import InputError
from abnonlocal.gauge import FluxSpec, flux_link_field, gauge_transform, gauge_wavefunction, random_gauge, random_link_field
from abnonlocal.kernels import (ActionConfig, Backend, TransferKernel, build_kernel, compose, free_kernel_analytic,
                                identity_kernel, kernel_power, kernel_to_csv, propagate)
from abnonlocal.lattice import UnitsConvention, WaveFunction, make_lattice, singular_region, wavepacket

BACKENDS = [b.value for b in Backend]


def _random_action(lat, rng, potential=True):
    phi = rng.normal(size=lat.shape) if potential else None
    return ActionConfig(random_link_field(lat, rng), scalar_potential=phi)


def _delta(lat, site):
    v = np.zeros(lat.n_sites, complex)
    v[site] = 1
    return WaveFunction.from_vector(v, lat)


def test_errors():
    lat = make_lattice(3, 3)
    act = ActionConfig.free(lat)
    with pytest.raises(InputError) as e:
        build_kernel(lat, act, 0.0)
    assert e.value.code == "non-positive-duration"
    with pytest.raises(InputError) as e:
        build_kernel(lat, act, 0.1, "crank-nicolson")
    assert e.value.code == "unknown-backend"
    with pytest.raises(InputError):
        build_kernel(make_lattice(4, 3), act, 0.1)


@pytest.mark.parametrize("dt", [0.05, 0.5, 3.0])
def test_hopping_reflecting_unitary(rng, dt):
    lat = make_lattice(5, 4)
    K = build_kernel(lat, _random_action(lat, rng), dt)
    assert K.unitarity_defect() < 1e-10


def test_hopping_bulk_translation_invariance():
    # no periodic boundary: compare entries whose paths to the edge are negligible
    lat = make_lattice(16, 16)
    K = build_kernel(lat, ActionConfig.free(lat), 0.1).matrix
    base = [(6, 6), (7, 6), (6, 8), (8, 7)]
    shift = (2, 1)
    for a in base:
        for b in base:
            ia, ib = lat.index(*a), lat.index(*b)
            ja = lat.index(a[0] + shift[0], a[1] + shift[1])
            jb = lat.index(b[0] + shift[0], b[1] + shift[1])
            assert abs(K[ib, ia] - K[jb, ja]) < 1e-10


@pytest.mark.parametrize("backend", ["hopping", "local"])
def test_short_time_limit(backend):
    lat = make_lattice(4, 4)
    act = ActionConfig.free(lat)
    ratios = []
    for dt in (1e-2, 1e-3, 1e-4):
        K = build_kernel(lat, act, dt, backend).matrix
        ratios.append(np.linalg.norm(K - np.eye(lat.n_sites), 2) / dt)
    assert ratios[-1] < 10
    assert abs(ratios[-1] - ratios[-2]) < 0.01 * ratios[-1]


def test_sliced_gaussian_one_slice_brute_force():
    from abnonlocal.pathsum import brute_force_kernel
    lat = make_lattice(3, 3)
    rng = np.random.default_rng(3)
    act = _random_action(lat, rng)
    K = build_kernel(lat, act, 0.4, "sliced-gaussian").matrix
    for a in range(9):
        for b in range(9):
            ps = brute_force_kernel(lat, act, 1, a, b, 0.4, "sliced-gaussian")
            assert abs(ps.value - K[b, a]) < 1e-12


def test_sliced_gaussian_route_phase():
    lat = make_lattice(4, 4)
    rng = np.random.default_rng(5)
    act = ActionConfig(random_link_field(lat, rng))
    free = build_kernel(lat, ActionConfig.free(lat), 0.3, "sliced-gaussian").matrix
    K = build_kernel(lat, act, 0.3, "sliced-gaussian").matrix
    ax, ay = act.link_field.angles_x, act.link_field.angles_y
    a, b = lat.index(3, 0), lat.index(1, 2)
    # x-then-y: (3,0) -> (1,0) backwards along x links, then (1,0) -> (1,2) along y links
    route = -ax[0, 1] - ax[0, 2] + ay[0, 1] + ay[1, 1]
    assert abs(K[b, a] - free[b, a] * cmath.exp(1j * route)) < 1e-12


def test_propagate_zero_steps():
    lat = make_lattice(4, 4)
    psi = wavepacket(lat, (1, 2), 1.0, (0.3, 0))
    out = propagate(psi, build_kernel(lat, ActionConfig.free(lat), 0.2), 0)
    assert np.array_equal(out.grid, psi.grid)


def test_norm_conserved_100_steps(rng):
    lat = make_lattice(8, 7)
    psi = wavepacket(lat, (3, 3), 1.5, (0.5, -0.2))
    K = build_kernel(lat, _random_action(lat, rng), 0.3)
    assert abs(propagate(psi, K, 100).norm2 - 1) < 1e-10


def test_absorbing_loses_norm():
    lat = make_lattice(10, 10, boundary="absorbing")
    psi = wavepacket(lat, (7, 5), 1.0, (1.5, 0))
    K = build_kernel(lat, ActionConfig.free(lat), 0.5)
    norms = [propagate(psi, K, n).norm2 for n in (0, 10, 30)]
    assert norms[0] > norms[1] > norms[2]
    assert norms[2] < 0.9 * norms[0]


def test_delta_column_of_power(rng):
    lat = make_lattice(5, 5)
    K = build_kernel(lat, _random_action(lat, rng), 0.25)
    a = lat.index(1, 3)
    out = propagate(_delta(lat, a), K, 4).vector
    assert np.max(np.abs(out - kernel_power(K, 4)[:, a])) < 1e-12


def test_mask_zeroes_region():
    lat = make_lattice(6, 6)
    reg = singular_region(lat, (2.5, 2.5))
    psi = wavepacket(lat, (2, 2), 2.0)
    out = propagate(psi, build_kernel(lat, ActionConfig.free(lat), 0.2), 3, reg)
    assert np.all(out.vector[list(reg.sites)] == 0)


def test_propagate_dimension_mismatch():
    psi = wavepacket(make_lattice(4, 4), (1, 1), 1.0)
    K = build_kernel(make_lattice(5, 4), ActionConfig.free(make_lattice(5, 4)), 0.1)
    with pytest.raises(InputError) as e:
        propagate(psi, K, 1)
    assert e.value.code == "dimension-mismatch"


@pytest.mark.parametrize("backend", BACKENDS)
def test_compose_identity_exact(rng, backend):
    lat = make_lattice(3, 4)
    K = build_kernel(lat, _random_action(lat, rng), 0.2, backend)
    C = compose(K, identity_kernel(lat, backend))
    assert np.array_equal(C.matrix, K.matrix)
    assert C.slice_duration == K.slice_duration


def test_compose_associative(rng):
    lat = make_lattice(4, 3)
    ks = [build_kernel(lat, _random_action(lat, rng), dt) for dt in (0.1, 0.2, 0.3)]
    left = compose(compose(ks[2], ks[1]), ks[0])
    right = compose(ks[2], compose(ks[1], ks[0]))
    assert np.max(np.abs(left.matrix - right.matrix)) < 1e-12
    assert left.slice_duration == pytest.approx(0.6)


@given(st.floats(0.01, 2.0), st.floats(0.01, 2.0), st.integers(0, 2**32 - 1))
def test_hopping_semigroup(t1, t2, seed):
    rng = np.random.default_rng(seed)
    lat = make_lattice(4, 4)
    act = _random_action(lat, rng)
    C = compose(build_kernel(lat, act, t2), build_kernel(lat, act, t1))
    assert C.slice_duration == t1 + t2
    assert np.max(np.abs(C.matrix - build_kernel(lat, act, t1 + t2).matrix)) < 1e-10


def test_hopping_semigroup_absorbing():
    lat = make_lattice(5, 5, boundary="absorbing")
    act = ActionConfig.free(lat)
    twice = compose(build_kernel(lat, act, 0.2), build_kernel(lat, act, 0.2)).matrix
    # padded evolution is a semigroup only up to amplitude that leaves and re-enters
    assert np.max(np.abs(twice - build_kernel(lat, act, 0.4).matrix)) < 0.05


def test_compose_mismatch():
    lat = make_lattice(3, 3)
    act = ActionConfig.free(lat)
    with pytest.raises(InputError) as e:
        compose(build_kernel(lat, act, 0.1), build_kernel(lat, act, 0.1, "local"))
    assert e.value.code == "backend-mismatch"
    lat2 = make_lattice(3, 4)
    with pytest.raises(InputError) as e:
        compose(build_kernel(lat, act, 0.1), build_kernel(lat2, ActionConfig.free(lat2), 0.1))
    assert e.value.code == "lattice-mismatch"


def test_free_kernel_values():
    u = UnitsConvention()
    k0 = free_kernel_analytic((1.0, 2.0), (1.0, 2.0), 2.0, u)
    assert k0 == pytest.approx(1 / (2j * math.pi * 2.0))
    assert free_kernel_analytic((0, 0), (0.3, 1.1), 0.7) == free_kernel_analytic((0.3, 1.1), (0, 0), 0.7)
    k = free_kernel_analytic((0, 0), (1, 0), 1.0)
    assert abs(k) == pytest.approx(1 / (2 * math.pi), abs=1e-15)
    # -pi/2 from the 1/i prefactor plus the classical action m|dx|^2 / (2T) = 1/2
    assert cmath.phase(k) == pytest.approx(-math.pi / 2 + 0.5, abs=1e-14)
    with pytest.raises(InputError) as e:
        free_kernel_analytic((0, 0), (1, 0), 0.0)
    assert e.value.code == "non-positive-time"


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("boundary", ["reflecting", "absorbing"])
def test_gauge_covariance_of_propagation(backend, boundary):
    rng = np.random.default_rng(11)
    lat = make_lattice(7, 6, boundary=boundary)
    field = flux_link_field(lat, FluxSpec((2, 2), 0.37))
    phi = rng.normal(size=lat.shape)
    g = random_gauge(lat, rng)
    psi = wavepacket(lat, (3, 2), 1.3, (0.4, 0.6))
    dt = 0.3 if backend != "sliced-gaussian" else 1.0
    K = build_kernel(lat, ActionConfig(field, scalar_potential=phi), dt, backend)
    Kg = build_kernel(lat, ActionConfig(gauge_transform(field, g), scalar_potential=phi), dt, backend)
    a = propagate(psi, K, 5)
    b = propagate(gauge_wavefunction(psi, g), Kg, 5)
    assert np.max(np.abs(b.grid - np.exp(1j * g.theta) * a.grid)) < 1e-10
    assert np.max(np.abs(b.density - a.density)) < 1e-12 * max(1.0, a.density.max())


@pytest.mark.parametrize("boundary", ["reflecting", "absorbing"])
def test_krylov_path_matches_dense(monkeypatch, boundary):
    import abnonlocal.kernels as kernels
    monkeypatch.setattr(kernels, "DENSE_SITE_LIMIT", 8)
    lat = make_lattice(6, 5, boundary=boundary)
    rng = np.random.default_rng(2)
    K = build_kernel(lat, ActionConfig(flux_link_field(lat, FluxSpec((2, 2), 0.3))), 0.4)
    assert K.dense is None
    v = rng.normal(size=lat.n_sites) + 1j * rng.normal(size=lat.n_sites)
    assert np.max(np.abs(K.apply(v) - K.matrix @ v)) < 1e-10


def test_kernel_csv_round_trip(rng):
    lat = make_lattice(2, 3)
    K = build_kernel(lat, _random_action(lat, rng), 0.2)
    rows = kernel_to_csv(K).strip().split("\n")
    assert rows[0] == "row,col,re,im"
    back = np.zeros((6, 6), complex)
    for line in rows[1:]:
        r, c, re, im = line.split(",")
        back[int(r), int(c)] = complex(float(re), float(im))
    assert np.array_equal(back, K.matrix)


def test_counter_terms_must_stay_in_region():
    lat = make_lattice(3, 3)
    reg = singular_region(lat, (1, 1), 0.0)
    s = np.zeros(lat.shape, complex)
    s[1, 1] = -2j
    ActionConfig.free(lat)
    from abnonlocal.gauge import LinkField
    ActionConfig(LinkField.trivial(lat), counter_terms=s, counter_region=reg)
    s[0, 0] = 1
    with pytest.raises(InputError) as e:
        ActionConfig(LinkField.trivial(lat), counter_terms=s, counter_region=reg)
    assert e.value.code == "counter-terms-outside-region"
