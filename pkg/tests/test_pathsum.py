import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abnonlocal.errors import InputError
from abnonlocal.gauge import FluxSpec, flux_link_field, random_link_field
from abnonlocal.kernels import ActionConfig, build_kernel, kernel_power
from abnonlocal.lattice import make_lattice
from abnonlocal.pathsum import brute_force_kernel, count_paths, enumerate_paths, path_sum


def test_zero_slices():
    lat = make_lattice(3, 3)
    act = ActionConfig.free(lat)
    assert brute_force_kernel(lat, act, 0, 4, 4).value == 1
    same = brute_force_kernel(lat, act, 0, 4, 5)
    assert same.value == 0 and same.path_count == 0


def test_two_by_two_matches_square():
    lat = make_lattice(2, 2)
    rng = np.random.default_rng(1)
    act = ActionConfig(random_link_field(lat, rng), scalar_potential=rng.normal(size=(2, 2)))
    K2 = kernel_power(build_kernel(lat, act, 0.3), 2)
    for a in range(4):
        for b in range(4):
            ps = brute_force_kernel(lat, act, 2, a, b, 0.3, "hopping")
            assert ps.path_count == 4
            assert abs(ps.value - K2[b, a]) < 1e-12


@pytest.mark.parametrize("backend", ["local", "hopping"])
def test_flux_matches_power(backend):
    lat = make_lattice(4, 4)
    act = ActionConfig(flux_link_field(lat, FluxSpec((1, 1), 0.3)))
    K4 = kernel_power(build_kernel(lat, act, 0.25, backend), 4)
    for a, b in [(0, 15), (5, 5), (1, 14), (6, 9)]:
        assert abs(brute_force_kernel(lat, act, 4, a, b, 0.25, backend).value - K4[b, a]) < 1e-12


def test_local_paths_are_stay_or_hop():
    lat = make_lattice(3, 3)
    K = build_kernel(lat, ActionConfig.free(lat), 0.2, "local").matrix
    paths, _ = enumerate_paths(K, 3, 0, 4)
    for p in paths:
        for a, b in zip(p, p[1:]):
            assert a == b or b in lat.neighbors(a)
    assert len(paths) == count_paths(K != 0, 3, 0, 4)


@given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 5), st.sampled_from(["local", "hopping", "sliced-gaussian"]),
       st.integers(0, 2**32 - 1))
def test_oracle_equivalence(nx, ny, slices, backend, seed):
    rng = np.random.default_rng(seed)
    lat = make_lattice(nx, ny)
    if backend != "local" and lat.n_sites > 9 and slices > 4:
        slices = 4
    act = ActionConfig(random_link_field(lat, rng), scalar_potential=rng.normal(size=lat.shape))
    K = build_kernel(lat, act, 0.3, backend)
    P = kernel_power(K, slices)
    a, b = rng.integers(lat.n_sites, size=2)
    assert abs(path_sum(K, slices, a, b).value - P[b, a]) < 1e-12


def test_guards():
    act = ActionConfig.free(make_lattice(7, 3))
    with pytest.raises(InputError) as e:
        brute_force_kernel(act.lattice, act, 2, 0, 1)
    assert e.value.code == "instance-too-large"
    lat = make_lattice(3, 3)
    with pytest.raises(InputError):
        brute_force_kernel(lat, ActionConfig.free(lat), 9, 0, 1)
    K = build_kernel(lat, ActionConfig.free(lat), 0.2, "hopping").matrix
    with pytest.raises(InputError) as e:
        enumerate_paths(K, 8, 0, 1)
    assert e.value.details["path_count"] == 9**7


def test_json_export():
    lat = make_lattice(3, 3)
    ps = brute_force_kernel(lat, ActionConfig.free(lat), 2, 0, 4)
    doc = json.loads(ps.to_json({0: (ps.value, ps.path_count)}))
    assert doc["path_count"] == 2
    assert doc["windings"][0]["count"] == 2
    assert complex(doc["re"], doc["im"]) == ps.value
