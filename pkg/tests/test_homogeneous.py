import numpy as np
import pytest

from liehmc.diagnostics import ess
from liehmc.flows import GeodesicKind, PhaseState
from liehmc.homogeneous import (constrained_system_check, horizontal_project,
                                naturally_reductive_defect, sample_quotient, sphere, stiefel)
from liehmc.integrators import IntegratorScheme, integrate
from liehmc.lie_core import make_geometry, random_element
from liehmc.potentials import constant_potential, stiefel_fisher_lift, vmf_sphere_lift


QUOTIENTS = [(3, 1), (4, 1), (4, 2), (5, 2)]


def make(n, k):
    return sphere(n) if k == 1 else stiefel(n, k)


@pytest.mark.parametrize("n,k", QUOTIENTS)
def test_split_sizes(n, k):
    quot = make(n, k)
    m = n - k
    assert len(quot.split.k_indices) == m * (m - 1) // 2
    assert len(quot.split.p_indices) == quot.geom.dim - m * (m - 1) // 2


@pytest.mark.parametrize("n,k", QUOTIENTS)
def test_k_generators_live_in_leading_block(n, k):
    quot = make(n, k)
    m = n - k
    for idx in quot.split.k_indices:
        X = quot.geom.spec.generators[idx]
        assert np.all(X[m:, :] == 0) and np.all(X[:, m:] == 0)


@pytest.mark.parametrize("n,k", QUOTIENTS)
def test_representative_invariance(n, k, rng):
    quot = make(n, k)
    m = n - k
    for _ in range(20):
        q = random_element(quot.geom.spec, rng)
        kmat = random_element(make_geometry("SO", m).spec, rng) if m >= 2 else np.eye(1)
        a = quot.representative(q @ quot.embed_k(kmat))
        assert np.abs(a - quot.representative(q)).max() < 1e-12


@pytest.mark.parametrize("n,k", QUOTIENTS)
def test_representative_orthonormal(n, k, rng):
    quot = make(n, k)
    q = random_element(quot.geom.spec, rng)
    rep = quot.representative(q)
    if k == 1:
        assert rep.shape == (n,)
        assert abs(np.linalg.norm(rep) - 1) < 1e-12
    else:
        assert rep.shape == (n, k)
        assert np.abs(rep.T @ rep - np.eye(k)).max() < 1e-12


def test_stiefel_flat_is_column_major(rng):
    quot = stiefel(4, 2)
    q = random_element(quot.geom.spec, rng)
    assert np.array_equal(quot.flat_representative(q), q[:, 2:].ravel(order="F"))
    qs = np.stack([q, q])
    assert quot.flat_representative(qs).shape == (2, 8)


@pytest.mark.parametrize("n,k", QUOTIENTS)
def test_naturally_reductive(n, k, rng):
    assert naturally_reductive_defect(make(n, k), rng) < 1e-10


def test_stiefel_k_range():
    with pytest.raises(ValueError):
        stiefel(3, 3)
    with pytest.raises(ValueError):
        stiefel(3, 0)


def test_horizontal_project(rng):
    split = sphere(3).split
    v = rng.standard_normal(3)
    vp = split.P_p @ v
    vk = split.P_k @ v
    assert np.array_equal(horizontal_project(vp, split), vp)
    assert np.array_equal(horizontal_project(vk, split), np.zeros(3))
    assert np.allclose(horizontal_project(v, split) + split.P_k @ v, v)
    assert np.array_equal(horizontal_project(horizontal_project(v, split), split),
                          horizontal_project(v, split))


def trajectory(quot, pot, kind_name, rng, n_steps=40, h=0.1):
    gk = GeodesicKind.biinvariant(quot.geom)
    v = quot.split.P_p @ rng.standard_normal(quot.geom.dim)
    states = [PhaseState(random_element(quot.geom.spec, rng), v)]
    integrate(states[0], IntegratorScheme(kind_name, h, n_steps), pot, quot.geom, gk,
              monitor=lambda i, s: states.append(s))
    return states, gk


@pytest.mark.parametrize("kind_name", ["leapfrog", "omelyan", "force_gradient"])
def test_constrained_check_sphere(kind_name, rng):
    quot = sphere(3)
    pot = vmf_sphere_lift(3, np.array([0.0, 0.0, 1.0]), 2.0)
    states, gk = trajectory(quot, pot, kind_name, rng)
    rep = constrained_system_check(states, quot.split, quot.geom, gk, 0.5)
    assert rep["max_vertical_leakage"] <= 1e-10
    assert rep["max_subgroup_deviation"] < 1e-12


def test_constrained_check_stiefel_fisher(rng):
    quot = stiefel(4, 2)
    pot = stiefel_fisher_lift(4, rng.standard_normal((4, 2)))
    states, gk = trajectory(quot, pot, "force_gradient", rng)
    rep = constrained_system_check(states, quot.split, quot.geom, gk, 0.5)
    assert rep["max_vertical_leakage"] <= 1e-10


def test_zero_potential_geodesic_is_subgroup(rng):
    quot = sphere(4)
    states, gk = trajectory(quot, constant_potential(), "leapfrog", rng, n_steps=10)
    rep = constrained_system_check(states, quot.split, quot.geom, gk, 1.0)
    assert rep["max_subgroup_deviation"] < 1e-12
    assert rep["max_vertical_leakage"] == 0.0


def test_uniform_sphere_mean():
    quot = sphere(3)
    x, rec = sample_quotient(quot, vmf_sphere_lift(3, np.array([0.0, 0.0, 1.0]), 0.0),
                             IntegratorScheme("leapfrog", 0.5, 3), 100_000, seed=21)
    assert rec.acceptance_rate == 1.0
    assert np.abs(np.linalg.norm(x, axis=1) - 1).max() < 1e-12
    for c in range(3):
        se = x[:, c].std(ddof=1) / np.sqrt(ess(x[:, c]))
        assert abs(x[:, c].mean()) <= 3 * se


def test_stiefel_sampling_runs(rng):
    quot = stiefel(4, 2)
    F = np.zeros((4, 2))
    F[2, 0] = F[3, 1] = 3.0
    frames, rec = sample_quotient(quot, stiefel_fisher_lift(4, F),
                                  IntegratorScheme("omelyan", 0.2, 5), 400, burn_in=50, seed=3)
    assert frames.shape == (400, 4, 2)
    assert rec.summary["max_vertical_leakage"] <= 1e-9
    assert 0.5 < rec.acceptance_rate <= 1
    # mass concentrates near F's direction
    assert np.mean(frames[:, 2, 0]) > 0.5 and np.mean(frames[:, 3, 1]) > 0.5
