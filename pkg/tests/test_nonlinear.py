# -*- coding: utf-8 -*-
import numpy as np
import pytest

from src.errors import InvalidPotential, NotACutset, NotInterior, ShapeMismatch
from src.flow import FlowConfig
from src.nonlinear import (EdgePotential, bc_equilibrium_check, bc_local_stability_probe, bc_slope, bc_value,
                           cutset_indefiniteness, effective_subgraph, nl_diffuse, nl_laplacian_apply,
                           potential_energy, signed_laplacian)
from src.sheaf import Graph, coboundary, constant_sheaf
from src.spectral import h0, sheaf_laplacian

from .conftest import numeric_gradient, random_sheaf

SIGNED_PATH = np.array([[-1.0, 1.0, 0.0], [1.0, 0.0, -1.0], [0.0, -1.0, 1.0]])


class TestPotentials:
    def test_bc_value_integrates_slope(self):
        d = np.array([2.0])
        for s in (0.0, 0.3, 1.1, 1.9, 2.5):
            derivative = (bc_value(np.array([s + 1e-6]), d) - bc_value(np.array([s - 1e-6]), d)) / 2e-6
            assert derivative[0] == pytest.approx(bc_slope(np.array([s]), d)[0], abs=1e-6)
        assert bc_value(np.array([10.0]), d)[0] == pytest.approx(2.0 / 3.0)

    def test_validation(self, path3):
        with pytest.raises(InvalidPotential):
            EdgePotential.bounded_confidence([0.0])
        with pytest.raises(InvalidPotential):
            EdgePotential.signed(2, [2])
        with pytest.raises(InvalidPotential):
            nl_laplacian_apply(path3, EdgePotential.bounded_confidence([1.0, 1.0, 1.0]), np.zeros(3))

    def test_wrong_cochain_length(self, path3):
        with pytest.raises(ShapeMismatch):
            nl_laplacian_apply(path3, EdgePotential.quadratic(), np.zeros(4))

    def test_quadratic_recovers_laplacian(self, rng):
        sheaf = random_sheaf(rng)
        x = rng.standard_normal(sheaf.c0_dim)
        np.testing.assert_allclose(nl_laplacian_apply(sheaf, EdgePotential.quadratic(), x),
                                   sheaf_laplacian(sheaf).matrix @ x, atol=1e-10)

    @pytest.mark.parametrize("make", [
        lambda m: EdgePotential.bounded_confidence(1.5, m),
        lambda m: EdgePotential.signed(m, range(0, m, 2)),
        lambda m: EdgePotential.quadratic(),
    ])
    def test_laplacian_is_energy_gradient(self, rng, make):
        for _ in range(5):
            sheaf = random_sheaf(rng, max_vertices=5)
            potential = make(sheaf.n_edges)
            x = rng.standard_normal(sheaf.c0_dim)
            grad = numeric_gradient(lambda z: potential_energy(sheaf, potential, z), x)
            np.testing.assert_allclose(nl_laplacian_apply(sheaf, potential, x), grad, atol=1e-5)


class TestBoundedConfidence:
    def test_effective_subgraph(self, path3):
        sub = effective_subgraph(path3, 1.0, [0.0, 0.5, 5.0])
        assert sub.edges == (0,)
        np.testing.assert_allclose(sub.margins, [-0.75, 19.25])

    def test_equilibrium_classes(self, path3):
        moving = bc_equilibrium_check(path3, 1.0, [0.0, 0.5, 5.0])
        assert not moving.equilibrium and moving.classes == ("active", "saturated")
        resting = bc_equilibrium_check(path3, 1.0, [0.5, 0.5, 5.0])
        assert resting.equilibrium and resting.classes == ("agree", "saturated")

    def test_energy_never_increases(self, rng):
        sheaf = random_sheaf(rng, max_vertices=5)
        potential = EdgePotential.bounded_confidence(1.0, sheaf.n_edges)
        x0 = rng.standard_normal(sheaf.c0_dim)
        traj = nl_diffuse(sheaf, potential, x0, FlowConfig(t_max=10.0, record_every=1))
        assert traj.integrator == "rk4"
        psi = traj.observables['Psi']
        assert np.all(np.diff(psi) <= 1e-10 * (1.0 + psi[0]))

    def test_fixed_points_are_zeros_of_the_laplacian(self, rng):
        outcomes = set()
        for _ in range(5):
            sheaf = random_sheaf(rng, max_vertices=6, integer=True, p_edge=0.7)
            if sheaf.n_edges == 0:
                continue
            potential = EdgePotential.bounded_confidence(1.0, sheaf.n_edges)
            sections = h0(sheaf).vectors
            d_max = float(np.max(np.abs(coboundary(sheaf).dense()), initial=0.0))
            for k in range(100):
                size = (0.1, 1.0, 3.0, 20.0)[k % 4]
                if k % 4 == 2:
                    x = size * sections @ rng.standard_normal(sections.shape[1])
                else:
                    x = size * rng.standard_normal(sheaf.c0_dim)
                if np.any(np.abs(effective_subgraph(sheaf, 1.0, x).margins) < 5e-2):
                    continue
                scale = 1.0 + np.max(np.abs(x)) * d_max
                vanishes = np.max(np.abs(nl_laplacian_apply(sheaf, potential, x)), initial=0.0) <= 1e-9 * scale
                fixed = bc_equilibrium_check(sheaf, 1.0, x).equilibrium
                assert fixed == vanishes
                outcomes.add(fixed)
        assert outcomes == {True, False}

    @pytest.mark.parametrize("kind", ["bounded_confidence", "signed"])
    def test_flow_is_orthogonal_to_sections(self, rng, kind):
        checked = 0
        for _ in range(10):
            sheaf = random_sheaf(rng, max_vertices=5, integer=True)
            sections = h0(sheaf).vectors
            if sheaf.n_edges == 0 or sections.shape[1] == 0:
                continue
            checked += 1
            if kind == "signed":
                potential = EdgePotential.signed(sheaf.n_edges, [0])
                cfg = FlowConfig(integrator="rk4", t_max=2.0, record_every=1)
            else:
                potential = EdgePotential.bounded_confidence(1.0, sheaf.n_edges)
                cfg = FlowConfig(t_max=5.0, record_every=1)
            traj = nl_diffuse(sheaf, potential, rng.standard_normal(sheaf.c0_dim), cfg)
            for x in traj.states:
                dx = -nl_laplacian_apply(sheaf, potential, x)
                assert np.all(np.abs(sections.T @ dx) <= 1e-8 * (1.0 + np.linalg.norm(x)))
        assert checked > 0

    def test_saturated_edge_freezes_cluster(self, path3):
        potential = EdgePotential.bounded_confidence(1.0, path3.n_edges)
        traj = nl_diffuse(path3, potential, [0.0, 0.5, 5.0], FlowConfig(t_max=200.0))
        assert traj.converged
        np.testing.assert_allclose(traj.limit, [0.25, 0.25, 5.0], atol=1e-7)

    def test_probe_at_fixed_point(self, path3):
        report = bc_local_stability_probe(path3, 1.0, [0.5, 0.5, 5.0], epsilon=1e-3, n=5, seed=7)
        assert report.x_star_fixed
        assert report.effective_edges == (0,)
        assert report.passed

    def test_probe_reports_non_fixed_point(self, path3):
        report = bc_local_stability_probe(path3, 1.0, [0.0, 0.5, 5.0], n=3)
        assert not report.x_star_fixed
        assert report.passed

    def test_probe_on_threshold(self, path3):
        with pytest.raises(NotInterior):
            bc_local_stability_probe(path3, 1.0, [0.0, 1.0, 5.0])


class TestSigned:
    def test_path_matrix(self, path3):
        signed = signed_laplacian(path3, [0])
        np.testing.assert_allclose(signed.matrix, SIGNED_PATH)
        assert signed.not_psd
        assert signed.spectrum.lambda_min == pytest.approx(-np.sqrt(3.0))

    def test_no_negative_edges_is_laplacian(self, rng):
        sheaf = random_sheaf(rng, integer=True)
        signed = signed_laplacian(sheaf, [])
        np.testing.assert_allclose(signed.matrix, sheaf_laplacian(sheaf).matrix, atol=1e-12)
        assert not signed.not_psd

    def test_sections_lie_in_the_kernel(self, rng):
        for _ in range(30):
            sheaf = random_sheaf(rng, integer=True)
            E_minus = [e for e in range(sheaf.n_edges) if rng.random() < 0.4]
            signed = signed_laplacian(sheaf, E_minus)
            scale = max(1.0, abs(signed.spectrum.lambda_max), abs(signed.spectrum.lambda_min))
            for b in h0(sheaf).vectors.T:
                assert np.linalg.norm(signed.matrix @ b) <= 1e-9 * scale

    def test_signed_flow_diverges(self, path3, logs):
        potential = EdgePotential.signed(path3.n_edges, [0])
        traj = nl_diffuse(path3, potential, [1.0, 0.0, 0.0], FlowConfig(t_max=50.0), on_log=logs.append)
        assert traj.diverged and not traj.converged
        assert any("diverged" in line for line in logs)

    def test_cutset_witness(self, path3):
        report = cutset_indefiniteness(path3, [0])
        assert report.components == ((0,), (1, 2))
        assert report.witness_found and report.component == 0
        np.testing.assert_allclose(report.witness, [1.0, 0.0, 0.0], atol=1e-12)
        assert report.witness_value == pytest.approx(-1.0)
        assert report.consistent

    def test_not_a_cutset(self):
        with pytest.raises(NotACutset):
            cutset_indefiniteness(constant_sheaf(Graph.cycle(3)), [0])

    def test_random_cutsets_consistent(self, rng):
        checked = 0
        for _ in range(40):
            sheaf = random_sheaf(rng, max_vertices=6, integer=True)
            if sheaf.n_edges == 0:
                continue
            try:
                report = cutset_indefiniteness(sheaf, [0])
            except NotACutset:
                continue
            checked += 1
            assert report.consistent
            if report.witness_found:
                assert report.witness_value < 0.0
        assert checked > 0
