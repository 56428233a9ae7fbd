# -*- coding: utf-8 -*-
import numpy as np
import pytest

from src.errors import InvalidFlowConfig, ShapeMismatch
from src.expression import (EdgeLayout, edge_layout, edge_rows, expression_diffuse, expression_limit,
                            find_certifying_scale, joint_diffuse, joint_gradient, lyapunov_probe, monitors,
                            nontrivial_limit_certificate, sheaf_distance, sheaf_from_rows)
from src.flow import FlowConfig
from src.sheaf import Graph, coboundary, constant_sheaf, four_agent_sheaf

from .conftest import numeric_gradient, random_sheaf

MONOTONE_MONITORS = ('Psi', 'frob2_delta', 'norm2_x', 'norm2_dx', 'rayleigh')

LIE_X = np.array([-4.0, 1.0])


class TestLayout:
    def test_rows_round_trip(self):
        sheaf = four_agent_sheaf()
        layout = edge_layout(sheaf)
        rows = edge_rows(sheaf)
        rebuilt = sheaf_from_rows(sheaf, layout.rows(layout.flatten(rows)))
        np.testing.assert_array_equal(coboundary(rebuilt).dense(), coboundary(sheaf).dense())
        assert layout.size == sum(r.size for r in rows)

    def test_row_count_mismatch(self, edge_sheaf):
        with pytest.raises(ShapeMismatch):
            sheaf_from_rows(edge_sheaf, [])

    def test_distance_needs_same_shape(self, edge_sheaf, path3):
        with pytest.raises(ShapeMismatch):
            sheaf_distance(edge_sheaf, path3)


class TestLearningToLie:
    def test_closed_form(self, edge_sheaf):
        limit = expression_limit(edge_sheaf, LIE_X)
        assert limit.restriction(0, 0)[0, 0] == pytest.approx(-3.0 / 17.0)
        assert limit.restriction(1, 0)[0, 0] == pytest.approx(12.0 / 17.0)
        assert sheaf_distance(edge_sheaf, limit) == pytest.approx(25.0 / 17.0)

    def test_flow_reaches_closed_form(self, edge_sheaf):
        traj = expression_diffuse(edge_sheaf, LIE_X, beta=1.0, cfg=FlowConfig(t_max=10.0, record_every=1))
        assert traj.converged and traj.integrator == "exact-eigen"
        expected = expression_limit(edge_sheaf, LIE_X)
        assert sheaf_distance(traj.limit_sheaf, expected) < 1e-16
        assert np.all(np.diff(traj.monitors['frob2_delta']) <= 1e-12)
        assert traj.monitors['distance'][-1] == pytest.approx(25.0 / 17.0, rel=1e-8)

    def test_random_limits_make_x_a_section(self, rng):
        for _ in range(100):
            sheaf = random_sheaf(rng, max_vertices=5)
            x = rng.standard_normal(sheaf.c0_dim)
            limit = expression_limit(sheaf, x)
            assert np.allclose(coboundary(limit).dense() @ x, 0.0, atol=1e-10)
            if sheaf.n_edges == 0:
                continue
            # slowest row decays at rate beta * min_e |x_e|^2
            slowest = min(float(x[g] @ x[g]) for g in edge_layout(sheaf).gathers)
            cfg = FlowConfig(t_max=40.0 / (2.0 * slowest), convergence_tol=1e-12)
            traj = expression_diffuse(sheaf, x, beta=2.0, cfg=cfg)
            scale = 1.0 + np.max(np.abs(coboundary(sheaf).dense()))
            assert np.sqrt(sheaf_distance(traj.limit_sheaf, limit)) <= 1e-6 * scale

    def test_limit_is_frobenius_nearest(self, rng):
        sheaf = random_sheaf(rng, graph=Graph.path(4))
        x = rng.standard_normal(sheaf.c0_dim)
        layout = edge_layout(sheaf)
        best = sheaf_distance(sheaf, expression_limit(sheaf, x))
        for _ in range(100):
            rows = []
            for row, g in zip(edge_rows(sheaf), layout.gathers):
                xe = x[g]
                moved = row + 0.5 * rng.standard_normal(row.shape)
                rows.append(moved - np.outer(moved @ xe, xe) / (xe @ xe))
            other = sheaf_from_rows(sheaf, rows)
            assert np.allclose(coboundary(other).dense() @ x, 0.0, atol=1e-10)
            assert best <= sheaf_distance(sheaf, other) + 1e-12

    def test_zero_opinions_leave_edges_alone(self, edge_sheaf):
        limit = expression_limit(edge_sheaf, [0.0, 0.0])
        assert sheaf_distance(limit, edge_sheaf) == 0.0

    def test_beta_must_be_positive(self, edge_sheaf):
        with pytest.raises(InvalidFlowConfig):
            expression_diffuse(edge_sheaf, LIE_X, beta=0.0)


class TestMonitors:
    def test_values_on_edge(self, edge_sheaf):
        m = monitors(edge_sheaf, LIE_X, alpha=1.0, beta=1.0)
        assert m['Psi'] == pytest.approx(12.5)
        assert m['norm2_x'] == pytest.approx(17.0)
        assert m['rayleigh'] == pytest.approx(25.0 / 17.0)
        assert [d['eig_min'] for d in m['diagM']] == pytest.approx([-15.0, 0.0])

    def test_rayleigh_undefined_at_zero(self, edge_sheaf):
        assert np.isnan(monitors(edge_sheaf, [0.0, 0.0], 1.0, 1.0)['rayleigh'])

    def test_joint_gradient(self, edge_sheaf):
        dx, rows = joint_gradient(edge_sheaf, LIE_X, alpha=1.0, beta=1.0)
        np.testing.assert_allclose(dx, [5.0, -5.0])
        np.testing.assert_allclose(rows[0], [[20.0, -5.0]])

    def test_joint_gradient_matches_finite_differences(self, rng):
        for i in range(20):
            graph = Graph.path(2 + i % 3) if i % 2 else Graph.cycle(3)
            sheaf = random_sheaf(rng, graph=graph)
            n = sheaf.c0_dim
            layout = edge_layout(sheaf)
            alpha, beta = rng.uniform(0.5, 2.0, 2)
            x = rng.standard_normal(n)

            def psi(z):
                return monitors(sheaf_from_rows(sheaf, layout.rows(z[n:])), z[:n], 1.0, 1.0)['Psi']

            grad = numeric_gradient(psi, np.concatenate([x, EdgeLayout.flatten(edge_rows(sheaf))]))
            dx, rows = joint_gradient(sheaf, x, alpha, beta)
            expected = -np.concatenate([alpha * grad[:n], beta * grad[n:]])
            field = np.concatenate([dx, EdgeLayout.flatten(rows)])
            np.testing.assert_allclose(field, expected, atol=1e-5 * (1.0 + np.linalg.norm(expected)))


class TestJointFlow:
    def test_learning_to_lie_keeps_opinions(self, edge_sheaf):
        cfg = FlowConfig(t_max=200.0, convergence_tol=1e-10)
        traj = joint_diffuse(edge_sheaf, LIE_X, beta=1.0, cfg=cfg)
        assert traj.integrator == "adaptive"
        assert traj.converged
        # a^2 - x_u^2 = -15 is conserved, so x cannot reach zero
        assert np.linalg.norm(traj.limit_x) > 3.8
        assert traj.limit_sheaf.restriction(0, 0)[0, 0] < 0.0
        assert traj.diag_m_drift() < 1e-6
        assert np.all(np.abs(coboundary(traj.limit_sheaf).dense() @ traj.limit_x) < 1e-8)

    def test_lyapunov_value_never_increases(self, rng):
        sheaf = random_sheaf(rng, max_vertices=4)
        x0 = rng.standard_normal(sheaf.c0_dim)
        traj = joint_diffuse(sheaf, x0, alpha=1.0, beta=0.5, cfg=FlowConfig(t_max=20.0, record_every=1))
        psi = traj.monitors['Psi']
        assert np.all(np.diff(psi) <= 1e-8 * (1.0 + psi[0]))
        assert traj.diag_m_drift() < 1e-6 * (1.0 + np.max(np.abs(x0))) ** 2

    def test_random_trajectories_conserve_and_descend(self, rng):
        certified = 0
        for i in range(50):
            graph = Graph.cycle(3) if i % 3 == 0 else Graph.path(2 + i % 3)
            sheaf = random_sheaf(rng, max_dim=2, graph=graph)
            x0 = rng.standard_normal(sheaf.c0_dim)
            beta = float(rng.uniform(0.5, 2.0))
            traj = joint_diffuse(sheaf, x0, alpha=1.0, beta=beta, cfg=FlowConfig(t_max=20.0, record_every=1))
            assert traj.diag_m_drift() < 1e-7
            for name in MONOTONE_MONITORS:
                series = traj.monitors[name]
                series = series[np.isfinite(series)]
                if series.size:
                    assert np.all(np.diff(series) <= 1e-8 * (1.0 + abs(series[0]))), name
            if nontrivial_limit_certificate(sheaf, x0, 1.0, beta).certified:
                certified += 1
                assert np.linalg.norm(traj.limit_x) > 1e-6
        assert certified > 0

    def test_rk4_automatic_step(self, edge_sheaf):
        cfg = FlowConfig(integrator="rk4", t_max=5.0, record_every=1)
        traj = joint_diffuse(edge_sheaf, LIE_X, cfg=cfg)
        # beta |x|^2 >= 15 along this flow
        assert traj.step is not None and traj.step <= 0.5 / 15.0
        assert traj.diag_m_drift() < 0.05
        assert traj.n_samples == traj.steps + 1

    def test_rejects_bad_rates(self, edge_sheaf):
        with pytest.raises(InvalidFlowConfig):
            joint_diffuse(edge_sheaf, LIE_X, alpha=-1.0)


class TestCertificate:
    def test_negative_block_certifies(self, edge_sheaf):
        cert = nontrivial_limit_certificate(edge_sheaf, LIE_X, 1.0, 1.0)
        assert cert.certified and cert.vertex == 0
        assert cert.reading == "negative"
        assert cert.eig_min == pytest.approx(-15.0)

    def test_indefinite_reading(self):
        sheaf = constant_sheaf(Graph(2, ((0, 1),)), 2)
        cert = nontrivial_limit_certificate(sheaf, [3.0, 0.0, 0.0, 0.0], 1.0, 1.0)
        assert cert.certified and cert.reading == "indefinite"

    def test_small_opinions_not_certified(self, edge_sheaf):
        cert = nontrivial_limit_certificate(edge_sheaf, [0.1, 0.1], 1.0, 1.0)
        assert not cert.certified
        assert cert.to_dict()['block_ranges'] == [[pytest.approx(0.99), pytest.approx(0.99)]] * 2

    def test_certifying_scale(self, edge_sheaf):
        assert find_certifying_scale(edge_sheaf, [0.1, 0.1], 1.0, 1.0) == 16.0
        assert find_certifying_scale(edge_sheaf, LIE_X, 1.0, 1.0) == 1.0
        assert find_certifying_scale(edge_sheaf, [0.0, 0.0], 1.0, 1.0) is None


class TestLyapunovProbe:
    def test_consensus_equilibrium_is_stable(self, edge_sheaf):
        report = lyapunov_probe(edge_sheaf, [1.0, 1.0], alpha=1.0, beta=1.0, n=3, t_max=20.0)
        assert report.full_rank
        assert report.stable
        assert len(report.distances) == 3

    def test_score_is_measured_from_the_perturbed_start(self, edge_sheaf):
        epsilon = 1e-3
        report = lyapunov_probe(edge_sheaf, [1.0, 1.0], alpha=1.0, beta=1.0, epsilon=epsilon, n=1,
                                t_max=1e-9, seed=5)
        layout = edge_layout(edge_sheaf)
        z = np.concatenate([[1.0, 1.0], EdgeLayout.flatten(edge_rows(edge_sheaf))])
        direction = np.random.default_rng(5).standard_normal(z.size)
        s0 = z + direction * epsilon / np.linalg.norm(direction)
        residual = np.linalg.norm(layout.rows(s0[2:])[0] @ s0[:2])
        assert report.distances[0] == pytest.approx(residual, abs=1e-8)

    def test_rank_deficient_point_is_reported(self, edge_sheaf, logs):
        flat = sheaf_from_rows(edge_sheaf, [np.zeros((1, 2))])
        report = lyapunov_probe(flat, [0.0, 0.0], alpha=1.0, beta=1.0, n=1, t_max=1.0, on_log=logs.append)
        assert not report.full_rank
        assert any("rank deficient" in line for line in logs)
