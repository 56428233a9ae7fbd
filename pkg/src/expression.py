# -*- coding: utf-8 -*-
"""
expression.py - Evolving restriction maps
Learning to lie (restriction maps flow toward making fixed opinions a global
section), joint opinion/expression diffusion and its monitors: the Lyapunov
value Psi, the conserved diagonal blocks of M = alpha delta^T delta - beta x x^T
and the nonincreasing observables.

Restriction maps are carried as one gathered block row [-F_tail | F_head] per
edge, so entries outside the sheaf's sparsity pattern are never stored.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .config import config
from .errors import InvalidFlowConfig, ShapeMismatch
from .flow import AffineFlow, FlowConfig, Integrator, Trajectory, estimate_rate, integrate
from .sheaf import Sheaf, as_cochain0, build_sheaf
from .spectral import numerical_rank

RAYLEIGH_FLOOR = 1e-14


def _noop(_: str):
    pass


# === Edge-row layout ===

@dataclass(frozen=True, eq=False)
class EdgeLayout:
    """Where each edge's block row sits inside a flattened sheaf state"""
    shapes: Tuple[Tuple[int, int], ...]
    offsets: np.ndarray
    gathers: Tuple[np.ndarray, ...]  # x_e coordinates, tail first
    tail_dims: Tuple[int, ...]

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def rows(self, flat: np.ndarray) -> List[np.ndarray]:
        return [flat[self.offsets[e]:self.offsets[e + 1]].reshape(shape)
                for e, shape in enumerate(self.shapes)]

    @staticmethod
    def flatten(rows: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([r.reshape(-1) for r in rows]) if rows else np.zeros(0)


def edge_layout(sheaf: Sheaf) -> EdgeLayout:
    shapes = []
    for e, (u, v) in enumerate(sheaf.graph.edges):
        shapes.append((sheaf.edge_dims[e], sheaf.vertex_dims[u] + sheaf.vertex_dims[v]))
    sizes = [a * b for a, b in shapes]
    return EdgeLayout(
        shapes=tuple(shapes),
        offsets=np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
        gathers=tuple(sheaf.edge_vertex_indices(e) for e in range(sheaf.n_edges)),
        tail_dims=tuple(sheaf.vertex_dims[u] for u, _ in sheaf.graph.edges),
    )


def edge_rows(sheaf: Sheaf) -> List[np.ndarray]:
    """Gathered coboundary block rows delta_e = [-F_tail | F_head]"""
    return [sheaf.edge_row(e) for e in range(sheaf.n_edges)]


def sheaf_from_rows(sheaf: Sheaf, rows: Sequence[np.ndarray]) -> Sheaf:
    """Same graph and stalks as sheaf, restriction maps read off the block rows"""
    if len(rows) != sheaf.n_edges:
        raise ShapeMismatch(f"{len(rows)} block rows for {sheaf.n_edges} edges")
    restrictions = {}
    for e, (u, v) in enumerate(sheaf.graph.edges):
        row = np.asarray(rows[e], dtype=np.float64)
        k = sheaf.vertex_dims[u]
        restrictions[(u, e)] = -row[:, :k]
        restrictions[(v, e)] = row[:, k:]
    return build_sheaf(sheaf.graph, sheaf.vertex_dims, sheaf.edge_dims, restrictions)


def sheaf_distance(a: Sheaf, b: Sheaf) -> float:
    """Squared Frobenius distance sum ||F_{v<=e} - F'_{v<=e}||^2 = ||delta - delta'||_F^2"""
    if (a.graph.edges != b.graph.edges or a.vertex_dims != b.vertex_dims
            or a.edge_dims != b.edge_dims):
        raise ShapeMismatch("sheaves differ in graph or stalk dimensions")
    return float(sum(np.sum((a.restrictions[k] - b.restrictions[k]) ** 2) for k in a.restrictions))


# === Monitors ===

def _diag_m(sheaf: Sheaf, layout: EdgeLayout, x: np.ndarray, rows: Sequence[np.ndarray],
            alpha: float, beta: float) -> List[np.ndarray]:
    """Vertex diagonal blocks of alpha delta^T delta - beta x x^T"""
    blocks = []
    for v in range(sheaf.n_vertices):
        xv = x[sheaf.vertex_slice(v)]
        blocks.append(-beta * np.outer(xv, xv))
    for e, (u, v) in enumerate(sheaf.graph.edges):
        k = layout.tail_dims[e]
        fu, fv = rows[e][:, :k], rows[e][:, k:]
        blocks[u] += alpha * (fu.T @ fu)
        blocks[v] += alpha * (fv.T @ fv)
    return blocks


def _disagreements(layout: EdgeLayout, x: np.ndarray, rows: Sequence[np.ndarray]) -> List[np.ndarray]:
    return [rows[e] @ x[layout.gathers[e]] for e in range(len(rows))]


def _scalars(layout: EdgeLayout, x: np.ndarray, rows: Sequence[np.ndarray]) -> Dict[str, float]:
    ys = _disagreements(layout, x, rows)
    dx2 = float(sum(y @ y for y in ys))
    x2 = float(x @ x)
    return {
        'Psi': 0.5 * dx2,
        'frob2_delta': float(sum(np.sum(r * r) for r in rows)),
        'norm2_x': x2,
        'norm2_dx': dx2,
        'rayleigh': dx2 / x2 if x2 >= RAYLEIGH_FLOOR else float('nan'),
    }


def monitors(sheaf: Sheaf, x, alpha: float, beta: float) -> dict:
    """
    Psi = 1/2 |delta x|^2, |delta|_F^2, |x|^2, |delta x|^2, the Rayleigh quotient
    (nan when |x|^2 < 1e-14) and each vertex's diagonal block of M with its
    eigenvalue range.
    """
    x = as_cochain0(sheaf, x)
    layout = edge_layout(sheaf)
    rows = edge_rows(sheaf)
    out = _scalars(layout, x, rows)
    diag = []
    for v, block in enumerate(_diag_m(sheaf, layout, x, rows, alpha, beta)):
        eig = sla.eigvalsh(block) if block.size else np.zeros(0)
        diag.append({
            'vertex': v,
            'block': block,
            'eig_min': float(eig[0]) if eig.size else 0.0,
            'eig_max': float(eig[-1]) if eig.size else 0.0,
        })
    out['diagM'] = diag
    return out


# === Trajectories ===

@dataclass
class SheafTrajectory:
    """Sampled evolution of restriction maps, optionally with opinions"""
    times: np.ndarray
    sheaf_states: np.ndarray  # flattened block rows per sample
    monitors: Dict[str, np.ndarray]
    converged: bool
    limit_sheaf: Sheaf
    residual: float
    steps: int
    integrator: str
    step: Optional[float]
    tol: float
    final_time: float
    layout: EdgeLayout = field(repr=False)
    cochain_states: Optional[np.ndarray] = None
    limit_x: Optional[np.ndarray] = None
    diag_m: Optional[List[List[np.ndarray]]] = field(default=None, repr=False)
    diverged: bool = False

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def sheaf_at(self, k: int) -> Sheaf:
        return sheaf_from_rows(self.limit_sheaf, self.layout.rows(self.sheaf_states[k]))

    def diag_m_drift(self) -> float:
        """Largest entrywise change of any diagonal block of M from the first sample"""
        if not self.diag_m:
            return 0.0
        first = self.diag_m[0]
        drift = 0.0
        for blocks in self.diag_m[1:]:
            for b0, b in zip(first, blocks):
                if b.size:
                    drift = max(drift, float(np.max(np.abs(b - b0))))
        return drift

    def observable_extrema(self) -> Dict[str, dict]:
        out = {}
        for name, series in self.monitors.items():
            finite = series[np.isfinite(series)]
            if finite.size:
                out[name] = {
                    'first': float(finite[0]),
                    'last': float(finite[-1]),
                    'min': float(finite.min()),
                    'max': float(finite.max()),
                }
        return out


def expression_limit(sheaf: Sheaf, x) -> Sheaf:
    """
    Frobenius-nearest sheaf with the same sparsity pattern making x a global
    section: delta'_e = delta_e (I - x_e x_e^T / |x_e|^2), untouched where x_e = 0.
    """
    x = as_cochain0(sheaf, x)
    rows = []
    for e in range(sheaf.n_edges):
        row = sheaf.edge_row(e)
        xe = x[sheaf.edge_vertex_indices(e)]
        nn = float(xe @ xe)
        if nn > 0.0:
            row = row - np.outer(row @ xe, xe) / nn
        rows.append(row)
    return sheaf_from_rows(sheaf, rows)


def expression_diffuse(sheaf: Sheaf, x, beta: float, cfg: Optional[FlowConfig] = None,
                       on_log: Optional[Callable[[str], None]] = None) -> SheafTrajectory:
    """
    Integrate d delta_e/dt = -beta delta_e x_e x_e^T with the opinions x held fixed.

    Each block row evolves independently and linearly, so the flow is affine in
    the flattened rows and exact-eigen integration applies.
    """
    cfg = cfg or FlowConfig()
    if not beta > 0:
        raise InvalidFlowConfig(f"beta must be > 0, got {beta}")
    x = as_cochain0(sheaf, x)
    layout = edge_layout(sheaf)
    blocks = []
    for e, (d_e, _) in enumerate(layout.shapes):
        xe = x[layout.gathers[e]]
        blocks.append(np.kron(np.eye(d_e), np.outer(xe, xe)))
    size = layout.size
    flow = AffineFlow(
        matrix=sla.block_diag(*blocks) if blocks else np.zeros((0, 0)),
        forcing=np.zeros(size),
        free=np.arange(size),
        alpha=beta,
        size=size,
    )
    start = EdgeLayout.flatten(edge_rows(sheaf))

    def frob2(s: np.ndarray) -> float:
        return float(s @ s)

    def norm2_dx(s: np.ndarray) -> float:
        return float(sum(y @ y for y in _disagreements(layout, x, layout.rows(s))))

    def distance(s: np.ndarray) -> float:
        d = s - start
        return float(d @ d)

    traj = integrate(flow.field, start, cfg, linear=flow,
                     observables={'frob2_delta': frob2, 'norm2_dx': norm2_dx, 'distance': distance},
                     tag="EXPRESSION", on_log=on_log)
    return _wrap(sheaf, layout, traj, n_x=0)


def _wrap(sheaf: Sheaf, layout: EdgeLayout, traj: Trajectory, n_x: int,
          diag_m: Optional[List[List[np.ndarray]]] = None) -> SheafTrajectory:
    limit_rows = layout.rows(traj.limit[n_x:]) if np.all(np.isfinite(traj.limit)) else edge_rows(sheaf)
    return SheafTrajectory(
        times=traj.times,
        sheaf_states=traj.states[:, n_x:],
        monitors=traj.observables,
        converged=traj.converged,
        limit_sheaf=sheaf_from_rows(sheaf, limit_rows),
        residual=traj.residual,
        steps=traj.steps,
        integrator=traj.integrator,
        step=traj.step,
        tol=traj.tol,
        final_time=traj.final_time,
        layout=layout,
        cochain_states=traj.states[:, :n_x] if n_x else None,
        limit_x=traj.limit[:n_x].copy() if n_x else None,
        diag_m=diag_m,
        diverged=traj.diverged,
    )


def _joint_field(layout: EdgeLayout, n: int, alpha: float, beta: float) -> Callable[[np.ndarray], np.ndarray]:
    def fn(s: np.ndarray) -> np.ndarray:
        x = s[:n]
        rows = layout.rows(s[n:])
        out = np.zeros_like(s)
        dx = out[:n]
        for e, row in enumerate(rows):
            g = layout.gathers[e]
            xe = x[g]
            y = row @ xe
            dx[g] -= alpha * (row.T @ y)
            out[n + layout.offsets[e]:n + layout.offsets[e + 1]] = -beta * np.outer(y, xe).reshape(-1)
        return out
    return fn


def joint_gradient(sheaf: Sheaf, x, alpha: float, beta: float) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Joint vector field (dx/dt, d delta_e/dt) = (-alpha delta^T delta x, -beta delta_e x_e x_e^T),
    which is -grad Psi for the metric (1/alpha) x.x' + (1/beta) sum_e tr(delta_e^T delta'_e).
    """
    x = as_cochain0(sheaf, x)
    layout = edge_layout(sheaf)
    n = sheaf.c0_dim
    s = np.concatenate([x, EdgeLayout.flatten(edge_rows(sheaf))])
    ds = _joint_field(layout, n, alpha, beta)(s)
    return ds[:n], layout.rows(ds[n:])


def joint_diffuse(sheaf: Sheaf, x0, alpha: Optional[float] = None, beta: float = 1.0,
                  cfg: Optional[FlowConfig] = None,
                  on_log: Optional[Callable[[str], None]] = None) -> SheafTrajectory:
    """
    Evolve opinions and restriction maps together:
    dx/dt = -alpha delta^T delta x, d delta_e/dt = -beta delta_e x_e x_e^T.

    alpha defaults to cfg.alpha. Integrator.AUTO resolves to the adaptive
    integrator; rk4 without an explicit step uses
    h = rk4_safety / (alpha |delta|_2^2 + beta |x|^2), refreshed every 100 steps.
    """
    cfg = cfg or FlowConfig()
    alpha = cfg.alpha if alpha is None else float(alpha)
    if not alpha > 0 or not beta > 0:
        raise InvalidFlowConfig(f"alpha and beta must be > 0, got {alpha}, {beta}")
    x0 = as_cochain0(sheaf, x0)
    layout = edge_layout(sheaf)
    n = sheaf.c0_dim
    fn = _joint_field(layout, n, alpha, beta)
    start = np.concatenate([x0, EdgeLayout.flatten(edge_rows(sheaf))])

    def rate(s: np.ndarray) -> float:
        x = s[:n]
        rows = layout.rows(s[n:])

        def gram(v: np.ndarray) -> np.ndarray:
            out = np.zeros(n)
            for e, row in enumerate(rows):
                g = layout.gathers[e]
                out[g] += row.T @ (row @ v[g])
            return out

        return alpha * estimate_rate(gram, n) + beta * float(x @ x)

    def scalar(name: str):
        return lambda s: _scalars(layout, s[:n], layout.rows(s[n:]))[name]

    observables = {name: scalar(name) for name in ('Psi', 'frob2_delta', 'norm2_x', 'norm2_dx', 'rayleigh')}
    traj = integrate(fn, start, cfg, rate=rate, refresh_every=100, auto=Integrator.ADAPTIVE,
                     observables=observables, tag="JOINT", on_log=on_log)
    diag_m = [_diag_m(sheaf, layout, s[:n], layout.rows(s[n:]), alpha, beta) for s in traj.states]
    return _wrap(sheaf, layout, traj, n_x=n, diag_m=diag_m)


# === Certificates ===

@dataclass(frozen=True)
class LimitCertificate:
    """
    Sufficient condition for a nonzero joint limit: some vertex diagonal block of
    M = alpha delta0^T delta0 - beta x0 x0^T fails to be positive semidefinite.

    reading is "indefinite" when that block also has a positive eigenvalue and
    "negative" otherwise (always the case for 1x1 stalks).
    """
    certified: bool
    vertex: Optional[int]
    eig_min: Optional[float]
    eig_max: Optional[float]
    reading: Optional[str]
    tol: float
    block_ranges: Tuple[Tuple[float, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            'certified': self.certified,
            'vertex': self.vertex,
            'eig_min': self.eig_min,
            'eig_max': self.eig_max,
            'reading': self.reading,
            'tol': self.tol,
            'block_ranges': [list(r) for r in self.block_ranges],
        }


def nontrivial_limit_certificate(sheaf: Sheaf, x0, alpha: float, beta: float,
                                 tol: Optional[float] = None) -> LimitCertificate:
    tol = config.rank_tol if tol is None else float(tol)
    info = monitors(sheaf, x0, alpha, beta)['diagM']
    ranges = tuple((d['eig_min'], d['eig_max']) for d in info)
    for d in info:
        if d['eig_min'] < -tol:
            return LimitCertificate(
                certified=True,
                vertex=d['vertex'],
                eig_min=d['eig_min'],
                eig_max=d['eig_max'],
                reading="indefinite" if d['eig_max'] > tol else "negative",
                tol=tol,
                block_ranges=ranges,
            )
    return LimitCertificate(False, None, None, None, None, tol, ranges)


def find_certifying_scale(sheaf: Sheaf, x0, alpha: float, beta: float,
                          max_doublings: int = 60) -> Optional[float]:
    """Smallest power of two kappa such that (delta0, kappa x0) is certified; None if x0 = 0"""
    x0 = as_cochain0(sheaf, x0)
    if not np.any(x0):
        return None
    kappa = 1.0
    for _ in range(max_doublings + 1):
        if nontrivial_limit_certificate(sheaf, kappa * x0, alpha, beta).certified:
            return kappa
        kappa *= 2.0
    return None


# === Stability probe ===

@dataclass(frozen=True)
class LyapunovReport:
    """Perturbation experiment around a joint equilibrium"""
    full_rank: bool
    epsilon: float
    n_perturbations: int
    distances: Tuple[float, ...]
    bound: float
    t_max: float
    seed: int

    @property
    def max_distance(self) -> float:
        return max(self.distances) if self.distances else 0.0

    @property
    def stable(self) -> bool:
        return self.max_distance <= self.bound

    def to_dict(self) -> dict:
        return {
            'full_rank': self.full_rank,
            'epsilon': self.epsilon,
            'n_perturbations': self.n_perturbations,
            'max_distance': self.max_distance,
            'bound': self.bound,
            'stable': self.stable,
            't_max': self.t_max,
            'seed': self.seed,
        }


def _constraint_jacobian(sheaf: Sheaf, layout: EdgeLayout, x: np.ndarray,
                         rows: Sequence[np.ndarray]) -> np.ndarray:
    """Derivative of (x, delta) -> delta x, columns ordered (x, flattened rows)"""
    n = sheaf.c0_dim
    jac = np.zeros((sheaf.c1_dim, n + layout.size))
    for e, row in enumerate(rows):
        r = sheaf.edge_slice(e)
        g = layout.gathers[e]
        jac[r, g] = row
        d_e = layout.shapes[e][0]
        jac[r, n + layout.offsets[e]:n + layout.offsets[e + 1]] = np.kron(np.eye(d_e), x[g][None, :])
    return jac


def lyapunov_probe(sheaf: Sheaf, x_star, alpha: float, beta: float, epsilon: float = 1e-3,
                   n: int = 20, t_max: float = 100.0, seed: int = 0,
                   on_log: Optional[Callable[[str], None]] = None) -> LyapunovReport:
    """
    Perturb an equilibrium (x*, delta*) by random vectors of norm epsilon and
    follow the joint flow up to t_max. Each run is scored by the largest value
    of |delta x| + |state - perturbed start| over its samples; stable means every
    score stays within 10 epsilon.
    """
    log = on_log or _noop
    x_star = as_cochain0(sheaf, x_star)
    layout = edge_layout(sheaf)
    rows = edge_rows(sheaf)
    dim = sheaf.c0_dim
    jac = _constraint_jacobian(sheaf, layout, x_star, rows)
    full_rank = numerical_rank(jac) == sheaf.c1_dim
    if not full_rank:
        log("[JOINT] constraint derivative is rank deficient at the probed point")

    z = np.concatenate([x_star, EdgeLayout.flatten(rows)])
    rng = np.random.default_rng(seed)
    cfg = FlowConfig(integrator=Integrator.ADAPTIVE, t_max=t_max, record_every=1)
    distances = []
    for i in range(n):
        direction = rng.standard_normal(z.size)
        direction *= epsilon / np.linalg.norm(direction)
        s0 = z + direction
        start = sheaf_from_rows(sheaf, layout.rows(s0[dim:]))
        traj = joint_diffuse(start, s0[:dim], alpha, beta, cfg)
        states = np.hstack([traj.cochain_states, traj.sheaf_states])
        score = 0.0
        for s in states:
            residual = np.sqrt(sum(y @ y for y in _disagreements(layout, s[:dim], layout.rows(s[dim:]))))
            score = max(score, float(residual + np.linalg.norm(s - s0)))
        distances.append(score)
    report = LyapunovReport(full_rank, epsilon, n, tuple(distances), 10.0 * epsilon, t_max, seed)
    log(f"[JOINT] lyapunov probe: max distance {report.max_distance:.3e} (bound {report.bound:.3e})")
    return report
