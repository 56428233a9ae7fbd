# -*- coding: utf-8 -*-
"""
nonlinear.py - Nonlinear sheaf Laplacians from edgewise potentials
L^Phi x = delta^T Phi(delta x) with Phi = grad U, U = sum_e U_e. Every potential
here has the radial form U_e(y) = 1/2 psi_e(|y|^2), so Phi scales each edge's
disagreement by psi_e'(|delta_e x|^2):

    quadratic           psi(s) = s              (recovers L_F)
    bounded confidence  psi'(s) = (max(0, 1 - s/D_e))^2, flat beyond D_e
    signed              psi(s) = +-s            (L^S = delta^T S delta)
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Tuple

import networkx as nx
import numpy as np

from .config import config
from .errors import InvalidPotential, LengthMismatch, NotACutset, NotInterior, ShapeMismatch
from .flow import AffineFlow, FlowConfig, Trajectory, estimate_rate, integrate
from .sheaf import Sheaf, as_cochain0, coboundary
from .spectral import (SpectrumSummary, local_sections, projector, sheaf_laplacian,
                       spectrum_summary, symmetric_eigh)


def _noop(_: str):
    pass


def bc_slope(s: np.ndarray, d: np.ndarray) -> np.ndarray:
    """psi'(s) = (max(0, 1 - s/D))^2"""
    return np.maximum(0.0, 1.0 - s / d) ** 2


def bc_value(s: np.ndarray, d: np.ndarray) -> np.ndarray:
    """psi(s) = (D/3)(1 - (1 - min(s, D)/D)^3), the antiderivative of bc_slope"""
    return (d / 3.0) * (1.0 - (1.0 - np.minimum(s, d) / d) ** 3)


class PotentialKind(Enum):
    QUADRATIC = "quadratic"
    BOUNDED_CONFIDENCE = "bounded_confidence"
    SIGNED = "signed"


@dataclass(frozen=True)
class EdgePotential:
    """
    Edgewise potential family.

    Attributes:
        kind: PotentialKind
        thresholds: D_e > 0 per edge (bounded confidence)
        signs: +1 / -1 per edge (signed); -1 marks the antagonistic set E-
        slope, value: psi' and psi for bounded confidence, pluggable
    """
    kind: PotentialKind
    thresholds: Optional[Tuple[float, ...]] = None
    signs: Optional[Tuple[int, ...]] = None
    slope: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(default=bc_slope, repr=False, compare=False)
    value: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(default=bc_value, repr=False, compare=False)

    @classmethod
    def quadratic(cls) -> 'EdgePotential':
        return cls(PotentialKind.QUADRATIC)

    @classmethod
    def bounded_confidence(cls, thresholds, n_edges: Optional[int] = None) -> 'EdgePotential':
        """thresholds: one D_e per edge, or a single value broadcast to n_edges"""
        d = np.atleast_1d(np.asarray(thresholds, dtype=np.float64))
        if d.size == 1 and n_edges is not None:
            d = np.full(n_edges, float(d[0]))
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise InvalidPotential("confidence thresholds must be finite and > 0")
        return cls(PotentialKind.BOUNDED_CONFIDENCE, thresholds=tuple(float(v) for v in d))

    @classmethod
    def signed(cls, n_edges: int, negative: Iterable[int]) -> 'EdgePotential':
        negative = set(int(e) for e in negative)
        for e in negative:
            if not 0 <= e < n_edges:
                raise InvalidPotential(f"negative edge {e} out of range [0, {n_edges})")
        return cls(PotentialKind.SIGNED, signs=tuple(-1 if e in negative else 1 for e in range(n_edges)))

    @property
    def negative_edges(self) -> Tuple[int, ...]:
        return tuple(e for e, s in enumerate(self.signs or ()) if s < 0)

    @property
    def is_linear(self) -> bool:
        return self.kind != PotentialKind.BOUNDED_CONFIDENCE

    def check(self, sheaf: Sheaf):
        if self.kind == PotentialKind.BOUNDED_CONFIDENCE and len(self.thresholds or ()) != sheaf.n_edges:
            raise InvalidPotential(f"{len(self.thresholds or ())} thresholds for {sheaf.n_edges} edges")
        if self.kind == PotentialKind.SIGNED and len(self.signs or ()) != sheaf.n_edges:
            raise InvalidPotential(f"{len(self.signs or ())} edge signs for {sheaf.n_edges} edges")

    def weights(self, sq_norms: np.ndarray) -> np.ndarray:
        """psi_e'(|delta_e x|^2) per edge"""
        if self.kind == PotentialKind.QUADRATIC:
            return np.ones_like(sq_norms)
        if self.kind == PotentialKind.SIGNED:
            return np.asarray(self.signs, dtype=np.float64)
        return self.slope(sq_norms, np.asarray(self.thresholds))

    def energies(self, sq_norms: np.ndarray) -> np.ndarray:
        """U_e = 1/2 psi_e(|delta_e x|^2) per edge"""
        if self.kind == PotentialKind.QUADRATIC:
            return 0.5 * sq_norms
        if self.kind == PotentialKind.SIGNED:
            return 0.5 * np.asarray(self.signs, dtype=np.float64) * sq_norms
        return 0.5 * self.value(sq_norms, np.asarray(self.thresholds))

    def to_dict(self) -> dict:
        return {
            'kind': self.kind.value,
            'thresholds': list(self.thresholds) if self.thresholds is not None else None,
            'negative_edges': list(self.negative_edges),
        }


def _edge_ids(sheaf: Sheaf) -> np.ndarray:
    """Edge index of each C1 coordinate"""
    return np.repeat(np.arange(sheaf.n_edges), sheaf.edge_dims)


def _edge_sq_norms(sheaf: Sheaf, y: np.ndarray) -> np.ndarray:
    return np.bincount(_edge_ids(sheaf), weights=y * y, minlength=sheaf.n_edges)


def nl_laplacian_apply(sheaf: Sheaf, potential: EdgePotential, x) -> np.ndarray:
    """delta^T Phi(delta x)"""
    potential.check(sheaf)
    try:
        x = as_cochain0(sheaf, x)
    except LengthMismatch as e:
        raise ShapeMismatch(str(e)) from e
    d = coboundary(sheaf).matrix
    y = np.asarray(d @ x).reshape(-1)
    w = potential.weights(_edge_sq_norms(sheaf, y))
    return np.asarray(d.T @ (np.repeat(w, sheaf.edge_dims) * y)).reshape(-1)


def potential_energy(sheaf: Sheaf, potential: EdgePotential, x) -> float:
    """U(delta x) = sum_e U_e(delta_e x)"""
    potential.check(sheaf)
    x = as_cochain0(sheaf, x)
    y = np.asarray(coboundary(sheaf).matrix @ x).reshape(-1)
    return float(np.sum(potential.energies(_edge_sq_norms(sheaf, y))))


def signed_matrix(sheaf: Sheaf, potential: EdgePotential) -> np.ndarray:
    """delta^T S delta, dense"""
    d = coboundary(sheaf).dense()
    s = np.repeat(np.asarray(potential.signs, dtype=np.float64), sheaf.edge_dims)
    m = d.T @ (s[:, None] * d)
    return 0.5 * (m + m.T)


def nl_diffuse(sheaf: Sheaf, potential: EdgePotential, x0, cfg: Optional[FlowConfig] = None,
               on_log: Optional[Callable[[str], None]] = None) -> Trajectory:
    """
    Integrate dx/dt = -alpha L^Phi x.

    Quadratic and signed potentials are linear and accept exact-eigen
    integration; bounded confidence needs a stepped or adaptive integrator.
    Signed flows may blow up: divergence is flagged on the trajectory.
    """
    cfg = cfg or FlowConfig()
    potential.check(sheaf)
    x0 = as_cochain0(sheaf, x0)
    alpha = cfg.alpha
    n = sheaf.c0_dim

    linear = None
    rate = None
    if potential.kind == PotentialKind.QUADRATIC:
        linear = AffineFlow(sheaf_laplacian(sheaf).matrix, np.zeros(n), np.arange(n), alpha, n)
    elif potential.kind == PotentialKind.SIGNED:
        linear = AffineFlow(signed_matrix(sheaf, potential), np.zeros(n), np.arange(n), alpha, n)
    else:
        # psi' <= 1, so alpha lambda_max(L) bounds the Jacobian
        lap = sheaf_laplacian(sheaf).matrix
        bound = alpha * estimate_rate(lambda v: lap @ v, n)

        def rate(_: np.ndarray) -> float:
            return bound

    def fn(x: np.ndarray) -> np.ndarray:
        return -alpha * nl_laplacian_apply(sheaf, potential, x)

    observables = {
        'Psi': lambda x: potential_energy(sheaf, potential, x),
        'norm2_x': lambda x: float(x @ x),
    }
    return integrate(fn, x0, cfg, linear=linear, rate=rate, observables=observables,
                     tag="NONLINEAR", on_log=on_log)


# === Bounded confidence ===

@dataclass(frozen=True)
class EffectiveSubgraph:
    """
    G_x: edges whose disagreement is still below threshold (|delta_e x|^2 < D_e).
    margins are |delta_e x|^2 - D_e, negative exactly on G_x.
    """
    in_g: Tuple[bool, ...]
    margins: np.ndarray
    sq_norms: np.ndarray

    @property
    def edges(self) -> Tuple[int, ...]:
        return tuple(e for e, flag in enumerate(self.in_g) if flag)

    def sections(self, sheaf: Sheaf, tol: Optional[float] = None):
        """H0(G_x; F_x) on every vertex of G"""
        return local_sections(sheaf, range(sheaf.n_vertices), self.edges, tol)

    def to_dict(self) -> dict:
        return {
            'edges': list(self.edges),
            'margins': [float(m) for m in self.margins],
        }


def effective_subgraph(sheaf: Sheaf, D, x) -> EffectiveSubgraph:
    potential = EdgePotential.bounded_confidence(D, sheaf.n_edges)
    potential.check(sheaf)
    x = as_cochain0(sheaf, x)
    y = np.asarray(coboundary(sheaf).matrix @ x).reshape(-1)
    s = _edge_sq_norms(sheaf, y)
    margins = s - np.asarray(potential.thresholds)
    return EffectiveSubgraph(in_g=tuple(bool(m < 0) for m in margins), margins=margins, sq_norms=s)


@dataclass(frozen=True)
class BCEquilibrium:
    """Per edge: "agree" (delta_e x = 0), "saturated" (|delta_e x|^2 >= D_e) or "active" """
    equilibrium: bool
    classes: Tuple[str, ...]
    sq_norms: np.ndarray

    def to_dict(self) -> dict:
        return {
            'equilibrium': self.equilibrium,
            'classes': list(self.classes),
            'sq_norms': [float(s) for s in self.sq_norms],
        }


def bc_equilibrium_check(sheaf: Sheaf, D, x, tol: float = 1e-9) -> BCEquilibrium:
    """
    x is a bounded-confidence fixed point iff every edge agrees or is saturated.
    Agreement means |delta_e x| <= tol * (1 + |x|_inf * max|delta|).
    """
    x = as_cochain0(sheaf, x)
    sub = effective_subgraph(sheaf, D, x)
    d = coboundary(sheaf).dense()
    scale = 1.0 + float(np.max(np.abs(x), initial=0.0)) * float(np.max(np.abs(d), initial=0.0))
    classes = []
    for e in range(sheaf.n_edges):
        if np.sqrt(sub.sq_norms[e]) <= tol * scale:
            classes.append("agree")
        elif not sub.in_g[e]:
            classes.append("saturated")
        else:
            classes.append("active")
    return BCEquilibrium(
        equilibrium="active" not in classes,
        classes=tuple(classes),
        sq_norms=sub.sq_norms,
    )


@dataclass(frozen=True)
class BCProbeReport:
    """Perturbations of a bounded-confidence point and where they settle"""
    x_star_fixed: bool
    effective_edges: Tuple[int, ...]
    epsilon: float
    errors: Tuple[float, ...]  # |limit - projection|_inf per perturbation
    converged: Tuple[bool, ...]
    atol: float

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return all(self.converged) and self.max_error <= self.atol

    def to_dict(self) -> dict:
        return {
            'x_star_fixed': self.x_star_fixed,
            'effective_edges': list(self.effective_edges),
            'epsilon': self.epsilon,
            'max_error': self.max_error,
            'all_converged': all(self.converged),
            'atol': self.atol,
            'passed': self.passed,
        }


def bc_local_stability_probe(sheaf: Sheaf, D, x_star, epsilon: float = 1e-3, cfg: Optional[FlowConfig] = None,
                             n: int = 10, seed: int = 0, atol: float = 1e-6,
                             on_log: Optional[Callable[[str], None]] = None) -> BCProbeReport:
    """
    Perturb x_star by random vectors of norm epsilon and check that bounded-confidence
    diffusion settles on the orthogonal projection of the perturbed point onto
    H0(G_x*; F_x*).

    Raises:
        NotInterior: some edge has |delta_e x*|^2 within config.interior_margin of D_e
    """
    log = on_log or _noop
    x_star = as_cochain0(sheaf, x_star)
    sub = effective_subgraph(sheaf, D, x_star)
    close = [e for e, m in enumerate(sub.margins) if abs(m) < config.interior_margin]
    if close:
        raise NotInterior(f"edges {close} sit on their confidence threshold")

    potential = EdgePotential.bounded_confidence(D, sheaf.n_edges)
    fixed = bc_equilibrium_check(sheaf, D, x_star).equilibrium
    proj = projector(sub.sections(sheaf))
    cfg = cfg or FlowConfig()
    rng = np.random.default_rng(seed)
    errors, converged = [], []
    for _ in range(n):
        direction = rng.standard_normal(x_star.size)
        norm = np.linalg.norm(direction)
        x0 = x_star + (epsilon / norm) * direction if norm > 0 else x_star.copy()
        traj = nl_diffuse(sheaf, potential, x0, cfg)
        errors.append(float(np.max(np.abs(traj.limit - proj @ x0), initial=0.0)))
        converged.append(traj.converged)
    report = BCProbeReport(fixed, sub.edges, epsilon, tuple(errors), tuple(converged), atol)
    log(f"[NONLINEAR] bc probe over G_x edges {list(sub.edges)}: max error {report.max_error:.3e}")
    return report


# === Signed (antagonistic) ===

@dataclass(frozen=True, eq=False)
class SignedLaplacian:
    matrix: np.ndarray
    spectrum: SpectrumSummary
    not_psd: bool
    negative_edges: Tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            'negative_edges': list(self.negative_edges),
            'spectrum': self.spectrum.to_dict(),
            'not_psd': self.not_psd,
        }


def signed_laplacian(sheaf: Sheaf, E_minus: Iterable[int], tol: Optional[float] = None) -> SignedLaplacian:
    """L^S = delta^T S delta with S = -I on the blocks of E_minus and +I elsewhere"""
    tol = config.rank_tol if tol is None else float(tol)
    potential = EdgePotential.signed(sheaf.n_edges, E_minus)
    m = signed_matrix(sheaf, potential)
    summary = spectrum_summary(m, tol)
    not_psd = summary.lambda_min < -tol * max(1.0, summary.lambda_max)
    return SignedLaplacian(m, summary, bool(not_psd), potential.negative_edges)


@dataclass(frozen=True, eq=False)
class CutsetReport:
    """
    Negative-cutset test: a local section on one side of E_minus that does not
    extend by zero gives x with x^T L^S x < 0.
    """
    components: Tuple[Tuple[int, ...], ...]
    witness_found: bool
    witness: Optional[np.ndarray]
    witness_value: Optional[float]
    component: Optional[int]
    lambda_min: float
    lambda_max: float
    not_psd: bool

    @property
    def consistent(self) -> bool:
        """A witness forces lambda_min < 0"""
        return (not self.witness_found) or self.not_psd

    def to_dict(self) -> dict:
        return {
            'components': [list(c) for c in self.components],
            'witness_found': self.witness_found,
            'witness': [float(v) for v in self.witness] if self.witness is not None else None,
            'witness_value': self.witness_value,
            'component': self.component,
            'lambda_min': self.lambda_min,
            'lambda_max': self.lambda_max,
            'not_psd': self.not_psd,
            'consistent': self.consistent,
        }


def cutset_indefiniteness(sheaf: Sheaf, E_minus: Iterable[int], tol: Optional[float] = None) -> CutsetReport:
    """
    Raises:
        NotACutset: removing E_minus leaves the component count unchanged
    """
    tol = config.rank_tol if tol is None else float(tol)
    negative = set(int(e) for e in E_minus)
    signed = signed_laplacian(sheaf, negative, tol)
    positive = [e for e in range(sheaf.n_edges) if e not in negative]
    before = nx.number_connected_components(sheaf.graph.to_networkx())
    parts = [tuple(sorted(c)) for c in nx.connected_components(sheaf.graph.to_networkx(positive))]
    parts.sort()
    if len(parts) <= before:
        raise NotACutset(f"removing edges {sorted(negative)} does not disconnect the graph")

    best = None
    scale = max(1.0, abs(signed.spectrum.lambda_max), abs(signed.spectrum.lambda_min))
    for i, part in enumerate(parts):
        basis = local_sections(sheaf, part, tol=tol).vectors
        if basis.shape[1] == 0:
            continue
        # x^T L^S x over zero-extended local sections; only the boundary (negative) edges contribute
        values, vectors = symmetric_eigh(basis.T @ signed.matrix @ basis)
        if values[0] < -tol * scale and (best is None or values[0] < best[0]):
            best = (float(values[0]), basis @ vectors[:, 0], i)

    witness = None
    if best is not None:
        witness = best[1]
        pivot = int(np.argmax(np.abs(witness)))
        if witness[pivot] < 0:
            witness = -witness
    return CutsetReport(
        components=tuple(parts),
        witness_found=best is not None,
        witness=witness,
        witness_value=float(witness @ signed.matrix @ witness) if witness is not None else None,
        component=best[2] if best is not None else None,
        lambda_min=signed.spectrum.lambda_min,
        lambda_max=signed.spectrum.lambda_max,
        not_psd=signed.not_psd,
    )
