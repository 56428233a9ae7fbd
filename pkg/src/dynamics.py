# -*- coding: utf-8 -*-
"""
dynamics.py - Linear sheaf diffusion
Heat flow, stubborn agents (harmonic extension) and reluctant agents.
"""

from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import LengthMismatch, NegativeGamma
from .flow import AffineFlow, FlowConfig, Trajectory, integrate
from .sheaf import Sheaf, apply_coboundary, as_cochain0, coboundary
from .spectral import h0, kernel_basis, pinv_solve, projector, relative_h0, sheaf_laplacian


def disagreement(sheaf: Sheaf, x) -> float:
    """Total edgewise disagreement |delta x|^2"""
    y = apply_coboundary(coboundary(sheaf), as_cochain0(sheaf, x))
    return float(y @ y)


def _observables(sheaf: Sheaf) -> dict:
    d = coboundary(sheaf).matrix

    def energy(x: np.ndarray) -> float:
        y = np.asarray(d @ x).reshape(-1)
        return float(y @ y)

    return {
        'disagreement': energy,
        'norm2_x': lambda x: float(x @ x),
    }


def _split(sheaf: Sheaf, pinned: Iterable[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Cochain coordinates of the pinned vertices and of the rest"""
    pinned = set(int(v) for v in pinned)
    for v in pinned:
        if not 0 <= v < sheaf.n_vertices:
            raise LengthMismatch(f"vertex {v} out of range [0, {sheaf.n_vertices})")
    free = [v for v in range(sheaf.n_vertices) if v not in pinned]
    return sheaf.vertex_indices(sorted(pinned)), sheaf.vertex_indices(free)


def diffuse(sheaf: Sheaf, x0, cfg: Optional[FlowConfig] = None,
            on_log: Optional[Callable[[str], None]] = None) -> Trajectory:
    """Integrate dx/dt = -alpha L x; the limit is the projection of x0 onto H0"""
    cfg = cfg or FlowConfig()
    x0 = as_cochain0(sheaf, x0)
    n = sheaf.c0_dim
    flow = AffineFlow(
        matrix=sheaf_laplacian(sheaf).matrix,
        forcing=np.zeros(n),
        free=np.arange(n),
        alpha=cfg.alpha,
        size=n,
    )
    return integrate(flow.field, x0, cfg, linear=flow, observables=_observables(sheaf),
                     tag="DIFFUSE", on_log=on_log)


def diffusion_limit(sheaf: Sheaf, x0, tol: Optional[float] = None) -> np.ndarray:
    """Orthogonal projection of x0 onto H0, without integrating"""
    x0 = as_cochain0(sheaf, x0)
    return projector(h0(sheaf, tol)) @ x0


def harmonic_extend(sheaf: Sheaf, U: Iterable[int], u, y0=None,
                    tol: Optional[float] = None) -> np.ndarray:
    """
    Extend boundary values u on U to a 0-cochain harmonic off U.

    Args:
        U: pinned vertices
        u: values on U, either stacked in ascending vertex order or as a full
           0-cochain whose U-coordinates are used
        y0: optional values off U (same two layouts); its component in
            ker L[Y,Y] is added to the minimum-norm extension

    Returns:
        x with x|_U = u and (L x)_v = 0 for every v outside U
    """
    pin, free = _split(sheaf, U)
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.shape[0] == sheaf.c0_dim:
        u = u[pin]
    elif u.shape[0] != pin.size:
        raise LengthMismatch(f"boundary values have length {u.shape[0]}, expected {pin.size}")

    x = np.zeros(sheaf.c0_dim)
    x[pin] = u
    if free.size == 0:
        return x

    lap = sheaf_laplacian(sheaf).matrix
    l_yy = lap[np.ix_(free, free)]
    l_yu = lap[np.ix_(free, pin)]
    y = -pinv_solve(l_yy, l_yu @ u, tol)
    if y0 is not None:
        y0 = np.asarray(y0, dtype=np.float64).reshape(-1)
        if y0.shape[0] == sheaf.c0_dim:
            y0 = y0[free]
        elif y0.shape[0] != free.size:
            raise LengthMismatch(f"interior values have length {y0.shape[0]}, expected {free.size}")
        kernel = kernel_basis(l_yy, tol).vectors
        y = y + kernel @ (kernel.T @ y0)
    x[free] = y
    return x


def harmonic_extension_unique(sheaf: Sheaf, U: Iterable[int], tol: Optional[float] = None) -> bool:
    """Extensions from U are unique exactly when H0(G, U) vanishes"""
    return relative_h0(sheaf, U, tol).dim == 0


def stubborn_diffuse(sheaf: Sheaf, U: Iterable[int], x0, cfg: Optional[FlowConfig] = None,
                     on_log: Optional[Callable[[str], None]] = None) -> Trajectory:
    """
    Heat flow with the vertices in U held fixed at their x0 values.

    The state stays in the full C0; rows of L belonging to U are masked, so
    pinned coordinates are never written.
    """
    cfg = cfg or FlowConfig()
    x0 = as_cochain0(sheaf, x0)
    pin, free = _split(sheaf, U)
    lap = sheaf_laplacian(sheaf).matrix
    flow = AffineFlow(
        matrix=lap[np.ix_(free, free)],
        forcing=lap[np.ix_(free, pin)] @ x0[pin],
        free=free,
        alpha=cfg.alpha,
        size=sheaf.c0_dim,
    )
    return integrate(flow.field, x0, cfg, linear=flow, observables=_observables(sheaf),
                     tag="STUBBORN", on_log=on_log)


def stubborn_limit(sheaf: Sheaf, U: Iterable[int], x0, tol: Optional[float] = None) -> np.ndarray:
    """Harmonic extension of x0|_U nearest to x0"""
    x0 = as_cochain0(sheaf, x0)
    return harmonic_extend(sheaf, U, x0, y0=x0, tol=tol)


def _gamma_diagonal(sheaf: Sheaf, gamma: Sequence[float]) -> np.ndarray:
    """Diagonal of Gamma = blockdiag(gamma_v I)"""
    gamma = np.asarray(gamma, dtype=np.float64).reshape(-1)
    if gamma.shape[0] != sheaf.n_vertices:
        raise LengthMismatch(f"{gamma.shape[0]} reluctance values for {sheaf.n_vertices} vertices")
    if not np.all(np.isfinite(gamma)) or np.any(gamma < 0):
        raise NegativeGamma("reluctance values must be finite and >= 0")
    return np.repeat(gamma, sheaf.vertex_dims)


def reluctant_diffuse(sheaf: Sheaf, gamma: Sequence[float], x0, cfg: Optional[FlowConfig] = None,
                      on_log: Optional[Callable[[str], None]] = None) -> Trajectory:
    """dx_v/dt = -alpha (L x)_v + alpha gamma_v ((x0)_v - x_v)"""
    cfg = cfg or FlowConfig()
    x0 = as_cochain0(sheaf, x0)
    g = _gamma_diagonal(sheaf, gamma)
    n = sheaf.c0_dim
    flow = AffineFlow(
        matrix=sheaf_laplacian(sheaf).matrix + np.diag(g),
        forcing=-g * x0,
        free=np.arange(n),
        alpha=cfg.alpha,
        size=n,
    )
    return integrate(flow.field, x0, cfg, linear=flow, observables=_observables(sheaf),
                     tag="RELUCTANT", on_log=on_log)


def reluctant_limit(sheaf: Sheaf, gamma: Sequence[float], x0, tol: Optional[float] = None) -> np.ndarray:
    """
    Solve (L + Gamma) x = Gamma x0.

    Where L + Gamma is singular (components without reluctance) the
    pseudoinverse solution is completed by the kernel component of x0.
    """
    x0 = as_cochain0(sheaf, x0)
    g = _gamma_diagonal(sheaf, gamma)
    system = sheaf_laplacian(sheaf).matrix + np.diag(g)
    kernel = kernel_basis(system, tol).vectors
    return pinv_solve(system, g * x0, tol) + kernel @ (kernel.T @ x0)
