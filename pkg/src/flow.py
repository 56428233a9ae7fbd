# -*- coding: utf-8 -*-
"""
flow.py - Time integration plumbing shared by every flow
FlowConfig, Trajectory, the affine (exact-eigen capable) flow and the stepped
and adaptive integrators with convergence and divergence monitoring.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .config import config
from .errors import InvalidFlowConfig, NonConvergence, StepTooLarge
from .spectral import symmetric_eigh

Field = Callable[[np.ndarray], np.ndarray]
Observable = Callable[[np.ndarray], float]


def _noop(_: str):
    pass


class Integrator(Enum):
    """Integrator selection"""
    AUTO = "auto"
    EXACT_EIGEN = "exact-eigen"
    RK4 = "rk4"
    EULER = "euler"
    ADAPTIVE = "adaptive"


@dataclass
class FlowConfig:
    """
    Flow parameters.

    Attributes:
        alpha: diffusion strength (> 0)
        integrator: Integrator or its string value
        step: step h for stepped integrators / sample spacing for exact-eigen;
              None picks one automatically
        t_max: integration horizon
        convergence_tol: threshold on |dx/dt|_inf; None means 1e-9 * (1 + |x0|_inf)
        record_every: sampling stride in steps
        strict: raise NonConvergence / StepTooLarge instead of flagging
    """
    alpha: float = 1.0
    integrator: Integrator = Integrator.AUTO
    step: Optional[float] = None
    t_max: float = field(default_factory=lambda: config.default_t_max)
    convergence_tol: Optional[float] = None
    record_every: int = field(default_factory=lambda: config.default_record_every)
    strict: bool = False

    def __post_init__(self):
        if not isinstance(self.integrator, Integrator):
            try:
                self.integrator = Integrator(self.integrator)
            except ValueError:
                raise InvalidFlowConfig(f"unknown integrator {self.integrator!r}") from None
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InvalidFlowConfig(f"alpha must be > 0, got {self.alpha}")
        if self.step is not None and not (self.step > 0 and math.isfinite(self.step)):
            raise InvalidFlowConfig(f"step must be > 0, got {self.step}")
        if not (self.t_max > 0):
            raise InvalidFlowConfig(f"t_max must be > 0, got {self.t_max}")
        if self.convergence_tol is not None and not (self.convergence_tol > 0):
            raise InvalidFlowConfig(f"convergence_tol must be > 0, got {self.convergence_tol}")
        if int(self.record_every) < 1:
            raise InvalidFlowConfig(f"record_every must be >= 1, got {self.record_every}")
        self.record_every = int(self.record_every)

    def tol_for(self, x0: np.ndarray) -> float:
        if self.convergence_tol is not None:
            return float(self.convergence_tol)
        scale = float(np.max(np.abs(x0))) if x0.size else 0.0
        return 1e-9 * (1.0 + scale)

    def to_dict(self) -> dict:
        return {
            'alpha': self.alpha,
            'integrator': self.integrator.value,
            'step': self.step,
            't_max': self.t_max,
            'convergence_tol': self.convergence_tol,
            'record_every': self.record_every,
            'strict': self.strict,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'FlowConfig':
        known = {'alpha', 'integrator', 'step', 't_max', 'convergence_tol', 'record_every', 'strict'}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class Trajectory:
    """Sampled flow: states[k] at times[k], monitored observables, final state"""
    times: np.ndarray
    states: np.ndarray
    observables: Dict[str, np.ndarray]
    converged: bool
    limit: np.ndarray
    residual: float
    steps: int
    integrator: str
    step: Optional[float]
    tol: float
    final_time: float
    diverged: bool = False

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def observable_extrema(self) -> Dict[str, dict]:
        out = {}
        for name, series in self.observables.items():
            finite = series[np.isfinite(series)]
            if finite.size == 0:
                continue
            out[name] = {
                'first': float(finite[0]),
                'last': float(finite[-1]),
                'min': float(finite.min()),
                'max': float(finite.max()),
            }
        return out


def estimate_rate(matvec: Callable[[np.ndarray], np.ndarray], n: int,
                  iterations: Optional[int] = None) -> float:
    """Power-iteration estimate of the largest |eigenvalue| of a symmetric operator"""
    if n == 0:
        return 0.0
    iterations = config.power_iterations if iterations is None else iterations
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = matvec(v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return estimate
        estimate = norm
        v = w / norm
    return estimate


@dataclass(frozen=True, eq=False)
class AffineFlow:
    """
    dx/dt = -alpha (M x_free + b) on the free coordinates; the remaining
    coordinates are pinned and never touched.

    M is symmetric, so x(t) has a closed form through its eigendecomposition.
    """
    matrix: np.ndarray
    forcing: np.ndarray
    free: np.ndarray
    alpha: float
    size: int

    def field(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.free] = -self.alpha * (self.matrix @ x[self.free] + self.forcing)
        return out

    def rate(self) -> float:
        """alpha * |lambda|_max, estimated by power iteration"""
        return self.alpha * estimate_rate(lambda v: self.matrix @ v, self.free.size)

    def solution(self, x0: np.ndarray) -> Callable[[float], np.ndarray]:
        """Closed-form x(t) for the given start"""
        values, vectors = symmetric_eigh(self.matrix)
        c0 = vectors.T @ x0[self.free]
        g = vectors.T @ self.forcing
        cutoff = config.rank_tol * max(float(np.max(np.abs(values))) if values.size else 0.0, 1.0)
        nonzero = np.abs(values) > cutoff
        shift = np.where(nonzero, g / np.where(nonzero, values, 1.0), 0.0)
        alpha = self.alpha

        def at(t: float) -> np.ndarray:
            with np.errstate(over='ignore', invalid='ignore'):
                decay = np.exp(-alpha * values * t)
                c = np.where(nonzero, decay * (c0 + shift) - shift, c0 - alpha * g * t)
            x = x0.copy()
            x[self.free] = vectors @ c
            return x

        return at


def _rk4(fn: Field, x: np.ndarray, f: np.ndarray, h: float) -> np.ndarray:
    k2 = fn(x + 0.5 * h * f)
    k3 = fn(x + 0.5 * h * k2)
    k4 = fn(x + h * k3)
    return x + (h / 6.0) * (f + 2.0 * k2 + 2.0 * k3 + k4)


def _euler(fn: Field, x: np.ndarray, f: np.ndarray, h: float) -> np.ndarray:
    return x + h * f


def _finish(traj: Trajectory, integrator: Integrator, cfg: FlowConfig, tag: str,
            log: Callable[[str], None]) -> Trajectory:
    if traj.diverged:
        log(f"[{tag}] diverged at t={traj.final_time:.6g} after {traj.steps} steps")
        if cfg.strict and integrator == Integrator.EULER:
            raise StepTooLarge(f"euler step {cfg.step} diverged", traj)
    elif traj.converged:
        log(f"[{tag}] converged at t={traj.final_time:.6g} ({traj.steps} steps, residual {traj.residual:.3e})")
    else:
        log(f"[{tag}] not converged by t={traj.final_time:.6g}: residual {traj.residual:.3e} > {traj.tol:.3e}")
        if cfg.strict:
            raise NonConvergence(f"residual {traj.residual:.3e} above {traj.tol:.3e} at t_max", traj)
    return traj


def integrate(
    fn: Field,
    x0: np.ndarray,
    cfg: FlowConfig,
    *,
    linear: Optional[AffineFlow] = None,
    rate: Optional[Callable[[np.ndarray], float]] = None,
    refresh_every: Optional[int] = None,
    auto: Optional[Integrator] = None,
    observables: Optional[Dict[str, Observable]] = None,
    divergence_check: bool = True,
    tag: str = "FLOW",
    on_log: Optional[Callable[[str], None]] = None,
) -> Trajectory:
    """
    Integrate dx/dt = fn(x) from x0.

    Args:
        fn: vector field on the full state
        x0: initial state
        cfg: flow configuration
        linear: affine description of fn, enabling the exact-eigen integrator
        rate: estimate of the field's largest Jacobian eigenvalue magnitude at a
              state, used for automatic step sizes (power iteration otherwise)
        refresh_every: re-derive the automatic step every this many steps
        auto: what Integrator.AUTO resolves to (exact-eigen for small linear
              flows, rk4 otherwise, when not given)
        observables: scalar monitors evaluated at each recorded sample
        divergence_check: flag and truncate when |x| > divergence_factor * (1 + |x0|)

    Returns:
        Trajectory; non-convergence and divergence are flags unless cfg.strict
    """
    log = on_log or _noop
    observables = observables or {}
    x0 = np.array(x0, dtype=np.float64).reshape(-1)
    tol = cfg.tol_for(x0)

    integrator = cfg.integrator
    if integrator == Integrator.AUTO:
        if auto is not None:
            integrator = auto
        elif linear is not None and x0.size <= config.exact_eigen_limit:
            integrator = Integrator.EXACT_EIGEN
        else:
            integrator = Integrator.RK4
    if integrator == Integrator.EXACT_EIGEN and linear is None:
        raise InvalidFlowConfig("exact-eigen integration needs a linear flow")

    bound = config.divergence_factor * (1.0 + float(np.linalg.norm(x0))) if divergence_check else math.inf

    if integrator == Integrator.ADAPTIVE:
        log(f"[{tag}] adaptive DOP853 integration, tol {tol:.3e}")
        return _finish(_integrate_adaptive(fn, x0, cfg, tol, bound, observables), integrator, cfg, tag, log)

    def estimated_rate(x: np.ndarray) -> float:
        if rate is not None:
            return rate(x)
        if linear is not None:
            return linear.rate()
        # Jacobian-free estimate around x
        fx = fn(x)
        eps = 1e-6 * (1.0 + float(np.linalg.norm(x)))
        return estimate_rate(lambda v: (fn(x + eps * v) - fx) / eps, x.size)

    def auto_step(lam: float) -> float:
        return config.rk4_safety / lam if lam > 0 else cfg.t_max / config.exact_samples

    h = cfg.step
    exact = None
    advance = None
    refresh = None
    if integrator == Integrator.EXACT_EIGEN:
        if h is None:
            h = cfg.t_max / config.exact_samples
        exact = linear.solution(x0)
    else:
        lam = estimated_rate(x0)
        if h is None:
            h = auto_step(lam)
            refresh = refresh_every
        if integrator == Integrator.EULER and h * lam >= 2.0:
            log(f"[{tag}] euler step {h:.3e} exceeds the stability bound 2/{lam:.3e}")
        advance = _rk4 if integrator == Integrator.RK4 else _euler

    horizon = cfg.t_max - 1e-9 * h
    log(f"[{tag}] {integrator.value} integration, h={h:.6g}, t_max={cfg.t_max:.6g}, tol {tol:.3e}")

    times, states = [], []
    series: Dict[str, list] = {name: [] for name in observables}

    def record(t: float, x: np.ndarray):
        times.append(t)
        states.append(x.copy())
        for name, obs in observables.items():
            series[name].append(float(obs(x)))

    x = x0.copy()
    f = fn(x)
    residual = float(np.max(np.abs(f))) if f.size else 0.0
    record(0.0, x)
    t = 0.0
    steps = 0
    diverged = False
    while residual > tol and t < horizon:
        if steps >= config.max_steps:
            log(f"[{tag}] stopped at the step cap {config.max_steps}")
            break
        if refresh and steps and steps % refresh == 0:
            h = auto_step(estimated_rate(x))
        steps += 1
        if exact is not None:
            t = steps * h
            x = exact(t)
        else:
            x = advance(fn, x, f, h)
            t += h
        if not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > bound:
            diverged = True
            residual = math.inf
            if steps % cfg.record_every == 0:
                record(t, x)
            break
        f = fn(x)
        residual = float(np.max(np.abs(f))) if f.size else 0.0
        if steps % cfg.record_every == 0:
            record(t, x)

    traj = Trajectory(
        times=np.asarray(times),
        states=np.asarray(states).reshape(len(states), x0.size),
        observables={k: np.asarray(v) for k, v in series.items()},
        converged=(not diverged) and residual <= tol,
        limit=x,
        residual=residual,
        steps=steps,
        integrator=integrator.value,
        step=h,
        tol=tol,
        final_time=t,
        diverged=diverged,
    )
    return _finish(traj, integrator, cfg, tag, log)


def _integrate_adaptive(fn: Field, x0: np.ndarray, cfg: FlowConfig, tol: float, bound: float,
                        observables: Dict[str, Observable]) -> Trajectory:
    """scipy DOP853 with terminal events for convergence and blow-up"""

    def residual_of(y: np.ndarray) -> float:
        f = fn(y)
        return float(np.max(np.abs(f))) if f.size else 0.0

    # root at half tol; solve_ivp only locates it approximately
    def settled(t, y):
        return residual_of(y) - 0.5 * tol
    settled.terminal = True
    settled.direction = -1

    def blowup(t, y):
        return bound - float(np.linalg.norm(y))
    blowup.terminal = True
    blowup.direction = -1

    start = residual_of(x0)
    if start <= tol:
        ts, ys = np.array([0.0]), x0.reshape(-1, 1)
        status_diverged = False
        settled_hit = True
    else:
        sol = solve_ivp(lambda t, y: fn(y), (0.0, cfg.t_max), x0, method="DOP853",
                        rtol=config.adaptive_rtol, atol=config.adaptive_atol,
                        events=[settled, blowup] if math.isfinite(bound) else [settled])
        ts, ys = sol.t, sol.y
        status_diverged = len(sol.t_events) > 1 and len(sol.t_events[1]) > 0
        settled_hit = len(sol.t_events[0]) > 0

    idx = np.arange(0, len(ts), cfg.record_every)
    states = ys[:, idx].T
    limit = ys[:, -1].copy()
    residual = residual_of(limit)
    steps = len(ts) - 1
    return Trajectory(
        times=ts[idx],
        states=states,
        observables={name: np.array([obs(s) for s in states]) for name, obs in observables.items()},
        converged=(not status_diverged) and (settled_hit or residual <= tol),
        limit=limit,
        residual=residual,
        steps=steps,
        integrator=Integrator.ADAPTIVE.value,
        step=None,
        tol=tol,
        final_time=float(ts[-1]),
        diverged=status_diverged,
    )
