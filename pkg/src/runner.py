# -*- coding: utf-8 -*-
"""
runner.py - Experiment orchestration and result files
Dispatches a Scenario to the numerical modules and writes trajectory.csv,
summary.json and (for learn/joint) sheaf_final.json into the output directory.
"""

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .config import config
from .control import detectable, stabilizable
from .dynamics import (diffuse, diffusion_limit, harmonic_extension_unique, reluctant_diffuse,
                       reluctant_limit, stubborn_diffuse, stubborn_limit)
from .errors import NotACutset, NotInterior, RunIoError, SheafError
from .expression import (EdgeLayout, expression_diffuse, expression_limit, find_certifying_scale,
                         joint_diffuse, nontrivial_limit_certificate, sheaf_distance)
from .nonlinear import (EdgePotential, bc_equilibrium_check, bc_local_stability_probe,
                        cutset_indefiniteness, effective_subgraph, nl_diffuse, signed_laplacian)
from .scenario import ExperimentKind, Scenario, load_scenario, sheaf_to_dict
from .sheaf import augment_reluctance, coboundary
from .spectral import (h0, numerical_rank, relative_embedding_check, relative_h0, sheaf_laplacian,
                       spectrum_summary)

TRAJECTORY_FILE = "trajectory.csv"
SUMMARY_FILE = "summary.json"
SHEAF_FILE = "sheaf_final.json"


def _noop(_: str):
    pass


def _jsonable(value):
    """numpy values to plain JSON types; non-finite floats become null"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


@dataclass
class Series:
    """Sampled columns destined for trajectory.csv"""
    times: np.ndarray
    columns: List[str]
    values: np.ndarray  # samples x columns
    monitors: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class RunSummary:
    scenario: str
    experiment: dict
    h0_dim: int
    tolerances: Dict[str, Any]
    results: Dict[str, Any] = field(default_factory=dict)
    converged: Optional[bool] = None
    diverged: bool = False
    seed: int = 0
    wall_time: float = 0.0
    files: List[str] = field(default_factory=list)

    @property
    def non_converged(self) -> bool:
        """A flow stopped at t_max without settling (divergence is reported, not counted)"""
        return self.converged is False and not self.diverged

    def to_dict(self) -> dict:
        return _jsonable({
            'scenario': self.scenario,
            'experiment': self.experiment,
            'seed': self.seed,
            'h0_dim': self.h0_dim,
            'tolerances': self.tolerances,
            'results': self.results,
            'converged': self.converged,
            'diverged': self.diverged,
            'files': self.files,
            'wall_time': self.wall_time,
        })


# === Writers ===

def write_csv(path: Path, series: Series):
    fmt = config.csv_float_format
    names = list(series.monitors)
    try:
        with open(path, 'w', newline='', encoding='utf-8') as f:
            w = csv.writer(f)
            w.writerow(['t'] + series.columns + names)
            for k, t in enumerate(series.times):
                row = [fmt % t] + [fmt % v for v in series.values[k]]
                row += [fmt % series.monitors[name][k] for name in names]
                w.writerow(row)
    except OSError as e:
        raise RunIoError(f"cannot write {path}: {e}") from e


def write_json(path: Path, data: dict):
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(_jsonable(data), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise RunIoError(f"cannot write {path}: {e}") from e


def _x_columns(n: int) -> List[str]:
    return [f"x{i}" for i in range(n)]


def _block_columns(layout: EdgeLayout) -> List[str]:
    cols = []
    for e, (rows, width) in enumerate(layout.shapes):
        cols += [f"d{e}_{r}_{c}" for r in range(rows) for c in range(width)]
    return cols


def _flow_results(traj) -> dict:
    return {
        'limit': traj.limit,
        'residual': traj.residual,
        'steps': traj.steps,
        'integrator': traj.integrator,
        'step': traj.step,
        'final_time': traj.final_time,
        'convergence_tol': traj.tol,
        'samples': traj.n_samples,
        'monitors': traj.observable_extrema(),
    }


def _max_abs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0))


# === Experiments ===

class _Run:
    """Working state of one scenario run"""

    def __init__(self, scenario: Scenario, log: Callable[[str], None]):
        self.scenario = scenario
        self.sheaf = scenario.sheaf
        self.exp = scenario.experiment
        self.x0 = scenario.x0
        self.log = log
        self.results: Dict[str, Any] = {}
        self.series: Optional[Series] = None
        self.final_sheaf = None
        self.converged: Optional[bool] = None
        self.diverged = False

    def _track(self, traj):
        self.converged = traj.converged
        self.diverged = traj.diverged
        self.series = Series(traj.times, _x_columns(self.sheaf.c0_dim), traj.states, traj.observables)

    def cohomology(self):
        sheaf = self.sheaf
        basis = h0(sheaf, on_log=self.log)
        delta = coboundary(sheaf)
        self.results.update({
            'h0_basis': basis.vectors.T,
            'rank_delta': numerical_rank(delta.dense()),
            'c0_dim': sheaf.c0_dim,
            'c1_dim': sheaf.c1_dim,
            'laplacian': sheaf_laplacian(sheaf).matrix,
            'spectrum': spectrum_summary(sheaf_laplacian(sheaf).matrix).to_dict(),
        })
        if self.exp.relative is not None:
            rel = relative_h0(sheaf, self.exp.relative)
            self.results['relative'] = {
                'vertices': list(self.exp.relative),
                'dim': rel.dim,
                'basis': rel.vectors.T,
                'embeds_as_global_sections': relative_embedding_check(sheaf, rel),
            }

    def diffuse(self):
        traj = diffuse(self.sheaf, self.x0, self.exp.flow, self.log)
        self._track(traj)
        target = diffusion_limit(self.sheaf, self.x0)
        self.results.update(_flow_results(traj))
        self.results.update({'projected_limit': target, 'limit_error': _max_abs(traj.limit, target)})

    def stubborn(self):
        U = self.exp.U
        traj = stubborn_diffuse(self.sheaf, U, self.x0, self.exp.flow, self.log)
        self._track(traj)
        target = stubborn_limit(self.sheaf, U, self.x0)
        self.results.update(_flow_results(traj))
        self.results.update({
            'harmonic_extension': target,
            'limit_error': _max_abs(traj.limit, target),
            'relative_h0_dim': relative_h0(self.sheaf, U).dim,
            'unique_extension': harmonic_extension_unique(self.sheaf, U),
        })

    def reluctant(self):
        gamma = self.exp.gamma
        traj = reluctant_diffuse(self.sheaf, gamma, self.x0, self.exp.flow, self.log)
        self._track(traj)
        target = reluctant_limit(self.sheaf, gamma, self.x0)
        aug = augment_reluctance(self.sheaf, gamma)
        via_parents = stubborn_diffuse(aug.sheaf, aug.parent_of, aug.lift(self.x0), self.exp.flow)
        self.results.update(_flow_results(traj))
        self.results.update({
            'solved_limit': target,
            'limit_error': _max_abs(traj.limit, target),
            'augmented_limit': via_parents.limit[:self.sheaf.c0_dim],
            'augmented_error': _max_abs(traj.limit, via_parents.limit[:self.sheaf.c0_dim]),
        })

    def control(self):
        alpha = self.exp.flow.alpha
        if self.exp.U is not None:
            self.results['stabilizable'] = stabilizable(self.sheaf, self.exp.U, alpha, on_log=self.log).to_dict()
        if self.exp.Y is not None:
            self.results['detectable'] = detectable(self.sheaf, self.exp.Y, alpha, on_log=self.log).to_dict()

    def learn(self):
        beta = self.exp.beta
        st = expression_diffuse(self.sheaf, self.x0, beta, self.exp.flow, self.log)
        closed = expression_limit(self.sheaf, self.x0)
        self.converged = st.converged
        self.final_sheaf = st.limit_sheaf
        self.series = Series(st.times, _block_columns(st.layout), st.sheaf_states, st.monitors)
        self.results.update({
            'residual': st.residual,
            'steps': st.steps,
            'integrator': st.integrator,
            'final_time': st.final_time,
            'convergence_tol': st.tol,
            'samples': st.n_samples,
            'monitors': st.observable_extrema(),
            'distance_moved': sheaf_distance(self.sheaf, st.limit_sheaf),
            'closed_form_distance': sheaf_distance(self.sheaf, closed),
            'closed_form_error': math.sqrt(sheaf_distance(st.limit_sheaf, closed)),
        })

    def joint(self):
        alpha, beta = self.exp.flow.alpha, self.exp.beta
        cert = nontrivial_limit_certificate(self.sheaf, self.x0, alpha, beta)
        st = joint_diffuse(self.sheaf, self.x0, alpha, beta, self.exp.flow, self.log)
        self.converged = st.converged
        self.diverged = st.diverged
        self.final_sheaf = st.limit_sheaf
        values = np.hstack([st.cochain_states, st.sheaf_states])
        self.series = Series(st.times, _x_columns(self.sheaf.c0_dim) + _block_columns(st.layout),
                             values, st.monitors)
        limit_residual = float(np.linalg.norm(coboundary(st.limit_sheaf).dense() @ st.limit_x))
        self.results.update({
            'limit_x': st.limit_x,
            'limit_norm': float(np.linalg.norm(st.limit_x)),
            'limit_disagreement': limit_residual,
            'residual': st.residual,
            'steps': st.steps,
            'integrator': st.integrator,
            'final_time': st.final_time,
            'convergence_tol': st.tol,
            'samples': st.n_samples,
            'monitors': st.observable_extrema(),
            'diag_m_drift': st.diag_m_drift(),
            'certificate': cert.to_dict(),
            'certifying_scale': None if cert.certified else find_certifying_scale(self.sheaf, self.x0, alpha, beta),
        })
        if cert.certified and np.linalg.norm(st.limit_x) <= 1e-6:
            self.log("[RUNNER] certified run ended at x = 0")

    def bc(self):
        D = self.exp.D
        potential = EdgePotential.bounded_confidence(D, self.sheaf.n_edges)
        traj = nl_diffuse(self.sheaf, potential, self.x0, self.exp.flow, self.log)
        self._track(traj)
        self.results.update(_flow_results(traj))
        self.results['equilibrium'] = bc_equilibrium_check(self.sheaf, D, traj.limit).to_dict()
        self.results['effective_subgraph'] = effective_subgraph(self.sheaf, D, traj.limit).to_dict()
        if self.exp.probe is not None:
            probe = self.exp.probe
            try:
                report = bc_local_stability_probe(
                    self.sheaf, D, probe['x_star'], probe.get('epsilon', 1e-3), self.exp.flow,
                    n=probe.get('n', 10), seed=self.scenario.seed, on_log=self.log)
                self.results['probe'] = report.to_dict()
            except NotInterior as e:
                self.results['probe'] = {'applicable': False, 'reason': str(e)}

    def signed(self):
        E_minus = self.exp.E_minus
        sl = signed_laplacian(self.sheaf, E_minus)
        self.results['signed_laplacian'] = sl.to_dict()
        self.results['matrix'] = sl.matrix
        try:
            self.results['cutset'] = cutset_indefiniteness(self.sheaf, E_minus).to_dict()
        except NotACutset as e:
            self.results['cutset'] = {'applicable': False, 'reason': str(e)}
        if self.x0 is not None:
            potential = EdgePotential.signed(self.sheaf.n_edges, E_minus)
            traj = nl_diffuse(self.sheaf, potential, self.x0, self.exp.flow, self.log)
            self._track(traj)
            self.results.update(_flow_results(traj))
            self.results['diverged'] = traj.diverged


def run(scenario: Scenario, out_dir, on_log: Optional[Callable[[str], None]] = None) -> RunSummary:
    """
    Run one scenario and write its result files into out_dir.

    Raises:
        RunIoError: out_dir or a result file cannot be written
        SheafError: numerical module errors (strict flows, solver failures)
    """
    log = on_log or _noop
    start = time.perf_counter()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise RunIoError(f"cannot create {out}: {e}") from e

    kind = scenario.experiment.kind
    log(f"[RUNNER] {scenario.name}: {kind.value}")
    state = _Run(scenario, log)
    getattr(state, kind.value)()

    files = []
    if state.series is not None:
        write_csv(out / TRAJECTORY_FILE, state.series)
        files.append(TRAJECTORY_FILE)
    if state.final_sheaf is not None:
        write_json(out / SHEAF_FILE, sheaf_to_dict(state.final_sheaf))
        files.append(SHEAF_FILE)
    files.append(SUMMARY_FILE)

    flow = scenario.experiment.flow
    summary = RunSummary(
        scenario=scenario.name,
        experiment=scenario.experiment.to_dict(),
        h0_dim=h0(scenario.sheaf).dim,
        tolerances={
            'rank_tol': config.rank_tol,
            'convergence_tol': state.results.get('convergence_tol', flow.convergence_tol),
            'adaptive_rtol': config.adaptive_rtol,
            'adaptive_atol': config.adaptive_atol,
        },
        results=state.results,
        converged=state.converged,
        diverged=state.diverged,
        seed=scenario.seed,
        files=files,
    )
    summary.wall_time = time.perf_counter() - start
    write_json(out / SUMMARY_FILE, summary.to_dict())
    log(f"[RUNNER] wrote {', '.join(files)} to {out}")
    if summary.non_converged:
        log(f"[RUNNER] {scenario.name} did not converge")
    return summary


@dataclass
class BatchResult:
    path: Path
    summary: Optional[RunSummary] = None
    error: Optional[SheafError] = None


def run_batch(directory, out_dir, on_log: Optional[Callable[[str], None]] = None,
              seed: Optional[int] = None) -> List[BatchResult]:
    """Run every *.json scenario in directory in parallel, each into out_dir/<stem>/"""
    log = on_log or _noop
    paths: Sequence[Path] = sorted(Path(directory).glob("*.json"))
    log(f"[RUNNER] batch of {len(paths)} scenarios, {config.max_concurrent_runs} at a time")

    def one(path: Path) -> BatchResult:
        try:
            scenario = load_scenario(path)
            if seed is not None:
                scenario.seed = seed
            return BatchResult(path, summary=run(scenario, Path(out_dir) / path.stem, log))
        except SheafError as e:
            log(f"[RUNNER] {path.name}: {e}")
            return BatchResult(path, error=e)

    with ThreadPoolExecutor(max_workers=max(1, config.max_concurrent_runs)) as pool:
        return list(pool.map(one, paths))
