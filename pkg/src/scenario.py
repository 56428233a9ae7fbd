# -*- coding: utf-8 -*-
"""
scenario.py - Scenario files (JSON, "schema": 1)
Parsing with JSON-path error context, and the sheaf <-> dict schema shared by
scenario files and sheaf_final.json.

    {
      "schema": 1,
      "name": "...", "description": "...", "seed": 0,
      "sheaf": {"n_vertices": 2, "edges": [[0, 1]], "vertex_dims": [1, 1], "edge_dims": [1],
                "restrictions": [{"vertex": 0, "edge": 0, "shape": [1, 1], "data": [1.0]}, ...]},
      "opinions": {"x0": [-4, 1]},
      "experiment": {"kind": "diffuse", "flow": {"alpha": 1.0, "integrator": "auto", ...}, ...}
    }

A constant sheaf may be written {"constant": n, "n_vertices": ..., "edges": [...]}.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import (InvalidFlowConfig, RunIoError, SchemaError, ScenarioSyntaxError,
                     SheafError, ValidationError)
from .flow import FlowConfig
from .sheaf import Graph, Sheaf, build_sheaf, constant_sheaf

SCHEMA_VERSION = 1


class ExperimentKind(Enum):
    COHOMOLOGY = "cohomology"
    DIFFUSE = "diffuse"
    STUBBORN = "stubborn"
    RELUCTANT = "reluctant"
    CONTROL = "control"
    LEARN = "learn"
    JOINT = "joint"
    BC = "bc"
    SIGNED = "signed"


# Experiments that need an initial 0-cochain
NEEDS_X0 = {ExperimentKind.DIFFUSE, ExperimentKind.STUBBORN, ExperimentKind.RELUCTANT,
            ExperimentKind.LEARN, ExperimentKind.JOINT, ExperimentKind.BC}


@dataclass
class Experiment:
    """Experiment selection and parameters"""
    kind: ExperimentKind
    flow: FlowConfig = field(default_factory=FlowConfig)
    beta: Optional[float] = None
    gamma: Optional[Tuple[float, ...]] = None
    U: Optional[Tuple[int, ...]] = None
    Y: Optional[Tuple[int, ...]] = None
    D: Optional[Tuple[float, ...]] = None
    E_minus: Optional[Tuple[int, ...]] = None
    relative: Optional[Tuple[int, ...]] = None
    probe: Optional[Dict[str, Any]] = None

    def to_dict(self) -> dict:
        out: Dict[str, Any] = {'kind': self.kind.value, 'flow': self.flow.to_dict()}
        for name in ('beta', 'gamma', 'U', 'Y', 'D', 'E_minus', 'relative'):
            value = getattr(self, name)
            if value is not None:
                out[name] = list(value) if isinstance(value, tuple) else value
        if self.probe is not None:
            out['probe'] = {k: (list(v) if isinstance(v, np.ndarray) else v) for k, v in self.probe.items()}
        return out


@dataclass
class Scenario:
    name: str
    sheaf: Sheaf
    experiment: Experiment
    x0: Optional[np.ndarray] = None
    description: str = ""
    seed: int = 0
    source: Optional[Path] = None


# === Typed accessors ===

def _get(obj: dict, key: str, path: str, required: bool = True):
    if key not in obj:
        if required:
            raise SchemaError(f"missing key '{key}'", path)
        return None
    return obj[key]


def _object(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError("expected an object", path)
    return value


def _list(value, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError("expected an array", path)
    return value


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError("expected an integer", path)
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError("expected a number", path)
    if not np.isfinite(value):
        raise ValidationError("non-finite number", path)
    return float(value)


def _numbers(value, path: str) -> List[float]:
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(_list(value, path))]


def _vertices(value, path: str, n_vertices: int) -> Tuple[int, ...]:
    out = []
    for i, v in enumerate(_list(value, path)):
        v = _int(v, f"{path}[{i}]")
        if not 0 <= v < n_vertices:
            raise ValidationError(f"vertex {v} out of range [0, {n_vertices})", f"{path}[{i}]")
        out.append(v)
    return tuple(out)


# === Sheaf schema ===

def _parse_graph(obj: dict, path: str) -> Graph:
    n = _int(_get(obj, 'n_vertices', path), f"{path}.n_vertices")
    if n < 0:
        raise ValidationError("n_vertices must be >= 0", f"{path}.n_vertices")
    edges = []
    for i, pair in enumerate(_list(_get(obj, 'edges', path), f"{path}.edges")):
        p = f"{path}.edges[{i}]"
        pair = _list(pair, p)
        if len(pair) != 2:
            raise SchemaError("an edge is a pair of vertex indices", p)
        a, b = _int(pair[0], f"{p}[0]"), _int(pair[1], f"{p}[1]")
        for v in (a, b):
            if not 0 <= v < n:
                raise ValidationError(f"vertex {v} out of range [0, {n})", p)
        edges.append((a, b))
    try:
        return Graph(n, tuple(edges))
    except SheafError as e:
        raise ValidationError(str(e), f"{path}.edges") from e


def parse_sheaf(obj, path: str = "$.sheaf") -> Sheaf:
    obj = _object(obj, path)
    graph = _parse_graph(obj, path)
    if 'constant' in obj:
        dim = _int(obj['constant'], f"{path}.constant")
        if dim < 0:
            raise ValidationError("stalk dimension must be >= 0", f"{path}.constant")
        return constant_sheaf(graph, dim)

    vertex_dims = [_int(d, f"{path}.vertex_dims[{i}]")
                   for i, d in enumerate(_list(_get(obj, 'vertex_dims', path), f"{path}.vertex_dims"))]
    edge_dims = [_int(d, f"{path}.edge_dims[{i}]")
                 for i, d in enumerate(_list(_get(obj, 'edge_dims', path), f"{path}.edge_dims"))]
    if len(vertex_dims) != graph.n_vertices:
        raise ValidationError(f"{len(vertex_dims)} vertex dims for {graph.n_vertices} vertices",
                              f"{path}.vertex_dims")
    if len(edge_dims) != graph.n_edges:
        raise ValidationError(f"{len(edge_dims)} edge dims for {graph.n_edges} edges", f"{path}.edge_dims")

    restrictions = {}
    items = _list(_get(obj, 'restrictions', path, required=bool(graph.n_edges)) or [], f"{path}.restrictions")
    for i, item in enumerate(items):
        p = f"{path}.restrictions[{i}]"
        item = _object(item, p)
        v = _int(_get(item, 'vertex', p), f"{p}.vertex")
        e = _int(_get(item, 'edge', p), f"{p}.edge")
        if not 0 <= e < graph.n_edges:
            raise ValidationError(f"edge {e} out of range [0, {graph.n_edges})", f"{p}.edge")
        if v not in graph.edges[e]:
            raise ValidationError(f"vertex {v} is not an endpoint of edge {e} = {graph.edges[e]}", f"{p}.vertex")
        if (v, e) in restrictions:
            raise ValidationError(f"duplicate block for vertex {v} on edge {e}", p)
        shape = _list(_get(item, 'shape', p), f"{p}.shape")
        if len(shape) != 2:
            raise SchemaError("shape is [rows, cols]", f"{p}.shape")
        rows, cols = _int(shape[0], f"{p}.shape[0]"), _int(shape[1], f"{p}.shape[1]")
        data = _numbers(_get(item, 'data', p), f"{p}.data")
        if len(data) != rows * cols:
            raise SchemaError(f"{len(data)} entries for shape [{rows}, {cols}]", f"{p}.data")
        if (rows, cols) != (edge_dims[e], vertex_dims[v]):
            raise ValidationError(
                f"shape [{rows}, {cols}] does not match stalks [{edge_dims[e]}, {vertex_dims[v]}]", f"{p}.shape")
        restrictions[(v, e)] = np.asarray(data, dtype=np.float64).reshape(rows, cols)

    try:
        return build_sheaf(graph, vertex_dims, edge_dims, restrictions)
    except SheafError as e:
        raise ValidationError(str(e), f"{path}.restrictions") from e


def sheaf_to_dict(sheaf: Sheaf) -> dict:
    """Full (non-shortcut) sheaf schema; blocks row-major, tail before head per edge"""
    restrictions = []
    for e, (u, v) in enumerate(sheaf.graph.edges):
        for w in (u, v):
            block = sheaf.restrictions[(w, e)]
            restrictions.append({
                'vertex': w,
                'edge': e,
                'shape': [int(block.shape[0]), int(block.shape[1])],
                'data': [float(a) for a in block.reshape(-1)],
            })
    return {
        'n_vertices': sheaf.n_vertices,
        'edges': [[u, v] for u, v in sheaf.graph.edges],
        'vertex_dims': list(sheaf.vertex_dims),
        'edge_dims': list(sheaf.edge_dims),
        'restrictions': restrictions,
    }


# === Experiments ===

def _parse_flow(obj, path: str) -> FlowConfig:
    if obj is None:
        return FlowConfig()
    obj = _object(obj, path)
    kwargs: Dict[str, Any] = {}
    for key in ('alpha', 't_max', 'step', 'convergence_tol'):
        if obj.get(key) is not None:
            kwargs[key] = _number(obj[key], f"{path}.{key}")
    if 'record_every' in obj:
        kwargs['record_every'] = _int(obj['record_every'], f"{path}.record_every")
    if 'integrator' in obj:
        if not isinstance(obj['integrator'], str):
            raise SchemaError("expected a string", f"{path}.integrator")
        kwargs['integrator'] = obj['integrator']
    if 'strict' in obj:
        if not isinstance(obj['strict'], bool):
            raise SchemaError("expected true or false", f"{path}.strict")
        kwargs['strict'] = obj['strict']
    try:
        return FlowConfig(**kwargs)
    except InvalidFlowConfig as e:
        raise ValidationError(str(e), path) from e


def _positive(value, path: str) -> float:
    v = _number(value, path)
    if v <= 0:
        raise ValidationError("must be > 0", path)
    return v


def _per_item(value, path: str, count: int, what: str) -> Tuple[float, ...]:
    """A scalar broadcast to count entries, or an explicit list of count entries"""
    if isinstance(value, list):
        values = _numbers(value, path)
        if len(values) != count:
            raise ValidationError(f"{len(values)} values for {count} {what}", path)
        return tuple(values)
    return (_number(value, path),) * count


def _parse_experiment(obj, path: str, sheaf: Sheaf) -> Experiment:
    obj = _object(obj, path)
    kind_name = _get(obj, 'kind', path)
    try:
        kind = ExperimentKind(kind_name)
    except ValueError:
        raise SchemaError(f"unknown experiment kind {kind_name!r}", f"{path}.kind") from None

    exp = Experiment(kind=kind, flow=_parse_flow(obj.get('flow'), f"{path}.flow"))
    n, m = sheaf.n_vertices, sheaf.n_edges

    if kind in (ExperimentKind.LEARN, ExperimentKind.JOINT):
        exp.beta = _positive(_get(obj, 'beta', path), f"{path}.beta")
    if kind == ExperimentKind.JOINT and 'alpha' in obj:
        exp.flow.alpha = _positive(obj['alpha'], f"{path}.alpha")
    if kind == ExperimentKind.STUBBORN:
        exp.U = _vertices(_get(obj, 'U', path), f"{path}.U", n)
    if kind == ExperimentKind.RELUCTANT:
        exp.gamma = _per_item(_get(obj, 'gamma', path), f"{path}.gamma", n, "vertices")
        if any(g < 0 for g in exp.gamma):
            raise ValidationError("reluctance must be >= 0", f"{path}.gamma")
    if kind == ExperimentKind.CONTROL:
        if 'U' not in obj and 'Y' not in obj:
            raise SchemaError("control needs 'U' and/or 'Y'", path)
        if 'U' in obj:
            exp.U = _vertices(obj['U'], f"{path}.U", n)
        if 'Y' in obj:
            exp.Y = _vertices(obj['Y'], f"{path}.Y", n)
    if kind == ExperimentKind.COHOMOLOGY and 'relative' in obj:
        exp.relative = _vertices(obj['relative'], f"{path}.relative", n)
    if kind == ExperimentKind.BC:
        exp.D = _per_item(_get(obj, 'D', path), f"{path}.D", m, "edges")
        if any(d <= 0 for d in exp.D):
            raise ValidationError("confidence thresholds must be > 0", f"{path}.D")
        if obj.get('probe') is not None:
            exp.probe = _parse_probe(obj['probe'], f"{path}.probe", sheaf)
    if kind == ExperimentKind.SIGNED:
        items = _list(_get(obj, 'E_minus', path), f"{path}.E_minus")
        negative = []
        for i, e in enumerate(items):
            e = _int(e, f"{path}.E_minus[{i}]")
            if not 0 <= e < m:
                raise ValidationError(f"edge {e} out of range [0, {m})", f"{path}.E_minus[{i}]")
            negative.append(e)
        exp.E_minus = tuple(negative)
    return exp


def _parse_probe(obj, path: str, sheaf: Sheaf) -> Dict[str, Any]:
    obj = _object(obj, path)
    x_star = _numbers(_get(obj, 'x_star', path), f"{path}.x_star")
    if len(x_star) != sheaf.c0_dim:
        raise ValidationError(f"x_star has length {len(x_star)}, expected {sheaf.c0_dim}", f"{path}.x_star")
    probe: Dict[str, Any] = {'x_star': np.asarray(x_star)}
    if 'epsilon' in obj:
        probe['epsilon'] = _positive(obj['epsilon'], f"{path}.epsilon")
    if 'n' in obj:
        probe['n'] = _int(obj['n'], f"{path}.n")
    return probe


def parse_scenario(text, source: Optional[Path] = None) -> Scenario:
    """
    Parse and validate a scenario document.

    Raises:
        ScenarioSyntaxError: not UTF-8 JSON
        SchemaError: structure or types do not match the schema
        ValidationError: values do not describe a valid sheaf/experiment
    """
    if isinstance(text, bytes):
        try:
            text = text.decode('utf-8')
        except UnicodeDecodeError as e:
            raise ScenarioSyntaxError(f"not UTF-8: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioSyntaxError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e

    doc = _object(doc, "$")
    version = _get(doc, 'schema', "$")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {version!r}", "$.schema")

    sheaf = parse_sheaf(_get(doc, 'sheaf', "$"))
    experiment = _parse_experiment(_get(doc, 'experiment', "$"), "$.experiment", sheaf)

    x0 = None
    opinions = doc.get('opinions')
    if opinions is not None:
        opinions = _object(opinions, "$.opinions")
        if 'x0' in opinions:
            values = _numbers(opinions['x0'], "$.opinions.x0")
            if len(values) != sheaf.c0_dim:
                raise ValidationError(f"x0 has length {len(values)}, expected {sheaf.c0_dim}", "$.opinions.x0")
            x0 = np.asarray(values, dtype=np.float64)
    if x0 is None and experiment.kind in NEEDS_X0:
        raise SchemaError(f"experiment '{experiment.kind.value}' needs opinions.x0", "$.opinions")

    name = doc.get('name') or (source.stem if source else "scenario")
    if not isinstance(name, str):
        raise SchemaError("expected a string", "$.name")
    seed = _int(doc.get('seed', 0), "$.seed")
    return Scenario(
        name=name,
        sheaf=sheaf,
        experiment=experiment,
        x0=x0,
        description=str(doc.get('description', "")),
        seed=seed,
        source=source,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise RunIoError(f"cannot read {path}: {e}") from e
    return parse_scenario(data, source=path)
