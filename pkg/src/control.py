# -*- coding: utf-8 -*-
"""
control.py - Stabilizability and detectability of sheaf diffusion
dx/dt = -alpha L x + B u, y = C x with B, C selecting the stalks of a vertex set.
Each test is answered twice: by relative cohomology and by a PBH rank test.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Tuple

import numpy as np

from .config import config
from .sheaf import Sheaf
from .spectral import numerical_rank, relative_h0, sheaf_laplacian

# -alpha L is symmetric negative semidefinite: every eigenvalue is real and <= 0,
# so lambda = 0 is the only point of the closed right half-plane where
# [A - lambda I | B] can lose rank.
LAMBDA_NOTE = "only lambda = 0 tested: spectrum of -alpha L is real and nonpositive"


def _noop(_: str):
    pass


class Verdict(Enum):
    PASS = "pass"
    FAIL = "fail"

    @classmethod
    def of(cls, ok: bool) -> 'Verdict':
        return cls.PASS if ok else cls.FAIL


@dataclass(frozen=True)
class ControlReport:
    """Outcome of a stabilizability or detectability test"""
    kind: str  # "stabilizable" | "detectable"
    vertex_set: Tuple[int, ...]
    relative_h0_dim: int
    cohomology_verdict: Verdict
    rank_verdict: Verdict
    rank: int
    required_rank: int
    lambda_checked: Tuple[float, ...]
    alpha: float
    tol: float
    note: str = LAMBDA_NOTE

    @property
    def agree(self) -> bool:
        return self.cohomology_verdict == self.rank_verdict

    @property
    def passed(self) -> bool:
        return self.cohomology_verdict == Verdict.PASS

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'vertex_set': list(self.vertex_set),
            'relative_h0_dim': self.relative_h0_dim,
            'cohomology_verdict': self.cohomology_verdict.value,
            'rank_verdict': self.rank_verdict.value,
            'rank': self.rank,
            'required_rank': self.required_rank,
            'lambda_checked': list(self.lambda_checked),
            'alpha': self.alpha,
            'tol': self.tol,
            'note': self.note,
        }


def _selector(sheaf: Sheaf, vertices: Tuple[int, ...]) -> np.ndarray:
    """Columns of the identity on the stalks of the given vertices"""
    idx = sheaf.vertex_indices(vertices)
    sel = np.zeros((sheaf.c0_dim, idx.size))
    sel[idx, np.arange(idx.size)] = 1.0
    return sel


def _report(kind: str, sheaf: Sheaf, vertices: Iterable[int], alpha: float,
            tol: Optional[float], on_log: Optional[Callable[[str], None]]) -> ControlReport:
    log = on_log or _noop
    tol = config.rank_tol if tol is None else float(tol)
    vs = tuple(sorted(set(int(v) for v in vertices)))

    rel = relative_h0(sheaf, vs, tol)
    a = -alpha * sheaf_laplacian(sheaf).matrix
    sel = _selector(sheaf, vs)
    # PBH at lambda = 0: [A | B] full row rank, or [A; C] full column rank
    pbh = np.hstack([a, sel]) if kind == "stabilizable" else np.vstack([a, sel.T])
    rank = numerical_rank(pbh, tol)
    n = sheaf.c0_dim

    report = ControlReport(
        kind=kind,
        vertex_set=vs,
        relative_h0_dim=rel.dim,
        cohomology_verdict=Verdict.of(rel.dim == 0),
        rank_verdict=Verdict.of(rank == n),
        rank=rank,
        required_rank=n,
        lambda_checked=(0.0,),
        alpha=alpha,
        tol=tol,
    )
    log(f"[CONTROL] {kind} from {list(vs)}: H0(G,U) dim {rel.dim}, PBH rank {rank}/{n}")
    if not report.agree:
        log(f"[CONTROL] verdicts disagree: cohomology {report.cohomology_verdict.value}, "
            f"rank {report.rank_verdict.value}")
    return report


def stabilizable(sheaf: Sheaf, U: Iterable[int], alpha: float = 1.0, tol: Optional[float] = None,
                 on_log: Optional[Callable[[str], None]] = None) -> ControlReport:
    """Inputs on the stalks of U stabilize the diffusion iff H0(G, U) = 0"""
    return _report("stabilizable", sheaf, U, alpha, tol, on_log)


def detectable(sheaf: Sheaf, Y: Iterable[int], alpha: float = 1.0, tol: Optional[float] = None,
               on_log: Optional[Callable[[str], None]] = None) -> ControlReport:
    """Observing the stalks of Y detects the diffusion iff H0(G, Y) = 0"""
    return _report("detectable", sheaf, Y, alpha, tol, on_log)
