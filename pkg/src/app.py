# -*- coding: utf-8 -*-
"""
app.py - Command-line front end for SheafDynamics
sheafdyn validate FILE | cohomology FILE | run FILE | run --batch DIR

Exit codes: 0 success, 2 invalid scenario, 3 a flow did not converge
(outputs are still written), 1 any other failure.
"""

import argparse
import json
import sys
import threading
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import config
from .errors import ScenarioError, SheafError
from .runner import run, run_batch
from .scenario import Experiment, ExperimentKind, load_scenario
from .spectral import h0, numerical_rank, sheaf_laplacian, spectrum_summary
from .sheaf import coboundary

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3


def _load(path: Path, seed: Optional[int]):
    scenario = load_scenario(path)
    if seed is not None:
        scenario.seed = seed
    return scenario


class SheafDynamicsApp:
    """
    CLI controller.
    Owns the log sink and maps outcomes to exit codes.
    """

    def __init__(self, quiet: bool = False):
        self._quiet = quiet
        self._lock = threading.Lock()

    def _log(self, message: str):
        """Thread-safe logging to stderr"""
        if self._quiet:
            return
        with self._lock:
            print(message, file=sys.stderr, flush=True)

    def validate(self, path: Path, seed: Optional[int] = None) -> int:
        scenario = _load(path, seed)
        sheaf = scenario.sheaf
        print(f"ok: {scenario.name} ({scenario.experiment.kind.value}), "
              f"{sheaf.n_vertices} vertices, {sheaf.n_edges} edges, C0 dim {sheaf.c0_dim}, seed {scenario.seed}")
        return EXIT_OK

    def cohomology(self, path: Path, out: Optional[Path], seed: Optional[int] = None) -> int:
        scenario = _load(path, seed)
        if out is not None:
            scenario.experiment = Experiment(kind=ExperimentKind.COHOMOLOGY, flow=scenario.experiment.flow)
            run(scenario, out, self._log)
        sheaf = scenario.sheaf
        basis = h0(sheaf, on_log=self._log)
        report = {
            'scenario': scenario.name,
            'h0_dim': basis.dim,
            'rank_delta': numerical_rank(coboundary(sheaf).dense()),
            'c0_dim': sheaf.c0_dim,
            'spectrum': spectrum_summary(sheaf_laplacian(sheaf).matrix).to_dict(),
        }
        print(json.dumps(report, indent=2, sort_keys=True))
        return EXIT_OK

    def run_one(self, path: Path, out: Path, seed: Optional[int]) -> int:
        scenario = _load(path, seed)
        summary = run(scenario, out, self._log)
        return EXIT_NOT_CONVERGED if summary.non_converged else EXIT_OK

    def run_many(self, directory: Path, out: Path, seed: Optional[int]) -> int:
        code = EXIT_OK
        for result in run_batch(directory, out, self._log, seed):
            if isinstance(result.error, ScenarioError):
                code = max(code, EXIT_INVALID)
            elif result.error is not None:
                code = max(code, EXIT_FAILURE)
            elif result.summary.non_converged:
                code = max(code, EXIT_NOT_CONVERGED)
        return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sheafdyn",
        description="Cellular sheaf cohomology and opinion dynamics experiments",
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument('--tol', type=float, default=None,
                       help=f"rank tolerance (default {config.rank_tol:g})")
        p.add_argument('--quiet', action='store_true', help="suppress log output on stderr")
        p.add_argument('--seed', type=int, default=None, help="override the scenario seed")

    p = sub.add_parser('validate', help="check a scenario file")
    p.add_argument('file', type=Path)
    common(p)

    p = sub.add_parser('cohomology', help="H0 dimension, basis and Laplacian spectrum")
    p.add_argument('file', type=Path)
    p.add_argument('--out', type=Path, default=None, help="also write summary.json here")
    common(p)

    p = sub.add_parser('run', help="run a scenario (or a directory of scenarios)")
    p.add_argument('file', type=Path, nargs='?')
    p.add_argument('--batch', type=Path, default=None, metavar='DIR',
                   help="run every *.json in DIR, results in OUT/<stem>/")
    p.add_argument('--out', type=Path, default=Path("out"))
    common(p)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Application entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.tol is not None:
        if not args.tol > 0:
            parser.error("--tol must be > 0")
        config.rank_tol = args.tol

    app = SheafDynamicsApp(quiet=args.quiet)
    try:
        if args.command == 'validate':
            return app.validate(args.file, args.seed)
        if args.command == 'cohomology':
            return app.cohomology(args.file, args.out, args.seed)
        if args.batch is not None:
            return app.run_many(args.batch, args.out, args.seed)
        if args.file is None:
            parser.error("run needs FILE or --batch DIR")
        return app.run_one(args.file, args.out, args.seed)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SheafError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
