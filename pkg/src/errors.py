# -*- coding: utf-8 -*-
"""
errors.py - Exception hierarchy for SheafDynamics
Invalid input raises; numerical outcomes (non-convergence, divergence) are flags
on the returned objects unless a flow runs in strict mode.
"""

from typing import Optional


class SheafError(Exception):
    """Base class for all SheafDynamics errors"""


# === Model validation ===

class InvalidGraph(SheafError):
    """Self-loop, duplicate edge or out-of-range endpoint"""


class MissingRestriction(SheafError):
    """An incident (vertex, edge) pair has no restriction block"""


class ShapeMismatch(SheafError):
    """A block or operand does not have the expected shape"""


class NonFiniteEntry(SheafError):
    """NaN or infinity in a restriction block or cochain"""


class LengthMismatch(SheafError):
    """Cochain length does not match the total stalk dimension"""


class NegativeGamma(SheafError):
    """Reluctance parameter below zero or non-finite"""


class DanglingEdge(SheafError):
    """Subgraph edge with an endpoint outside the vertex subset"""


class InvalidFlowConfig(SheafError, ValueError):
    """Flow parameters out of range"""


class InvalidPotential(SheafError, ValueError):
    """Edge potential parameters do not fit the sheaf (thresholds, signs, edge indices)"""


# === Numerical outcomes ===

class EigSolverFailure(SheafError):
    """The symmetric eigensolver did not converge"""


class NonConvergence(SheafError):
    """t_max reached with residual above tolerance (strict mode only)"""

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class StepTooLarge(SheafError):
    """Stepped integrator diverged (strict mode only)"""

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class NotInterior(SheafError):
    """Bounded-confidence probe point has an edge margin too close to zero"""


class NotACutset(SheafError):
    """The negative edge set does not disconnect the graph"""


# === Scenario files and runs ===

class ScenarioError(SheafError):
    """Base class for scenario problems, carrying a JSON path"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path or "$"
        super().__init__(f"{self.path}: {message}")


class ScenarioSyntaxError(ScenarioError):
    """Scenario text is not valid JSON"""


class SchemaError(ScenarioError):
    """Scenario JSON does not match the documented schema"""


class ValidationError(ScenarioError):
    """Scenario is well-formed but references or values are invalid"""


class RunIoError(SheafError):
    """Output directory or file could not be written"""
