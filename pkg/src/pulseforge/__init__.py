"""Noise-robust quantum gate pulse synthesis via indirect optimal control.

Workflow: load or build a :class:`~pulseforge.model.ProblemSpec`, run
:func:`~pulseforge.shoot.solve` to obtain a :class:`~pulseforge.shoot.PulseSolution`,
then check it with the :mod:`~pulseforge.verify` tools or the CLI.
"""

from .model import (
    FICTITIOUS_DRIFT,
    FIXED_HORIZON,
    HamiltonianTerm,
    ProblemSpec,
    enumerate_multi_indices,
    load_problem,
    validate,
)
from .shoot import PulseSolution, SolveError, SolveOptions, solve
from .verify import SweepResult, fidelity, propagate_noisy, sweep

__version__ = "0.1.0"

__all__ = [
    "FICTITIOUS_DRIFT",
    "FIXED_HORIZON",
    "HamiltonianTerm",
    "ProblemSpec",
    "PulseSolution",
    "SolveError",
    "SolveOptions",
    "SweepResult",
    "enumerate_multi_indices",
    "fidelity",
    "load_problem",
    "propagate_noisy",
    "solve",
    "sweep",
    "validate",
    "__version__",
]
