"""Pseudo-spectral simulation of incompressible flow with transported
piecewise-constant density, organized around Lagrangian flow-map machinery.

Submodules are imported lazily so that the command-line entry point can pin
threading environment variables before any numerics library loads.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("fields", "sampling", "flow_map", "density", "divergence",
               "stokes", "diagnostics", "scenarios", "cli", "errors")

# name -> submodule that defines it, for lazy attribute access
_EXPORTS = {
    "Grid": "fields",
    "ScalarField": "fields",
    "VectorField": "fields",
    "MatrixField": "fields",
    "FlowMap": "flow_map",
    "new_flow_map": "flow_map",
    "advance_flow_map": "flow_map",
    "inverse_jacobian": "flow_map",
    "PiecewiseConstantDensity": "density",
    "disk_density": "density",
    "density_at_time": "density",
    "solve_twisted_divergence": "divergence",
    "TwistedDivergenceProblem": "divergence",
    "solve_stationary_stokes": "stokes",
    "solve_evolutionary_stokes": "stokes",
    "SolverConfig": "stokes",
    "new_sim_state": "stokes",
    "step_variable_density": "stokes",
    "run_scenario": "scenarios",
    "parse_config": "scenarios",
    "build_report": "diagnostics",
    "SimulationError": "errors",
    "ConfigError": "errors",
}

__all__ = ["__version__", *sorted(_EXPORTS), *(_SUBMODULES)]


def __getattr__(name: str):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(__all__)
