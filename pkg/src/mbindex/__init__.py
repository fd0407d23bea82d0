"""Many-body charge-transport index on lattice models: exact diagonalization, quasi-adiabatic dressing,
flux threading, transport splitting and anyon diagnostics."""

from .experiments import ExperimentConfig, load_config, run_experiment, sweep
from .lattice import Region, TorusLattice, build_torus, half_torus_region
from .models import ModelSpec, build_model

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "ModelSpec", "Region", "TorusLattice", "build_model", "build_torus",
           "half_torus_region", "load_config", "run_experiment", "sweep"]
