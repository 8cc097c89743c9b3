"""TAP reactor workbench: pulse-response simulation, adjoint sensitivities and kinetic fitting."""

from .inverse import ExperimentalCurves, FitOptions, TapProblem, ThermoConstraint, fit_parameters
from .mechanism import Mechanism, parse_reaction, parse_thermo_combo
from .reactor import ReactorSpec, build_mesh
from .reference import SeriesConfig, diffusion_curve, irreversible_adsorption_curve
from .sensitivity import adjoint_gradient, fd_gradient, hessian, time_resolved_sensitivity
from .solver import PulseSchedule, SimulationResult, SolverConfig, TapModel, simulate

__version__ = "0.1.0"
