"""Sampled-data matrix control barrier functions for multi-agent systems."""

from .bounds import BoundSet, DomainBox, delta, delta_r, estimate_constants, input_norm_bound
from .controller import (ControllerConfig, arze_mcbf_control, compute_control, ho_control,
                         membership_S_q, ze_mcbf_control)
from .errors import (DivergedError, InitialStateUnsafe, MCBFError, SolverInfeasible,
                     UnknownScenario)
from .scenarios import build_builtin, build_scenario, load_scenario
from .sim import SimConfig, monitor_invariance, run_simulation, zoh_step
from .solver import LmiQp, adversary_input, qp_with_linear_cuts, solve_safety_qp
from .symmat import as_symmat, is_psd, lambda_max, lambda_min, spectral_norm, sym_eig
from .system import (AgentModel, MultiAgentSystem, SafetyModel, combined_vector_field,
                     eval_H, eval_psi, eval_psi_adversarial)

__version__ = "0.1.0"

__all__ = [
    "BoundSet",
    "DomainBox",
    "delta",
    "delta_r",
    "estimate_constants",
    "input_norm_bound",
    "ControllerConfig",
    "arze_mcbf_control",
    "compute_control",
    "ho_control",
    "membership_S_q",
    "ze_mcbf_control",
    "DivergedError",
    "InitialStateUnsafe",
    "MCBFError",
    "SolverInfeasible",
    "UnknownScenario",
    "build_builtin",
    "build_scenario",
    "load_scenario",
    "SimConfig",
    "monitor_invariance",
    "run_simulation",
    "zoh_step",
    "LmiQp",
    "adversary_input",
    "qp_with_linear_cuts",
    "solve_safety_qp",
    "as_symmat",
    "is_psd",
    "lambda_max",
    "lambda_min",
    "spectral_norm",
    "sym_eig",
    "AgentModel",
    "MultiAgentSystem",
    "SafetyModel",
    "combined_vector_field",
    "eval_H",
    "eval_psi",
    "eval_psi_adversarial",
]
