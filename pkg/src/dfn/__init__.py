"""Dissipative flow networks: NF solves, energy-function duality and max-throughput bounds."""
from .dissipation import DissipationLaw, F_anti, G_anti, f, g, g_prime
from .energy import (ConjugateEval, E, E_star, fenchel_gap, grad_E_star, hess_E, hess_E_star,
                     monotonicity_check)
from .errors import *  # noqa: F401,F403
from .gas import GasNetworkInput, Pipe, gas_energy_closed_form, gas_hessian_closed_form, to_dissipative
from .io import load_network, save_network
from .network import Edge, FlowState, Network, Scenario, ValidationReport, node_balance_residual, validate
from .nf_solver import NewtonSettings, NfSolution, kkt_check, primal_objective, solve_nf
from .report import GapEntry, report_gap_table
from .throughput_energy import EnergySettings, ThroughputSolution, certify, solve_throughput_energy
from .throughput_micp import (BnbSettings, DirectionAssignment, MicpResult, optimality_gap, relaxed_subproblem,
                              solve_micp)

__version__ = "0.1.0"
