"""
ftem

Numerical toolkit for two-species competition models with finite-time
extinction mechanisms: sub-linear harvesting in the ODE model, fast
quasi-linear diffusion in the PDE model, and the two-biotype aphid models.
"""

__version__ = "1.0.0"
__author__ = "ftem developers"

from .models import CompetitionParams, State2, Regime
from .equilibria import EquilibriumReport, full_report
from .bifurcation import saddle_node_q, pitchfork_q, sweep_q
from .ode_sim import IntegratorOptions, Trajectory, integrate, separatrix
from .pde_sim import PdeConfig, run as run_pde
from .aphid import AphidParams, AphidModel
from .config import RunConfig, parse_config
from .runner import Runner, RunResult

__all__ = [
    "CompetitionParams",
    "State2",
    "Regime",
    "EquilibriumReport",
    "full_report",
    "saddle_node_q",
    "pitchfork_q",
    "sweep_q",
    "IntegratorOptions",
    "Trajectory",
    "integrate",
    "separatrix",
    "PdeConfig",
    "run_pde",
    "AphidParams",
    "AphidModel",
    "RunConfig",
    "parse_config",
    "Runner",
    "RunResult",
]
