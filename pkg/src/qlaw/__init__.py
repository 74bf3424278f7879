"""Quantum laws of motion built on the reduced action S0 of the quantum
Hamilton-Jacobi equation: 1-D laws, the 2-D hydrogen atom and a
Klein-Gordon extension."""

from .action import (CoordinateMap, ReducedAction1D, WaveFormConstants, classical_form_residual,
                     continuity_residual_1d, ds0_dx, d2s0_dx2, d3s0_dx3, qhje_residual,
                     quantum_potential, reconstruct_wavefunction, s0, xhat_map)
from .laws import (Law, LawOfMotion, Trajectory, TrajectoryFamily, build_family, detect_nodes,
                   dt_dx_floyd, integrate_trajectory, velocity_bohm_form, velocity_energy_law)
from .numerics import (DomainError, Grid1D, ODEControls, QuadratureSpec, expint_ei, fd_derivative,
                       integrate, laguerre, ode_solve)
from .report import ResidualReport
from .schrodinger import PotentialSpec, SolutionPair, pair_free, pair_numeric

__version__ = "0.1.0"
