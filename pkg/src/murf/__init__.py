"""murf: RF-driven muon spin dynamics in dipolar-coupled nuclear spin clusters."""

__version__ = "0.1.0"

from .asymmetry import (
    FitParams,
    SolverOptions,
    Spectrum,
    chi_squared_reduced,
    difference_spectrum,
    experimental_asymmetry,
    joint_objective,
    model_asymmetry,
    model_polarization,
)
from .diffevo import DEResult, DESettings, differential_evolution
from .dynamics import (
    EigenPopulations,
    Evolution,
    PolarizationSeries,
    eigen_populations,
    evolve,
    initial_state,
    muon_polarization,
    muon_z_operator,
    orientation_average,
)
from .fmuf import (
    EigenLevel,
    Transition,
    fmuf_eigensystem,
    fmuf_energies,
    fmuf_hamiltonian,
    levels_vs_field,
    muon_reduced_purity,
    on_resonance_transition,
    transition_table,
)
from .hamiltonian import (
    Cluster,
    DriveSpec,
    DrivenHamiltonian,
    SpinSite,
    dipole_hamiltonian,
    drive_operator,
    driven_hamiltonian,
    scale_bonds,
    zeeman_hamiltonian,
)
from .operators import HilbertLayout, angular_momentum, embed, partial_trace, purity

__all__ = [name for name in dir() if not name.startswith("_")]
