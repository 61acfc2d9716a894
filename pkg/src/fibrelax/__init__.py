"""Batched dynamic-relaxation statics for small fiber-network problems."""

from .dofmap import DofMap, build_dofmap
from .microsolver import (
    AdaptiveDamping,
    FixedDamping,
    MicroState,
    SolveResult,
    SolverConfig,
    SolverError,
    SingularElementError,
    average_stress,
    compute_lumped_mass,
    critical_time_step,
    damping_coefficient,
    dynamic_relaxation_solve,
    energy_balance,
    force_residual,
    internal_forces,
)
from .network import (
    AffineBC,
    FiberNetwork,
    Material,
    NetworkFormatError,
    NetworkValidationError,
    apply_affine_bc,
    generate_lattice,
    load_network,
    save_network,
)
from .packed import DivergentSpacesError, PackedStorage, pack

__version__ = "0.1.0"

__all__ = [
    "AdaptiveDamping",
    "AffineBC",
    "DivergentSpacesError",
    "DofMap",
    "FiberNetwork",
    "FixedDamping",
    "Material",
    "MicroState",
    "NetworkFormatError",
    "NetworkValidationError",
    "PackedStorage",
    "SingularElementError",
    "SolveResult",
    "SolverConfig",
    "SolverError",
    "apply_affine_bc",
    "average_stress",
    "build_dofmap",
    "compute_lumped_mass",
    "critical_time_step",
    "damping_coefficient",
    "dynamic_relaxation_solve",
    "energy_balance",
    "force_residual",
    "generate_lattice",
    "internal_forces",
    "load_network",
    "pack",
    "save_network",
]
