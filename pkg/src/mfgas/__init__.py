"""Mean-field gases with singular interactions.

Modules: :mod:`~mfgas.kernels` (kernels and potentials),
:mod:`~mfgas.equilibrium` (equilibrium measure), :mod:`~mfgas.sampler`
(Gibbs samplers), :mod:`~mfgas.pointprocess` (local statistics) and
:mod:`~mfgas.cli` (experiment pipeline).
"""
__version__ = "0.1.0"

from .kernels import InteractionKernel, Potential, eval_kernel, eval_potential, partition_constant  # noqa: E402
from .equilibrium import solve_equilibrium, EquilibriumSolution, DensityGrid  # noqa: E402
from .sampler import GasParameters, ParticleConfiguration, run_chain, sample_iid, sample_tridiagonal_gbe  # noqa: E402
from .pointprocess import PointSample, EdgeFrame, StatReport, build_edge_frame  # noqa: E402

__all__ = [
    "InteractionKernel", "Potential", "eval_kernel", "eval_potential", "partition_constant",
    "solve_equilibrium", "EquilibriumSolution", "DensityGrid",
    "GasParameters", "ParticleConfiguration", "run_chain", "sample_iid", "sample_tridiagonal_gbe",
    "PointSample", "EdgeFrame", "StatReport", "build_edge_frame",
]
