"""Maslov-type indices and mean indices of linear Hamiltonian systems.

Modules
-------
systems     symmetric coefficient fields ``B(t)`` and the example catalog
propagator  fundamental solutions of ``gamma' = J B gamma``
maslov      intersection indices ``iota(omega M, gamma)`` and ``i_omega``
meanindex   mean-index intervals, periodic mean index, dyadic tables
rotation    rotation numbers of planar systems
fredholm    monodromy spectrum test, lambda-sweeps, dichotomy checks
cli         command line front end
"""

__version__ = "0.1.0"

from .errors import SymplIndexError
from .maslov import CrossingRecord, IndexValue, i_omega, iota
from .meanindex import MeanIndexEstimate, mean_index_interval, mean_index_periodic
from .propagator import SymplecticPath, fundamental_solution, monodromy
from .systems import SymmetricField, catalog

__all__ = [
    "CrossingRecord", "IndexValue", "MeanIndexEstimate", "SymmetricField", "SymplIndexError",
    "SymplecticPath", "catalog", "fundamental_solution", "i_omega", "iota",
    "mean_index_interval", "mean_index_periodic", "monodromy",
]
