"""interlace: a simulation and numerical-verification toolkit for random
interlacements on Z^d (d >= 3).

The package samples the interlacement point process locally on a finite
observation window, computes the discrete potential theory it is built on
(Green function, capacity, equilibrium measures, conditioned walks), builds
the trajectory-intersection graph, and runs statistical checks of the
capacity bounds, hitting estimates and scaling exponents that govern how
the trajectories interlace.
"""

from .lattice import Ball, RngStream, SiteSet, WalkPath, sup_norm, walk_fixed, walk_until
from .potential import (
    EquilibriumMeasure,
    EscapeField,
    GreenTable,
    capacity_mc,
    capacity_mc_sampled,
    capacity_variational,
    equilibrium_variational,
    escape_field,
    get_green_table,
    green,
    green_matrix,
    green_mc,
    hitting_prob,
)

__version__ = "0.1.0"
