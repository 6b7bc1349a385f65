"""Digital-rock graphs and elastic-moduli prediction.

Converts segmented voxel volumes into two-phase cluster graphs, computes
topological features and classical effective-medium estimates, and trains
graph-based regressors (random forest on graph-level features, a
message-passing network on node-feature graphs) for bulk and shear moduli.
"""

from .mapper import MapperParams, RockGraph, build_graph
from .physics import DemParams, ElasticModuli, dem_moduli, hashin_shtrikman, voigt_reuss_bounds
from .voxel import VoxelGrid, gen_sphere_pack, porosity, read_raw, subcube, write_raw

__all__ = [
    "MapperParams",
    "RockGraph",
    "build_graph",
    "DemParams",
    "ElasticModuli",
    "dem_moduli",
    "hashin_shtrikman",
    "voigt_reuss_bounds",
    "VoxelGrid",
    "gen_sphere_pack",
    "porosity",
    "read_raw",
    "subcube",
    "write_raw",
]

__version__ = "0.1.0"
