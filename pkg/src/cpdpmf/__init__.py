"""Grid-based Bayesian filtering with point-mass densities in CP tensor format."""
from . import cpd, grid, tan
from .cpd import CpdTensor, SvdFactors
from .grid import AxisGrid, GaussianMoments, Pmd
from .tan import CvModel, MeasModel, TanModel, TerrainMap, Trajectory

__version__ = "0.1.0"
