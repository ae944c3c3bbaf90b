"""Mean curvature flow of graphs of maps between model manifolds."""

from .errors import GraphFlowError
from .manifolds import Kind, ModelManifold

__all__ = ["GraphFlowError", "Kind", "ModelManifold"]
__version__ = "0.1.0"
