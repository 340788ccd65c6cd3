from .boundary import BoundaryMesh, bisect_1d
from .triangulation import Mesh2, MeshError, element_size, is_refinement, nvb_refine, overlay

__all__ = [
    "BoundaryMesh",
    "Mesh2",
    "MeshError",
    "bisect_1d",
    "element_size",
    "is_refinement",
    "nvb_refine",
    "overlay",
]
