from .camera import BehindCameraError, PerspectiveCamera, project
from .mesh import (EmptyMeshError, MeshError, NotWatertightError, TriangleMesh, box, concatenate,
                   cylinder, grid_solid, icosphere, l_shape, load_obj, save_obj)
from .queries import closest_point, closest_points, occupancy, ray_direction, signed_distance
from .raster import DepthBuffer, rasterize, read_pfm, visible, vis_tolerance, write_pfm

__all__ = [
    "BehindCameraError", "PerspectiveCamera", "project",
    "EmptyMeshError", "MeshError", "NotWatertightError", "TriangleMesh", "box", "concatenate",
    "cylinder", "grid_solid", "icosphere", "l_shape", "load_obj", "save_obj",
    "closest_point", "closest_points", "occupancy", "ray_direction", "signed_distance",
    "DepthBuffer", "rasterize", "read_pfm", "visible", "vis_tolerance", "write_pfm",
]
