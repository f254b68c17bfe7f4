"""Procedural human-object scenes, views, renders and the inpainting oracle."""
from .compose import (HUMAN_ID, OBJECT_ID, NoContactError, NoViewsError, RigidTransform, SceneSpec,
                      ViewBundle, ViewConfig, compose_scene, oracle_inpaint, place_views, render_view)
from .dataset import GenConfig, generate_dataset, generate_scene, load_scene, load_view
from .figures import capsule_figure, make_object, random_object

__all__ = [
    "HUMAN_ID", "OBJECT_ID", "NoContactError", "NoViewsError", "RigidTransform", "SceneSpec",
    "ViewBundle", "ViewConfig", "compose_scene", "oracle_inpaint", "place_views", "render_view",
    "GenConfig", "generate_dataset", "generate_scene", "load_scene", "load_view",
    "capsule_figure", "make_object", "random_object",
]
