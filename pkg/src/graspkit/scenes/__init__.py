from .collision import PointCloudIndex, enclosed_counts, gripper_boxes, grasp_collisions, table_collision
from .families import MAX_WIDTH, object_grasps
from .primitives import ALL_KINDS, Kind, Primitive
from .render import DepthMap
from .scene import (
    TEST_DENSITY,
    TRAIN_DENSITY,
    Camera,
    Scene,
    SceneConfig,
    annotate,
    annotate_set,
    check_grasp_collision,
    default_intrinsics,
    render_depth,
    sample_scene,
    scene_seed,
    surface_cloud,
)

__all__ = [
    "ALL_KINDS", "Camera", "DepthMap", "Kind", "MAX_WIDTH", "PointCloudIndex", "Primitive", "Scene",
    "SceneConfig", "TEST_DENSITY", "TRAIN_DENSITY", "annotate", "annotate_set", "check_grasp_collision",
    "default_intrinsics", "enclosed_counts", "grasp_collisions", "gripper_boxes", "object_grasps",
    "render_depth", "sample_scene", "scene_seed", "surface_cloud", "table_collision",
]
