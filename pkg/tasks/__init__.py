"""Visuo-tactile generation tasks: training, bundles and inference pipelines."""

from .base import BaseTask, TaskRequest, TaskResult, TaskStatus
from .bundle import ModelBundle, load_bundle, save_bundle
from .conditioning import (
    ClipConditioner,
    Conditioner,
    LabelConditioner,
    NullConditioner,
    SingleFrameConditioner,
    build_conditioner,
    condition_inputs,
)
from .pipelines import (
    ImageToTouchTask,
    ShadingEstimate,
    ShadingTask,
    StylizeTask,
    TouchToImageTask,
    image_to_touch,
    implied_shading,
    shading_estimate,
    stylize,
    touch_to_image,
)
from .spec import TaskSpec
from .trainer import TaskTrainConfig, masked_gradient_max, preflight, train_task

__all__ = [
    "BaseTask",
    "TaskRequest",
    "TaskResult",
    "TaskStatus",
    "ModelBundle",
    "save_bundle",
    "load_bundle",
    "Conditioner",
    "ClipConditioner",
    "SingleFrameConditioner",
    "LabelConditioner",
    "NullConditioner",
    "build_conditioner",
    "condition_inputs",
    "TouchToImageTask",
    "ImageToTouchTask",
    "StylizeTask",
    "ShadingTask",
    "ShadingEstimate",
    "touch_to_image",
    "image_to_touch",
    "stylize",
    "shading_estimate",
    "implied_shading",
    "TaskSpec",
    "TaskTrainConfig",
    "preflight",
    "masked_gradient_max",
    "train_task",
]
