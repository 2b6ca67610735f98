"""Inference pipelines: touch→image, image→touch, stylization and shading estimation."""

from typing import NamedTuple, Optional

import numpy as np
import torch

from data.dataset import tensor_to_frame
from data.types import Clip, ReflectanceMap, TactileClip, VisualClip, check_image_frame
from diffusion.sampling import GuidanceConfig, sample, sdedit_sample
from utils.errors import ConfigurationError, MissingArgumentError, ValidationError

from .base import BaseTask, TaskRequest, TaskResult, TaskStatus
from .bundle import ModelBundle
from .conditioning import condition_inputs

SHADING_EPSILON = 1e-3


class ShadingEstimate(NamedTuple):
    image: np.ndarray
    shading: np.ndarray


def _guidance(request: TaskRequest) -> GuidanceConfig:
    bundle = request.bundle
    scale = request.guidance_scale if request.guidance_scale is not None else bundle.task_spec.guidance_scale
    return bundle.guidance.model_copy(update={"scale": scale})


def _check_clip(clip: Optional[Clip], bundle: ModelBundle, name: str) -> None:
    if clip is None:
        raise MissingArgumentError(f"{name} clip is required")
    expected = bundle.encoder_config.window
    if bundle.task_spec.condition_source == "clip" and clip.window != expected:
        raise ValidationError(f"{name} clip has {clip.window} frames, bundle expects {expected}")
    if clip.shape != bundle.image_shape:
        raise ValidationError(f"{name} frames are {clip.shape}, bundle expects {bundle.image_shape}")


def _check_label(request: TaskRequest) -> None:
    if request.bundle.task_spec.condition_source == "material_label" and request.label is None:
        raise MissingArgumentError("material-label conditioning needs a label")


def _condition(request: TaskRequest, clip: Clip) -> torch.Tensor:
    bundle = request.bundle
    label = request.label if request.label is not None else 0
    return bundle.embed(condition_inputs(clip, bundle.task_spec.condition_modality, label))


def _decode(bundle: ModelBundle, latent: torch.Tensor) -> np.ndarray:
    return tensor_to_frame(bundle.codec.decode(latent)[0])


class _GenerationTask(BaseTask):
    direction = ""
    clip_field = ""

    def validate_input(self, request: TaskRequest) -> None:
        spec = request.bundle.task_spec
        if spec.direction != self.direction:
            raise ConfigurationError(f"bundle was trained for {spec.direction}, not {self.direction}")
        _check_clip(getattr(request, self.clip_field), request.bundle, self.clip_field)
        _check_label(request)
        if spec.concat_source == "reflectance" and request.reflectance is None:
            raise MissingArgumentError("bundle concatenates a reflectance map; none was given")
        if spec.concat_source == "reference" and request.reference is None:
            raise MissingArgumentError("bundle concatenates a reference image; none was given")

    def _concat(self, request: TaskRequest) -> Optional[torch.Tensor]:
        source = request.bundle.task_spec.concat_source
        if source == "reflectance":
            return request.bundle.encode_frame(request.reflectance.as_frame())
        if source == "reference":
            return request.bundle.encode_frame(check_image_frame(request.reference, name="reference"))
        return None

    def process(self, request: TaskRequest) -> TaskResult:
        bundle = request.bundle.eval()
        cond = _condition(request, getattr(request, self.clip_field))
        latent = sample(
            bundle.denoiser,
            cond,
            (1, *bundle.latent_shape),
            bundle.schedule,
            _guidance(request),
            generator=request.generator,
            steps=bundle.steps_for(request.steps),
            concat=self._concat(request),
            progress=request.progress,
        )
        return TaskResult(
            task_id=self.task_id,
            status=TaskStatus.SUCCESS,
            data={"image": _decode(bundle, latent), "latent": latent},
        )


class TouchToImageTask(_GenerationTask):
    direction = "touch_to_image"
    clip_field = "tactile"

    def __init__(self, task_id: str = "touch_to_image"):
        super().__init__(task_id)


class ImageToTouchTask(_GenerationTask):
    direction = "image_to_touch"
    clip_field = "visual"

    def __init__(self):
        super().__init__("image_to_touch")


class StylizeTask(BaseTask):
    """Edit an image so it looks the way the target touch feels."""

    def __init__(self):
        super().__init__("stylize")

    def validate_input(self, request: TaskRequest) -> None:
        spec = request.bundle.task_spec
        if spec.direction != "touch_to_image":
            raise ConfigurationError("stylization needs a touch_to_image bundle")
        if spec.concat_source != "none":
            raise ConfigurationError(f"stylization does not support {spec.concat_source} concatenation")
        if request.image is None:
            raise MissingArgumentError("an input image is required")
        check_image_frame(request.image, request.bundle.codec_spec.factor, "input image")
        if tuple(request.image.shape[:2]) != request.bundle.image_shape:
            raise ValidationError(f"input image is {request.image.shape[:2]}, bundle expects {request.bundle.image_shape}")
        _check_clip(request.tactile, request.bundle, "tactile")
        _check_label(request)
        spec.resolve_level(request.bundle.schedule.timesteps, request.level)

    def process(self, request: TaskRequest) -> TaskResult:
        bundle = request.bundle.eval()
        level = bundle.task_spec.resolve_level(bundle.schedule.timesteps, request.level)
        z0 = bundle.encode_frame(request.image)
        latent = sdedit_sample(
            bundle.denoiser,
            z0,
            level,
            _condition(request, request.tactile),
            bundle.schedule,
            _guidance(request),
            generator=request.generator,
            steps=bundle.steps_for(request.steps),
            progress=request.progress,
        )
        return TaskResult(
            task_id=self.task_id,
            status=TaskStatus.SUCCESS,
            data={"image": _decode(bundle, latent), "latent": latent},
            metadata={"level": level},
        )


def implied_shading(image: np.ndarray, reflectance: ReflectanceMap) -> np.ndarray:
    """Per-pixel shading x̃ ⊘ R with images mapped to [0, 1] and an ε-guarded denominator, averaged over channels."""
    unit = (np.asarray(image, dtype=np.float64) + 1.0) / 2.0
    ratio = unit / (reflectance.pixels.astype(np.float64) + SHADING_EPSILON)
    return ratio.mean(axis=2).astype(np.float32)


class ShadingTask(TouchToImageTask):
    """Touch-conditioned generation with the reflectance map concatenated to the latent."""

    def __init__(self):
        super().__init__("shading_estimate")

    def validate_input(self, request: TaskRequest) -> None:
        if request.bundle.task_spec.concat_source != "reflectance":
            raise ConfigurationError("bundle was not trained with reflectance concatenation")
        super().validate_input(request)

    def process(self, request: TaskRequest) -> TaskResult:
        result = super().process(request)
        result.data["shading"] = implied_shading(result.data["image"], request.reflectance)
        return result


def touch_to_image(
    clip: TactileClip,
    bundle: ModelBundle,
    generator: Optional[torch.Generator] = None,
    label: Optional[int] = None,
    reference: Optional[np.ndarray] = None,
    steps: Optional[int] = None,
    guidance_scale: Optional[float] = None,
) -> np.ndarray:
    """Generate an image frame from a tactile clip."""
    request = TaskRequest(bundle=bundle, generator=generator, tactile=clip, label=label, reference=reference,
                          steps=steps, guidance_scale=guidance_scale)
    return TouchToImageTask().execute(request).unwrap()["image"]


def image_to_touch(
    clip: VisualClip,
    bundle: ModelBundle,
    generator: Optional[torch.Generator] = None,
    label: Optional[int] = None,
    steps: Optional[int] = None,
    guidance_scale: Optional[float] = None,
) -> np.ndarray:
    """Generate a tactile frame from a visual clip."""
    request = TaskRequest(bundle=bundle, generator=generator, visual=clip, label=label,
                          steps=steps, guidance_scale=guidance_scale)
    return ImageToTouchTask().execute(request).unwrap()["image"]


def stylize(
    image: np.ndarray,
    target_touch: TactileClip,
    level: Optional[int],
    bundle: ModelBundle,
    generator: Optional[torch.Generator] = None,
    label: Optional[int] = None,
    steps: Optional[int] = None,
    guidance_scale: Optional[float] = None,
) -> np.ndarray:
    """SDEdit ``image`` at level N (T/2 when None) under the target touch."""
    request = TaskRequest(bundle=bundle, generator=generator, image=image, tactile=target_touch, level=level,
                          label=label, steps=steps, guidance_scale=guidance_scale)
    return StylizeTask().execute(request).unwrap()["image"]


def shading_estimate(
    reflectance: ReflectanceMap,
    clip: TactileClip,
    bundle: ModelBundle,
    generator: Optional[torch.Generator] = None,
    label: Optional[int] = None,
    steps: Optional[int] = None,
    guidance_scale: Optional[float] = None,
) -> ShadingEstimate:
    """Generate the image implied by reflectance and touch, plus its implied shading."""
    request = TaskRequest(bundle=bundle, generator=generator, tactile=clip, reflectance=reflectance, label=label,
                          steps=steps, guidance_scale=guidance_scale)
    data = ShadingTask().execute(request).unwrap()
    return ShadingEstimate(image=data["image"], shading=data["shading"])
