"""Task descriptor shared by training, bundles and inference."""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from utils.errors import ValidationError


class TaskSpec(BaseModel):
    """What a model bundle generates and from which inputs."""

    direction: Literal["touch_to_image", "image_to_touch"] = "touch_to_image"
    hand_free: bool = Field(False, description="Mask hand/sensor cells out of the training loss")
    concat_source: Literal["none", "reflectance", "reference"] = "none"
    condition_source: Literal["clip", "single_frame", "material_label", "none"] = "clip"
    sdedit_level: Optional[int] = Field(None, ge=0, description="Stylization level N; T/2 when unset")
    guidance_scale: float = Field(7.5, ge=0.0)

    @model_validator(mode="after")
    def validate_combination(self):
        if self.concat_source != "none" and self.direction != "touch_to_image":
            raise ValueError(f"{self.concat_source} concatenation is only valid for touch_to_image")
        # Masks mark hand pixels in camera frames; tactile targets are never occluded
        if self.hand_free and self.direction != "touch_to_image":
            raise ValueError("hand-free training masks camera frames and is only valid for touch_to_image")
        return self

    @property
    def condition_modality(self) -> str:
        return "tactile" if self.direction == "touch_to_image" else "visual"

    @property
    def target_modality(self) -> str:
        return "visual" if self.direction == "touch_to_image" else "tactile"

    def required_fields(self) -> List[str]:
        """Dataset fields every entry must carry to train this task."""
        fields = []
        if self.hand_free:
            fields.append("mask")
        if self.concat_source != "none":
            fields.append(self.concat_source)
        return fields

    def resolve_level(self, timesteps: int, level: Optional[int] = None) -> int:
        """SDEdit level to use: explicit argument, then ``sdedit_level``, then T/2."""
        if level is None:
            level = self.sdedit_level if self.sdedit_level is not None else timesteps // 2
        if not 0 <= level <= timesteps:
            raise ValidationError(f"stylization level N={level} outside [0, {timesteps}]")
        return level
