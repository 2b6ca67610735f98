"""Base task class for the visuo-tactile pipelines."""

import logging
import traceback
from abc import ABC, abstractmethod
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from data.types import ReflectanceMap, TactileClip, VisualClip
from utils.errors import ToolkitError

from .bundle import ModelBundle


class TaskStatus(Enum):
    """Task execution status."""
    PENDING = "pending"
    RUNNING = "running"
    SUCCESS = "success"
    FAILED = "failed"


class TaskResult(BaseModel):
    """Outcome of one task execution."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    task_id: str
    timestamp: datetime = Field(default_factory=datetime.now)
    status: TaskStatus
    data: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[str] = None
    error_code: Optional[str] = None
    metadata: Dict[str, Any] = Field(default_factory=dict)

    _exception: Optional[BaseException] = PrivateAttr(default=None)

    def unwrap(self) -> Dict[str, Any]:
        """Return ``data`` or re-raise the error that failed the task."""
        if self.status == TaskStatus.SUCCESS:
            return self.data
        if self._exception is not None:
            raise self._exception
        raise ToolkitError(self.error or f"task {self.task_id} failed")


@dataclass
class TaskRequest:
    """Inputs of one inference call; each task reads the fields it needs."""

    bundle: ModelBundle
    generator: Optional[torch.Generator] = None
    tactile: Optional[TactileClip] = None
    visual: Optional[VisualClip] = None
    image: Optional[np.ndarray] = None
    reflectance: Optional[ReflectanceMap] = None
    reference: Optional[np.ndarray] = None
    label: Optional[int] = None
    level: Optional[int] = None
    steps: Optional[int] = None
    guidance_scale: Optional[float] = None
    progress: bool = False


class BaseTask(ABC):
    """Base class for all inference pipelines."""

    def __init__(self, task_id: str):
        """Initialize the task.

        Args:
            task_id: Unique identifier for the task
        """
        self.task_id = task_id
        self.logger = logging.getLogger(f"vt.tasks.{task_id}")

    @abstractmethod
    def process(self, request: TaskRequest) -> TaskResult:
        """Run the pipeline.

        Args:
            request: Task inputs

        Returns:
            TaskResult with outputs
        """

    @abstractmethod
    def validate_input(self, request: TaskRequest) -> None:
        """Check that the request and its bundle support this task.

        Raises:
            ToolkitError: With the code describing the violated precondition
        """

    def execute(self, request: TaskRequest) -> TaskResult:
        """Execute the task with error handling.

        Args:
            request: Task inputs

        Returns:
            TaskResult with outputs, or FAILED with the error code and message
        """
        try:
            self.logger.debug("Starting execution")
            self.validate_input(request)
            result = self.process(request)
            self.logger.info(f"Completed execution with status: {result.status.value}")
            return result

        except ToolkitError as e:
            self.logger.error(f"{e.code}: {e.message}")
            result = TaskResult(
                task_id=self.task_id, status=TaskStatus.FAILED, error=e.message, error_code=e.code
            )
            result._exception = e
            return result

        except Exception as e:
            self.logger.error(f"Error during execution: {str(e)}")
            self.logger.error(traceback.format_exc())
            result = TaskResult(
                task_id=self.task_id,
                status=TaskStatus.FAILED,
                error=str(e),
                metadata={"traceback": traceback.format_exc()},
            )
            result._exception = e
            return result
