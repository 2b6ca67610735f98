"""Run-scoped logging for the visuo-tactile toolkit."""

import json
import logging
import sys
from collections import Counter
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional


class RunLogger:
    """Run-based logger that writes a compact text log and a JSONL event log per run."""

    COMPONENTS = [
        "vt.cli",
        "vt.data",
        "vt.codec",
        "vt.cvtp",
        "vt.diffusion",
        "vt.tasks",
        "vt.metrics",
        "vt.checkpoint",
    ]

    def __init__(self, run_id: str, log_level: int = logging.INFO, log_dir: str = "logs"):
        """Initialize run logger.

        Args:
            run_id: Unique run identifier
            log_level: Logging level
            log_dir: Directory receiving the log files
        """
        self.run_id = run_id
        self.log_level = log_level
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)

        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.log_file = self.log_dir / f"run_{run_id}_{timestamp}.log"
        self.json_log_file = self.log_dir / f"run_{run_id}_{timestamp}.jsonl"

        self._setup_loggers()

        self.run_metadata = {
            "run_id": run_id,
            "start_time": datetime.now().isoformat(),
            "log_file": str(self.log_file),
            "json_log_file": str(self.json_log_file),
        }
        self.log_event("run_start", self.run_metadata)

    def _setup_loggers(self):
        """Set up run-specific handlers on the root logger."""
        compact_formatter = logging.Formatter("[%(asctime)s] [%(name)s] %(levelname)s: %(message)s")
        console_formatter = logging.Formatter("[%(levelname)s] %(name)s: %(message)s")

        file_handler = logging.FileHandler(self.log_file)
        file_handler.setLevel(self.log_level)
        file_handler.setFormatter(compact_formatter)

        # Console only carries warnings; progress goes through tqdm
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.WARNING)
        console_handler.setFormatter(console_formatter)

        root_logger = logging.getLogger()
        for handler in root_logger.handlers[:]:
            root_logger.removeHandler(handler)
            handler.close()

        root_logger.setLevel(self.log_level)
        root_logger.addHandler(file_handler)
        root_logger.addHandler(console_handler)

        for component in self.COMPONENTS:
            logging.getLogger(component).setLevel(self.log_level)

    def log_event(self, event_type: str, data: Dict[str, Any], level: str = "info"):
        """Log a structured event to both text and JSON logs.

        Args:
            event_type: Type of event (e.g., 'train_step', 'artifact_written')
            data: Event data
            level: Log level
        """
        log_entry = {
            "timestamp": datetime.now().isoformat(),
            "run_id": self.run_id,
            "event_type": event_type,
            "level": level,
            "data": data,
        }
        with open(self.json_log_file, "a") as f:
            f.write(json.dumps(log_entry, default=str) + "\n")

        logger = logging.getLogger("vt.events")
        getattr(logger, level if level in ("debug", "info", "warning", "error") else "info")(
            self._create_compact_log_message(event_type, data)
        )

    def log_config(self, command: str, config: Dict[str, Any], config_hash: str):
        """Log the fully resolved configuration of a command."""
        self.log_event("config_resolved", {"command": command, "config_hash": config_hash, "config": config})

    def log_train_step(self, component: str, step: int, loss: float, lr: Optional[float] = None, **extra):
        """Log one optimisation step."""
        data = {"component": component, "step": step, "loss": loss}
        if lr is not None:
            data["lr"] = lr
        data.update(extra)
        self.log_event("train_step", data, level="debug")

    def log_artifact(self, kind: str, path: Path, **extra):
        """Log an artifact written to disk."""
        self.log_event("artifact_written", {"kind": kind, "path": str(path), **extra})

    def log_error(self, error_code: str, error_message: str, context: Optional[Dict] = None):
        """Log errors with context."""
        self.log_event(
            "error",
            {"error_code": error_code, "error_message": error_message, "context": context or {}},
            level="error",
        )

    def finalize_run(self, summary: Optional[Dict[str, Any]] = None):
        """Close the run: append the end event and write the run summary."""
        end_time = datetime.now()
        self.run_metadata.update({
            "end_time": end_time.isoformat(),
            "duration_seconds": (end_time - datetime.fromisoformat(self.run_metadata["start_time"])).total_seconds(),
        })
        if summary:
            self.run_metadata["run_summary"] = summary
        self.run_metadata["event_counts"] = dict(
            Counter(entry["event_type"] for entry in self.get_run_logs()["logs"])
        )

        self.log_event("run_end", self.run_metadata)

        summary_file = self.log_dir / f"run_{self.run_id}_summary.json"
        with open(summary_file, "w") as f:
            json.dump(self.run_metadata, f, indent=2, default=str)

    def get_run_logs(self) -> Dict[str, Any]:
        """Return the JSONL events of this run."""
        logs = []
        if self.json_log_file.exists():
            with open(self.json_log_file, "r") as f:
                for line in f:
                    try:
                        logs.append(json.loads(line.strip()))
                    except json.JSONDecodeError:
                        continue
        return {"run_id": self.run_id, "logs": logs, "metadata": self.run_metadata}

    def _create_compact_log_message(self, event_type: str, data: Dict[str, Any]) -> str:
        """Create compact log message for .log files.

        Args:
            event_type: Type of event
            data: Event data

        Returns:
            Compact log message string
        """
        if event_type == "run_start":
            return f"Run started: {data.get('run_id', 'unknown')}"

        elif event_type == "config_resolved":
            return f"Command {data.get('command')} with config {str(data.get('config_hash', ''))[:12]}"

        elif event_type == "train_step":
            return f"{data.get('component')} step {data.get('step')}: loss={data.get('loss', float('nan')):.6f}"

        elif event_type == "epoch_end":
            return f"{data.get('component')} epoch {data.get('epoch')} done: mean loss={data.get('mean_loss', float('nan')):.6f}"

        elif event_type == "masked_gradient":
            return f"Masked gradient epoch {data.get('epoch')}: masked max |grad|={data.get('masked_max')}"

        elif event_type == "retrieval":
            return (
                f"Retrieval top-1: visual->tactile {data.get('visual_to_tactile', 0):.3f}, "
                f"tactile->visual {data.get('tactile_to_visual', 0):.3f}"
            )

        elif event_type == "artifact_written":
            return f"Wrote {data.get('kind')}: {data.get('path')}"

        elif event_type == "metric_report":
            metrics = data.get("metrics", {})
            return "Metrics: " + ", ".join(f"{k}={v:.4f}" for k, v in metrics.items() if isinstance(v, (int, float)))

        elif event_type == "error":
            return f"Error [{data.get('error_code', 'unknown')}]: {data.get('error_message', 'unknown')}"

        elif event_type == "run_end":
            return f"Run finished (duration: {data.get('duration_seconds', 0):.2f}s)"

        return f"[{event_type}]: {str(data)[:100]}"


def setup_logging(run_id: str, debug: bool = False, log_dir: str = "logs") -> RunLogger:
    """Set up logging for a run.

    Args:
        run_id: Run identifier
        debug: Enable debug logging
        log_dir: Directory for log files

    Returns:
        RunLogger instance
    """
    log_level = logging.DEBUG if debug else logging.INFO
    return RunLogger(run_id, log_level, log_dir)


def get_available_runs(log_dir: str = "logs") -> List[Dict[str, Any]]:
    """List run summaries, newest first."""
    directory = Path(log_dir)
    if not directory.exists():
        return []

    runs = []
    for summary_file in directory.glob("run_*_summary.json"):
        try:
            with open(summary_file, "r") as f:
                runs.append(json.load(f))
        except (json.JSONDecodeError, FileNotFoundError):
            continue

    runs.sort(key=lambda x: x.get("start_time", ""), reverse=True)
    return runs

