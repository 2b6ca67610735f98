"""Test the run logger's event log and run summaries."""

import logging
import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent))

from utils.logging_config import get_available_runs, setup_logging


def test_run_logger_records_structured_events(tmp_path):
    run_logger = setup_logging("unit", debug=True, log_dir=str(tmp_path))
    run_logger.log_config("synth-data", {"seed": 0}, "abc123")
    run_logger.log_train_step("vt.cvtp", 3, 0.5, lr=0.1)
    run_logger.log_error("E_VALIDATION", "bad window", {"entry": "pair_00001"})
    run_logger.finalize_run({"status": "failed"})

    logs = run_logger.get_run_logs()
    events = [entry["event_type"] for entry in logs["logs"]]
    assert events == ["run_start", "config_resolved", "train_step", "error", "run_end"]
    assert logs["logs"][2]["data"] == {"component": "vt.cvtp", "step": 3, "loss": 0.5, "lr": 0.1}
    assert logs["logs"][3]["level"] == "error"

    text = run_logger.log_file.read_text()
    assert "[vt.events]" in text

    runs = get_available_runs(str(tmp_path))
    assert [run["run_id"] for run in runs] == ["unit"]
    assert runs[0]["run_summary"] == {"status": "failed"}
    assert runs[0]["event_counts"] == {"run_start": 1, "config_resolved": 1, "train_step": 1, "error": 1}


def test_component_loggers_follow_the_run_level(tmp_path):
    setup_logging("quiet", debug=False, log_dir=str(tmp_path))
    assert logging.getLogger("vt.diffusion").level == logging.INFO
    setup_logging("loud", debug=True, log_dir=str(tmp_path))
    assert logging.getLogger("vt.diffusion").level == logging.DEBUG


def test_no_runs_in_a_missing_directory(tmp_path):
    assert get_available_runs(str(tmp_path / "absent")) == []
