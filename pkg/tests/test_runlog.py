"""Tests for src/logging/runlog.py: JSON run logging."""

import json
import logging
import sys

from src.logging.runlog import (
    ROOT_LOGGER,
    JSONFormatter,
    RunTimer,
    generate_run_id,
    get_run_logger,
    init_worker,
    run_id_var,
    setup_logging,
)


def _record(msg: str = "test") -> logging.LogRecord:
    return logging.LogRecord(
        name="maskcons.test", level=logging.INFO, pathname="",
        lineno=0, msg=msg, args=(), exc_info=None,
    )


class TestJSONFormatter:

    def test_output_is_valid_json(self):
        parsed = json.loads(JSONFormatter().format(_record("hello")))
        assert parsed["message"] == "hello"
        assert parsed["level"] == "INFO"
        assert parsed["logger"] == "maskcons.test"
        assert "timestamp" in parsed

    def test_includes_run_id(self):
        token = run_id_var.set("abc123def456")
        try:
            parsed = json.loads(JSONFormatter().format(_record()))
            assert parsed["run_id"] == "abc123def456"
        finally:
            run_id_var.reset(token)

    def test_empty_run_id_default(self):
        parsed = json.loads(JSONFormatter().format(_record()))
        assert parsed["run_id"] == ""

    def test_merges_run_data(self):
        record = _record()
        record.run_data = {"step": 100, "l_sup": 0.25}
        parsed = json.loads(JSONFormatter().format(record))
        assert parsed["step"] == 100
        assert parsed["l_sup"] == 0.25

    def test_non_json_values_stringified(self):
        record = _record()
        record.run_data = {"path": object()}
        parsed = json.loads(JSONFormatter().format(record))
        assert isinstance(parsed["path"], str)

    def test_process_id(self):
        record = _record()
        assert json.loads(JSONFormatter().format(record))["pid"] == record.process

    def test_exception_text(self):
        try:
            raise ValueError("boom")
        except ValueError:
            record = logging.LogRecord("maskcons.test", logging.ERROR, "", 0, "failed", (), sys.exc_info())
        parsed = json.loads(JSONFormatter().format(record))
        assert "ValueError: boom" in parsed["exception"]


class TestGenerateRunId:

    def test_length(self):
        assert len(generate_run_id()) == 12

    def test_uniqueness(self):
        assert len({generate_run_id() for _ in range(100)}) == 100

    def test_hex_chars_only(self):
        assert all(c in "0123456789abcdef" for c in generate_run_id())


class TestRunTimer:

    def test_measures_elapsed(self):
        with RunTimer() as timer:
            _ = sum(range(1000))
        assert timer.elapsed_s >= 0
        assert isinstance(timer.elapsed_s, float)


class TestRunLogger:

    def test_namespace(self):
        assert get_run_logger().name == ROOT_LOGGER
        assert get_run_logger("nn").name == "maskcons.nn"


class TestSetupLogging:

    def test_creates_stdout_handler(self, override_settings):
        override_settings(MASKCONS_LOG_FILE="")
        setup_logging()
        logger = get_run_logger()
        assert len(logger.handlers) == 1
        assert isinstance(logger.handlers[0], logging.StreamHandler)
        assert logger.propagate is False

    def test_idempotent(self, override_settings):
        override_settings(MASKCONS_LOG_FILE="")
        setup_logging()
        setup_logging()
        assert len(get_run_logger().handlers) == 1

    def test_file_handler(self, override_settings, tmp_path):
        log_file = tmp_path / "run.log"
        override_settings(MASKCONS_LOG_FILE=str(log_file), MASKCONS_LOG_LEVEL="DEBUG")
        setup_logging()
        try:
            logger = get_run_logger()
            assert logger.level == logging.DEBUG
            get_run_logger("test").info("written", extra={"run_data": {"k": 1}})
            for h in logger.handlers:
                h.flush()
            line = log_file.read_text().strip().splitlines()[-1]
            assert json.loads(line)["k"] == 1
        finally:
            for h in get_run_logger().handlers:
                h.close()
            get_run_logger().handlers.clear()


class TestInitWorker:

    def test_sets_run_id_and_handlers(self, override_settings):
        override_settings(MASKCONS_LOG_FILE="")
        token = run_id_var.set("")
        try:
            init_worker("feedbeef0001")
            assert run_id_var.get() == "feedbeef0001"
            assert len(get_run_logger().handlers) == 1
        finally:
            run_id_var.reset(token)
