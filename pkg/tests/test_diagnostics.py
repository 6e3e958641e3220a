"""Logger rendering (golden lines), sinks/levels, error stack and last-error."""

import numpy as np
import pytest

from chronos import diagnostics as diag
from chronos.diagnostics import (ChronosError, ErrCode, ErrorContext, Logger,
                                 LogRecord, render_record)


class TestRendering:
    def test_golden_scalar_line(self):
        record = LogRecord("INFO", "ARKodeEvolve", "begin-step-attempt",
                           {"step": 1, "tn": 0, "h": 0.000102986025609508})
        assert render_record(record, rank=0) == (
            "[INFO][rank 0][ARKodeEvolve][begin-step-attempt] "
            "step = 1, tn = 0, h = 0.000102986025609508")

    def test_golden_vector_block(self):
        record = LogRecord("DEBUG", "arkStep_TakeStep_Z", "explicit stage",
                           {"z_0": np.array([1.224744871391589,
                                             1.732050807568877])})
        assert render_record(record, rank=0) == (
            "[DEBUG][rank 0][arkStep_TakeStep_Z][explicit stage] z_0(:) =\n"
            " 1.224744871391589e+00\n"
            " 1.732050807568877e+00")

    def test_rerender_is_byte_identical(self):
        records = [
            LogRecord("INFO", "scope", "label", {"a": 1, "b": 0.1, "c": -3.5e-9}),
            LogRecord("WARNING", "w", "l", {"x": 12345678901234567.0}),
            LogRecord("DEBUG", "d", "vec", {"v": np.linspace(0, 1, 5)}),
        ]
        first = [render_record(r) for r in records]
        second = [render_record(r) for r in records]
        assert first == second

    def test_scalar_format_shortest_roundtrip(self):
        assert diag._format_scalar(0.1) == "0.1"
        assert diag._format_scalar(0.0) == "0"
        assert diag._format_scalar(1) == "1"
        assert diag._format_scalar(True) == "1"
        # capped at 15 significant digits
        assert len(diag._format_scalar(np.pi).replace("-", "").replace(".", "")) <= 15

    def test_machine_readable_roundtrip(self):
        payload = {"step": 3, "tn": 0.25, "h": 1.5e-3}
        record = LogRecord("INFO", "Evolve", "begin-step-attempt", payload)
        line = render_record(record)
        head, _, rest = line.partition("] ")
        fields = head.lstrip("[").split("][")
        assert fields == ["INFO", "rank 0", "Evolve", "begin-step-attempt"]
        parsed = {}
        for chunk in rest.split(", "):
            key, _, value = chunk.partition(" = ")
            parsed[key] = float(value)
        assert parsed == {"step": 3.0, "tn": 0.25, "h": 1.5e-3}


class TestLogger:
    def test_level_sinks(self, tmp_path):
        info = tmp_path / "info.log"
        err = tmp_path / "err.log"
        logger = Logger(max_level="INFO",
                        sinks={"INFO": str(info), "ERROR": str(err)})
        logger.info("s", "l", a=1)
        logger.error("s", "boom", code=-1)
        logger.debug("s", "hidden", b=2)  # above enabled max level
        assert "a = 1" in info.read_text()
        assert "boom" in err.read_text()
        assert "hidden" not in info.read_text()

    def test_disabled_level_returns_success(self, tmp_path):
        logger = Logger(max_level="ERROR", sinks={"ERROR": str(tmp_path / "e.log")})
        code = logger.log(LogRecord("DEBUG", "s", "l", {"x": 1}))
        assert code.code == diag.SUCCESS

    def test_environment_configuration(self, tmp_path, monkeypatch):
        target = tmp_path / "run.log"
        monkeypatch.setenv("CHRONOS_LOG_INFO", str(target))
        monkeypatch.setenv("CHRONOS_LOG_LEVEL", "INFO")
        logger = diag.logger_from_environment()
        logger.info("scope", "label", value=7)
        assert "value = 7" in target.read_text()

    def test_environment_default_is_error_only(self, monkeypatch):
        for lv in ("ERROR", "WARNING", "INFO", "DEBUG", "LEVEL"):
            monkeypatch.delenv(f"CHRONOS_LOG_{lv}", raising=False)
        logger = diag.logger_from_environment()
        assert logger.max_level == "ERROR"
        assert logger.enabled("ERROR") and not logger.enabled("WARNING")

    def test_environment_invalid_level(self, monkeypatch):
        monkeypatch.setenv("CHRONOS_LOG_LEVEL", "NOISY")
        ctx = diag.default_context()
        ctx.clear_last_error()
        logger = diag.logger_from_environment()
        assert logger.max_level == "ERROR"
        assert ctx.get_last_error().code == diag.ERR_INVALID_ARGUMENT

    def test_unwritable_sink_falls_back_to_stderr(self, capsys):
        logger = Logger(max_level="INFO",
                        sinks={"INFO": "/nonexistent-dir/x.log"})
        captured = capsys.readouterr()
        assert "cannot open log sink" in captured.err
        logger.info("s", "l", a=1)  # lands on the stderr fallback
        assert "a = 1" in capsys.readouterr().err


class TestErrorContext:
    def test_success_code_carries_no_message(self):
        with pytest.raises(ValueError):
            ErrCode(diag.SUCCESS, "should not be here")

    def test_counting_handler(self):
        ctx = ErrorContext()
        seen = []
        ctx.push_handler(lambda err: seen.append(err.code))
        for _ in range(3):
            ctx.record(ErrCode(-5, "x", "f", "m"))
        assert len(seen) == 3

    def test_handlers_run_newest_first(self):
        ctx = ErrorContext()
        order = []
        ctx.push_handler(lambda err: order.append("first-pushed"))
        ctx.push_handler(lambda err: order.append("second-pushed"))
        ctx.record(ErrCode(-1, "x", "f", "m"))
        assert order == ["second-pushed", "first-pushed"]

    def test_default_handler_logs_error_record(self, tmp_path, capsys):
        sink = tmp_path / "err.log"
        ctx = ErrorContext(Logger(max_level="ERROR", sinks={"ERROR": str(sink)}))
        ctx.record(ErrCode(-7, "something failed", "myfunc", "mymod"))
        text = sink.read_text()
        assert "[ERROR]" in text and "myfunc" in text

    def test_pop_restores_previous(self):
        ctx = ErrorContext()
        seen = []
        ctx.push_handler(lambda err: seen.append("a"))
        ctx.push_handler(lambda err: seen.append("b"))
        assert ctx.pop_handler().code == diag.SUCCESS
        ctx.record(ErrCode(-1, "x", "f", "m"))
        assert seen == ["a"]

    def test_pop_past_default_fails(self):
        ctx = ErrorContext()
        assert ctx.pop_handler().code == diag.ERR_HANDLER_STACK

    def test_last_error_read_clears(self):
        ctx = ErrorContext()
        assert ctx.get_last_error().code == diag.SUCCESS
        ctx.record(ErrCode(diag.ERR_DIMENSION_MISMATCH, "bad dims", "op", "core"))
        first = ctx.get_last_error()
        assert first.code == diag.ERR_DIMENSION_MISMATCH
        assert first.function == "op"
        assert ctx.get_last_error().code == diag.SUCCESS

    def test_error_in_vector_op_surfaces_via_last_error(self):
        from chronos.core import ToleranceSpec, wrms_norm
        ctx = diag.default_context()
        ctx.clear_last_error()
        with pytest.raises(ChronosError):
            wrms_norm(np.zeros(3), np.zeros(2), ToleranceSpec(1e-3, 1e-6))
        assert ctx.get_last_error().code == diag.ERR_DIMENSION_MISMATCH
        assert ctx.get_last_error().code == diag.SUCCESS
