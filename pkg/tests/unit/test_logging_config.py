"""Unit tests for logging configuration."""
import io
import logging

import pytest

from app.core.exceptions import ConfigError
from app.core.logging_config import ProgressAwareHandler, get_logger, resolve_level, setup_logging

pytestmark = pytest.mark.unit


@pytest.fixture
def restore_root():
    root = logging.getLogger()
    level, handlers = root.level, root.handlers[:]
    yield root
    for handler in root.handlers[:]:
        if handler not in handlers:
            root.removeHandler(handler)
    root.setLevel(level)


class TestResolveLevel:
    """Tests for resolve_level."""

    def test_case_insensitive(self):
        """Test level names are matched ignoring case."""
        assert resolve_level("debug") == logging.DEBUG
        assert resolve_level("WARNING") == logging.WARNING

    def test_unknown_level(self):
        """Test an unknown name raises ConfigError naming log_level."""
        with pytest.raises(ConfigError) as exc_info:
            resolve_level("chatty")

        assert exc_info.value.details["key"] == "log_level"


class TestSetupLogging:
    """Tests for setup_logging."""

    def test_writes_to_stream(self, restore_root):
        """Test records reach the given stream in the lab format."""
        stream = io.StringIO()
        setup_logging("INFO", stream=stream)
        get_logger("app.tests").info("hello")

        line = stream.getvalue().strip()
        assert line.endswith("| hello")
        assert "| INFO     | app.tests:" in line

    def test_level_filters(self, restore_root):
        """Test records below the level are dropped."""
        stream = io.StringIO()
        setup_logging("WARNING", stream=stream)
        get_logger("app.tests").info("quiet")

        assert stream.getvalue() == ""

    def test_repeated_setup_keeps_one_handler(self, restore_root):
        """Test calling setup twice leaves a single lab handler."""
        setup_logging("INFO", stream=io.StringIO())
        setup_logging("DEBUG", stream=io.StringIO())

        ours = [h for h in restore_root.handlers if isinstance(h, ProgressAwareHandler)]
        assert len(ours) == 1
        assert restore_root.level == logging.DEBUG
