"""Pytest configuration and fixtures."""

import importlib
import logging

import numpy as np
import pytest

from core.conformal import make_background
from core.grid import coordinates, make_grid
from models.conformal import BackgroundKind
from models.grid import ScalarField

# Modules that bind setup_logger at import time
LOGGING_MODULES = (
    "core.conformal",
    "core.flow",
    "core.estimates",
    "core.expressions",
    "core.experiments",
    "core.storage",
    "core.cli",
)


@pytest.fixture(autouse=True)
def disable_file_logging(monkeypatch):
    """
    Disable file logging during tests to prevent test output pollution.

    This fixture automatically runs for all tests and prevents log files
    from being created or written to during test execution.
    """
    from core import logger as logger_module

    # Store original function
    original_setup_logger = logger_module.setup_logger

    def patched_setup_logger(name, level=None, log_to_file=True, log_to_console=True):
        # Always disable file logging in tests
        return original_setup_logger(
            name=name,
            level=level,
            log_to_file=False,
            log_to_console=log_to_console,
        )

    # Patch at the source module
    monkeypatch.setattr(logger_module, "setup_logger", patched_setup_logger)

    # Patch where it's imported in other modules, and drop cached loggers
    for module_name in LOGGING_MODULES:
        try:
            module = importlib.import_module(module_name)
        except ImportError:
            continue
        monkeypatch.setattr(module, "setup_logger", patched_setup_logger)
        if hasattr(module, "_logger"):
            monkeypatch.setattr(module, "_logger", None)

    # For config module, we need to create a patched _get_logger
    try:
        from core import config as config_module

        def patched_get_logger():
            # Always return a console-only logger
            logger = logging.getLogger("Config")
            if not logger.handlers:
                handler = logging.StreamHandler()
                handler.setFormatter(logging.Formatter(
                    fmt="%(asctime)s | %(name)-10s | %(levelname)-8s | %(message)s",
                    datefmt="%Y-%m-%d %H:%M:%S",
                ))
                logger.addHandler(handler)
                logger.setLevel(logging.INFO)
            return logger

        monkeypatch.setattr(config_module, "_get_logger", patched_get_logger)
    except (ImportError, AttributeError):
        pass


@pytest.fixture
def grid16():
    """Unit 3-torus with 16 nodes per axis."""
    return make_grid(3, 16, 1.0)


@pytest.fixture
def grid8():
    """Unit 3-torus with 8 nodes per axis."""
    return make_grid(3, 8, 1.0)


@pytest.fixture
def slab_grid():
    """Anisotropic unit 3-torus resolving x₁ only, for one-dimensional data."""
    return make_grid(3, [16, 8, 8], 1.0)


@pytest.fixture
def flat16(grid16):
    """Flat background on grid16."""
    return make_background(grid16, BackgroundKind.FLAT)


@pytest.fixture
def flat_slab(slab_grid):
    """Flat background on the slab grid."""
    return make_background(slab_grid, BackgroundKind.FLAT)


def sine_field(grid, amplitude, mode=1, base=1.0):
    """base + amplitude·sin(2π·mode·x₁/L₁)."""
    x1 = coordinates(grid)[0]
    return ScalarField(grid, base + amplitude * np.sin(2.0 * np.pi * mode * x1 / grid.periods[0]))
