"""
Environment configuration module.

Provides functionality to load and validate environment variables
for yamabe-flow-lab using pydantic-settings.
"""

from pydantic import ValidationError

from core.constants import ENV_PREFIX
from models.env import EnvConfig

__all__ = [
    "EnvConfigError",
    "EnvConfig",
    "load_env",
]


class EnvConfigError(Exception):
    """Exception raised for environment configuration errors."""

    pass


def load_env() -> EnvConfig:
    """
    Load and validate environment variables.

    Uses pydantic-settings to automatically load configuration from
    environment variables and .env file.

    Returns:
        EnvConfig: Validated environment configuration object

    Raises:
        ValueError: If environment variables have invalid values
        EnvConfigError: For any other settings failure
    """
    try:
        return EnvConfig()
    except ValidationError as e:
        invalid = []
        for error in e.errors():
            field = error.get("loc", [None])[0]
            # threads -> YFL_THREADS
            env_var = f"{ENV_PREFIX}{str(field).upper()}" if field else "UNKNOWN"
            invalid.append(f"{env_var}: {error.get('msg', str(error))}")

        if invalid:
            raise ValueError(
                f"Invalid environment configuration: {'; '.join(invalid)}"
            ) from e

        raise EnvConfigError(f"Configuration error: {e}") from e
