"""Tests for environment configuration module."""

import pytest

from core.env import load_env
from models.env import EnvConfig

_ENV_VARS = (
    "YFL_THREADS",
    "YFL_LOG_LEVEL",
    "YFL_LOG_TO_FILE",
    "YFL_LOG_MAX_SIZE_MB",
    "YFL_LOG_BACKUP_COUNT",
    "YFL_LOG_RETENTION_DAYS",
)


@pytest.fixture
def clean_env(monkeypatch):
    """Prevent pydantic-settings from reading .env and clear YFL_ variables.

    This fixture patches EnvConfig.model_config to disable .env file reading,
    ensuring tests only use environment variables set via monkeypatch.
    """
    patched_config = EnvConfig.model_config.copy()
    patched_config["env_file"] = None
    monkeypatch.setattr(EnvConfig, "model_config", patched_config)
    for name in _ENV_VARS:
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


class TestLoadEnv:
    """Tests for load_env function."""

    def test_defaults_without_variables(self, clean_env):
        """Test nothing is required and the defaults apply."""
        config = load_env()

        assert config.threads is None
        assert config.log_level == "INFO"
        assert config.log_to_file is True
        assert config.log_max_size_mb == 5
        assert config.log_backup_count == 5
        assert config.log_retention_days == 30

    def test_threads_read_with_prefix(self, clean_env):
        """Test YFL_THREADS sets the thread count."""
        clean_env.setenv("YFL_THREADS", "6")

        assert load_env().threads == 6

    def test_unprefixed_variable_ignored(self, clean_env):
        """Test a bare THREADS variable does not leak into the config."""
        clean_env.setenv("THREADS", "6")

        assert load_env().threads is None

    def test_empty_threads_is_unset(self, clean_env):
        """Test an empty YFL_THREADS means no override."""
        clean_env.setenv("YFL_THREADS", "  ")

        assert load_env().threads is None

    @pytest.mark.parametrize("raw", ["0", "257", "many"], ids=["zero", "too-many", "not-a-number"])
    def test_invalid_threads_names_the_variable(self, clean_env, raw):
        """Test invalid YFL_THREADS values raise ValueError naming the variable."""
        clean_env.setenv("YFL_THREADS", raw)

        with pytest.raises(ValueError) as exc_info:
            load_env()

        assert "Invalid environment configuration" in str(exc_info.value)
        assert "YFL_THREADS" in str(exc_info.value)

    @pytest.mark.parametrize("raw", ["1", "256"], ids=["minimum", "maximum"])
    def test_threads_bounds_accepted(self, clean_env, raw):
        """Test the inclusive YFL_THREADS bounds are accepted."""
        clean_env.setenv("YFL_THREADS", raw)

        assert load_env().threads == int(raw)


class TestLogConfigEnvVars:
    """Tests for logging configuration environment variables."""

    def test_log_level_normalized(self, clean_env):
        """Test YFL_LOG_LEVEL is case-insensitive and stripped."""
        clean_env.setenv("YFL_LOG_LEVEL", " debug ")

        assert load_env().log_level == "DEBUG"

    def test_log_level_invalid_raises(self, clean_env):
        """Test an unknown YFL_LOG_LEVEL raises ValueError."""
        clean_env.setenv("YFL_LOG_LEVEL", "VERBOSE")

        with pytest.raises(ValueError) as exc_info:
            load_env()

        assert "YFL_LOG_LEVEL" in str(exc_info.value)

    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("1", True),
            ("true", True),
            ("YES", True),
            ("on", True),
            ("0", False),
            ("false", False),
            ("No", False),
            ("off", False),
            ("", False),
        ],
        ids=["1", "true", "yes-upper", "on", "0", "false", "no-mixed", "off", "empty"],
    )
    def test_log_to_file_parsing(self, clean_env, raw, expected):
        """Test YFL_LOG_TO_FILE accepts the documented boolean spellings."""
        clean_env.setenv("YFL_LOG_TO_FILE", raw)

        assert load_env().log_to_file is expected

    def test_log_to_file_invalid_raises(self, clean_env):
        """Test an unrecognized YFL_LOG_TO_FILE value raises ValueError."""
        clean_env.setenv("YFL_LOG_TO_FILE", "maybe")

        with pytest.raises(ValueError) as exc_info:
            load_env()

        assert "YFL_LOG_TO_FILE" in str(exc_info.value)

    def test_rotation_settings_custom(self, clean_env):
        """Test rotation and retention settings are read."""
        clean_env.setenv("YFL_LOG_MAX_SIZE_MB", "10")
        clean_env.setenv("YFL_LOG_BACKUP_COUNT", "2")
        clean_env.setenv("YFL_LOG_RETENTION_DAYS", "365")

        config = load_env()

        assert config.log_max_size_mb == 10
        assert config.log_backup_count == 2
        assert config.log_retention_days == 365

    @pytest.mark.parametrize(
        "name,raw",
        [
            ("YFL_LOG_MAX_SIZE_MB", "0"),
            ("YFL_LOG_BACKUP_COUNT", "51"),
            ("YFL_LOG_RETENTION_DAYS", "366"),
        ],
        ids=["size-below-minimum", "backups-above-maximum", "retention-above-maximum"],
    )
    def test_out_of_range_raises(self, clean_env, name, raw):
        """Test out-of-range rotation settings name their variable."""
        clean_env.setenv(name, raw)

        with pytest.raises(ValueError) as exc_info:
            load_env()

        assert name in str(exc_info.value)

    def test_dotenv_file_is_read(self, monkeypatch, tmp_path):
        """Test values from a .env file in the working directory are picked up."""
        for name in _ENV_VARS:
            monkeypatch.delenv(name, raising=False)
        (tmp_path / ".env").write_text("YFL_THREADS=3\nYFL_LOG_LEVEL=warning\n")
        monkeypatch.chdir(tmp_path)

        config = load_env()

        assert config.threads == 3
        assert config.log_level == "WARNING"
