"""
Configuration management for ReadingTrace.

Values resolve in this order: command-line flag, environment variable,
settings file, built-in default.
"""

import os
import json
from typing import Dict, Any, Optional, Tuple
from dataclasses import dataclass


DEFAULT_STORE_URL = "http://localhost:8080"
DEFAULT_USER = "Test1"
DEFAULT_PASSWORD = "123456"
DEFAULT_DATA_DIR = os.path.join("~", ".dime")

ENV_PREFIX = "PEYE_"

# settings key -> environment variable suffix
ENV_KEYS = {
    "store_url": "STORE_URL",
    "user": "USER",
    "password": "PASSWORD",
    "data_dir": "DATA_DIR",
    "seed": "SEED",
    "eye_distance_cm": "EYE_DISTANCE_CM",
    "points_per_cm": "POINTS_PER_CM",
    "min_read_time": "MIN_READ_TIME",
    "max_read_time": "MAX_READ_TIME",
    "eyes_lost_threshold": "EYES_LOST_THRESHOLD",
    "log_level": "LOG_LEVEL",
}

NUMERIC_KEYS = {
    "eye_distance_cm": float,
    "points_per_cm": float,
    "min_read_time": float,
    "max_read_time": float,
    "eyes_lost_threshold": float,
    "seed": int,
}


def get_data_dir(path: Optional[str] = None) -> str:
    """Get the data directory path, creating it if needed."""
    data_dir = os.path.expanduser(path or os.environ.get(ENV_PREFIX + "DATA_DIR") or DEFAULT_DATA_DIR)
    os.makedirs(data_dir, exist_ok=True)
    return data_dir


@dataclass
class TimerSettings:
    """Reading-period timers, in seconds."""
    min_read_time: float = 2.0
    max_read_time: float = 60.0
    eyes_lost_threshold: float = 8.0


class ConfigManager:
    """Manages application configuration."""

    def __init__(self, settings_file: Optional[str] = None,
                 overrides: Optional[Dict[str, Any]] = None,
                 environ: Optional[Dict[str, str]] = None):
        self.settings_file = settings_file
        self._environ = dict(os.environ if environ is None else environ)
        self._data: Dict[str, Any] = {}
        self._overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        self.load()

    def load(self):
        """Load settings from file."""
        if self.settings_file is None:
            explicit = self._environ.get(ENV_PREFIX + "CONFIG")
            data_dir = self._overrides.get("data_dir") or self._environ.get(ENV_PREFIX + "DATA_DIR")
            if explicit:
                self.settings_file = os.path.expanduser(explicit)
            else:
                base = os.path.expanduser(data_dir or DEFAULT_DATA_DIR)
                self.settings_file = os.path.join(base, "settings.json")
        if os.path.exists(self.settings_file):
            try:
                with open(self.settings_file, "r", encoding="utf-8") as f:
                    self._data = json.load(f)
            except (json.JSONDecodeError, IOError):
                self._data = {}
        else:
            self._data = {}
        if not isinstance(self._data, dict):
            self._data = {}

    def save(self):
        """Save file-level settings (overrides and environment are not persisted)."""
        try:
            os.makedirs(os.path.dirname(self.settings_file) or ".", exist_ok=True)
            with open(self.settings_file, "w", encoding="utf-8") as f:
                json.dump(self._data, f, ensure_ascii=False, indent=2)
        except IOError as e:
            raise OSError(f"Error saving settings to {self.settings_file}: {e}") from e

    def get(self, key: str, default: Any = None) -> Any:
        """Get a setting value honoring flag > env > file > default."""
        if key in self._overrides:
            return self._overrides[key]
        env_name = ENV_KEYS.get(key)
        if env_name:
            raw = self._environ.get(ENV_PREFIX + env_name)
            if raw is not None and raw != "":
                return self._coerce(key, raw)
        if key in self._data:
            return self._data[key]
        return default

    def set(self, key: str, value: Any):
        """Set a file-level setting value."""
        self._data[key] = value

    def _coerce(self, key: str, raw: str) -> Any:
        cast = NUMERIC_KEYS.get(key)
        if cast is None:
            return raw
        try:
            return cast(raw)
        except ValueError as e:
            raise ValueError(f"{ENV_PREFIX}{ENV_KEYS[key]}={raw!r} is not a valid {cast.__name__}") from e

    def get_store_url(self) -> str:
        """Get the store base URL."""
        return str(self.get("store_url", DEFAULT_STORE_URL)).rstrip("/")

    def get_credentials(self) -> Tuple[str, str]:
        """Get HTTP Basic credentials."""
        return str(self.get("user", DEFAULT_USER)), str(self.get("password", DEFAULT_PASSWORD))

    def get_data_dir(self) -> str:
        """Get the store data directory (created on demand)."""
        return get_data_dir(self.get("data_dir", DEFAULT_DATA_DIR))

    def get_seed(self) -> Optional[int]:
        """Get the run seed, None for nondeterministic runs."""
        seed = self.get("seed")
        return None if seed is None else int(seed)

    def get_geometry(self):
        """Get the viewing geometry."""
        from core.geometry import ViewGeometry
        return ViewGeometry(
            points_per_cm=float(self.get("points_per_cm", ViewGeometry.points_per_cm)),
            eye_distance_cm=float(self.get("eye_distance_cm", ViewGeometry.eye_distance_cm)),
        )

    def get_timers(self) -> TimerSettings:
        """Get reading-period timer settings."""
        defaults = TimerSettings()
        return TimerSettings(
            min_read_time=float(self.get("min_read_time", defaults.min_read_time)),
            max_read_time=float(self.get("max_read_time", defaults.max_read_time)),
            eyes_lost_threshold=float(self.get("eyes_lost_threshold", defaults.eyes_lost_threshold)),
        )

    def get_log_level(self) -> str:
        """Get the logging level name."""
        return str(self.get("log_level", "WARNING")).upper()
