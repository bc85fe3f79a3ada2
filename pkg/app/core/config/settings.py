import json
from pathlib import Path
from typing import Optional, Union

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.errors import ConfigError


class Settings(BaseSettings):
    """
    Centralized configuration management using Pydantic.
    Validates environment variables and provides defaults.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=False,
        populate_by_name=True,
        # Ignore unrelated variables from the environment / .env
        extra="ignore",
    )

    # Core settings
    app_name: str = "twinmesh edge twin service"
    environment: str = Field(default="development", alias="TWINMESH_ENV")
    debug: bool = Field(default=False, alias="TWINMESH_DEBUG")
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_json: bool = Field(default=False, alias="TWINMESH_LOG_JSON")

    # Declarative files
    rules_file: Optional[str] = Field(default=None, alias="TWINMESH_RULES_FILE")
    policy_file: Optional[str] = Field(default=None, alias="TWINMESH_POLICY_FILE")
    credentials_file: Optional[str] = Field(default=None, alias="TWINMESH_CREDENTIALS_FILE")
    devices_file: Optional[str] = Field(default=None, alias="TWINMESH_DEVICES_FILE")

    # Twin lifecycle
    idle_threshold_ms: int = Field(default=60_000, gt=0, alias="TWINMESH_IDLE_THRESHOLD_MS")
    reap_interval_s: float = Field(default=10.0, gt=0, alias="TWINMESH_REAP_INTERVAL_S")
    max_twins_per_device: int = Field(default=1024, gt=0, alias="TWINMESH_MAX_TWINS_PER_DEVICE")

    # Transport
    max_payload_bytes: int = Field(default=256 * 1024, gt=0, alias="TWINMESH_MAX_PAYLOAD_BYTES")
    shadow_qos: int = Field(default=1, ge=0, le=1, alias="TWINMESH_SHADOW_QOS")
    max_redeliveries: int = Field(default=3, ge=0, alias="TWINMESH_MAX_REDELIVERIES")

    # External MQTT 5.0 broker bridge
    mqtt_enabled: bool = Field(default=False, alias="TWINMESH_MQTT_ENABLED")
    mqtt_host: str = Field(default="localhost", alias="TWINMESH_MQTT_HOST")
    mqtt_port: int = Field(default=1883, alias="TWINMESH_MQTT_PORT")
    mqtt_username: Optional[str] = Field(default=None, alias="TWINMESH_MQTT_USERNAME")
    mqtt_password: Optional[str] = Field(default=None, alias="TWINMESH_MQTT_PASSWORD")
    mqtt_client_id: str = Field(default="twinmesh-edge", alias="TWINMESH_MQTT_CLIENT_ID")
    mqtt_connect_attempts: int = Field(default=5, ge=1, alias="TWINMESH_MQTT_CONNECT_ATTEMPTS")

    # HTTP surface
    http_host: str = Field(default="127.0.0.1", alias="TWINMESH_HTTP_HOST")
    http_port: int = Field(default=8080, alias="TWINMESH_HTTP_PORT")

    # Benchmarks
    bench_trials: int = Field(default=500, ge=1, alias="TWINMESH_BENCH_TRIALS")
    bench_device_timeout_ms: int = Field(default=5_000, gt=0, alias="TWINMESH_BENCH_DEVICE_TIMEOUT_MS")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "Settings":
        """Load an environment JSON (config/environments/*.json) over the defaults."""
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}")

        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must contain a JSON object")

        unknown = sorted(set(data) - set(cls.model_fields))
        if unknown:
            raise ConfigError(f"Unknown settings in {path}: {unknown}")

        # Relative file references resolve against the config file's directory
        base = path.parent
        for key in ("rules_file", "policy_file", "credentials_file", "devices_file"):
            value = data.get(key)
            if value and not Path(value).is_absolute():
                data[key] = str((base / value).resolve())

        try:
            return cls(**data)
        except ValidationError as e:
            raise ConfigError(f"Invalid settings in {path}: {e}")


# Global settings instance
settings = Settings()
