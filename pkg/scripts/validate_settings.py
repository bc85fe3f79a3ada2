#!/usr/bin/env python3
"""
Settings validation script: prints the resolved twinmesh configuration with
secrets masked and checks that every referenced declarative file exists and
parses.

    python scripts/validate_settings.py [config/environments/production.json]
"""

import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

SENSITIVE_PATTERNS = ("password", "secret", "token", "psk", "key")


def mask_sensitive_value(key: str, value) -> str:
    """Mask sensitive values based on key patterns."""
    if value is None or value == "":
        return "❌ NOT SET"
    if any(pattern in key.lower() for pattern in SENSITIVE_PATTERNS):
        if isinstance(value, str) and len(value) > 8:
            return f"{value[:2]}***{value[-2:]}"
        return "***[CONFIGURED]***"
    return str(value)


SETTING_GROUPS = {
    "Core": ["app_name", "environment", "debug", "log_level", "log_json"],
    "Files": ["rules_file", "policy_file", "credentials_file", "devices_file"],
    "Twins": ["idle_threshold_ms", "reap_interval_s", "max_twins_per_device"],
    "Transport": ["max_payload_bytes", "shadow_qos", "max_redeliveries"],
    "MQTT": [
        "mqtt_enabled",
        "mqtt_host",
        "mqtt_port",
        "mqtt_client_id",
        "mqtt_username",
        "mqtt_password",
        "mqtt_connect_attempts",
    ],
    "HTTP": ["http_host", "http_port"],
    "Benchmarks": ["bench_trials", "bench_device_timeout_ms"],
}


def print_settings(config) -> None:
    print(f"\n📋 Configuration ({config.environment}):")
    for group, keys in SETTING_GROUPS.items():
        print(f"\n   {group}:")
        for key in keys:
            print(f"     {key}: {mask_sensitive_value(key, getattr(config, key))}")


def check_files(config) -> bool:
    """Every configured file must exist and load."""
    from app.core.errors import ConfigError
    from app.devices import load_devices
    from app.security.policy import load_policy
    from app.security.principals import load_credentials
    from app.tags import load_rules

    loaders = {
        "rules_file": load_rules,
        "policy_file": load_policy,
        "credentials_file": load_credentials,
        "devices_file": load_devices,
    }

    print("\n📂 Declarative files:")
    ok = True
    for key, loader in loaders.items():
        path = getattr(config, key)
        if not path:
            print(f"   ⚠️ {key}: not configured")
            continue
        if not Path(path).exists():
            print(f"   ❌ {key}: {path} does not exist")
            ok = False
            continue
        try:
            loader(path)
            print(f"   ✅ {key}: {path}")
        except ConfigError as e:
            print(f"   ❌ {key}: {e}")
            ok = False

    if config.mqtt_enabled and config.mqtt_username and not config.mqtt_password:
        print("   ⚠️ mqtt_password: not set (TWINMESH_MQTT_PASSWORD)")
    return ok


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    print("🔒 TWINMESH CONFIGURATION VALIDATION")
    print("=" * 60)

    from app.core.config import Settings
    from app.core.errors import ConfigError

    try:
        config = Settings.from_file(argv[0]) if argv else Settings()
    except ConfigError as e:
        print(f"❌ {e}")
        return 2

    print_settings(config)
    files_ok = check_files(config)

    print(f"\n🏁 Overall Status: {'✅ READY' if files_ok else '❌ NEEDS ATTENTION'}")
    return 0 if files_ok else 2


if __name__ == "__main__":
    sys.exit(main())
