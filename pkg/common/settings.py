import os
from typing import Optional

# Defaults for tunables; every one can be overridden by an environment variable
# of the same name or by an explicit CLI value.
DEFAULTS = {
    "DVR_STEP": "0.05",
    "DVR_FRAG_K": "8",
    "DVR_TAU": "1e-8",
    "DVR_OPAQUE": "0.999",
    "DVR_EPS_SCALE": "1e-6",
    "DVR_NEWTON_ITERS": "10",
    "DVR_VERBOSE": "1",
    "DVR_OUTPUT_DIR": "output",
    "DVR_WORKERS": "1",
}


def get_setting(name: str, cli_value: Optional[object] = None) -> str:
    """Return the active value for a setting.

    Preference order:
    - Explicit CLI argument value if provided and non-empty
    - ENV var of the same name if set and non-empty
    - Otherwise, the built-in default
    """
    if cli_value is not None and str(cli_value).strip():
        return str(cli_value).strip()
    env_value = os.getenv(name, "").strip()
    if env_value:
        return env_value
    if name not in DEFAULTS:
        raise KeyError(f"Unknown setting: {name}")
    return DEFAULTS[name]


def get_float(name: str, cli_value: Optional[object] = None) -> float:
    raw = get_setting(name, cli_value)
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"Setting {name} is not a number: {raw!r}")


def get_int(name: str, cli_value: Optional[object] = None) -> int:
    raw = get_setting(name, cli_value)
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"Setting {name} is not an integer: {raw!r}")


def get_bool(name: str, cli_value: Optional[object] = None) -> bool:
    return get_setting(name, cli_value).lower() not in ("0", "false", "no", "off")


# Resolved once at import; modules read these as plain constants.
TAU = get_float("DVR_TAU")
OPAQUE_THRESHOLD = get_float("DVR_OPAQUE")
EPS_SCALE = get_float("DVR_EPS_SCALE")
NEWTON_ITERS = get_int("DVR_NEWTON_ITERS")
DEFAULT_STEP = get_float("DVR_STEP")
DEFAULT_FRAG_K = get_int("DVR_FRAG_K")
DEFAULT_WORKERS = get_int("DVR_WORKERS")
