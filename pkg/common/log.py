import sys
from datetime import datetime

from common.settings import get_bool

# Verbose logging configuration
VERBOSE = get_bool("DVR_VERBOSE")


def set_verbose(enabled: bool) -> None:
    global VERBOSE
    VERBOSE = bool(enabled)


def log(tag: str, message: str, level: str = "INFO") -> None:
    """Print a tagged status line: [HH:MM:SS] [TAG] [LEVEL] message.

    WARN and ERROR lines are always printed; INFO/DEBUG only when verbose.
    """
    if not VERBOSE and level not in ("WARN", "ERROR"):
        return
    timestamp = datetime.now().strftime("%H:%M:%S")
    print(f"[{timestamp}] [{tag}] [{level}] {message}", flush=True)
    sys.stdout.flush()


_noted: set[str] = set()


def log_once(tag: str, key: str, message: str, level: str = "INFO") -> None:
    """Log a message only the first time `key` is seen in this process."""
    if key in _noted:
        return
    _noted.add(key)
    log(tag, message, level)
