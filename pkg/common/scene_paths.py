import os
from typing import Optional, List, Tuple

from common.settings import get_setting

# Compute repo root (folder containing 'common', 'mesh', 'raytrace', etc.)
ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def output_dir_for(cli_dir: Optional[str] = None) -> str:
    """Absolute path to the output directory.

    - Explicit CLI value if given
    - ENV var DVR_OUTPUT_DIR if set
    - Otherwise ROOT/output
    """
    d = get_setting("DVR_OUTPUT_DIR", cli_dir)
    if not os.path.isabs(d):
        d = os.path.join(ROOT_DIR, d)
    return d


def output_path_for(filename: str, cli_dir: Optional[str] = None) -> str:
    """Absolute path for an output file; absolute filenames are returned unchanged."""
    if os.path.isabs(filename):
        return filename
    return os.path.join(output_dir_for(cli_dir), filename)


def ensure_dirs_for(path: str) -> None:
    """Ensure the parent directory for a file exists."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def read_manifest(manifest_path: str) -> List[Tuple[int, str]]:
    """Return [(rank, absolute cluster path)] from a scene manifest.

    One line per cluster: `<rank> <path>`. Relative paths resolve against the
    manifest's folder. Blank lines and '#' comments are skipped.
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    entries: List[Tuple[int, str]] = []
    with open(manifest_path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2 or not parts[0].isdigit():
                raise ValueError(f"{manifest_path}:{lineno}: expected '<rank> <path>', got {line!r}")
            rank, path = int(parts[0]), parts[1].strip()
            if not os.path.isabs(path):
                path = os.path.join(base, path)
            entries.append((rank, path))
    return entries


def write_manifest(manifest_path: str, entries: List[Tuple[int, str]]) -> None:
    """Write a scene manifest; paths inside the manifest's folder are stored relative."""
    ensure_dirs_for(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, "w", encoding="utf-8") as f:
        for rank, path in entries:
            p = os.path.abspath(path)
            if os.path.dirname(p) == base:
                p = os.path.basename(p)
            f.write(f"{rank} {p}\n")
