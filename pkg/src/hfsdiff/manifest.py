"""Run manifests: full configuration, seeds, tool version and file digests."""
import hashlib
import json
import platform
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import IOFormatError, ParameterError
from .kernels import _accel

MANIFEST_NAME = "manifest.json"


def tool_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def digests(paths, root=None):
    out = {}
    for p in sorted(Path(p) for p in paths):
        key = str(p.relative_to(root)) if root is not None and p.is_relative_to(root) else str(p)
        out[key] = sha256(p)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_manifest(out_dir, command, config, inputs=(), outputs=(), extra=None):
    out_dir = Path(out_dir)
    doc = {
        "tool": "hfsdiff",
        "version": tool_version(),
        "command": command,
        "config": _jsonable(config),
        "seed": config.get("seed"),
        "backend": _accel.backend(),
        "numpy": np.__version__,
        "python": platform.python_version(),
        "inputs": digests(inputs),
        "outputs": digests(outputs, out_dir),
    }
    if extra:
        doc["extra"] = _jsonable(extra)
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load_config(path):
    """Config dict and its command name (``None`` for a bare options file)."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IOFormatError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ParameterError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParameterError(f"config {path} must hold a JSON object")
    if "config" in doc and "command" in doc:
        return dict(doc["config"]), doc["command"]
    return doc, None
