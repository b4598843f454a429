"""Run manifests and flat key=value configuration handling.

Every artifact-producing command records what it did: the resolved config
snapshot (every key, no hidden defaults), seeds, the content hash of the
input dataset, artifact paths, and the metric summary.  Snapshots use the
same string syntax the config files use, so a manifest can be replayed by
writing its config back to a file and re-invoking the command.
"""

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import dataclass, field
from typing import Optional

from . import __version__

__all__ = [
    "RunManifest",
    "parse_config_file",
    "render_value",
    "build_config",
    "config_snapshot",
    "dataset_content_hash",
    "write_manifest",
    "load_manifest",
]

MANIFEST_NAME = "run_manifest.json"


def parse_config_file(path):
    """Flat key=value lines; blank lines and #-comments ignored."""
    out = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _coerce(value, typ):
    if isinstance(value, str):
        origin = typing.get_origin(typ)
        if typ is bool:
            low = value.lower()
            if low in ("1", "true", "yes"):
                return True
            if low in ("0", "false", "no"):
                return False
            raise ValueError(f"expected a boolean, got {value!r}")
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
        if typ is str:
            return value
        if origin is tuple:
            args = typing.get_args(typ)
            parts = [p for p in value.split(",") if p != ""]
            if len(args) == 2 and args[1] is Ellipsis:
                return tuple(_coerce(p, args[0]) for p in parts)
            if len(parts) != len(args):
                raise ValueError(f"expected {len(args)} comma-separated values, got {value!r}")
            return tuple(_coerce(p, a) for p, a in zip(parts, args))
        if origin is typing.Union:  # Optional[...]
            members = [a for a in typing.get_args(typ) if a is not type(None)]
            if value.lower() in ("none", ""):
                return None
            return _coerce(value, members[0])
        raise ValueError(f"unsupported config field type {typ}")
    return value


def known_keys(cls):
    """All settable field names of a config dataclass, nested ones flattened."""
    keys = {}
    for f in dataclasses.fields(cls):
        if dataclasses.is_dataclass(f.type):
            keys.update(known_keys(f.type))
        else:
            keys[f.name] = f.type
    return keys


def build_config(cls, flat):
    """Instantiate a (possibly nested) config dataclass from a flat dict of
    strings or already-typed values; unknown keys are the caller's to
    reject."""
    kwargs = {}
    for f in dataclasses.fields(cls):
        if dataclasses.is_dataclass(f.type):
            kwargs[f.name] = build_config(f.type, flat)
        elif f.name in flat:
            kwargs[f.name] = _coerce(flat[f.name], f.type)
    return cls(**kwargs)


def render_value(v):
    """Canonical string form, inverse of the config-file syntax."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(render_value(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def config_snapshot(*configs, **extras):
    """Flatten dataclass configs plus extra scalars into {key: string}."""
    snap = {}
    for cfg in configs:
        for f in dataclasses.fields(cfg):
            v = getattr(cfg, f.name)
            if dataclasses.is_dataclass(v):
                snap.update(config_snapshot(v))
            else:
                snap[f.name] = render_value(v)
    for k, v in extras.items():
        snap[k] = render_value(v)
    return snap


def dataset_content_hash(path):
    """sha256 over sorted data files (names and bytes); run manifests are
    excluded so hashing is stable across re-evaluation."""
    if not os.path.isdir(path):
        raise FileNotFoundError(f"dataset directory not found: {path}")
    h = hashlib.sha256()
    for name in sorted(os.listdir(path)):
        full = os.path.join(path, name)
        if not os.path.isfile(full) or name == MANIFEST_NAME:
            continue
        h.update(name.encode())
        h.update(b"\0")
        with open(full, "rb") as fh:
            h.update(fh.read())
        h.update(b"\1")
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict = field(default_factory=dict)
    dataset_path: Optional[str] = None
    dataset_hash: Optional[str] = None
    artifacts: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    version: str = __version__
    run_id: str = ""

    def __post_init__(self):
        if not self.run_id:
            basis = json.dumps(
                [self.command, self.config, self.dataset_hash], sort_keys=True
            ).encode()
            self.run_id = hashlib.sha256(basis).hexdigest()[:12]


def write_manifest(manifest, path):
    """path: a directory (uses the standard file name) or a full file path."""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path, "w") as fh:
        json.dump(dataclasses.asdict(manifest), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def load_manifest(path):
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path) as fh:
        data = json.load(fh)
    return RunManifest(**data)
