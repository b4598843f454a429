"""Self-describing model checkpoints.

A checkpoint stores the architecture hyperparameters next to the weights,
so loading needs no out-of-band knowledge: the file alone reconstructs the
module.  ``kind`` separates prior and predictor files and is validated on
load.
"""

import torch

from .errors import CheckpointError

__all__ = ["save_checkpoint", "load_checkpoint"]

_FORMAT = "flowlab-checkpoint"
_VERSION = 1


def save_checkpoint(path, kind, arch, state_dict, extra=None):
    """``arch``: plain-python hyperparameter dict; ``extra``: optional
    training-state payload (optimizer state, rng state, step counter)."""
    torch.save(
        {
            "format": _FORMAT,
            "version": _VERSION,
            "kind": kind,
            "arch": dict(arch),
            "state": state_dict,
            "extra": {} if extra is None else extra,
        },
        path,
    )


def load_checkpoint(path, expect_kind=None):
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as e:
        raise CheckpointError(f"{path}: not a readable checkpoint ({e})") from e
    if not isinstance(payload, dict) or payload.get("format") != _FORMAT:
        raise CheckpointError(f"{path}: missing checkpoint format marker")
    if payload.get("version") != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    if expect_kind is not None and payload.get("kind") != expect_kind:
        raise CheckpointError(
            f"{path}: checkpoint kind is {payload.get('kind')!r}, expected {expect_kind!r}"
        )
    return payload
