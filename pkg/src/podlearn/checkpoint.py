"""Atomic JSON persistence for run state and model snapshots.

JSON keeps float64 values bit-exact: Python serializes every finite double
with its shortest round-tripping decimal form.
"""

from __future__ import annotations

import json
import os

from .backbone import Backbone
from .errors import FormatError
from .lsc import ProxyBank

RUN_CHECKPOINT_VERSION = 1


def save_json(path: str, obj: dict) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def save_model(path: str, backbone: Backbone, bank: ProxyBank) -> None:
    """Model snapshot: backbone parameters plus the classifier proxy bank."""
    save_json(path, {
        "version": RUN_CHECKPOINT_VERSION,
        "backbone": backbone.state(),
        "bank": bank.state(),
    })


def load_model(path: str) -> tuple[Backbone, ProxyBank]:
    blob = load_json(path)
    if blob.get("version") != RUN_CHECKPOINT_VERSION:
        raise FormatError(f"unsupported model checkpoint version {blob.get('version')}")
    return Backbone.from_state(blob["backbone"]), ProxyBank.from_state(blob["bank"])


def save_run_checkpoint(path: str, config_echo: dict, runner_state: dict) -> None:
    save_json(path, {
        "version": RUN_CHECKPOINT_VERSION,
        "config": config_echo,
        "runner": runner_state,
    })


def load_run_checkpoint(path: str) -> tuple[dict, dict]:
    blob = load_json(path)
    if blob.get("version") != RUN_CHECKPOINT_VERSION:
        raise FormatError(f"unsupported run checkpoint version {blob.get('version')}")
    return blob["config"], blob["runner"]
