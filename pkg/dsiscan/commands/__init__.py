import argparse
import json
import logging
import os
from typing import Any, Dict, List, Type

from pydantic import BaseModel

from dsiscan.errors import InputValidationError

STATUS_OK = "✅"
STATUS_SKIPPED = "⚠️ "
STATUS_FAILED = "❌"


def float_list(text: str) -> List[float]:
    """argparse type for comma-separated floats, e.g. `0.1,0.2,0.4`."""
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise InputValidationError(f"{path}: config file not found")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise InputValidationError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})")
    if not isinstance(data, dict):
        raise InputValidationError(f"{path}: config must be a JSON object")
    return data


def build_config(args: argparse.Namespace, model: Type[BaseModel]) -> BaseModel:
    """Flag > --config JSON > environment > default.

    Flags default to None so that only the ones given on the command line
    override the file; environment defaults live on the model itself.
    """
    values: Dict[str, Any] = read_config_file(args.config) if getattr(args, "config", None) else {}
    for name in model.model_fields:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return model(**values)


def apply_log_level(level: str) -> None:
    logging.getLogger().setLevel(level.upper())


def print_stage(name: str, ok: bool, message: str) -> None:
    marker = STATUS_OK if ok else STATUS_SKIPPED
    print(f"{marker} {name}: {message}")
