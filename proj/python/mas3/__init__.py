"""Source-free domain adaptation for segmentation at desk scale.

Array functions take numpy arrays; pipeline functions take a flat config dict
with the same keys as the ``mas3`` command line (``tau``, ``projections``,
``adapt_iterations``, ``model_dir``, ...).
"""

from __future__ import annotations

import json
import os
from typing import Any, Mapping

from . import _mas3
from ._mas3 import (
    REPORT_SCHEMA,
    CorruptFile,
    DegenerateClass,
    Divergence,
    Error,
    InvalidInput,
    SamplingStarvation,
    UnsupportedInstance,
    ValidationError,
    exact_wasserstein,
    fit_mixture,
    miou,
    sliced_wasserstein,
    wasserstein_1d,
)

__all__ = [
    "REPORT_SCHEMA",
    "CorruptFile",
    "DegenerateClass",
    "Divergence",
    "Error",
    "InvalidInput",
    "SamplingStarvation",
    "UnsupportedInstance",
    "ValidationError",
    "adapt",
    "bound_check",
    "commands",
    "default_config",
    "evaluate",
    "exact_wasserstein",
    "fit_gmm",
    "fit_mixture",
    "gen_data",
    "generate_domain_pair",
    "miou",
    "report",
    "run",
    "sliced_wasserstein",
    "sweep",
    "train_source",
    "wasserstein_1d",
]


def _dump(config: Mapping[str, Any] | None) -> str:
    return json.dumps(dict(config or {}))


def default_config(**overrides: Any) -> dict:
    """Full run config with defaults, after applying ``overrides``."""
    return json.loads(_mas3.config_json(_dump(overrides)))


def commands() -> list[str]:
    return list(_mas3.command_names())


def generate_domain_pair(**config: Any) -> dict:
    """Source and target datasets as arrays: images N x W x H x 3, labels N x W x H."""
    return _mas3.generate_domain_pair(_dump(config))


def run(command: str, out_dir: str | os.PathLike, **config: Any) -> dict:
    """Runs a pipeline command and returns its JSON summary as a dict.

    The summary carries ``exit_code``: 0, or 2 when adaptation diverged or an
    exact-mode triangle check failed. Input errors raise ``ValidationError``.
    """
    text, code = _mas3.run_command(command, _dump(config), os.fspath(out_dir))
    summary = json.loads(text)
    summary["exit_code"] = code
    return summary


def gen_data(out_dir, **config) -> dict:
    return run("gen-data", out_dir, **config)


def train_source(out_dir, source_dir, **config) -> dict:
    return run("train-source", out_dir, source_dir=os.fspath(source_dir), **config)


def fit_gmm(out_dir, source_dir, model_dir, **config) -> dict:
    return run("fit-gmm", out_dir, source_dir=os.fspath(source_dir),
               model_dir=os.fspath(model_dir), **config)


def adapt(out_dir, model_dir, gmm_dir, target_dir, **config) -> dict:
    return run("adapt", out_dir, model_dir=os.fspath(model_dir), gmm_dir=os.fspath(gmm_dir),
               target_dir=os.fspath(target_dir), **config)


def evaluate(out_dir, model_dir, target_dir, **config) -> dict:
    return run("evaluate", out_dir, model_dir=os.fspath(model_dir),
               target_dir=os.fspath(target_dir), **config)


def bound_check(out_dir, model_dir, gmm_dir, target_dir, **config) -> dict:
    return run("bound-check", out_dir, model_dir=os.fspath(model_dir),
               gmm_dir=os.fspath(gmm_dir), target_dir=os.fspath(target_dir), **config)


def sweep(out_dir, param: str = "tau", values: str | None = None, **config) -> dict:
    if values is not None:
        config["values"] = values
    return run("sweep", out_dir, param=param, **config)


def report(out_dir, **config) -> dict:
    return run("report", out_dir, **config)
