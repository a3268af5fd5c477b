"""Python access to the etcon core: judge, rewards, runs and checkpoints."""

import json

from . import _core
from ._core import ConfigError, Model, RunAborted, extract, grade, group_advantages, normalize, write_report

__all__ = [
    "ConfigError",
    "Model",
    "RunAborted",
    "default_config",
    "effective_config",
    "extract",
    "grade",
    "group_advantages",
    "normalize",
    "rewards",
    "run",
    "write_report",
]


def default_config():
    return json.loads(_core.default_config_json())


def effective_config(path="", overrides=()):
    return json.loads(_core.effective_config_json(str(path), list(overrides)))


def rewards(question, gold, text, old_answer="", length=0, truncated=False):
    return json.loads(_core.rewards_json(question, gold, text, old_answer, length, truncated))


def run(config, run_dir, overrides=(), fresh=False, stop_after=0):
    out = _core.run_json(str(config), str(run_dir), list(overrides), fresh, stop_after)
    return json.loads(out)
