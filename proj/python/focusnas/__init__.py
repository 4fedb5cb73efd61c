"""Python front end for the focusnas core.

Architectures, configs and results are plain dicts in the same JSON shapes the
CLI reads and writes.
"""

import json

from . import _focusnas

__all__ = ["Error", "cost", "describe", "resolve_config", "train", "search", "sample", "make_dataset"]


class Error(Exception):
    """A core failure; ``code`` is the stable error code, e.g. ``budget_infeasible``."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def _call(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except _focusnas.Error as e:
        code, message = e.args
        raise Error(code, message) from None


def _text(value):
    return value if isinstance(value, str) else json.dumps(value)


def cost(arch, space=None, image_size=0):
    """Exact MACs and parameter count of ``arch``."""
    return json.loads(_call(_focusnas.cost, _text(arch), _text(space) if space else "", image_size))


def describe(arch, space=None, image_size=0):
    """Block-by-block table with cumulative MACs."""
    return _call(_focusnas.describe, _text(arch), _text(space) if space else "", image_size)


def resolve_config(config, base_dir=""):
    """The config with every default filled in, after validation."""
    return json.loads(_call(_focusnas.resolve_config, _text(config), str(base_dir)))


def train(config, base_dir=""):
    """Trains per ``config`` and returns the output directory and event count."""
    return json.loads(_call(_focusnas.train, _text(config), str(base_dir)))


def search(run_dir, budget, method="", candidates=0, seed=0):
    """Searches a trained run for the best sub-network within ``budget``."""
    return json.loads(_call(_focusnas.search, str(run_dir), float(budget), method, candidates, seed))


def sample(run_dir, budget, count, seed=0):
    """Draws ``count`` architectures from a run's sampler for ``budget``."""
    return json.loads(_call(_focusnas.sample, str(run_dir), float(budget), count, seed))


def make_dataset(path, num_classes=10, size=24, count=2000, task_seed=0, noise=0.2, seed=0):
    """Writes a synthetic FFDS1 dataset to ``path``."""
    return json.loads(_call(_focusnas.make_dataset, str(path), num_classes, size, count, task_seed, noise, seed))
