"""Python access to the fredse estimators, simulation driver and report."""

import io
import json

import numpy as np

from . import _core
from ._core import ConfigError, Error, IoError, NumericError, ParseError, ShapeError, example_names

__all__ = [
    "ConfigError", "Error", "IoError", "NumericError", "ParseError", "ShapeError",
    "canonical_config", "estimate", "example_names", "generate", "report", "simulate", "solve", "trace",
]


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def canonical_config(config):
    """Config with every default filled in, as a dict."""
    return json.loads(_core.canonical_config(_text(config)))


def generate(example, n, seed):
    """Simulated data: (observed, truth), each a dict of column name -> numpy array."""
    observed, truth = _core.generate(example, n, seed)
    as_np = lambda cols: {k: np.asarray(v) for k, v in cols.items()}
    return as_np(observed), as_np(truth)


def estimate(config, rep=0):
    return json.loads(_core.estimate(_text(config), rep))


def simulate(config, as_frame=False):
    """CSV text of the sweep, or a pandas DataFrame when as_frame is set."""
    csv = _core.simulate(_text(config))
    if not as_frame:
        return csv
    import pandas as pd

    return pd.read_csv(io.StringIO(csv), na_values=["NA"])


def trace(config):
    return _core.trace(_text(config))


def report(csv_text):
    return json.loads(_core.report(csv_text))


def solve(problem, solver="neural", steps=5000, lr=1e-3, nodes=200, seed=0):
    return json.loads(_core.solve(problem, solver, steps, lr, nodes, seed))
