"""Variance-reduced SGD with uniform q-memorization (SAGA, q-SAGA, SVRG,
N-SAGA, eps-N-SAGA) backed by the C++ core."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._core import (
    ConfigError,
    DataError,
    NumericalError,
    Problem,
    default_config,
    knn_children,
    load_libsvm,
    render_svg,
    synthesize,
    theory,
)
from ._core import run_trace as _run_trace

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "Problem",
    "Trace",
    "default_config",
    "knn_children",
    "load_libsvm",
    "run",
    "synthesize",
    "theory",
]


@dataclass
class Trace:
    csv: str
    diverged: bool = False
    message: str = ""
    rows: list = field(default_factory=list)

    @classmethod
    def from_csv(cls, text, diverged=False, message=""):
        rows = []
        for r in csv.DictReader(io.StringIO(text)):
            rows.append(
                {
                    "seed": int(r["seed"]),
                    "algorithm": r["algorithm"],
                    "datapoint_evals": int(r["datapoint_evals"]),
                    "gradient_evals": int(r["gradient_evals"]),
                    "suboptimality": float(r["suboptimality"]),
                    "wall_seconds": float(r["wall_seconds"]),
                }
            )
        return cls(text, diverged, message, rows)

    def algorithms(self):
        return list(dict.fromkeys(r["algorithm"] for r in self.rows))

    def mean_curve(self, algorithm):
        """(datapoint_evals, mean gradient_evals, mean suboptimality) arrays
        over seeds, one entry per checkpoint."""
        by_x = {}
        for r in self.rows:
            if r["algorithm"] == algorithm:
                by_x.setdefault(r["datapoint_evals"], []).append(r)
        xs = sorted(by_x)
        grads = [np.mean([r["gradient_evals"] for r in by_x[x]]) for x in xs]
        subs = [np.mean([r["suboptimality"] for r in by_x[x]]) for x in xs]
        return np.array(xs), np.array(grads), np.array(subs)

    def svg(self, x_axis="datapoint", title=""):
        return render_svg(self.csv, x_axis, title)


def run(overrides=None, text=""):
    """Run every seed of a configuration given as `key: value` overrides on
    top of the defaults (see default_config()) and/or config-file text."""
    str_overrides = {k: str(v) for k, v in (overrides or {}).items()}
    out, diverged, message = _run_trace(str_overrides, text)
    return Trace.from_csv(out, diverged, message)
