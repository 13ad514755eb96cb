"""Experiment plumbing: state library, configs, CSV reports and figures.

Everything the command-line driver needs that is not core numerics lives
here: building the reference states, parsing the flat key=value config
format, fitting the fidelity-variance scaling law, and writing delimited
reports (with a provenance comment line) plus matplotlib figures next to
them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .stabilizer import PauliString, StabilizerState, load_stabilizer_state

__all__ = [
    "ExperimentConfig",
    "ScalingFit",
    "build_state",
    "ghz_state",
    "cluster_state",
    "parse_config",
    "fit_variance_scaling",
    "write_csv",
    "read_table_csv",
]


def ghz_state(n: int) -> StabilizerState:
    """GHZ stabilizers: Z_i Z_{i+1} for i = 1..n-1 plus the full X string."""
    gens = [
        PauliString.from_label("I" * i + "ZZ" + "I" * (n - i - 2)) for i in range(n - 1)
    ]
    gens.append(PauliString.from_label("X" * n))
    return StabilizerState.from_generators(gens)


def cluster_state(n: int) -> StabilizerState:
    """Cluster stabilizers: cyclic Z_{i-1} X_i Z_{i+1}."""
    if n < 3:
        raise ValueError("cluster state needs n >= 3")
    gens = []
    for i in range(n):
        letters = ["I"] * n
        letters[(i - 1) % n] = "Z"
        letters[i] = "X"
        letters[(i + 1) % n] = "Z"
        gens.append(PauliString.from_label("".join(letters)))
    return StabilizerState.from_generators(gens)


def build_state(label: str, n: int) -> StabilizerState:
    """State library lookup: ghz | cluster | file:<path to STABSTATE v1>."""
    if label == "ghz":
        return ghz_state(n)
    if label == "cluster":
        return cluster_state(n)
    if label.startswith("file:"):
        state = load_stabilizer_state(label[5:])
        if state.n != n:
            raise ValueError(f"state file has n={state.n}, config says n={n}")
        return state
    raise ValueError(f"unknown state label {label!r}")


# ---------------------------------------------------------------------------
# config files: flat key=value text with a version key
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Parsed experiment configuration plus the verbatim text it came from."""

    values: dict
    text: str
    path: str = ""

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise KeyError(f"config missing required key {key!r}")
        return self.values[key]

    def get_int(self, key, default=None):
        v = self.get(key, default)
        return None if v is None else int(v)

    def get_float(self, key, default=None):
        v = self.get(key, default)
        return None if v is None else float(v)

    def get_ints(self, key, default=None):
        v = self.get(key, default)
        if v is None:
            return None
        if isinstance(v, (list, tuple)):
            return [int(x) for x in v]
        return [int(x) for x in str(v).split(",") if x != ""]

    def hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]


def parse_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    if values.get("version") != "1":
        raise ValueError(f"{path}: config must declare version=1")
    return ExperimentConfig(values, text, str(path))


# ---------------------------------------------------------------------------
# fidelity-variance scaling fit
# ---------------------------------------------------------------------------

@dataclass
class ScalingFit:
    """Fit of ln var F = const + c * n / (L+1)^alpha over (n, L) runs."""

    rows: list  # (n, L, var)
    c: float
    const: float
    alpha: float
    residuals: list = field(default_factory=list)

    def predicted(self, n, depth):
        return float(np.exp(self.const + self.c * n / (depth + 1) ** self.alpha))


def fit_variance_scaling(table, alpha: float = 0.72) -> ScalingFit:
    """Least-squares fit on log variance; needs at least two distinct points."""
    rows = [(int(n), int(l), float(v)) for n, l, v in table]
    if len(rows) < 2:
        raise ValueError("insufficient points for the scaling fit (need >= 2)")
    x = np.array([n / (l + 1) ** alpha for n, l, _ in rows])
    if np.allclose(x, x[0]):
        raise ValueError("insufficient points: all runs share n/(L+1)^alpha")
    y = np.log([v for _, _, v in rows])
    design = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fit = ScalingFit(rows, c=float(coef[1]), const=float(coef[0]), alpha=alpha)
    fit.residuals = [float(yy - (coef[0] + coef[1] * xx)) for xx, yy in zip(x, y)]
    return fit


# ---------------------------------------------------------------------------
# delimited reports
# ---------------------------------------------------------------------------

def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path, header, rows, provenance: str) -> None:
    """CSV with one provenance comment line, a header row, then data rows."""
    with open(path, "w") as fh:
        fh.write(f"# provenance: {provenance}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")


def read_table_csv(path):
    """Rows of a CSV written by write_csv, as a list of string tuples."""
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    return header, rows
