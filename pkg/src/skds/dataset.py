"""Sample matrices with light provenance metadata, and their CSV form."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from skds.errors import InvalidInput


@dataclass
class Dataset:
    """``X`` is ``(N, d)``; ``env`` names the environment, ``targets`` its intervened variables."""

    X: np.ndarray
    env: str = "obs"
    targets: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise InvalidInput(f"dataset must be 2-D, got shape {X.shape}")
        self.X = X
        self.targets = tuple(int(t) for t in self.targets)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def __len__(self):
        return self.n


def to_csv_text(X) -> str:
    X = np.asarray(X, dtype=float)
    buf = io.StringIO()
    header = ",".join(f"x{i + 1}" for i in range(X.shape[1]))
    np.savetxt(buf, X, delimiter=",", header=header, comments="", fmt="%.17g")
    return buf.getvalue()


def write_csv(path, X):
    Path(path).write_text(to_csv_text(X))


def read_csv(path) -> np.ndarray:
    """Read a header-first CSV of floats; rejects ragged or non-numeric content."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidInput(f"{path}: empty file")
    d = len(lines[0].split(","))
    try:
        X = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    except ValueError as e:
        raise InvalidInput(f"{path}: {e}") from None
    if X.size == 0:
        X = np.zeros((0, d))
    if X.shape[1] != d:
        raise InvalidInput(f"{path}: header has {d} columns, rows have {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput(f"{path}: non-finite values")
    return X
