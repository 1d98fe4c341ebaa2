"""Checkpoints, CSV tables, escape-time images, and config files.

Checkpoints are versioned JSON carrying the architecture, the flat parameter
vector in its documented order, and training metadata; a save/load round
trip reproduces network outputs bit for bit.  Escape masks are written as
plain-text PGM ("P2") with maxval equal to the iteration budget.  Config
files are flat ``key = value`` text; unknown keys are rejected.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import EscapeMask
from .errors import ArchitectureMismatchError, CheckpointError, ConfigError
from .model import KanNetwork, MlpNetwork, Network, _KanLayer
from .splines import KnotGrid

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, net: Network, training_meta: dict | None = None) -> None:
    if isinstance(net, KanNetwork):
        arch = {
            "widths": net.widths,
            "grid_size": net.layer1.grid.intervals,
            "order": net.layer1.grid.order,
            "input_range": [net.layer1.grid.lo, net.layer1.grid.hi],
            "hidden_range": [net.layer2.grid.lo, net.layer2.grid.hi],
        }
    else:
        arch = {"hidden_dim": net.hidden_dim}
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model": net.kind,
        "architecture": arch,
        "parameters": net.get_parameters().tolist(),
        "training": training_meta or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path: str | Path, expect_model: str | None = None,
                    expect_hidden: int | None = None) -> tuple[Network, dict]:
    """Rebuild the network a checkpoint describes.

    ``expect_model`` / ``expect_hidden`` let callers pin what they intend to
    load; a mismatch raises ArchitectureMismatchError before construction.
    """
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"checkpoint not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint is not valid JSON: {e}") from e
    for key in ("format_version", "model", "architecture", "parameters"):
        if key not in doc:
            raise CheckpointError(f"checkpoint missing field '{key}'")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported format_version {doc['format_version']}")
    kind = doc["model"]
    if expect_model is not None and kind != expect_model:
        raise ArchitectureMismatchError(f"expected model '{expect_model}', checkpoint has '{kind}'")
    arch = doc["architecture"]
    if kind == "kan":
        widths = arch["widths"]
        hidden = int(widths[1])
        if expect_hidden is not None and hidden != expect_hidden:
            raise ArchitectureMismatchError(
                f"expected hidden width {expect_hidden}, checkpoint has {hidden}")
        g = int(arch["grid_size"])
        k = int(arch["order"])
        g1 = KnotGrid(*arch["input_range"], g, k)
        g2 = KnotGrid(*arch["hidden_range"], g, k)
        m = g1.n_basis
        net: Network = KanNetwork(
            _KanLayer(2, hidden, g1, np.zeros((2, hidden, m)), np.zeros((2, hidden)),
                      np.zeros((2, hidden))),
            _KanLayer(hidden, 2, g2, np.zeros((hidden, 2, m)), np.zeros((hidden, 2)),
                      np.zeros((hidden, 2))),
        )
    elif kind == "mlp":
        net = MlpNetwork.create(hidden_dim=int(arch["hidden_dim"]))
    else:
        raise CheckpointError(f"unknown model kind '{kind}'")
    params = np.asarray(doc["parameters"], dtype=np.float64)
    if params.shape != (net.parameter_count,):
        raise CheckpointError(
            f"parameters: expected {net.parameter_count} values, found {params.size}")
    net.set_parameters(params)
    return net, doc.get("training", {})


@dataclass
class ResultTable:
    """Rectangular named-column table rendered as CSV with a header row."""

    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(list(values))

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_cell(v) for v in row])

    @classmethod
    def read(cls, path: str | Path) -> "ResultTable":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            rows = [[_uncell(v) for v in row] for row in r]
        return cls(columns=header, rows=rows)


def _cell(v):
    if isinstance(v, float):
        return repr(v)  # shortest round-trip decimal
    return v


def _uncell(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def write_pgm(path: str | Path, mask: EscapeMask) -> None:
    """Escape iteration counts as plain-text PGM, top row = highest y."""
    img = mask.iterations[::-1]
    lines = ["P2", f"{mask.nx} {mask.ny}", str(mask.max_iter)]
    for row in img:
        lines.append(" ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path: str | Path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if tokens[0] != "P2":
        raise ValueError("not a plain-text PGM file")
    nx, ny = int(tokens[1]), int(tokens[2])
    data = np.array([int(t) for t in tokens[4:4 + nx * ny]]).reshape(ny, nx)
    return data[::-1]


def parse_config_file(path: str | Path, known_keys: set[str]) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment; unknown keys rejected."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known_keys:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        out[key] = value
    return out
