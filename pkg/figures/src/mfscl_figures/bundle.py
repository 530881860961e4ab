"""Figure bundle loading: manifest parsing, role validation, CSV readers.

A bundle is a flat key = value manifest whose ``output.<role>`` entries
point at CSV files next to it.  Rendering consumes nothing else; the file
formats are the contract with the simulation side.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class RoleMissingError(Exception):
    """A CSV role required by the requested figure is absent."""


class BundleFormatError(Exception):
    """A bundle file exists but does not match its documented format."""


#: CSV roles required by each figure layout, with their documented headers.
REQUIRED_ROLES: dict[int, dict[str, str]] = {
    1: {
        "solution_left": "x,u_eps,m_eps,u_entropy",
        "solution_right": "x,u_eps,m_eps,u_entropy",
        "flow_left": "t,particle_id,position",
        "flow_right": "t,particle_id,position",
        "drift_left": "t,x,value",
        "drift_right": "t,x,value",
    },
    2: {
        "solution_left": "x,v_eps,m_eps,u_entropy",
        "solution_right": "x,v_eps,m_eps,u_entropy",
        "flow_left": "t,particle_id,position",
        "flow_right": "t,particle_id,position",
        "drift_left": "t,x,value",
        "drift_right": "t,x,value",
    },
    3: {
        "stats_compressive": "x,m_eps,mc_mean,mc_std",
        "samples_compressive": None,  # header: x,sample_0,...
        "stats_expansive": "x,m_eps,mc_mean,mc_std",
        "samples_expansive": None,
    },
    4: {
        "solution_left": "x,u_eps,m_eps,u_entropy",
        "solution_right": "x,u_eps,m_eps,u_entropy",
    },
    5: {
        "solution_left": "x,v_eps,m_eps,u_entropy",
        "solution_right": "x,v_eps,m_eps,u_entropy",
    },
}


def read_manifest(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise BundleFormatError(f"manifest line without '=': {raw!r}")
        out[key.strip()] = val.strip()
    return out


@dataclass(frozen=True)
class FigureBundle:
    """Manifest plus resolved per-role CSV paths."""

    manifest_path: Path
    metadata: dict[str, str]
    roles: dict[str, Path] = field(default_factory=dict)

    @classmethod
    def load(cls, manifest_path) -> "FigureBundle":
        manifest_path = Path(manifest_path)
        entries = read_manifest(manifest_path)
        roles = {}
        metadata = {}
        for key, val in entries.items():
            if key.startswith("output."):
                roles[key[len("output."):]] = manifest_path.parent / val
            else:
                metadata[key] = val
        return cls(manifest_path=manifest_path, metadata=metadata, roles=roles)

    def validate(self, figure_id: int) -> None:
        """Every required role exists with its documented header."""
        required = REQUIRED_ROLES.get(figure_id)
        if required is None:
            raise BundleFormatError(f"unknown figure id {figure_id}")
        for role, header in required.items():
            path = self.roles.get(role)
            if path is None or not path.exists():
                raise RoleMissingError(f"bundle is missing role {role!r}")
            first = path.open(encoding="utf-8").readline().rstrip("\n")
            if header is not None and first != header:
                raise BundleFormatError(
                    f"role {role!r}: header {first!r} != expected {header!r}")
            if header is None and not first.startswith("x,"):
                raise BundleFormatError(f"role {role!r}: unexpected header {first!r}")

    def path(self, role: str) -> Path:
        if role not in self.roles:
            raise RoleMissingError(f"bundle is missing role {role!r}")
        return self.roles[role]


def read_columns(path: Path) -> dict[str, np.ndarray]:
    """Small CSV reader: named float columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = [[] for _ in header]
        for row in reader:
            for acc, cell in zip(cols, row):
                acc.append(float(cell))
    return {name: np.asarray(vals) for name, vals in zip(header, cols)}


def read_trajectories(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Pivot a t,particle_id,position dump to (times, positions[j, p])."""
    data = read_columns(path)
    times = np.unique(data["t"])
    ids = np.unique(data["particle_id"]).astype(int)
    pos = np.full((times.size, ids.size), np.nan)
    t_index = {t: j for j, t in enumerate(times)}
    p_index = {p: j for j, p in enumerate(ids)}
    for t, p, x in zip(data["t"], data["particle_id"], data["position"]):
        pos[t_index[t], p_index[int(p)]] = x
    if np.any(np.isnan(pos)):
        raise BundleFormatError(f"{path}: ragged trajectory table")
    return times, pos


def read_field(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pivot a t,x,value dump to (times, nodes, values[j, i])."""
    data = read_columns(path)
    times = np.unique(data["t"])
    nodes = np.unique(data["x"])
    vals = np.full((times.size, nodes.size), np.nan)
    t_index = {t: j for j, t in enumerate(times)}
    x_index = {x: i for i, x in enumerate(nodes)}
    for t, x, v in zip(data["t"], data["x"], data["value"]):
        vals[t_index[t], x_index[x]] = v
    if np.any(np.isnan(vals)):
        raise BundleFormatError(f"{path}: ragged field table")
    return times, nodes, vals
