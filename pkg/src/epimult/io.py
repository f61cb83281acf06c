"""CSV and JSON plumbing for the command-line interface.

Observation CSVs are sparse: one row per reported entry with columns
``t,i,j,y,q`` (transition counts) or ``t,i,y,q`` (compartment counts).
Indices are 1-based. Absent rows are missing data, i.e. ``y = 0, q = 0``.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .core import ConfigError
from .filtering import ObsX, ObsZ
from .simulate import LatentTrajectory


class DataError(ValueError):
    """Malformed or inconsistent input file."""


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def write_obs_csv(path, obs: ObsX | ObsZ) -> Path:
    """Write only entries with positive reporting probability."""
    if isinstance(obs, ObsZ):
        idx = np.argwhere(obs.Q > 0)
        rows = ((t + 1, i + 1, j + 1, obs.Y[t, i, j], obs.Q[t, i, j]) for t, i, j in idx)
        return write_rows(path, ["t", "i", "j", "y", "q"], rows)
    idx = np.argwhere(obs.q > 0)
    rows = ((t + 1, i + 1, obs.y[t, i], obs.q[t, i]) for t, i in idx)
    return write_rows(path, ["t", "i", "y", "q"], rows)


def read_obs_csv(path, m: int, T: int | None = None) -> ObsX | ObsZ:
    """Parse a sparse observation file; `T` defaults to the largest ``t`` present."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except FileNotFoundError:
        raise DataError(f"observation file {path} not found") from None
    if set(header) == {"t", "i", "j", "y", "q"}:
        kind = "z"
    elif set(header) == {"t", "i", "y", "q"}:
        kind = "x"
    else:
        raise DataError(f"{path}: expected columns t,i,j,y,q or t,i,y,q; got {header}")
    try:
        parsed = [{k: (float(v) if k == "q" else int(v)) for k, v in r.items()} for r in rows]
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: unparsable row ({exc})") from None
    if T is None:
        T = max((r["t"] for r in parsed), default=0)
    shape = (T, m, m) if kind == "z" else (T, m)
    y = np.zeros(shape, dtype=np.int64)
    q = np.zeros(shape)
    seen = set()
    for r in parsed:
        key = (r["t"] - 1, r["i"] - 1) + ((r["j"] - 1,) if kind == "z" else ())
        if not all(0 <= k < s for k, s in zip(key, shape)):
            raise DataError(f"{path}: index {tuple(k + 1 for k in key)} outside shape {shape}")
        if key in seen:
            raise DataError(f"{path}: duplicate row for {tuple(k + 1 for k in key)}")
        if r["y"] < 0 or not 0.0 <= r["q"] <= 1.0:
            raise DataError(f"{path}: need y >= 0 and 0 <= q <= 1 (row {r})")
        seen.add(key)
        y[key] = r["y"]
        q[key] = r["q"]
    return ObsZ(y, q) if kind == "z" else ObsX(y, q)


def write_latent_csv(path, traj: LatentTrajectory, names) -> Path:
    rows = ((t, *traj.x[t]) for t in range(traj.T + 1))
    return write_rows(path, ["t", *names], rows)


def write_transitions_csv(path, traj: LatentTrajectory) -> Path:
    idx = np.argwhere(traj.z > 0)
    rows = ((t + 1, i + 1, j + 1, traj.z[t, i, j]) for t, i, j in idx)
    return write_rows(path, ["t", "i", "j", "z"], rows)


def read_csv_columns(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        cols = {k: [] for k in reader.fieldnames or []}
        for r in reader:
            for k, v in r.items():
                cols[k].append(v)
    out = {}
    for k, v in cols.items():
        try:
            out[k] = np.array(v, dtype=float)
        except ValueError:
            out[k] = np.array(v)
    return out


# ---------------------------------------------------------------------------
# JSON


def _jsonable(obj: Any):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def load_config(path) -> dict:
    """Read a run config. A manifest written by a previous run is accepted too."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "manifest_version" in data:
        return dict(data["config"])
    return data


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
