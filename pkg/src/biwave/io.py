"""Files: checkpoints (npz), field snapshots (CSV), run summaries (JSON).

Checkpoints store u, u_t and t as float64 arrays plus a JSON metadata block
(config echo, config hash, eps, step counters, monitor integrals), so a
load/save round trip is bit-exact and a run can continue from one.
"""

import json
import os
import platform
from dataclasses import dataclass, field

import numpy as np

from .evolver import State

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    state: State
    meta: dict = field(default_factory=dict)
    monitor: dict | None = None
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, state, meta=None, monitor=None, extra=None):
    """Write state, Monitor.state_dict() and extra named arrays atomically."""
    meta = dict(meta or {})
    meta["format_version"] = FORMAT_VERSION
    arrays = {"u": np.asarray(state.u, dtype=float), "u_t": np.asarray(state.u_t, dtype=float),
              "t": np.array(state.t, dtype=float)}
    if monitor is not None:
        meta["monitor_scalars"] = monitor["scalars"]
        meta["monitor_prev"] = monitor["prev"]
        if monitor["u0"] is not None:
            arrays["monitor_u0"] = monitor["u0"]
    for name, value in (extra or {}).items():
        arrays[f"extra_{name}"] = np.asarray(value)
    arrays["meta"] = np.array(json.dumps(meta))
    tmp = f"{path}.tmp.npz"
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        state = State(data["u"].copy(), data["u_t"].copy(), float(data["t"]))
        monitor = None
        if "monitor_scalars" in meta:
            monitor = {
                "scalars": meta.pop("monitor_scalars"),
                "prev": meta.pop("monitor_prev"),
                "u0": data["monitor_u0"].copy() if "monitor_u0" in data else None,
            }
        extra = {name[6:]: data[name].copy() for name in data.files if name.startswith("extra_")}
    return Checkpoint(state, meta, monitor, extra)


def write_field_csv(path, grid, f):
    """Snapshot of an (L, *grid.shape) field: one row per grid point, row-major in axis order."""
    f = np.asarray(f, dtype=float)
    L = f.shape[0]
    rows = f.reshape(L, -1).T
    header = f"n={grid.dim} M={grid.points} period={grid.period!r} L={L}\n" + ",".join(f"c{i}" for i in range(L))
    np.savetxt(path, rows, delimiter=",", header=header, fmt="%.17g")


def read_field_csv(path):
    """Inverse of write_field_csv: returns (meta dict, field array)."""
    with open(path) as fh:
        first = fh.readline().lstrip("# ").split()
    meta = {key: value for key, value in (item.split("=") for item in first)}
    n, M, L = int(meta["n"]), int(meta["M"]), int(meta["L"])
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    field_ = rows.T.reshape((L,) + (M,) * n)
    return {"n": n, "M": M, "period": float(meta["period"]), "L": L}, field_


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, payload):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def environment_info():
    import scipy

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}
