"""Flat binary containers for profile sets and reference solutions.

One file = one JSON header + concatenated raw float64 blocks:

    bytes 0..7    magic  b"POBC0001"
    bytes 8..15   header length H (little-endian uint64)
    bytes 16..    H bytes of UTF-8 JSON
    then          array payloads, C-order, at the offsets the header lists

The header's "arrays" table carries name/shape/dtype/offset per block, and
the "meta" object carries whatever the writer wants to persist (grid spec,
system matrices, convergence log).  Profile sets do not persist their phase
table directly: the system matrices and beta are stored instead, and the
loader rebuilds the table with phase_table, whose eigenvector tie-breaking
is deterministic.  That keeps the container free of derived quantities that
could drift out of sync with the code.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .hyperbolic import SystemSpec, phase_table
from .profiles import GridSpec, ProfileSet
from .exact import FineGrid, FineSolution

__all__ = [
    "convergence_csv",
    "load_profiles",
    "load_solution",
    "read_container",
    "residual_csv",
    "save_profiles",
    "save_solution",
    "write_container",
]

MAGIC = b"POBC0001"


def write_container(path, meta: dict, arrays: dict) -> None:
    """Write {name: ndarray} plus a JSON meta object to one flat file."""
    path = Path(path)
    table = []
    offset = 0
    blocks = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        table.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": str(arr.dtype),
                "offset": offset,
            }
        )
        blocks.append(arr)
        offset += arr.nbytes
    header = json.dumps({"meta": meta, "arrays": table}, default=float).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for arr in blocks:
            fh.write(arr.tobytes())


def read_container(path):
    """Inverse of write_container: (meta, {name: ndarray})."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path} is not a profile/solution container")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        base = fh.tell()
        arrays = {}
        for entry in header["arrays"]:
            fh.seek(base + entry["offset"])
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.fromfile(fh, dtype=dtype, count=count)
            arrays[entry["name"]] = data.reshape(shape)
    return header["meta"], arrays


# ---------------------------------------------------------------------------
# profile sets


def _spec_to_meta(spec: SystemSpec) -> dict:
    return {
        "A": spec.A.tolist(),
        "dA": spec.dA.tolist(),
        "B0": spec.B0.tolist(),
        "S0": spec.S0.tolist(),
        "dB": None if spec.dB is None else np.asarray(spec.dB).tolist(),
    }


def _spec_from_meta(m: dict) -> SystemSpec:
    return SystemSpec(
        A=np.asarray(m["A"], dtype=float),
        dA=np.asarray(m["dA"], dtype=float),
        B0=np.asarray(m["B0"], dtype=float),
        S0=np.asarray(m["S0"], dtype=float),
        dB=None if m["dB"] is None else np.asarray(m["dB"], dtype=float),
    )


def save_profiles(ps: ProfileSet, path, spec: SystemSpec) -> None:
    """Persist one profile iterate (values + rebuild recipe, no table)."""
    g = ps.grid
    meta = {
        "kind": "profiles",
        "system": _spec_to_meta(spec),
        "beta": list(np.asarray(ps.table.beta, dtype=float)),
        "grid": {"T": g.T, "X": g.X, "nt": g.nt, "nx": g.nx,
                 "ntheta": g.ntheta, "theta_max": g.theta_max},
        "modes": [
            {"comp": c, "slope": f.slope, "incoming": bool(f.incoming)}
            for c, f in sorted(ps.fields.items())
        ],
        "convergence": ps.convergence,
        "converged": bool(ps.converged),
    }
    arrays = {f"values_{c}": ps.fields[c].values for c in sorted(ps.fields)}
    write_container(path, meta, arrays)


def load_profiles(path) -> tuple:
    """Rebuild (spec, ProfileSet) from a container written by save_profiles."""
    meta, arrays = read_container(path)
    if meta.get("kind") != "profiles":
        raise ValueError(f"{path} does not hold a profile set")
    spec = _spec_from_meta(meta["system"])
    table = phase_table(spec, np.asarray(meta["beta"], dtype=float))
    g = meta["grid"]
    grid = GridSpec(T=g["T"], X=g["X"], nt=int(g["nt"]), nx=int(g["nx"]),
                    ntheta=int(g["ntheta"]), theta_max=g["theta_max"])
    ps = ProfileSet.zero(table, grid)
    for entry in meta["modes"]:
        c = int(entry["comp"])
        fld = ps.fields[c]
        if abs(fld.slope - entry["slope"]) > 1e-12 * max(1.0, abs(fld.slope)):
            raise ValueError(
                f"component {c}: stored ray slope {entry['slope']} does not "
                f"match the rebuilt phase table ({fld.slope})"
            )
        fld.values[...] = arrays[f"values_{c}"]
    ps.convergence = list(meta["convergence"])
    ps.converged = bool(meta["converged"])
    return spec, ps


# ---------------------------------------------------------------------------
# reference solutions


def save_solution(sol: FineSolution, path, include_history: bool = False) -> None:
    g = sol.grid
    meta = {
        "kind": "solution",
        "eps": sol.eps,
        "grid": {"T": g.T, "X": g.X, "nt": g.nt, "nx": g.nx,
                 "eps": g.eps, "ppw": g.ppw},
        "newton_stats": sol.newton_stats,
        "convergence": sol.convergence,
        "meta": sol.meta,
    }
    arrays = {"u": sol.u}
    if include_history and sol.history is not None:
        arrays["history"] = sol.history
    write_container(path, meta, arrays)


def load_solution(path) -> FineSolution:
    meta, arrays = read_container(path)
    if meta.get("kind") != "solution":
        raise ValueError(f"{path} does not hold a reference solution")
    g = meta["grid"]
    grid = FineGrid(T=g["T"], X=g["X"], nt=int(g["nt"]), nx=int(g["nx"]),
                    eps=g["eps"], ppw=int(g["ppw"]))
    return FineSolution(
        eps=meta["eps"],
        grid=grid,
        u=arrays["u"],
        history=arrays.get("history"),
        newton_stats=meta["newton_stats"],
        convergence=meta["convergence"],
        meta=meta["meta"],
    )


# ---------------------------------------------------------------------------
# small CSV logs


def convergence_csv(entries) -> str:
    """Fixed-point iteration log; ratio is blank on the first row."""
    lines = ["iter,diff_sup,ratio"]
    for e in entries:
        ratio = f"{e['ratio']:.12e}" if "ratio" in e else ""
        lines.append(f"{e['iter']},{e['diff']:.12e},{ratio}")
    return "\n".join(lines) + "\n"


def residual_csv(norms: dict) -> str:
    lines = ["name,value"]
    for key in sorted(norms):
        lines.append(f"{key},{norms[key]:.12e}")
    return "\n".join(lines) + "\n"
