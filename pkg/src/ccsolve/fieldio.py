"""
Field file and manifest serialization.

One text file per field.  Header line:

    # field=<symbol> n=<n> N_r=<..> N_theta=<..> N_phi=<..> R=<..> delta=<..>

followed by one data row per stored value:

    j i_theta i_phi [A [B]] value

with j the 1-based radial index (y^1_j = j*h), i_theta/i_phi 0-based
angular indices, A (and B) in {2..n} for one-form (tensor) components and
the value printed with 17 significant digits.  Tensor files store all
component pairs, including both (A,B) and (B,A), so a reader needs no
symmetry convention.

Manifests are plain JSON written with sorted keys (deterministic bytes).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .grids import ConeGrid

_FMT = "%.16e"  # 17 significant digits


def _header(name: str, grid: ConeGrid) -> str:
    return ("# field=%s n=%d N_r=%d N_theta=%d N_phi=%d R=%s delta=%s"
            % (name, grid.n, grid.N_r, grid.N_theta, grid.N_phi,
               _FMT % grid.R, _FMT % grid.delta))


def write_field(path: str, name: str, values: np.ndarray,
                grid: ConeGrid) -> None:
    """Write a scalar / one-form / 2-tensor grid function to a text file."""
    v = np.asarray(values, dtype=float)
    extra = v.ndim - 3
    if extra not in (0, 1, 2):
        raise ValueError("field rank not supported")
    lines = [_header(name, grid)]
    for j in range(grid.N_r):
        for it in range(grid.N_theta):
            for ip in range(grid.N_phi):
                if extra == 0:
                    lines.append("%d %d %d %s"
                                 % (j + 1, it, ip, _FMT % v[j, it, ip]))
                elif extra == 1:
                    for a in range(v.shape[3]):
                        lines.append("%d %d %d %d %s"
                                     % (j + 1, it, ip, a + 2,
                                        _FMT % v[j, it, ip, a]))
                else:
                    for a in range(v.shape[3]):
                        for b in range(v.shape[4]):
                            lines.append("%d %d %d %d %d %s"
                                         % (j + 1, it, ip, a + 2, b + 2,
                                            _FMT % v[j, it, ip, a, b]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field(path: str):
    """Read a field file; returns (name, meta dict, values array)."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# "):
            raise ValueError(f"{path}: missing field header")
        meta = {}
        for tok in header[2:].split():
            key, _, val = tok.partition("=")
            meta[key] = val
        for key in ("field", "n", "N_r", "N_theta", "N_phi", "R", "delta"):
            if key not in meta:
                raise ValueError(f"{path}: header missing {key}=")
        name = meta["field"]
        n = int(meta["n"])
        shape3 = (int(meta["N_r"]), int(meta["N_theta"]), int(meta["N_phi"]))
        meta = {"field": name, "n": n,
                "N_r": shape3[0], "N_theta": shape3[1], "N_phi": shape3[2],
                "R": float(meta["R"]), "delta": float(meta["delta"])}

        first_row = fh.readline().split()
        if not first_row:
            raise ValueError(f"{path}: empty field file")
        ncol = len(first_row)
        if ncol == 4:
            values = np.zeros(shape3)
        elif ncol == 5:
            values = np.zeros(shape3 + (n - 1,))
        elif ncol == 6:
            values = np.zeros(shape3 + (n - 1, n - 1))
        else:
            raise ValueError(f"{path}: unexpected column count {ncol}")

        def store(cols):
            if len(cols) != ncol:
                raise ValueError(f"{path}: ragged row {' '.join(cols)}")
            j = int(cols[0]) - 1
            it, ip = int(cols[1]), int(cols[2])
            if ncol == 4:
                values[j, it, ip] = float(cols[3])
            elif ncol == 5:
                values[j, it, ip, int(cols[3]) - 2] = float(cols[4])
            else:
                values[j, it, ip, int(cols[3]) - 2,
                       int(cols[4]) - 2] = float(cols[5])

        store(first_row)
        for line in fh:
            cols = line.split()
            if cols:
                store(cols)
    return name, meta, values


def check_grid_match(meta: dict, grid: ConeGrid, path: str = "") -> None:
    ok = (meta["n"] == grid.n and meta["N_r"] == grid.N_r
          and meta["N_theta"] == grid.N_theta
          and meta["N_phi"] == grid.N_phi
          and abs(meta["R"] - grid.R) < 1e-13
          and abs(meta["delta"] - grid.delta) < 1e-13)
    if not ok:
        raise ValueError(f"{path}: field header does not match grid")


def write_manifest(path: str, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def solution_field_path(outdir: str, symbol: str) -> str:
    return os.path.join(outdir, f"{symbol}.dat")
