"""File formats: curves, grid functions, matrices, paths and laws."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path as FsPath

import numpy as np

from .algebra import GRID, MATRIX, AlgebraElement, GridAlgebra, GridSpec, FilipovicGeometry
from .process import GaussianLaw, Path


class CurveFormatError(ValueError):
    pass


def read_curve_csv(source) -> tuple[np.ndarray, np.ndarray]:
    """Parse ``maturity,price`` rows; maturities must be strictly ascending."""
    text = FsPath(source).read_text() if not hasattr(source, "read") else source.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip().lower() for c in rows[0]] != ["maturity", "price"]:
        raise CurveFormatError("line 1: expected header 'maturity,price'")
    mats, prices = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise CurveFormatError(f"line {lineno}: expected 2 columns, got {len(row)}")
        try:
            m, p = float(row[0]), float(row[1])
        except ValueError:
            raise CurveFormatError(f"line {lineno}: non-numeric value in {row!r}") from None
        if not (np.isfinite(m) and np.isfinite(p)):
            raise CurveFormatError(f"line {lineno}: non-finite value")
        if m < 0:
            raise CurveFormatError(f"line {lineno}: negative maturity {m}")
        if mats and m <= mats[-1]:
            raise CurveFormatError(f"line {lineno}: maturities must be strictly ascending")
        mats.append(m)
        prices.append(p)
    if not mats:
        raise CurveFormatError("no data rows")
    return np.array(mats), np.array(prices)


def curve_on_grid(space: GridAlgebra, maturities, prices) -> AlgebraElement:
    """Linear interpolation onto the grid nodes, flat beyond the data."""
    return AlgebraElement(np.interp(space.grid.nodes, maturities, prices), space)


def write_curve_csv(maturities, prices) -> str:
    lines = ["maturity,price"]
    lines += [f"{float(m)!r},{float(p)!r}" for m, p in zip(maturities, prices)]
    return "\n".join(lines) + "\n"


def grid_function_to_csv(g: AlgebraElement) -> str:
    if g.algebra_tag != GRID:
        raise ValueError("not a grid function")
    lines = ["x,value"]
    lines += [f"{float(x)!r},{float(v)!r}" for x, v in zip(g.space.grid.nodes, g.coords)]
    return "\n".join(lines) + "\n"


def grid_function_to_json(g: AlgebraElement) -> dict:
    if g.algebra_tag != GRID:
        raise ValueError("not a grid function")
    return {"grid": g.space.grid.to_dict(), "values": g.coords.tolist()}


def grid_function_from_json(obj: dict) -> AlgebraElement:
    space = GridAlgebra(FilipovicGeometry(GridSpec(**obj["grid"])))
    return AlgebraElement(obj["values"], space)


def matrix_to_json(a: AlgebraElement) -> list:
    if a.algebra_tag != MATRIX:
        raise ValueError("not a matrix element")
    return a.space.as_matrix(a.coords).tolist()


def path_to_csv(path: Path) -> str:
    n = path.values.shape[1]
    lines = [",".join(["t"] + [f"x{i}" for i in range(n)])]
    for t, row in zip(path.times, path.values):
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def path_to_json(path: Path) -> dict:
    return {"t": path.times.tolist(), "values": path.values.tolist()}


def law_to_json(law: GaussianLaw) -> str:
    return json.dumps(law.to_json())


def law_from_json(text: str) -> GaussianLaw:
    return GaussianLaw.from_json(json.loads(text))
