"""JSON problem files.

Layout::

    {"version": 1, "p": int, "xPartition": [...], "yPartition": [...] | null,
     "A": [[row-major block 0], ...], "B": [...] | null, "b": [...],
     "fOracle": {"kind", "Q"?, "c"?, "offset"?, "lipschitz"}, "gOracle": {...},
     "xProx": [{"kind", "params"}], "yProx": [...], "xFeasible"?: [...]}

Reals are written with 17 significant digits so a load reproduces every
double exactly. Infinite box bounds are written as the strings ``"inf"`` and
``"-inf"``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .linalg import BlockLinearMap, BlockPartition
from .problem import ConstrainedProblem, ProxOracle, SmoothOracle

__all__ = ["FORMAT_VERSION", "ProblemFileError", "save_problem", "load_problem",
           "dumps_json", "problem_to_dict", "problem_from_dict"]

FORMAT_VERSION = 1


class ProblemFileError(ValueError):
    """Malformed or unsupported problem file."""


def _fmt_float(v: float) -> str:
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    if math.isnan(v):
        raise ValueError("NaN is not serializable")
    return format(v, ".17g")


def dumps_json(obj, indent=None) -> str:
    """``json.dumps`` with floats at 17 significant digits."""
    parts = []

    def emit(o, depth):
        if isinstance(o, bool) or o is None:
            parts.append(json.dumps(o))
        elif isinstance(o, (int, np.integer)):
            parts.append(str(int(o)))
        elif isinstance(o, (float, np.floating)):
            parts.append(_fmt_float(float(o)))
        elif isinstance(o, str):
            parts.append(json.dumps(o))
        elif isinstance(o, np.ndarray):
            emit(o.tolist(), depth)
        elif isinstance(o, dict):
            if not o:
                parts.append("{}")
                return
            parts.append("{")
            for n, (k, v) in enumerate(o.items()):
                if n:
                    parts.append(",")
                if indent is not None:
                    parts.append("\n" + " " * (indent * (depth + 1)))
                parts.append(json.dumps(str(k)) + ": ")
                emit(v, depth + 1)
            if indent is not None:
                parts.append("\n" + " " * (indent * depth))
            parts.append("}")
        elif isinstance(o, (list, tuple)):
            parts.append("[")
            for n, v in enumerate(o):
                if n:
                    parts.append(", ")
                emit(v, depth + 1)
            parts.append("]")
        else:
            raise TypeError(f"cannot serialize {type(o).__name__}")

    emit(obj, 0)
    return "".join(parts)


def _smooth_to_dict(o: SmoothOracle) -> dict:
    if o.kind == "custom":
        raise ProblemFileError("custom oracles not serializable")
    d = {"kind": o.kind, "lipschitz": o.lipschitz}
    if o.kind == "quadratic":
        d["Q"] = o.Q.reshape(-1)
        d["c"] = o.c
        d["offset"] = o.offset
    return d


def _prox_to_dict(o: ProxOracle) -> dict:
    if o.kind == "custom":
        raise ProblemFileError("custom oracles not serializable")
    return {"kind": o.kind, "params": o.params()}


def problem_to_dict(problem: ConstrainedProblem) -> dict:
    d = {
        "version": FORMAT_VERSION,
        "p": problem.p,
        "xPartition": list(problem.x_partition.dims),
        "yPartition": None if problem.y_map is None else list(problem.y_partition.dims),
        "A": [blk.reshape(-1) for blk in problem.x_map.blocks],
        "B": None if problem.y_map is None else [blk.reshape(-1) for blk in problem.y_map.blocks],
        "b": problem.b,
        "fOracle": _smooth_to_dict(problem.f),
        "gOracle": _smooth_to_dict(problem.g),
        "xProx": [_prox_to_dict(o) for o in problem.x_prox],
        "yProx": [_prox_to_dict(o) for o in problem.y_prox],
    }
    if problem.x_feasible is not None:
        d["xFeasible"] = problem.x_feasible
    return d


def save_problem(problem: ConstrainedProblem, path) -> None:
    Path(path).write_text(dumps_json(problem_to_dict(problem), indent=1) + "\n")


def _get(d, key, where):
    if not isinstance(d, dict):
        raise ProblemFileError(f"{where or 'document'}: expected an object")
    if key not in d:
        raise ProblemFileError(f"missing field '{where + '.' if where else ''}{key}'")
    return d[key]


def _floats(v, where, n=None):
    try:
        arr = np.array([float(t) for t in v], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"field '{where}': expected a list of reals ({exc})") from None
    if n is not None and arr.shape[0] != n:
        raise ProblemFileError(f"field '{where}': expected {n} values, got {arr.shape[0]}")
    return arr


def _blocks(raw, p, part, where):
    if not isinstance(raw, list) or len(raw) != len(part):
        raise ProblemFileError(f"field '{where}': expected {len(part)} blocks")
    return BlockLinearMap(
        [_floats(blk, f"{where}[{i}]", p * part.dims[i]).reshape(p, part.dims[i])
         for i, blk in enumerate(raw)],
        row_dim=p, partition=part)


def _smooth_from_dict(d, dim, where) -> SmoothOracle:
    kind = _get(d, "kind", where)
    lip = float(_get(d, "lipschitz", where))
    if kind == "custom":
        raise ProblemFileError("custom oracles not serializable")
    if kind == "zero":
        return SmoothOracle("zero", lipschitz=lip)
    if kind == "quadratic":
        Q = _floats(_get(d, "Q", where), f"{where}.Q", dim * dim).reshape(dim, dim)
        c = _floats(_get(d, "c", where), f"{where}.c", dim)
        return SmoothOracle("quadratic", Q=Q, c=c, lipschitz=lip, offset=float(d.get("offset", 0.0)))
    raise ProblemFileError(f"field '{where}.kind': unknown kind {kind!r}")


def _prox_from_dict(d, where) -> ProxOracle:
    kind = _get(d, "kind", where)
    params = d.get("params", {}) or {}
    if kind == "custom":
        raise ProblemFileError("custom oracles not serializable")
    if kind not in ProxOracle.KINDS:
        raise ProblemFileError(f"field '{where}.kind': unknown kind {kind!r}")
    try:
        if kind in ("l1", "l1nonneg"):
            return ProxOracle(kind, tau=float(_get(params, "tau", f"{where}.params")))
        if kind == "box":
            conv = lambda v: float(v) if not isinstance(v, list) else [float(t) for t in v]  # noqa: E731
            return ProxOracle(kind, lo=conv(_get(params, "lo", f"{where}.params")),
                              hi=conv(_get(params, "hi", f"{where}.params")))
        return ProxOracle(kind)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ProblemFileError):
            raise
        raise ProblemFileError(f"field '{where}.params': {exc}") from None


def problem_from_dict(d) -> ConstrainedProblem:
    version = _get(d, "version", "")
    if version != FORMAT_VERSION:
        raise ProblemFileError(f"field 'version': unsupported version {version!r}")
    p = int(_get(d, "p", ""))
    xpart = BlockPartition(tuple(_get(d, "xPartition", "")))
    ydims = _get(d, "yPartition", "")
    A = _blocks(_get(d, "A", ""), p, xpart, "A")
    B = None
    ypart = None
    if ydims:
        ypart = BlockPartition(tuple(ydims))
        B = _blocks(_get(d, "B", ""), p, ypart, "B")
    b = _floats(_get(d, "b", ""), "b", p)
    f = _smooth_from_dict(_get(d, "fOracle", ""), xpart.total_dim, "fOracle")
    g = _smooth_from_dict(_get(d, "gOracle", ""), 0 if ypart is None else ypart.total_dim, "gOracle")
    xprox = [_prox_from_dict(o, f"xProx[{i}]") for i, o in enumerate(_get(d, "xProx", ""))]
    yprox = [_prox_from_dict(o, f"yProx[{i}]") for i, o in enumerate(_get(d, "yProx", ""))]
    xf = d.get("xFeasible")
    return ConstrainedProblem(
        x_map=A, b=b, f=f, x_prox=xprox, y_map=B, g=g, y_prox=yprox,
        x_feasible=None if xf is None else _floats(xf, "xFeasible", xpart.total_dim),
    )


def load_problem(path) -> ConstrainedProblem:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return problem_from_dict(d)
    except ProblemFileError as exc:
        raise ProblemFileError(f"{path}: {exc}") from None
