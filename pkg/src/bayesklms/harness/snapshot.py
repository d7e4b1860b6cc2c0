"""Versioned JSON snapshots of a kernel filter.

Floats are written with Python's shortest round-trip repr, so a load
reproduces every coefficient and center coordinate bit for bit.
"""
from __future__ import annotations

import json
import math

import numpy as np

from ..filters import MODELS, FilterState
from ..kernels import FAMILIES, KernelSpec

FORMAT_VERSION = 1


class SnapshotError(ValueError):
    """Malformed or unsupported snapshot file."""


def snapshot_dict(state: FilterState) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kernel": {"family": state.kernel.family, "gamma": state.kernel.gamma},
        "lambda": state.lam,
        "sigma_d2": state.sigma_d2,
        "sigma_n2": state.sigma_n2,
        "model": state.model,
        "budget": state.budget,
        "prune_threshold": state.prune_threshold,
        "step": state.step,
        "dim": state.dim,
        "centers": [
            {"x": [float(v) for v in p], "coeff": float(c), "step_added": int(s)}
            for p, c, s in zip(state.points, state.coeffs, state.added)
        ],
    }


def save_snapshot(state: FilterState, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(snapshot_dict(state), fh, indent=1, allow_nan=False)
        fh.write("\n")


def _number(obj, key, where, *, integer=False, optional=False):
    if key not in obj:
        raise SnapshotError(f"{where}: missing field {key!r}")
    v = obj[key]
    if v is None and optional:
        return None
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok or not math.isfinite(v):
        kind = "integer" if integer else "number"
        raise SnapshotError(f"{where}: field {key!r} must be a finite {kind}, got {v!r}")
    return v


def state_from_dict(data) -> FilterState:
    if not isinstance(data, dict):
        raise SnapshotError("snapshot: top level must be a JSON object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise SnapshotError(
            f"snapshot: unsupported format_version {version!r} (expected {FORMAT_VERSION})"
        )
    kern = data.get("kernel")
    if not isinstance(kern, dict):
        raise SnapshotError("snapshot: field 'kernel' must be an object")
    family = kern.get("family")
    if family not in FAMILIES:
        raise SnapshotError(f"kernel: field 'family' must be one of {FAMILIES}, got {family!r}")
    model = data.get("model")
    if model not in MODELS:
        raise SnapshotError(f"snapshot: field 'model' must be one of {MODELS}, got {model!r}")
    centers = data.get("centers")
    if not isinstance(centers, list):
        raise SnapshotError("snapshot: field 'centers' must be a list")
    dim = _number(data, "dim", "snapshot", integer=True, optional=True)

    points, coeffs, added = [], [], []
    for i, c in enumerate(centers):
        where = f"centers[{i}]"
        if not isinstance(c, dict):
            raise SnapshotError(f"{where}: must be an object")
        x = c.get("x")
        if not isinstance(x, list) or not x:
            raise SnapshotError(f"{where}: field 'x' must be a non-empty list")
        for j, v in enumerate(x):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise SnapshotError(f"{where}: x[{j}] must be a finite number, got {v!r}")
        if dim is not None and len(x) != dim:
            raise SnapshotError(f"{where}: x has dimension {len(x)}, expected {dim}")
        points.append(x)
        coeffs.append(_number(c, "coeff", where))
        added.append(_number(c, "step_added", where, integer=True))
    if any(b <= a for a, b in zip(added, added[1:])):
        raise SnapshotError("centers: step_added must be strictly increasing")

    try:
        state = FilterState(
            kernel=KernelSpec(gamma=_number(kern, "gamma", "kernel"), family=family),
            lam=_number(data, "lambda", "snapshot"),
            sigma_d2=_number(data, "sigma_d2", "snapshot"),
            sigma_n2=_number(data, "sigma_n2", "snapshot"),
            budget=_number(data, "budget", "snapshot", integer=True, optional=True),
            prune_threshold=_number(data, "prune_threshold", "snapshot", optional=True),
            model=model,
            step=_number(data, "step", "snapshot", integer=True),
            dim=dim,
        )
    except SnapshotError:
        raise
    except ValueError as exc:
        raise SnapshotError(f"snapshot: {exc}") from exc
    if points:
        state.points = np.array(points, dtype=float)
        state.coeffs = np.array(coeffs, dtype=float)
        state.added = np.array(added, dtype=np.int64)
    elif dim is not None:
        state.points = np.empty((0, dim))
    return state


def load_snapshot(path) -> FilterState:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return state_from_dict(data)
