"""CSV chains and JSON sidecars with deterministic formatting."""
import io
import json
import math

import numpy as np


class ChainFileError(ValueError):
    """A chain file is missing columns or holds unparsable values."""


def _fmt(v):
    return "%.17g" % v


def write_matrix_csv(path, X, header):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in X:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_chain_csv(path, states, log_weights, accepted, prefix="u"):
    """One row per state: ``u0..u{n-1}, log_weight, accepted``."""
    states = np.asarray(states, dtype=float)
    n = states.shape[1]
    header = [f"{prefix}{k}" for k in range(n)] + ["log_weight", "accepted"]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row, lw, acc in zip(states, log_weights, accepted):
            fh.write(",".join(_fmt(v) for v in row) + f",{_fmt(lw)},{int(bool(acc))}\n")


def write_samples_csv(path, samples, prefix="theta"):
    samples = np.asarray(samples, dtype=float)
    write_matrix_csv(path, samples, [f"{prefix}{k}" for k in range(samples.shape[1])])


def read_csv_columns(path):
    """``(header, values)`` for a numeric CSV with one header row."""
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            body = fh.read()
        if not body.strip():
            raise ChainFileError(f"{path} has no data rows")
        values = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ChainFileError(f"cannot read {path}: {exc}") from exc
    if values.size and values.shape[1] != len(header):
        raise ChainFileError(f"{path}: {values.shape[1]} columns but {len(header)} header fields")
    return header, values


def read_chain_csv(path):
    """``(states, log_weights, accepted)`` from a chain file."""
    header, values = read_csv_columns(path)
    if header[-2:] != ["log_weight", "accepted"]:
        raise ChainFileError(f"{path}: expected trailing log_weight,accepted columns")
    return values[:, :-2], values[:, -2], values[:, -1].astype(bool)


def read_samples_csv(path):
    return read_csv_columns(path)[1]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
