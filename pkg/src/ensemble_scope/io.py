"""JSON readers for systems and mixtures.

Matrix entries may be numbers or strings such as ``"sqrt(2)"``, ``"-sqrt(2)"``,
``"3*sqrt(2)"``, ``"sqrt(2)/2"`` or ``"1/3"`` so exact systems round-trip.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path

import numpy as np

from .ensemble import GaussianMixture
from .observability import LinearSystem


class InputError(ValueError):
    """Malformed or inconsistent user input."""


_NUM = r"\d+(?:\.\d*)?(?:[eE][+-]?\d+)?"
_ENTRY = re.compile(
    rf"^(?P<sign>[+-]?)\s*(?:(?P<coef>{_NUM})\s*\*\s*)?"
    rf"(?:(?P<sqrt>sqrt\(\s*(?P<rad>{_NUM})\s*\))|(?P<num>{_NUM}))"
    rf"\s*(?:/\s*(?P<den>{_NUM}))?$"
)


def parse_entry(v) -> float:
    if isinstance(v, bool):
        raise InputError(f"boolean is not a matrix entry: {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if not isinstance(v, str):
        raise InputError(f"unsupported matrix entry: {v!r}")
    m = _ENTRY.match(v.strip())
    if m is None:
        raise InputError(f"cannot parse matrix entry {v!r}")
    if m["sqrt"] and m["num"]:
        raise InputError(f"cannot parse matrix entry {v!r}")
    val = math.sqrt(float(m["rad"])) if m["sqrt"] else float(m["num"])
    if m["coef"]:
        val *= float(m["coef"])
    if m["den"]:
        den = float(m["den"])
        if den == 0.0:
            raise InputError(f"division by zero in {v!r}")
        val /= den
    return -val if m["sign"] == "-" else val


def parse_matrix(data, name: str, vector_as_row: bool = False) -> np.ndarray:
    if not isinstance(data, list) or not data:
        raise InputError(f"{name} must be a nonempty list")
    if not isinstance(data[0], list):
        if not vector_as_row:
            raise InputError(f"{name} must be a list of rows")
        data = [data]
    widths = {len(r) if isinstance(r, list) else -1 for r in data}
    if len(widths) != 1 or -1 in widths:
        raise InputError(f"{name} rows must be lists of equal length")
    return np.array([[parse_entry(v) for v in row] for row in data], dtype=float)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(d, dict):
        raise InputError(f"{path}: expected a JSON object")
    return d


def system_from_dict(d: dict) -> LinearSystem:
    a = d.get("A", d.get("a"))
    c = d.get("C", d.get("c"))
    if a is None or c is None:
        raise InputError("system needs keys 'A' and 'C'")
    try:
        return LinearSystem(parse_matrix(a, "A"), parse_matrix(c, "C", vector_as_row=True))
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None


def load_system(path) -> LinearSystem:
    return system_from_dict(_load_json(path))


def system_to_dict(sys: LinearSystem) -> dict:
    return {"A": sys.a.tolist(), "C": sys.c.tolist()}


def mixture_from_dict(d: dict) -> GaussianMixture:
    """Either {"weights", "means", "covariances"} or a single {"mean", "cov"}."""
    try:
        if "mean" in d:
            mean = np.array([parse_entry(v) for v in d["mean"]])
            cov = parse_matrix(d["cov"], "cov")
            return GaussianMixture(np.ones(1), mean[None], cov[None])
        weights = np.array([parse_entry(v) for v in d["weights"]])
        means = np.array([[parse_entry(v) for v in m] for m in d["means"]])
        covs = np.array([parse_matrix(c, "covariance") for c in d["covariances"]])
        return GaussianMixture(weights, means, covs)
    except KeyError as exc:
        raise InputError(f"mixture is missing key {exc}") from None
    except InputError:
        raise
    except (ValueError, TypeError) as exc:
        raise InputError(f"invalid mixture: {exc}") from None


def load_mixture(path) -> GaussianMixture:
    return mixture_from_dict(_load_json(path))


def file_digest(path) -> str:
    h = hashlib.sha256()
    p = Path(path)
    files = sorted(p.glob("*.csv")) if p.is_dir() else [p]
    for f in files:
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()
