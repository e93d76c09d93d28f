"""Config files, CSV and JSON artifacts."""
import csv
import json
import math
from pathlib import Path

import numpy as np
import yaml

from ._validation import ValidationError
from .constants import as_dict as constants_dict
from .kernel import MomentumKernel

SCHEMA_VERSION = "1.0"
COUNT_ALIASES = {"n_e": "n_e", "n_g": "n_g", "n_gamma": "n_g", "n_γ": "n_g", "count": "count"}


def load_config(path):
    """YAML (or JSON, which YAML accepts) key-value configuration."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError("config must be a mapping at the top level")
    return data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps_report(payload, manifest_hash=None):
    doc = {"schema_version": SCHEMA_VERSION, "constants": constants_dict()}
    if manifest_hash is not None:
        doc["manifest_hash"] = manifest_hash
    doc.update(payload)
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_json(path, payload, manifest_hash=None):
    Path(path).write_text(dumps_report(payload, manifest_hash))


def _header_lines(fh, comments):
    for key, val in comments.items():
        fh.write(f"# {key}: {val}\n")


def write_csv(path, columns, rows, comments=None):
    """CSV with ``# key: value`` header comments followed by a header row."""
    with open(path, "w", newline="") as fh:
        _header_lines(fh, comments or {})
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv_rows(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    return list(csv.reader(lines))


def export_kernel_csv(kernel, path, manifest_hash=None):
    """Header row of k_axis values, then matrix rows, 17 significant digits."""
    with open(path, "w", newline="") as fh:
        _header_lines(fh, {"kernel": "f(k1x, k2x) on [0, k_x_max]^2, 1/(rad/um)^2",
                           "norm": f"{kernel.norm:.17g}", "scenario_hash": kernel.scenario_hash,
                           "manifest_hash": manifest_hash or ""})
        w = csv.writer(fh)
        w.writerow([f"{v:.17g}" for v in kernel.k_axis])
        for row in kernel.f:
            w.writerow([f"{v:.17g}" for v in row])


def import_kernel_csv(path):
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.readlines()
    for ln in lines:
        if ln.startswith("# ") and ":" in ln:
            k, v = ln[2:].split(":", 1)
            meta[k.strip()] = v.strip()
    rows = read_csv_rows(path)
    if len(rows) < 2:
        raise ValidationError("kernel CSV needs an axis row and matrix rows")
    axis = np.array([float(v) for v in rows[0]])
    f = np.array([[float(v) for v in r] for r in rows[1:]])
    return MomentumKernel(axis, f, float(meta.get("norm", 1.0)), meta.get("scenario_hash", ""))


def read_counts_csv(path, d=None):
    """d x d count matrix from rows (n_e, n_gamma, count)."""
    rows = read_csv_rows(path)
    if not rows:
        raise ValidationError(f"{path}: empty counts file")
    head = [COUNT_ALIASES.get(h.strip()) for h in rows[0]]
    if sorted(h for h in head if h) != ["count", "n_e", "n_g"]:
        raise ValidationError(f"{path}: counts CSV needs columns n_e, n_gamma, count")
    ie, ig, ic = head.index("n_e"), head.index("n_g"), head.index("count")
    entries = []
    for r in rows[1:]:
        try:
            e, g, c = int(r[ie]), int(r[ig]), float(r[ic])
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"{path}: malformed row {r}") from exc
        if c != int(c) or c < 0 or e < 0 or g < 0:
            raise ValidationError(f"{path}: counts and labels must be non-negative integers")
        entries.append((e, g, int(c)))
    size = d or (max(max(e, g) for e, g, _ in entries) + 1)
    C = np.zeros((size, size), dtype=np.int64)
    for e, g, c in entries:
        if e >= size or g >= size:
            raise ValidationError(f"{path}: label outside 0..{size - 1}")
        C[e, g] += c
    return C


def write_counts_csv(path, counts):
    counts = np.asarray(counts)
    rows = [(a, b, int(counts[a, b])) for a in range(counts.shape[0]) for b in range(counts.shape[1])]
    write_csv(path, ["n_e", "n_gamma", "count"], rows)
