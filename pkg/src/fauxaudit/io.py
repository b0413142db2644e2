"""File formats: dataset CSV + sidecar, models, reports, real-data ingestion.

Every write goes through a temporary file in the destination directory and
is renamed into place, so readers never see a half-written file. Floats are
written with Python's shortest round-trip ``repr``, which makes a
write-then-read of any dataset bit-exact.
"""

import csv
import io as _io
import json
import math
import os
import tempfile

import numpy as np

from .dataset import Dataset
from .errors import ConfigError, ContractError
from .neural import mlp
from .synthgen import Provenance, SyntheticSpec

IFS_COLUMN = "__ifs"
UNFAIR_COLUMN = "__unfair"


# -- atomic text output -------------------------------------------------------------

def atomic_write(path, text):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats, which strict JSON cannot carry, by strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps_json(doc):
    doc = json.loads(json.dumps(doc, default=_json_default))
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, doc):
    atomic_write(path, dumps_json(doc))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def fmt(value):
    """Shortest round-trip text for a float (integers stay integers)."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_table(path, header, columns):
    """CSV from equal-length columns."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    n = len(columns[0]) if columns else 0
    for i in range(n):
        w.writerow([fmt(col[i]) for col in columns])
    atomic_write(path, buf.getvalue())


def read_table(path):
    """Header and string rows of a CSV, with file/line context on errors."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    if not rows:
        raise ConfigError(f"{path}:1: empty CSV, expected a header")
    header, body = rows[0], rows[1:]
    for line, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ConfigError(
                f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
    return header, body


def _float_column(path, header, body, name):
    j = header.index(name)
    out = np.empty(len(body))
    for line, row in enumerate(body, start=2):
        try:
            out[line - 2] = float(row[j])
        except ValueError:
            raise ConfigError(f"{path}:{line}: column {name!r} is not numeric: {row[j]!r}") from None
    return out


# -- datasets ------------------------------------------------------------------------

def dataset_paths(folder):
    return {
        "csv": os.path.join(folder, "data.csv"),
        "meta": os.path.join(folder, "data.json"),
        "provenance": os.path.join(folder, "provenance.json"),
    }


def write_dataset(folder, dataset, spec=None, seed=None):
    """CSV + sidecar JSON (+ provenance JSON for synthetic rows)."""
    paths = dataset_paths(folder)
    header = list(dataset.column_names) + [dataset.label_name] + list(dataset.protected_names)
    columns = [dataset.features[:, j] for j in range(dataset.n_features)]
    columns.append(dataset.labels.astype(np.int64))
    columns.extend(dataset.protected[:, j].astype(np.int64) for j in range(dataset.protected.shape[1]))
    if dataset.ifs is not None:
        header.append(IFS_COLUMN)
        columns.append(dataset.ifs)
    if dataset.fairness_label is not None:
        header.append(UNFAIR_COLUMN)
        columns.append(dataset.fairness_label)
    write_table(paths["csv"], header, columns)
    meta = {
        "column_names": list(dataset.column_names),
        "one_hot_groups": dataset.one_hot_groups,
        "protected_columns": list(dataset.protected_names),
        "label_column": dataset.label_name,
        "spec": None if spec is None else spec.to_dict(),
        "seed": seed,
    }
    write_json(paths["meta"], meta)
    if dataset.provenance is not None:
        write_json(paths["provenance"], dataset.provenance.to_dict())
    return paths


def read_dataset(folder):
    """Inverse of :func:`write_dataset`; returns ``(dataset, spec or None)``."""
    paths = dataset_paths(folder)
    meta = read_json(paths["meta"])
    header, body = read_table(paths["csv"])
    needed = meta["column_names"] + [meta["label_column"]] + meta["protected_columns"]
    missing = [c for c in needed if c not in header]
    if missing:
        raise ConfigError(f"{paths['csv']}:1: missing columns {missing}")
    n = len(body)
    feats = np.column_stack([_float_column(paths["csv"], header, body, c)
                             for c in meta["column_names"]]) if meta["column_names"] else np.zeros((n, 0))
    feats = feats.reshape(n, len(meta["column_names"]))
    labels = _float_column(paths["csv"], header, body, meta["label_column"])
    prot = np.column_stack([_float_column(paths["csv"], header, body, c)
                            for c in meta["protected_columns"]]) if meta["protected_columns"] else np.zeros((n, 0))
    prot = prot.reshape(n, len(meta["protected_columns"]))
    ifs = _float_column(paths["csv"], header, body, IFS_COLUMN) if IFS_COLUMN in header else None
    unfair = _float_column(paths["csv"], header, body, UNFAIR_COLUMN) if UNFAIR_COLUMN in header else None
    prov = None
    if os.path.exists(paths["provenance"]):
        prov = Provenance.from_dict(read_json(paths["provenance"]))
    spec = SyntheticSpec.from_dict(meta["spec"]) if meta.get("spec") else None
    ds = Dataset(feats, labels, prot, ifs=ifs, fairness_label=unfair,
                 column_names=meta["column_names"], protected_names=meta["protected_columns"],
                 label_name=meta["label_column"], one_hot_groups=meta["one_hot_groups"],
                 provenance=prov)
    return ds, spec


# -- models ----------------------------------------------------------------------------

def write_model(path, model):
    atomic_write(path, mlp.dumps(model) + "\n")


def read_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return mlp.loads(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"{path}: model file not found") from None


# -- real-data ingestion -------------------------------------------------------------

_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "in": lambda a, b: a in b,
}


def _as_number(text):
    try:
        return float(text)
    except ValueError:
        return None


def apply_predicate(values, predicate, where):
    """Binarize raw CSV strings with ``{"op": ..., "value": ...}``."""
    if not isinstance(predicate, dict) or "op" not in predicate or "value" not in predicate:
        raise ConfigError(f"{where}: predicate must be an object with 'op' and 'value'")
    op = predicate["op"]
    if op not in _OPS:
        raise ConfigError(f"{where}: unknown predicate op {op!r}")
    target = predicate["value"]
    numeric = isinstance(target, (int, float)) or (
        op == "in" and all(isinstance(t, (int, float)) for t in target))
    out = np.empty(len(values))
    for i, raw in enumerate(values):
        v = raw.strip()
        if numeric:
            num = _as_number(v)
            if num is None:
                raise ConfigError(f"{where}: row {i + 2} value {raw!r} is not numeric")
            v = num
        out[i] = 1.0 if _OPS[op](v, target) else 0.0
    return out


def ingest_csv(path, config):
    """Turn a raw CSV into a :class:`Dataset`.

    ``config`` keys: ``label`` (``{"column", "predicate"}``), ``protected``
    (list of ``{"column", "predicate"}``), optional ``categorical`` (columns
    to one-hot; non-numeric columns are detected automatically) and
    ``drop``. Protected and label columns never enter the features.
    """
    header, body = read_table(path)
    cols = {name: [row[j] for row in body] for j, name in enumerate(header)}

    def need(name, what):
        if name not in cols:
            raise ConfigError(f"{path}:1: {what} column {name!r} not found")
        return cols[name]

    if "label" not in config or "protected" not in config:
        raise ConfigError("ingest config needs 'label' and 'protected'")
    label_cfg = config["label"]
    labels = apply_predicate(need(label_cfg["column"], "label"), label_cfg["predicate"],
                             f"{path}: label {label_cfg['column']!r}")
    prot_names, prot = [], []
    for p in config["protected"]:
        prot.append(apply_predicate(need(p["column"], "protected"), p["predicate"],
                                    f"{path}: protected {p['column']!r}"))
        prot_names.append(p["column"])
    skip = {label_cfg["column"], *prot_names, *config.get("drop", [])}
    categorical = set(config.get("categorical", []))
    names, columns, groups = [], [], []
    for name in header:
        if name in skip:
            continue
        raw = cols[name]
        numbers = [_as_number(v) for v in raw]
        if name in categorical or any(v is None for v in numbers):
            levels = sorted(set(v.strip() for v in raw))
            start = len(names)
            for level in levels:
                names.append(f"{name}={level}")
                columns.append(np.array([1.0 if v.strip() == level else 0.0 for v in raw]))
            if len(levels) > 1:
                groups.append(list(range(start, len(names))))
        else:
            names.append(name)
            columns.append(np.array(numbers, dtype=np.float64))
    n = len(body)
    feats = np.column_stack(columns) if columns else np.zeros((n, 0))
    prot_m = np.column_stack(prot) if prot else np.zeros((n, 0))
    return Dataset(feats.reshape(n, len(names)), labels, prot_m, column_names=names,
                   protected_names=prot_names, label_name=label_cfg["column"],
                   one_hot_groups=groups)
