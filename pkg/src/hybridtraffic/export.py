"""Writers for the long-format CSV and JSON outputs."""

from __future__ import annotations

import csv
import json
import math

METRICS_COLUMNS = ("trial", "vehicle_id", "class", "max_var", "total_var")
AGGREGATE_COLUMNS = ("class", "metric", "n", "mean", "std", "q25", "median", "q75")
TRAJECTORY_COLUMNS = ("time", "vehicle_id", "class", "lane", "x", "v")


def _fmt(val):
    if isinstance(val, float):
        if math.isnan(val):
            return "nan"
        return repr(val)
    return str(val)


def header_lines(meta):
    """Comment lines recording run settings at the top of a CSV file."""
    return [f"# {k}={_fmt(v)}" for k, v in meta.items()]


def write_csv(path, columns, rows, meta=None):
    with open(path, "w", newline="") as fh:
        for line in header_lines(meta or {}):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` as dicts of strings."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(obj):
    """Replace non-finite floats with None so the JSON stays strict."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def metrics_rows(result, class_names=None):
    for trial, vid, c, mx, tv in result.rows():
        yield (trial, vid, class_names.get(c, c) if class_names else c, mx, tv)


def aggregate_rows(result):
    for a in result.aggregate():
        yield tuple(a[c] for c in AGGREGATE_COLUMNS)


def trajectory_rows(traj):
    ids = traj.ids.tolist()
    cls = traj.classes.tolist()
    for r, t in enumerate(traj.times.tolist()):
        xs = traj.x[r].tolist()
        vs = traj.v[r].tolist()
        ls = traj.lane[r].tolist()
        for j in range(len(ids)):
            yield (t, ids[j], cls[j], ls[j], xs[j], vs[j])


def write_trial_outputs(out_dir, result, fmt="csv", meta=None):
    """Write metrics, aggregate and events files for a :class:`TrialsResult`."""
    names = []
    if fmt == "csv":
        write_csv(out_dir / "metrics.csv", METRICS_COLUMNS, metrics_rows(result), meta)
        write_csv(out_dir / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_rows(result), meta)
        names += ["metrics.csv", "aggregate.csv"]
    else:
        write_json(
            out_dir / "metrics.json",
            {"meta": meta or {}, "columns": list(METRICS_COLUMNS), "rows": [list(r) for r in metrics_rows(result)]},
        )
        write_json(out_dir / "aggregate.json", {"meta": meta or {}, "rows": _clean(result.aggregate())})
        names += ["metrics.json", "aggregate.json"]
    events = {str(k): _clean(v) for k, v in sorted(result.events.items())}
    write_json(out_dir / "events.json", events)
    names.append("events.json")
    return names
