"""Figure data as CSV: one row per (axis value, method).

Columns are ``axis``, ``axis_value``, ``method``, ``n_ok`` and, for each
metric in :data:`PLOT_METRICS`, its ``_median``, ``_p25`` and ``_p75`` over
the successful replications. Records without a sweep axis get
``axis = "none"`` and an empty ``axis_value``. Rows keep the order of the
input records, and floats are written with ``repr``, so fixed records give
identical file bytes.
"""

import csv
import io
from pathlib import Path

from ..exceptions import ConfigError

PLOT_METRICS = ("nrmse", "r2", "tll", "sigma_h_hat")
STATS = ("median", "p25", "p75")


def plotdata_header():
    return ["axis", "axis_value", "method", "n_ok",
            *[f"{m}_{s}" for m in PLOT_METRICS for s in STATS]]


def plotdata_rows(records):
    """Rows (lists of strings) for ``records``, which must share one sweep axis."""
    records = list(records)
    if not records:
        raise ConfigError("no records to emit")
    axes = {r.axis for r in records}
    if len(axes) > 1:
        raise ConfigError(f"records mix sweep axes {sorted(map(str, axes))}")
    rows = []
    for record in records:
        row = [record.axis or "none", "" if record.axis_value is None else str(record.axis_value),
               record.config.method, str(sum(r.ok for r in record.replications))]
        for metric in PLOT_METRICS:
            summary = record.aggregates.get(metric, {})
            row += ["" if summary.get(s) is None else repr(float(summary[s])) for s in STATS]
        rows.append(row)
    return rows


def emit_plotdata(records, path=None):
    """Write the plot CSV to ``path`` (if given) and return its text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(plotdata_header())
    writer.writerows(plotdata_rows(records))
    text = buf.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(text.encode("utf-8"))
    return text


__all__ = ["emit_plotdata", "plotdata_rows", "plotdata_header", "PLOT_METRICS"]
