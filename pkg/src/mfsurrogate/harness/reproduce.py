"""Canned desk-scale experiments for the published result tables.

Each table id maps to a list of studies ``(template, axis, values)``; a study
with ``axis=None`` is a single run. Budgets follow the published layouts
except where noted in :data:`TABLES`. Absolute fit times depend on the
machine, so :func:`timing_rows` reports them relative to the first method
and they are informational only.
"""

import csv
from pathlib import Path

from ..exceptions import ConfigError
from .config import ExperimentConfig
from .plotdata import emit_plotdata
from .runner import run_experiment, sweep, write_record

# Appendix-style noiseless Forrester layout: 11 LF points, HF at 0, 0.4, 0.6, 1
NOISELESS_HF = ((0.0,), (0.4,), (0.6,), (1.0,))
# 1-D BNN settings with the burn-in cut from 20000 to 2000 iterations
BNN_1D = {"bnn_hidden": [50, 50], "dnn_hidden": [50, 50], "dnn_epochs": 10000,
          "psgld": {"burn_in": 2000, "thinning": 100, "n_samples": 300}}
# 4-D desk settings: mini-batch LF network, 2x50 BNN
BNN_4D = {"bnn_hidden": [50, 50], "dnn_hidden": [64, 64], "dnn_epochs": 2000,
          "dnn_batch_size": 250, "psgld": {"burn_in": 2000, "thinning": 100, "n_samples": 300}}


def _forrester_noisy(model, **kw):
    kw = {"lf_variant": "lf2", "n_lf": 200, "n_hf": 7, "sigma_lf": 0.3, "sigma_hf": 0.3, **kw}
    return ExperimentConfig("forrester", model, **kw)


def _forrester_noiseless(model, **kw):
    kw = {"lf_variant": "lf2", "n_lf": 11, "hf_inputs": NOISELESS_HF, "sigma_lf": 0.0,
          "sigma_hf": 0.0, **kw}
    return ExperimentConfig("forrester", model, **kw)


def _meng_1d(model, **kw):
    opts = {k: v for k, v in BNN_1D.items() if model != "bnn-single" or not k.startswith("dnn")}
    return ExperimentConfig("meng_1d", model, n_lf=201, n_hf=11, sigma_lf=0.05, sigma_hf=0.05,
                            options=opts, **kw)


def _meng_4d(model, **kw):
    opts = {k: v for k, v in BNN_4D.items() if model != "bnn-single" or not k.startswith("dnn")}
    return ExperimentConfig("meng_4d", model, n_lf=5000, n_hf=100, sigma_lf=0.05, sigma_hf=0.01,
                            options=opts, **kw)


def _table2():
    return [(_forrester_noisy("krr-lr-gpr"), None, None),
            (_forrester_noisy("krr-lr-gpr", rho_fixed=(0.0, 1.0), label="krr-scaled-gpr"), None, None),
            (_forrester_noisy("gpr-single"), None, None)]


def _table3():
    variants = ["lf1", "lf2", "lf3"]
    return [(_forrester_noisy("krr-lr-gpr"), "correlation-variant", variants),
            (_forrester_noisy("gpr-single"), "correlation-variant", variants)]


def _table4():
    variants = ["lf1", "lf2", "lf3"]
    return [(_meng_1d("dnn-lr-bnn"), "correlation-variant", variants),
            (_meng_1d("dnn-bnn"), "correlation-variant", variants),
            (_meng_1d("bnn-single"), "correlation-variant", variants)]


def _table5():
    levels = [0.0, 0.3, 0.5, 1.0]
    return [(_forrester_noisy("krr-lr-gpr", n_lf=n, label=f"krr-lr-gpr ({n} LF)"), "noise", levels)
            for n in (11, 200)]


def _table7():
    return [(_meng_4d("dnn-lr-bnn"), None, None), (_meng_4d("bnn-single"), None, None)]


def _table8():
    return [(_forrester_noiseless("krr-lr-gpr"), None, None),
            (_forrester_noiseless("krr-lr-gpr", rho_fixed=(0.0, 1.0), label="krr-scaled-gpr"),
             None, None),
            (_forrester_noiseless("gpr-single"), None, None)]


def _table9():
    return [(_forrester_noiseless("krr-lr-gpr"), "basis-order",
             ["linear-no-bias", "linear", "quadratic"])]


TABLES = {
    "2": ("noisy Forrester, 200 LF / 7 HF, sigma 0.3", _table2),
    "3": ("Forrester LF variants 1-3 vs single-fidelity GPR", _table3),
    "4": ("Meng 1-D, DNN-LR-BNN vs DNN-BNN vs BNN, burn-in 2000", _table4),
    "5": ("LF noise ablation at 11 and 200 LF points", _table5),
    "7": ("Meng 4-D at 5000 LF / 100 HF (high-dimensional cases not run)", _table7),
    "8": ("noiseless Forrester, 11 LF / 4 HF", _table8),
    "9": ("transfer basis order ablation, noiseless Forrester", _table9),
}


def table_studies(table_id, replications=None):
    """The ``(template, axis, values)`` studies of one table."""
    table_id = str(table_id).removeprefix("table")
    if table_id not in TABLES:
        raise ConfigError(f"unknown table {table_id!r}; available: {sorted(TABLES)}")
    studies = TABLES[table_id][1]()
    if replications is not None:
        studies = [(t.with_overrides(replications=int(replications)), a, v) for t, a, v in studies]
    return studies


def _slug(text):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


def reproduce(table_id, replications=None, output=None):
    """Run one table's studies; with ``output`` also write records and plot data.

    Returns
    -------
    dict
        Axis (or ``"none"``) to the list of records on that axis.
    """
    groups = {}
    for template, axis, values in table_studies(table_id, replications):
        if axis is None:
            records = [run_experiment(template, write=False)]
        else:
            records = sweep(template, axis, values, write=False)
        groups.setdefault(axis or "none", []).extend(records)
    if output is not None:
        out = Path(output)
        for axis, records in groups.items():
            for record in records:
                name = _slug(record.config.method)
                if record.axis is not None:
                    name += f"/{record.axis}={_slug(str(record.axis_value))}"
                write_record(record, out / name)
            suffix = "" if len(groups) == 1 else f"_{axis}"
            emit_plotdata(records, out / f"plotdata{suffix}.csv")
            write_timing(records, out / f"timing{suffix}.csv")
    return groups


def timing_rows(records):
    """Median LF/HF fit seconds per record and total time relative to the first record."""
    rows = []
    base = None
    for record in records:
        lf = record.aggregates.get("lf_fit_s", {}).get("median")
        hf = record.aggregates.get("hf_fit_s", {}).get("median")
        total = (lf or 0.0) + (hf or 0.0)
        if base is None:
            base = total
        rows.append([record.config.method, "" if record.axis_value is None else str(record.axis_value),
                     "" if lf is None else repr(lf), "" if hf is None else repr(hf),
                     repr(total / base) if base else ""])
    return rows


def write_timing(records, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "axis_value", "lf_fit_s_median", "hf_fit_s_median",
                         "total_relative_to_first"])
        writer.writerows(timing_rows(records))


__all__ = ["TABLES", "table_studies", "reproduce", "timing_rows"]
