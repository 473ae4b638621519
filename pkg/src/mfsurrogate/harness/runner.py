"""Run experiments and sweeps, aggregate metrics and persist records.

Replication ``r`` of a config draws everything from
``SeedSequence(base_seed + r)``, spawned into independent streams for the LF
design, HF design, LF noise, HF noise, test set and model fitting. Changing
one budget therefore leaves the other fidelity's data untouched, which keeps
sweep points paired.
"""

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, List, Optional

import numpy as np

from .. import __version__, benchmarks
from ..data import LabeledDataset, add_gaussian_noise
from ..exceptions import ConfigError, DegenerateDataError
from ..metrics import MetricReport, evaluate, pearson
from ..mf_bnn import fit_single_bnn, mf_bnn_fit
from ..mf_gpr import fit_single_gpr, mf_gpr_fit
from ..sampling import SamplePlan, sample
from .config import GPR_KINDS, MF_KINDS, TRANSFER_KINDS, ExperimentConfig

METRICS = ("nrmse", "r2", "tll", "sigma_h_hat", "pearson_lf_hf", "lf_fit_s", "hf_fit_s")
FAILED_FRACTION = 0.5
AXES = {
    "hf-budget": "n_hf",
    "lf-budget": "n_lf",
    "noise": "sigma_lf",
    "correlation-variant": "lf_variant",
    "basis-order": "basis_order",
}
BASIS_NAMES = {
    "constant": (0, True),
    "linear-no-bias": (1, False),
    "linear": (1, True),
    "quadratic-no-bias": (2, False),
    "quadratic": (2, True),
}


@dataclass
class ReplicationData:
    lf: LabeledDataset
    hf: LabeledDataset
    X_test: np.ndarray
    y_test: np.ndarray
    y_test_noisy: np.ndarray
    model_seed: Any


@dataclass
class ReplicationResult:
    index: int
    seed: int
    metrics: Optional[MetricReport] = None
    rho_hat: Optional[List[float]] = None
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None


@dataclass
class ExperimentRecord:
    """Everything needed to report, plot and rerun one experiment."""

    config: ExperimentConfig
    replications: List[ReplicationResult]
    aggregates: dict
    status: str
    library_version: str = __version__
    axis: Optional[str] = None
    axis_value: Any = None

    @property
    def n_failed(self):
        return sum(not r.ok for r in self.replications)

    def to_dict(self):
        reps = []
        for r in self.replications:
            entry = asdict(r)
            entry["metrics"] = r.metrics.to_dict() if r.metrics is not None else None
            reps.append(entry)
        return {"config": self.config.to_dict(), "status": self.status,
                "library_version": self.library_version, "axis": self.axis,
                "axis_value": self.axis_value, "aggregates": self.aggregates,
                "replications": reps}

    @classmethod
    def from_dict(cls, data):
        reps = []
        for entry in data["replications"]:
            metrics = entry.get("metrics")
            reps.append(ReplicationResult(entry["index"], entry["seed"],
                                          MetricReport(**metrics) if metrics else None,
                                          entry.get("rho_hat"), entry.get("error")))
        return cls(ExperimentConfig.from_dict(data["config"]), reps, data["aggregates"],
                   data["status"], data.get("library_version", __version__), data.get("axis"),
                   data.get("axis_value"))


def _design(method, n, domain, seed):
    if method == "auto":
        method = "uniform-grid" if domain.shape[0] == 1 else "latin-hypercube"
    return sample(SamplePlan(method, n, seed, domain))


def generate_data(config, seed):
    """Training and test data of one replication."""
    fn = config.function
    variant = config.lf_variant or "lf"
    n_lf, n_hf = config.budgets()
    sigma_l, sigma_h = config.noise()
    lf_design, hf_design, lf_noise, hf_noise, test_ss, model_ss = np.random.SeedSequence(seed).spawn(6)

    X_lf = _design(config.lf_design, n_lf, fn.domain, lf_design)
    if config.hf_inputs is not None:
        X_hf = np.array(config.hf_inputs, dtype=float)
    else:
        X_hf = _design(config.hf_design, n_hf, fn.domain, hf_design)
    lf = LabeledDataset(X_lf, benchmarks.evaluate(fn, variant, X_lf), "low")
    hf = LabeledDataset(X_hf, benchmarks.evaluate(fn, "hf", X_hf), "high")
    lf = add_gaussian_noise(lf, sigma_l, np.random.default_rng(lf_noise))
    hf = add_gaussian_noise(hf, sigma_h, np.random.default_rng(hf_noise))

    test_rng = np.random.default_rng(test_ss)
    X_test = _design("auto", config.test_size(), fn.domain, test_rng)
    y_test = benchmarks.evaluate(fn, "hf", X_test)
    y_noisy = y_test + sigma_h * test_rng.standard_normal(y_test.shape[0])
    return ReplicationData(lf, hf, X_test, y_test, y_noisy, model_ss)


def _gpr_noise(config):
    mode = config.options.get("noise", "auto")
    sigma_h = config.noise()[1]
    if mode == "auto":
        return "zero" if sigma_h == 0 else "estimate"
    if mode == "known":
        if not sigma_h > 0:
            raise ConfigError("noise 'known' needs a positive sigma_hf")
        return float(sigma_h)
    return mode


def _tuple(value):
    return tuple(value) if value is not None else None


def fit_model(config, data):
    """Fit the configured model kind on one replication's training data."""
    opts = config.options
    domain = config.function.domain
    kind = config.model
    if kind in GPR_KINDS:
        common = {"noise": _gpr_noise(config), "seed": data.model_seed}
        if "n_restarts" in opts:
            common["n_restarts"] = int(opts["n_restarts"])
        if kind == "gpr-single":
            return fit_single_gpr(data.hf, domain, **common)
        return mf_gpr_fit(data.lf, data.hf, domain, config.basis_order, config.include_bias,
                          rho_fixed=config.rho_fixed,
                          lf_kind="krr" if kind == "krr-lr-gpr" else "gpr",
                          krr_options=opts.get("krr_options"), **common)
    bnn = {"sigma_noise": opts.get("sigma_noise", config.noise()[1]),
           "bnn_hidden": _tuple(opts.get("bnn_hidden", (50, 50))),
           "bnn_activation": opts.get("bnn_activation", "tanh"),
           "psgld": config.psgld(), "seed": data.model_seed}
    if kind == "bnn-single":
        return fit_single_bnn(data.hf, domain, **bnn)
    dnn = {"dnn_hidden": _tuple(opts.get("dnn_hidden", (50, 50))),
           "dnn_activation": opts.get("dnn_activation", "tanh"),
           "dnn_lr": float(opts.get("dnn_lr", 1e-3)),
           "dnn_epochs": int(opts.get("dnn_epochs", 10000)),
           "dnn_batch_size": opts.get("dnn_batch_size")}
    variant = "lr-bnn" if kind == "dnn-lr-bnn" else "direct-bnn"
    return mf_bnn_fit(data.lf, data.hf, domain, variant, config.basis_order, config.include_bias,
                      rho_fixed=config.rho_fixed, **dnn, **bnn)


def run_replication(config, r):
    """Fit and score replication ``r``; a failure is captured, not raised."""
    seed = config.seed_for(r)
    try:
        data = generate_data(config, seed)
        t0 = time.perf_counter()
        model = fit_model(config, data)
        total = time.perf_counter() - t0
        sigma_h_hat = float(model.sigma_h_hat)
        rho = None
        r_lf_hf = None
        if config.model in MF_KINDS:
            try:
                r_lf_hf = pearson(model.lf_surrogate().predict(data.hf.X), data.hf.y)
            except DegenerateDataError:
                r_lf_hf = None
        if config.model in TRANSFER_KINDS:
            rho = [float(v) for v in model.rho_original()]
        timings = {"lf_fit_s": float(model.timings.get("lf_fit_s", 0.0)),
                   "hf_fit_s": float(model.timings.get("hf_fit_s", 0.0)), "total_fit_s": total}
        report = evaluate(data.y_test, data.y_test_noisy, model.predict(data.X_test),
                          sigma_h_hat**2, pearson_lf_hf=r_lf_hf, sigma_h_hat=sigma_h_hat,
                          timings=timings)
        return ReplicationResult(r, seed, report, rho)
    except Exception as exc:  # a replication failure must not abort the run
        return ReplicationResult(r, seed, error=f"{type(exc).__name__}: {exc}")


def _metric_values(result):
    m = result.metrics
    out = {"nrmse": m.nrmse, "r2": m.r2, "tll": m.tll, "sigma_h_hat": m.sigma_h_hat,
           "pearson_lf_hf": m.pearson_lf_hf, "lf_fit_s": m.timings.get("lf_fit_s"),
           "hf_fit_s": m.timings.get("hf_fit_s")}
    for i, v in enumerate(result.rho_hat or ()):
        out[f"rho_{i}"] = v
    return out


def summarize(values):
    """Median, mean, population std and quartiles of a list of numbers.

    Values are sorted first so the result does not depend on the order in
    which replications finished.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        return {"n": 0, "median": None, "mean": None, "std": None, "p25": None, "p75": None}
    p25, med, p75 = np.percentile(x, [25, 50, 75])
    return {"n": int(x.size), "median": float(med), "mean": float(np.mean(x)),
            "std": float(np.std(x)), "p25": float(p25), "p75": float(p75)}


def aggregate(results):
    """Per-metric summaries over the successful replications."""
    table = {}
    for result in results:
        if result.ok:
            for key, value in _metric_values(result).items():
                if value is not None:
                    table.setdefault(key, []).append(value)
    keys = [k for k in METRICS if k in table] + sorted(k for k in table if k not in METRICS)
    return {k: summarize(table[k]) for k in keys}


def run_experiment(config, write=True):
    """Run every replication of ``config`` and return the record.

    The run is marked ``"failed"`` when at least half the replications
    raised. With ``write`` and ``config.output`` set, ``record.json`` and
    ``metrics.csv`` are written there.
    """
    if not isinstance(config, ExperimentConfig):
        raise ConfigError("run_experiment needs an ExperimentConfig")
    config.validate()
    results = [run_replication(config, r) for r in range(config.replications)]
    failed = sum(not r.ok for r in results)
    status = "failed" if failed >= FAILED_FRACTION * len(results) else "ok"
    record = ExperimentRecord(config, results, aggregate(results), status)
    if write and config.output:
        write_record(record, config.output)
    return record


def axis_overrides(axis, value):
    """Config field changes for one sweep point."""
    if axis not in AXES:
        raise ConfigError(f"axis must be one of {tuple(AXES)}, got {axis!r}")
    if axis == "basis-order":
        if isinstance(value, str):
            if value not in BASIS_NAMES:
                raise ConfigError(f"basis order must be an integer or one of {tuple(BASIS_NAMES)}")
            order, bias = BASIS_NAMES[value]
        else:
            order, bias = int(value), True
        return {"basis_order": order, "include_bias": bias}
    if axis in ("hf-budget", "lf-budget"):
        return {AXES[axis]: int(value)}
    if axis == "noise":
        return {"sigma_lf": float(value)}
    return {AXES[axis]: value}


def sweep(template, axis, values, write=True):
    """One record per axis value, all sharing the template's base seed."""
    values = list(values)
    if not values:
        raise ConfigError("a sweep needs at least one axis value")
    if axis == "hf-budget" and template.hf_inputs is not None:
        raise ConfigError("cannot sweep the HF budget of a config with explicit hf_inputs")
    records = []
    for value in values:
        config = template.with_overrides(**axis_overrides(axis, value))
        if template.output:
            config = config.with_overrides(output=str(Path(template.output) / f"{axis}={value}"))
        record = run_experiment(config, write=False)
        record.axis, record.axis_value = axis, value
        if write and config.output:
            write_record(record, config.output)
        records.append(record)
    return records


def write_record(record, directory):
    """Write ``record.json`` and ``metrics.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "record.json").write_text(json.dumps(record.to_dict(), indent=2) + "\n")
    write_metrics_csv(record, directory / "metrics.csv")
    return directory


def write_metrics_csv(record, path):
    """One row per replication with its metrics, learned coefficients and error."""
    n_rho = max((len(r.rho_hat) for r in record.replications if r.rho_hat), default=0)
    header = ["replication", "seed", "status", *METRICS, *[f"rho_{i}" for i in range(n_rho)], "error"]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in record.replications:
            values = _metric_values(r) if r.ok else {}
            cells = ["" if values.get(k) is None else repr(float(values[k])) for k in header[3:-1]]
            writer.writerow([r.index, r.seed, "ok" if r.ok else "failed", *cells, r.error or ""])


def load_record(path):
    """Read a ``record.json`` file (or a directory containing one)."""
    path = Path(path)
    if path.is_dir():
        path = path / "record.json"
    try:
        return ExperimentRecord.from_dict(json.loads(path.read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read record {path}: {exc}") from None


__all__ = ["ExperimentRecord", "ReplicationResult", "run_experiment", "run_replication", "sweep",
           "generate_data", "fit_model", "aggregate", "summarize", "write_record", "load_record",
           "AXES", "BASIS_NAMES"]
