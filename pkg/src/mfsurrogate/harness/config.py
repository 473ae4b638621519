"""Experiment configuration.

Schema (``mfsurrogate-experiment``, version 1)
----------------------------------------------
A config file is one JSON object. Only ``benchmark`` and ``model`` are
required; every other key has the default shown in :class:`ExperimentConfig`.

``benchmark``, ``lf_variant``
    Catalog name (``meng_nd_<d>`` builds the scalable function at any ``d``)
    and LF variant key; a null variant selects the benchmark default.
``model``
    One of :data:`MODEL_KINDS`.
``n_lf``, ``n_hf``, ``budget_units``
    Sample budgets, either absolute (``"points"``) or multiples of ``d``
    (``"per-dim"``).
``sigma_lf``, ``sigma_hf``
    Additive Gaussian noise std; null selects the benchmark default.
``lf_design``, ``hf_design``
    ``"auto"`` (uniform grid when ``d == 1``, Latin hypercube otherwise) or a
    sampling method name.
``hf_inputs``
    Explicit HF input rows; when given they replace ``n_hf``/``hf_design``.
``n_test``
    Test set size; null gives ``1000 * d`` (uniform grid when ``d == 1``,
    Latin hypercube otherwise).
``basis_order``, ``include_bias``, ``rho_fixed``
    Transfer basis and optional fixed coefficients (original units,
    constant first). ``rho_fixed = [0, 1]`` gives the scaled variant.
``options``
    Model hyperparameters; the admissible keys per model kind are listed in
    :data:`MODEL_OPTIONS`. ``psgld`` is an object of
    :class:`~mfsurrogate.bnn.PsgldConfig` fields.
``replications``, ``base_seed``
    Replication ``r`` (from 0) uses seed ``base_seed + r``.
``label``
    Method name in tables and plot data; defaults to ``model``.
``output``
    Directory for ``record.json`` and ``metrics.csv``; null writes nothing.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .. import benchmarks
from ..bnn import PsgldConfig
from ..exceptions import ConfigError, ContractError
from ..sampling import METHODS

SCHEMA = "mfsurrogate-experiment"
SCHEMA_VERSION = 1

MODEL_KINDS = ("gpr-single", "krr-lr-gpr", "gpr-lr-gpr", "bnn-single", "dnn-bnn", "dnn-lr-bnn")
GPR_KINDS = ("gpr-single", "krr-lr-gpr", "gpr-lr-gpr")
BNN_KINDS = ("bnn-single", "dnn-bnn", "dnn-lr-bnn")
MF_KINDS = ("krr-lr-gpr", "gpr-lr-gpr", "dnn-bnn", "dnn-lr-bnn")
TRANSFER_KINDS = ("krr-lr-gpr", "gpr-lr-gpr", "dnn-lr-bnn")

_GPR_OPTIONS = {"noise", "n_restarts"}
_BNN_OPTIONS = {"bnn_hidden", "bnn_activation", "psgld", "sigma_noise"}
_DNN_OPTIONS = {"dnn_hidden", "dnn_activation", "dnn_lr", "dnn_epochs", "dnn_batch_size"}
MODEL_OPTIONS = {
    "gpr-single": _GPR_OPTIONS,
    "krr-lr-gpr": _GPR_OPTIONS | {"krr_options"},
    "gpr-lr-gpr": _GPR_OPTIONS,
    "bnn-single": _BNN_OPTIONS,
    "dnn-bnn": _BNN_OPTIONS | _DNN_OPTIONS,
    "dnn-lr-bnn": _BNN_OPTIONS | _DNN_OPTIONS,
}
GPR_NOISE = ("auto", "estimate", "zero", "known")
DESIGNS = ("auto",) + METHODS
BUDGET_UNITS = ("points", "per-dim")


def _floats(values):
    return None if values is None else tuple(float(v) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a benchmark, a data protocol, a model and its replications."""

    benchmark: str
    model: str
    lf_variant: Optional[str] = None
    n_lf: int = 200
    n_hf: int = 7
    budget_units: str = "points"
    sigma_lf: Optional[float] = None
    sigma_hf: Optional[float] = None
    lf_design: str = "auto"
    hf_design: str = "auto"
    hf_inputs: Optional[tuple] = None
    n_test: Optional[int] = None
    basis_order: int = 1
    include_bias: bool = True
    rho_fixed: Optional[tuple] = None
    options: dict = field(default_factory=dict)
    replications: int = 10
    base_seed: int = 0
    label: Optional[str] = None
    output: Optional[str] = None

    def __post_init__(self):
        if self.hf_inputs is not None:
            rows = tuple(_floats(r if isinstance(r, (list, tuple)) else [r]) for r in self.hf_inputs)
            object.__setattr__(self, "hf_inputs", rows)
        object.__setattr__(self, "rho_fixed", _floats(self.rho_fixed))
        # a JSON round trip normalizes tuples to lists, so equality survives parse(serialize())
        object.__setattr__(self, "options", json.loads(json.dumps(dict(self.options))))
        self.validate()

    @property
    def function(self):
        return benchmarks.get(self.benchmark)

    @property
    def method(self):
        return self.label or self.model

    def seed_for(self, r):
        """Seed of replication ``r``."""
        return self.base_seed + r

    def budgets(self):
        """``(N_l, N_h)`` in points."""
        d = self.function.dim
        scale = d if self.budget_units == "per-dim" else 1
        n_hf = len(self.hf_inputs) if self.hf_inputs is not None else self.n_hf * scale
        return self.n_lf * scale, n_hf

    def test_size(self):
        return 1000 * self.function.dim if self.n_test is None else self.n_test

    def noise(self):
        """``(sigma_l, sigma_h)`` with benchmark defaults filled in."""
        sl, sh = self.function.default_noise
        return (sl if self.sigma_lf is None else self.sigma_lf,
                sh if self.sigma_hf is None else self.sigma_hf)

    def psgld(self):
        return PsgldConfig(**self.options.get("psgld", {}))

    def validate(self):
        """Raise :class:`ConfigError` describing the first invalid field."""
        try:
            fn = benchmarks.get(self.benchmark)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        if self.lf_variant is not None and self.lf_variant not in fn.variants:
            raise ConfigError(f"{self.benchmark} has no LF variant {self.lf_variant!r}; "
                              f"available: {fn.variants}")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.budget_units not in BUDGET_UNITS:
            raise ConfigError(f"budget_units must be one of {BUDGET_UNITS}")
        for name in ("lf_design", "hf_design"):
            if getattr(self, name) not in DESIGNS:
                raise ConfigError(f"{name} must be one of {DESIGNS}")
        if self.n_lf < 1 or self.n_hf < 1 or (self.n_test is not None and self.n_test < 2):
            raise ConfigError("need n_lf >= 1, n_hf >= 1 and n_test >= 2")
        if self.hf_inputs is not None:
            if not self.hf_inputs or any(len(r) != fn.dim for r in self.hf_inputs):
                raise ConfigError(f"hf_inputs must be non-empty rows of length {fn.dim}")
        for name in ("sigma_lf", "sigma_hf"):
            value = getattr(self, name)
            if value is not None and not value >= 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.basis_order < 0 or (self.basis_order == 0 and not self.include_bias):
            raise ConfigError("the transfer basis is empty")
        if self.rho_fixed is not None:
            if self.model not in TRANSFER_KINDS:
                raise ConfigError(f"rho_fixed needs a transfer model, not {self.model!r}")
            if len(self.rho_fixed) != self.basis_order + int(self.include_bias):
                raise ConfigError("rho_fixed length does not match the transfer basis")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        unknown = set(self.options) - MODEL_OPTIONS[self.model]
        if unknown:
            raise ConfigError(f"unknown options for {self.model}: {sorted(unknown)}; "
                              f"allowed: {sorted(MODEL_OPTIONS[self.model])}")
        if self.options.get("noise", "auto") not in GPR_NOISE:
            raise ConfigError(f"options.noise must be one of {GPR_NOISE}")
        if self.model in BNN_KINDS:
            try:
                self.psgld()
            except (TypeError, ContractError) as exc:
                raise ConfigError(f"invalid psgld options: {exc}") from None
            sigma = self.options.get("sigma_noise", self.noise()[1])
            if not sigma > 0:
                raise ConfigError("BNN models need a positive HF noise std "
                                  "(set sigma_hf or options.sigma_noise)")

    def to_dict(self):
        out = {"schema": SCHEMA, "version": SCHEMA_VERSION}
        for key, value in asdict(self).items():
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            out[key] = value
        return out

    @classmethod
    def from_dict(cls, data):
        """Build and validate a config from a parsed JSON object."""
        if not isinstance(data, dict):
            raise ConfigError("a config must be a JSON object")
        data = dict(data)
        schema, version = data.pop("schema", SCHEMA), data.pop("version", SCHEMA_VERSION)
        if schema != SCHEMA or version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {schema!r} version {version!r}")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"benchmark", "model"} - set(data)
        if missing:
            raise ConfigError(f"missing required config keys: {sorted(missing)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **changes):
        """Copy with some fields replaced (revalidated)."""
        known = {f.name for f in fields(self)}
        unknown = set(changes) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def dumps(config):
    return json.dumps(config.to_dict(), indent=2) + "\n"


def loads(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(data)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def save_config(config, path):
    Path(path).write_text(dumps(config))


__all__ = ["ExperimentConfig", "MODEL_KINDS", "MODEL_OPTIONS", "dumps", "loads", "load_config",
           "save_config", "SCHEMA", "SCHEMA_VERSION"]
