"""KRR-LR-GPR: a kernel ridge low-fidelity surrogate, a linear transfer in
powers of that surrogate, and a GP on what the transfer leaves unexplained.

Training runs in standardized space: inputs are mapped to the unit box of the
declared domain and both fidelities' responses are scaled with the mean and
population standard deviation of the high-fidelity training responses. The
slope coefficients of the transfer are unaffected by this shared map; the
intercept is converted by :meth:`MfGprModel.rho_original`.
"""

import time
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .data import PredictiveDistribution, standardize_fit
from .exceptions import ContractError
from .gpr import DEFAULT_RESTARTS, BasisSpec, basis_eval, gpr_fit, gpr_predict
from .krr import krr_fit_auto
from .metrics import pearson

LF_KINDS = ("krr", "gpr")


@dataclass(frozen=True)
class GprMeanSurrogate:
    """Expose a GPR posterior mean through the deterministic ``predict`` protocol."""

    gpr: Any

    def predict(self, X):
        return gpr_predict(self.gpr, X).mean


@dataclass(frozen=True)
class OriginalUnitsSurrogate:
    """Wrap a standardized-space surrogate so it takes and returns original units."""

    model: Any
    standardizer: Any

    def predict(self, X):
        return self.standardizer.inverse_y(self.model.predict(self.standardizer.forward_x(X)))


def rho_to_original(rho, include_bias, mean, std):
    """Coefficients of the transfer polynomial in original response units.

    The standardized transfer ``z_h = sum_k rho_k z_l^k`` with
    ``z = (y - mean) / std`` becomes ``y_h = sum_k c_k y_l^k``; the returned
    vector ``c`` always starts with the constant term.
    """
    coef = np.asarray(rho, dtype=float)
    if not include_bias:
        coef = np.concatenate([[0.0], coef])
    inner = np.polynomial.Polynomial([-mean / std, 1.0 / std])
    outer = np.polynomial.Polynomial(coef)
    out = (mean + std * outer(inner)).coef
    return np.pad(out, (0, coef.size - out.size))


def rho_from_original(c, include_bias, mean, std):
    """Inverse of :func:`rho_to_original`."""
    c = np.asarray(c, dtype=float)
    inner = np.polynomial.Polynomial([mean, std])
    outer = np.polynomial.Polynomial(c)
    z = ((outer(inner) - mean) / std).coef
    z = np.pad(z, (0, c.size - z.size))
    if include_bias:
        return z
    if abs(z[0]) > 1e-12 * max(1.0, np.abs(z).max()):
        raise ContractError("a transfer without bias cannot represent this constant term")
    return z[1:]


@dataclass(frozen=True)
class MfGprModel:
    """Fitted KRR-LR-GPR model.

    ``residual.basis.lf_model`` is ``lf`` itself, and ``rho`` is the residual
    GP's basis coefficient vector, both in standardized space.
    """

    standardizer: Any
    lf: Any
    residual: Any
    lf_kind: str = "krr"
    timings: dict = field(default_factory=dict, compare=False)

    @property
    def rho(self):
        return self.residual.beta

    @property
    def rho_fixed(self):
        return self.residual.beta_fixed

    @property
    def basis(self):
        return self.residual.basis

    @property
    def sigma_h_hat(self):
        """HF noise standard deviation in original units."""
        return float(self.standardizer.inverse_std(self.residual.sigma_noise))

    def rho_original(self):
        s = self.standardizer
        return rho_to_original(self.rho, self.basis.include_bias, s.output_mean, s.output_std)

    def lf_surrogate(self):
        """The low-fidelity surrogate as an original-units predictor."""
        return OriginalUnitsSurrogate(self.lf, self.standardizer)

    def trend(self, X_query):
        """Transferred LF trend ``m(x)^T rho`` in original units."""
        Z = self.standardizer.forward_x(X_query)
        return self.standardizer.inverse_y(basis_eval(self.basis, Z) @ self.rho)

    def predict(self, X_query, include_noise=False):
        return mf_gpr_predict(self, X_query, include_noise)


def _seeds(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    lf_ss, hf_ss = ss.spawn(2)
    return np.random.default_rng(lf_ss), np.random.default_rng(hf_ss)


def _noise_in_standard_units(noise, standardizer):
    if isinstance(noise, str):
        return noise
    return standardizer.forward_std(float(noise))


def fit_lf_surrogate(lf_std, lf_kind="krr", rng=None, krr_options=None):
    """Fit the low-fidelity surrogate on standardized LF data."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if lf_kind == "krr":
        return krr_fit_auto(lf_std, seed=rng, **(krr_options or {}))
    if lf_kind == "gpr":
        return GprMeanSurrogate(gpr_fit(lf_std, BasisSpec("zero-mean"), noise="estimate",
                                        seed=rng))
    raise ContractError(f"lf_kind must be one of {LF_KINDS}, got {lf_kind!r}")


def mf_gpr_fit(lf_data, hf_data, domain, basis_order=1, include_bias=True, noise="estimate",
               rho_fixed=None, lf_kind="krr", seed=0, n_restarts=DEFAULT_RESTARTS,
               krr_options: Optional[dict] = None):
    """Fit KRR-LR-GPR.

    Parameters
    ----------
    lf_data, hf_data : LabeledDataset
        Low- and high-fidelity training data in original units.
    domain : (d, 2) array_like
        Box used to map inputs to the unit cube.
    basis_order : int
        Highest power of the LF surrogate in the transfer basis.
    include_bias : bool
        Include the constant column in the transfer basis.
    noise : {"estimate", "zero"} or float
        HF noise handling; a float is a known standard deviation in original
        units.
    rho_fixed : array_like, optional
        Transfer coefficients in original units (constant term first) to use
        instead of the GLS estimate; ``(0, 1)`` gives the scaled variant.
    lf_kind : {"krr", "gpr"}
        Low-fidelity surrogate type.
    seed : int or SeedSequence
        Split into independent streams for the LF and HF stages.

    Returns
    -------
    MfGprModel
    """
    if lf_data.fidelity != "low" or hf_data.fidelity != "high":
        raise ContractError("expected low-fidelity lf_data and high-fidelity hf_data")
    if lf_data.d != hf_data.d:
        raise ContractError(f"LF data has d={lf_data.d}, HF data has d={hf_data.d}")
    standardizer = standardize_fit(hf_data, domain)
    lf_std = standardizer.transform(lf_data)
    hf_std = standardizer.transform(hf_data)
    lf_rng, hf_rng = _seeds(seed)

    t0 = time.perf_counter()
    lf = fit_lf_surrogate(lf_std, lf_kind, lf_rng, krr_options)
    t1 = time.perf_counter()

    basis = BasisSpec("lf-powers", basis_order, include_bias, lf_model=lf)
    beta_fixed = None
    if rho_fixed is not None:
        beta_fixed = rho_from_original(rho_fixed, include_bias, standardizer.output_mean,
                                       standardizer.output_std)
    residual = gpr_fit(hf_std, basis, _noise_in_standard_units(noise, standardizer),
                       beta_fixed=beta_fixed, n_restarts=n_restarts, seed=hf_rng)
    t2 = time.perf_counter()
    return MfGprModel(standardizer, lf, residual, lf_kind,
                      {"lf_fit_s": t1 - t0, "hf_fit_s": t2 - t1})


def mf_gpr_predict(model, X_query, include_noise=False) -> PredictiveDistribution:
    """Predictive distribution in original units (latent unless ``include_noise``)."""
    Z = model.standardizer.forward_x(X_query)
    return model.standardizer.inverse_predictive(gpr_predict(model.residual, Z, include_noise))


def pearson_lf_hf(lf_model, hf_data):
    """Pearson correlation between ``lf_model.predict`` at the HF inputs and the HF responses."""
    if hf_data.n < 2:
        raise ContractError("need at least two HF points")
    return pearson(lf_model.predict(hf_data.X), hf_data.y)


def fit_single_gpr(hf_data, domain, noise="estimate", seed=0, n_restarts=DEFAULT_RESTARTS):
    """Single-fidelity GPR baseline (zero-mean basis) wrapped like the MF model."""
    standardizer = standardize_fit(hf_data, domain)
    t0 = time.perf_counter()
    gp = gpr_fit(standardizer.transform(hf_data), BasisSpec("zero-mean"),
                 _noise_in_standard_units(noise, standardizer), n_restarts=n_restarts,
                 seed=np.random.default_rng(seed))
    return SingleGprModel(standardizer, gp, {"lf_fit_s": 0.0, "hf_fit_s": time.perf_counter() - t0})


@dataclass(frozen=True)
class SingleGprModel:
    standardizer: Any
    gpr: Any
    timings: dict = field(default_factory=dict, compare=False)

    @property
    def sigma_h_hat(self):
        return float(self.standardizer.inverse_std(self.gpr.sigma_noise))

    def predict(self, X_query, include_noise=False):
        Z = self.standardizer.forward_x(X_query)
        return self.standardizer.inverse_predictive(gpr_predict(self.gpr, Z, include_noise))


__all__ = ["MfGprModel", "SingleGprModel", "mf_gpr_fit", "mf_gpr_predict", "pearson_lf_hf",
           "fit_single_gpr", "rho_to_original", "rho_from_original"]
