"""DNN-LR-BNN and DNN-BNN: network-based multi-fidelity models.

Both train a deterministic DNN on the low-fidelity data first. The
``lr-bnn`` variant then fits transfer coefficients ``rho`` by least squares
on the HF data and samples a BNN on the residual ``y_h - m(x)^T rho``. The
``direct-bnn`` variant skips the transfer and samples a BNN whose input is
``x`` concatenated with the DNN output.

As in :mod:`mfsurrogate.mf_gpr`, all fitting happens in standardized space
(unit-box inputs, responses scaled by the HF training mean and population
standard deviation), and predictions are mapped back to original units.
"""

import time
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np
from scipy import linalg

from .bnn import PsgldConfig, bnn_predict, psgld_sample
from .data import LabeledDataset, standardize_fit
from .exceptions import ContractError, SingularBasisError
from .gpr import RANK_RTOL, BasisSpec, basis_eval
from .mf_gpr import OriginalUnitsSurrogate, rho_from_original, rho_to_original
from .nn import MlpSpec, dnn_train

VARIANTS = ("lr-bnn", "direct-bnn")


def rho_least_squares(lf_model, hf_data, basis_order=1, include_bias=True):
    """Ordinary least-squares transfer coefficients.

    Minimizes ``||y_h - M rho||^2`` with ``M`` the powers of
    ``lf_model.predict`` at the HF inputs, solved through a pivoted QR
    factorization of ``M``.

    Raises
    ------
    SingularBasisError
        When ``M`` is numerically rank deficient (including ``N_h < M``).
    """
    basis = BasisSpec("lf-powers", basis_order, include_bias, lf_model=lf_model)
    M = basis_eval(basis, hf_data.X)
    if M.shape[0] < M.shape[1]:
        raise SingularBasisError(f"{M.shape[0]} HF points cannot determine {M.shape[1]} "
                                 "transfer coefficients", basis_order)
    Q, R, piv = linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[-1] <= RANK_RTOL * diag[0]:
        raise SingularBasisError(f"transfer basis of order {basis_order} is rank deficient",
                                 basis_order)
    rho = np.empty(M.shape[1])
    rho[piv] = linalg.solve_triangular(R, Q.T @ hf_data.y)
    return rho


def _augment(lf_model, Z):
    return np.column_stack([Z, lf_model.predict(Z)])


@dataclass(frozen=True)
class MfBnnModel:
    """Fitted network-based multi-fidelity model.

    ``rho`` (standardized space) is ``None`` for the ``direct-bnn`` variant.
    ``sigma_noise`` is the HF noise std in standardized units used by the
    sampler.
    """

    standardizer: Any
    lf: Any
    ensemble: Any
    variant: str
    rho: Optional[np.ndarray] = None
    basis_order: int = 1
    include_bias: bool = True
    sigma_noise: float = 1.0
    timings: dict = field(default_factory=dict, compare=False)

    @property
    def basis(self):
        return BasisSpec("lf-powers", self.basis_order, self.include_bias, lf_model=self.lf)

    @property
    def sigma_h_hat(self):
        """HF noise std in original units (the posterior mean when it was sampled)."""
        if self.ensemble.sigma_samples is not None:
            s = float(np.sqrt(np.mean(self.ensemble.sigma_samples**2)))
        else:
            s = self.sigma_noise
        return float(self.standardizer.inverse_std(s))

    def rho_original(self):
        if self.rho is None:
            raise ContractError("the direct-bnn variant has no transfer coefficients")
        s = self.standardizer
        return rho_to_original(self.rho, self.include_bias, s.output_mean, s.output_std)

    def lf_surrogate(self):
        return OriginalUnitsSurrogate(self.lf, self.standardizer)

    def trend(self, X_query):
        """``m(x)^T rho`` in original units (lr-bnn only)."""
        if self.rho is None:
            raise ContractError("the direct-bnn variant has no transfer trend")
        Z = self.standardizer.forward_x(X_query)
        return self.standardizer.inverse_y(basis_eval(self.basis, Z) @ self.rho)

    def predict(self, X_query, include_noise=False):
        return mf_bnn_predict(self, X_query, include_noise)


def _streams(seed):
    """Integer seeds for the DNN and the BNN initialization, and the chain's generator."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    dnn_ss, init_ss, chain_ss = ss.spawn(3)
    return (int(dnn_ss.generate_state(1)[0]), int(init_ss.generate_state(1)[0]),
            np.random.default_rng(chain_ss))


def _sigma_in_standard_units(sigma_noise, hf_data, standardizer):
    sigma = hf_data.noise_std if sigma_noise is None else sigma_noise
    if sigma is None or not sigma > 0:
        raise ContractError("the BNN likelihood needs a positive HF noise std (sigma_noise)")
    return standardizer.forward_std(float(sigma))


def train_lf_dnn(lf_std, hidden=(50, 50), activation="tanh", lr=1e-3, epochs=10000,
                 batch_size=None, seed=0):
    """Train the LF DNN on standardized LF data."""
    spec = MlpSpec.build(lf_std.d, hidden, activation, seed)
    return dnn_train(lf_std, spec, lr=lr, epochs=epochs, batch_size=batch_size)


def mf_bnn_fit(lf_data, hf_data, domain, variant="lr-bnn", basis_order=1, include_bias=True,
               rho_fixed=None, sigma_noise=None, dnn_hidden=(50, 50), dnn_activation="tanh",
               dnn_lr=1e-3, dnn_epochs=10000, dnn_batch_size=None, bnn_hidden=(50, 50),
               bnn_activation="tanh", psgld: Optional[PsgldConfig] = None, seed=0, lf_model=None):
    """Fit DNN-LR-BNN (``variant="lr-bnn"``) or DNN-BNN (``"direct-bnn"``).

    Parameters
    ----------
    lf_data, hf_data : LabeledDataset
        Original-unit training data.
    domain : (d, 2) array_like
    variant : {"lr-bnn", "direct-bnn"}
    basis_order, include_bias
        Transfer basis ``[1, f_l, ..., f_l^order]`` (lr-bnn only).
    rho_fixed : array_like, optional
        Transfer coefficients in original units (constant first) used
        instead of the least-squares fit; ``(0, 1)`` fuses the DNN with the
        BNN without any fitted transfer.
    sigma_noise : float, optional
        Known HF noise std in original units; defaults to
        ``hf_data.noise_std``. In ``estimate`` noise mode it is the start
        value and prior centre.
    dnn_hidden, dnn_activation, dnn_lr, dnn_epochs, dnn_batch_size
        LF network and its Adam training.
    bnn_hidden, bnn_activation, psgld
        Residual network and sampler settings.
    seed : int or SeedSequence
        Split into the DNN seed, the BNN initialization seed and the chain
        generator.
    lf_model : DnnModel, optional
        Previously trained LF network (standardized space) to reuse; its
        training is then skipped. It must come from the same LF data and
        HF standardization.

    Returns
    -------
    MfBnnModel
    """
    if variant not in VARIANTS:
        raise ContractError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if lf_data.fidelity != "low" or hf_data.fidelity != "high":
        raise ContractError("expected low-fidelity lf_data and high-fidelity hf_data")
    if lf_data.n == 0 or hf_data.n == 0:
        raise ContractError("datasets must be non-empty")
    if lf_data.d != hf_data.d:
        raise ContractError(f"LF data has d={lf_data.d}, HF data has d={hf_data.d}")
    psgld = psgld or PsgldConfig()
    standardizer = standardize_fit(hf_data, domain)
    hf_std = standardizer.transform(hf_data)
    sigma = _sigma_in_standard_units(sigma_noise, hf_data, standardizer)
    dnn_seed, init_seed, chain_rng = _streams(seed)

    t0 = time.perf_counter()
    lf = lf_model
    if lf is None:
        lf = train_lf_dnn(standardizer.transform(lf_data), dnn_hidden, dnn_activation, dnn_lr,
                          dnn_epochs, dnn_batch_size, dnn_seed)
    t1 = time.perf_counter()

    rho = None
    if variant == "lr-bnn":
        if rho_fixed is not None:
            rho = rho_from_original(rho_fixed, include_bias, standardizer.output_mean,
                                    standardizer.output_std)
        else:
            rho = rho_least_squares(lf, hf_std, basis_order, include_bias)
        M = basis_eval(BasisSpec("lf-powers", basis_order, include_bias, lf_model=lf), hf_std.X)
        target = hf_std.with_y(hf_std.y - M @ rho)
    else:
        target = LabeledDataset(_augment(lf, hf_std.X), hf_std.y, "high", hf_std.noise_std)
    spec = MlpSpec.build(target.d, bnn_hidden, bnn_activation, init_seed)
    ensemble = psgld_sample(target, spec, psgld, sigma_noise=sigma, seed=chain_rng)
    t2 = time.perf_counter()
    return MfBnnModel(standardizer, lf, ensemble, variant, rho, basis_order, include_bias, sigma,
                      {"lf_fit_s": t1 - t0, "hf_fit_s": t2 - t1})


def mf_bnn_predict(model, X_query, include_noise=False):
    """Predictive distribution in original units (latent unless ``include_noise``)."""
    Z = model.standardizer.forward_x(X_query)
    if model.variant == "lr-bnn":
        pred = bnn_predict(model.ensemble, Z, model.sigma_noise, include_noise)
        pred = replace(pred, mean=pred.mean + basis_eval(model.basis, Z) @ model.rho)
    else:
        pred = bnn_predict(model.ensemble, _augment(model.lf, Z), model.sigma_noise,
                           include_noise)
    return model.standardizer.inverse_predictive(pred)


@dataclass(frozen=True)
class SingleBnnModel:
    """Single-fidelity BNN baseline in the same standardized frame."""

    standardizer: Any
    ensemble: Any
    sigma_noise: float
    timings: dict = field(default_factory=dict, compare=False)

    @property
    def sigma_h_hat(self):
        return float(self.standardizer.inverse_std(self.sigma_noise))

    def predict(self, X_query, include_noise=False):
        Z = self.standardizer.forward_x(X_query)
        pred = bnn_predict(self.ensemble, Z, self.sigma_noise, include_noise)
        return self.standardizer.inverse_predictive(pred)


def fit_single_bnn(hf_data, domain, sigma_noise=None, bnn_hidden=(50, 50), bnn_activation="tanh",
                   psgld: Optional[PsgldConfig] = None, seed=0):
    """BNN trained on HF data only."""
    psgld = psgld or PsgldConfig()
    standardizer = standardize_fit(hf_data, domain)
    hf_std = standardizer.transform(hf_data)
    sigma = _sigma_in_standard_units(sigma_noise, hf_data, standardizer)
    _, init_seed, chain_rng = _streams(seed)
    t0 = time.perf_counter()
    spec = MlpSpec.build(hf_std.d, bnn_hidden, bnn_activation, init_seed)
    ensemble = psgld_sample(hf_std, spec, psgld, sigma_noise=sigma, seed=chain_rng)
    return SingleBnnModel(standardizer, ensemble, sigma,
                          {"lf_fit_s": 0.0, "hf_fit_s": time.perf_counter() - t0})


__all__ = ["MfBnnModel", "SingleBnnModel", "rho_least_squares", "mf_bnn_fit", "mf_bnn_predict",
           "fit_single_bnn", "train_lf_dnn", "VARIANTS"]
