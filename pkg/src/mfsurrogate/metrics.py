"""Accuracy and uncertainty metrics, all evaluated in original response units."""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ContractError, DegenerateDataError

VARIANCE_FLOOR = 1e-12


def _pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ContractError(f"length mismatch: {y_true.shape[0]} vs {y_pred.shape[0]}")
    if y_true.shape[0] < 2:
        raise ContractError("need at least two test points")
    return y_true, y_pred


def nrmse(y_true_noiseless, y_pred_mean):
    """Root-mean-square error divided by the range of the noiseless truth."""
    y_true, y_pred = _pair(y_true_noiseless, y_pred_mean)
    spread = float(np.max(y_true) - np.min(y_true))
    if spread == 0:
        raise DegenerateDataError("noiseless truth has zero range")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)) / spread)


def r2_score(y_true_noiseless, y_pred_mean):
    y_true, y_pred = _pair(y_true_noiseless, y_pred_mean)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0:
        raise DegenerateDataError("noiseless truth has zero variance")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / ss_tot


def tll(y_test_noisy, pred):
    """Mean Gaussian log density of noisy test responses under ``pred``.

    ``pred`` must carry the total (noise-inclusive) predictive variance.
    """
    if not pred.includes_noise:
        raise ContractError("TLL needs a noise-inclusive predictive distribution")
    y = np.asarray(y_test_noisy, dtype=float).reshape(-1)
    if y.shape[0] != len(pred):
        raise ContractError("length mismatch between test responses and prediction")
    var = np.maximum(pred.variance, VARIANCE_FLOOR)
    return float(np.mean(-0.5 * np.log(2.0 * np.pi * var) - 0.5 * (y - pred.mean) ** 2 / var))


def pearson(a, b):
    """Sample Pearson correlation; raises when either series is constant."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape or a.shape[0] < 2:
        raise ContractError("pearson needs two series of equal length >= 2")
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(np.sum(da * da)), np.sqrt(np.sum(db * db))
    if na == 0 or nb == 0:
        raise DegenerateDataError("correlation undefined for a constant series")
    return float(np.sum(da * db) / (na * nb))


@dataclass
class MetricReport:
    nrmse: float
    r2: float
    tll: float
    pearson_lf_hf: Optional[float] = None
    sigma_h_hat: Optional[float] = None
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def evaluate(y_true_noiseless, y_test_noisy, pred_latent, noise_var, **extra):
    """Compute the full :class:`MetricReport` for one prediction.

    ``pred_latent`` is the latent-function prediction; ``noise_var`` is added
    for the TLL term.
    """
    total = pred_latent.add_noise(noise_var) if not pred_latent.includes_noise else pred_latent
    return MetricReport(
        nrmse=nrmse(y_true_noiseless, pred_latent.mean),
        r2=r2_score(y_true_noiseless, pred_latent.mean),
        tll=tll(y_test_noisy, total),
        **extra,
    )
