"""Gaussian process regression with an explicit basis (universal kriging).

The model is ``y(x) = h(x)^T beta + delta(x) + eps`` where ``delta`` is a
zero-mean GP with covariance ``s^2 k(x, x')`` (``k`` the RBF kernel) and
``eps ~ N(0, sigma^2)``. ``beta`` is profiled out by generalized least
squares, so the objective optimized over ``(theta, s, sigma)`` is the
concentrated negative log likelihood

    0.5 * ln|K_noisy| + 0.5 * r^T K_noisy^{-1} r,    r = y - H beta_hat.

Matrices are stored row-wise here: ``H`` is (n, M), one basis row per point.
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import linalg, optimize
from scipy.stats import qmc

from .data import PredictiveDistribution, reject_duplicates
from .exceptions import ContractError, IllConditionedError, SingularBasisError
from .kernels import (MAX_JITTER_RETRIES, THETA_LOG10_BOUNDS, chol_solve, gram,
                      jittered_cholesky)

BASIS_KINDS = ("zero-mean", "polynomial", "lf-powers")
SIGMA_LOG10_BOUNDS = (-6.0, 1.0)
# prior standard deviation of the GP, in standardized response units
SIGNAL_LOG10_BOUNDS = (-3.0, 3.0)
DEFAULT_RESTARTS = 10
# value handed to the optimizer where the likelihood cannot be evaluated
NLL_SENTINEL = 1e10
# smallest singular-value ratio of the whitened basis accepted as full rank
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class BasisSpec:
    """Explicit mean basis.

    ``kind="lf-powers"`` gives rows ``[1, f(x), ..., f(x)^order]`` with ``f``
    the low-fidelity surrogate's ``predict``; ``kind="polynomial"`` gives
    ``[1, x, ..., x^order]`` per input column; ``kind="zero-mean"`` has no
    columns. ``include_bias=False`` drops the leading constant.
    """

    kind: str = "zero-mean"
    order: int = 1
    include_bias: bool = True
    lf_model: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ContractError(f"unknown basis kind {self.kind!r}; choose from {BASIS_KINDS}")
        if self.kind == "zero-mean":
            return
        if self.order < 0 or (self.order == 0 and not self.include_bias):
            raise ContractError("basis needs at least one column (order >= 1 or a bias term)")
        if self.kind == "lf-powers" and self.lf_model is None:
            raise ContractError("lf-powers basis requires an lf_model")

    def size(self, d=1):
        """Number of basis columns ``M`` for inputs of dimension ``d``."""
        if self.kind == "zero-mean":
            return 0
        per_power = d if self.kind == "polynomial" else 1
        return int(self.include_bias) + self.order * per_power


def basis_eval(spec, X):
    """Evaluate the basis at the rows of ``X``; returns an (m, M) matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    m = X.shape[0]
    if spec.kind == "zero-mean":
        return np.empty((m, 0))
    if spec.kind == "lf-powers":
        base = np.asarray(spec.lf_model.predict(X), dtype=float).reshape(m, 1)
    else:
        base = X
    cols = [np.ones((m, 1))] if spec.include_bias else []
    cols += [base**p for p in range(1, spec.order + 1)]
    return np.hstack(cols)


def _whiten(L, H, y):
    return (linalg.solve_triangular(L, H, lower=True, check_finite=False),
            linalg.solve_triangular(L, y, lower=True, check_finite=False))


def _singular(order):
    where = "" if order is None else f" at order {order}"
    return SingularBasisError(
        f"basis matrix is rank deficient{where}; reduce the basis order or drop the bias",
        order)


def _normal_factor(A, order=None):
    """Cholesky factor of ``A^T A`` after a rank check on the whitened basis ``A``."""
    s = linalg.svdvals(A, check_finite=False)
    if s.size and (s[-1] <= RANK_RTOL * s[0] or not np.all(np.isfinite(s))):
        raise _singular(order)
    try:
        return linalg.cholesky(A.T @ A, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise _singular(order) from None


def beta_hat(H, L, y, order=None):
    """Generalized least-squares coefficients ``(H^T K^-1 H)^-1 H^T K^-1 y``.

    Parameters
    ----------
    H : (n, M) ndarray
        Basis matrix, one row per training point.
    L : (n, n) ndarray
        Lower Cholesky factor of ``K_noisy``.
    y : (n,) ndarray
    order : int, optional
        Basis order, only used in the error message.

    Raises
    ------
    SingularBasisError
        If ``H`` is rank deficient in the ``K``-weighted sense.
    """
    H = np.asarray(H, dtype=float)
    if H.shape[1] == 0:
        return np.empty(0)
    if H.shape[0] < H.shape[1]:
        raise ContractError(f"need n >= M, got n={H.shape[0]}, M={H.shape[1]}")
    A, b = _whiten(L, H, y)
    N = _normal_factor(A, order)
    return chol_solve(N, A.T @ b)


def _factor(X, theta, sigma, signal_std=1.0, max_retries=MAX_JITTER_RETRIES):
    K = signal_std**2 * gram(X, theta=theta)
    K[np.diag_indices_from(K)] += sigma**2
    # noise-free models try an exact factorization first so that they
    # interpolate; the default jitter is the fallback
    return jittered_cholesky(K, jitter=0.0 if sigma == 0 else None, max_retries=max_retries)


def _nll_terms(X, y, H, theta, sigma, signal_std=1.0, beta_fixed=None, order=None,
               max_retries=MAX_JITTER_RETRIES):
    """Return ``(nll, L, beta, jitter)`` for the concentrated likelihood."""
    L, jitter = _factor(X, theta, sigma, signal_std, max_retries)
    beta = beta_hat(H, L, y, order) if beta_fixed is None else np.asarray(beta_fixed, float)
    r = y - H @ beta
    z = linalg.solve_triangular(L, r, lower=True, check_finite=False)
    nll = float(np.sum(np.log(np.diag(L))) + 0.5 * z @ z)
    return nll, L, beta, jitter


def concentrated_nll(theta, sigma, data, basis, beta_fixed=None, signal_std=1.0):
    """Concentrated negative log likelihood; ``+inf`` if the factorization fails.

    ``K_noisy = signal_std**2 * K(X, X) + sigma**2 I``; ``beta`` is the GLS
    estimate unless ``beta_fixed`` is given.
    """
    H = basis_eval(basis, data.X)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (data.d,))
    try:
        return _nll_terms(data.X, data.y, H, theta, sigma, signal_std, beta_fixed,
                          basis.order)[0]
    except IllConditionedError:
        return np.inf


def full_nll(theta, sigma, data, basis, beta, signal_std=1.0):
    """Negative of the full Gaussian log likelihood at a given ``beta``."""
    H = basis_eval(basis, data.X)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (data.d,))
    L, _ = _factor(data.X, theta, sigma, signal_std)
    r = data.y - H @ np.asarray(beta, dtype=float)
    z = linalg.solve_triangular(L, r, lower=True, check_finite=False)
    n = data.n
    return float(0.5 * n * np.log(2 * np.pi) + np.sum(np.log(np.diag(L))) + 0.5 * z @ z)


@dataclass(frozen=True)
class GprModel:
    """A fitted explicit-basis GPR. All arrays live in the training space.

    The prior covariance is ``signal_std**2 * k(x, x')``; ``sigma_noise`` is
    the observation noise standard deviation.
    """

    X_train: np.ndarray
    y_train: np.ndarray
    theta: np.ndarray
    sigma_noise: float
    basis: BasisSpec
    beta: np.ndarray
    chol: np.ndarray
    jitter: float
    signal_std: float = 1.0
    beta_fixed: bool = False
    nll: float = float("nan")
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def d(self):
        return self.X_train.shape[1]

    def predict(self, X_query, include_noise=False):
        return gpr_predict(self, X_query, include_noise)

    def predict_mean(self, X_query):
        return gpr_predict(self, X_query).mean


def _mode(value, name):
    """Map an ``"estimate"``/``"zero"``/number argument to ``(estimate, fixed_value)``."""
    if isinstance(value, str):
        if value == "estimate":
            return True, None
        if value == "zero":
            return False, 0.0
        raise ContractError(f"{name} must be 'estimate', 'zero' or a number, got {value!r}")
    fixed = float(value)
    if not fixed >= 0:
        raise ContractError(f"fixed {name} must be non-negative")
    return False, fixed


def gpr_fit(data, basis=None, noise="estimate", beta_fixed=None, n_restarts=DEFAULT_RESTARTS,
            seed=0, theta=None, signal="estimate"):
    """Fit the GPR hyperparameters by multi-start L-BFGS-B on the concentrated NLL.

    Parameters
    ----------
    data : LabeledDataset
    basis : BasisSpec, optional
        Defaults to a zero-mean basis.
    noise : {"estimate", "zero"} or float
        Estimate ``sigma`` jointly with ``theta``, fix it at 0, or fix it at
        the given value.
    beta_fixed : array_like, optional
        Use these basis coefficients instead of the GLS estimate.
    n_restarts : int
        Number of local searches; start points form a Latin hypercube over
        the log10 box of every estimated hyperparameter (``THETA_LOG10_BOUNDS``,
        ``SIGNAL_LOG10_BOUNDS``, ``SIGMA_LOG10_BOUNDS``).
    seed : int or Generator
        Seeds the start-point design.
    theta : array_like, optional
        Fix the length-scale parameters instead of optimizing them.
    signal : "estimate" or float
        Prior standard deviation of the GP; ``1.0`` gives the unit-amplitude
        kernel.

    Returns
    -------
    GprModel
    """
    basis = basis or BasisSpec()
    estimate_noise, sigma_fixed = _mode(noise, "noise")
    estimate_signal, signal_fixed = _mode(signal, "signal")
    if not estimate_signal and signal_fixed == 0:
        raise ContractError("signal standard deviation must be positive")
    reject_duplicates(data.X)
    X, y, d = data.X, data.y, data.d
    H = basis_eval(basis, X)
    M = H.shape[1]
    if beta_fixed is not None:
        beta_fixed = np.asarray(beta_fixed, dtype=float).reshape(-1)
        if beta_fixed.shape[0] != M:
            raise ContractError(f"beta_fixed has {beta_fixed.shape[0]} entries, basis has {M}")
    elif data.n < M + 1:
        raise ContractError(f"need at least M+1={M + 1} points, got {data.n}")
    if M and beta_fixed is None:
        # surface a degenerate basis before spending time on restarts
        beta_hat(H, np.eye(data.n), y, basis.order)

    theta_fixed = None
    if theta is not None:
        theta_fixed = np.broadcast_to(np.asarray(theta, dtype=float), (d,)).copy()
    bounds = ([] if theta_fixed is not None else [THETA_LOG10_BOUNDS] * d)
    bounds += [SIGNAL_LOG10_BOUNDS] if estimate_signal else []
    bounds += [SIGMA_LOG10_BOUNDS] if estimate_noise else []

    def unpack(p):
        p = list(p)
        th = theta_fixed if theta_fixed is not None else 10.0 ** np.array(p[:d])
        rest = p if theta_fixed is not None else p[d:]
        amp = 10.0 ** rest.pop(0) if estimate_signal else signal_fixed
        sigma = 10.0 ** rest.pop(0) if estimate_noise else sigma_fixed
        return th, sigma, amp

    def objective(p, retries):
        try:
            val = _nll_terms(X, y, H, *unpack(p), beta_fixed, basis.order, retries)[0]
        except (IllConditionedError, SingularBasisError):
            return NLL_SENTINEL
        return val if np.isfinite(val) else NLL_SENTINEL

    results = []
    if not bounds:
        best_p = np.empty(0)
    else:
        lo, hi = np.array(bounds).T
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        starts = qmc.scale(qmc.LatinHypercube(d=len(bounds), seed=rng).random(n_restarts), lo, hi)
        # a noise-free search first accepts only exactly factorizable
        # covariances, so that the optimum interpolates; jittered
        # factorizations are the fallback
        schedule = (0, MAX_JITTER_RETRIES) if sigma_fixed == 0 else (MAX_JITTER_RETRIES,)
        for retries in schedule:
            results = [optimize.minimize(objective, p0, args=(retries,), method="L-BFGS-B",
                                         bounds=bounds) for p0 in starts]
            values = np.array([r.fun for r in results])
            if np.any(values < NLL_SENTINEL):
                break
        else:
            raise IllConditionedError("every restart failed to factorize the covariance matrix")
        best_p = results[int(np.argmin(values))].x  # argmin keeps the lowest index on ties

    theta_hat, sigma_hat, amp_hat = unpack(best_p)
    nll, L, beta, jitter = _nll_terms(X, y, H, theta_hat, sigma_hat, amp_hat, beta_fixed,
                                      basis.order)
    diagnostics = {"restart_nll": [float(r.fun) for r in results],
                   "restart_success": [bool(r.success) for r in results],
                   "n_evals": int(sum(r.nfev for r in results))}
    return GprModel(X.copy(), y.copy(), np.asarray(theta_hat, float), float(sigma_hat), basis,
                    np.asarray(beta, float), L, float(jitter), float(amp_hat),
                    beta_fixed is not None, nll, diagnostics)


def gpr_predict(model, X_query, include_noise=False):
    """Predictive mean and variance at ``X_query``.

    With ``k`` the prior covariance between the query and the training
    inputs, the variance is the latent-function variance
    ``s^2 - k^T K^-1 k + u^T (H^T K^-1 H)^-1 u`` with ``u = h(x) - H^T K^-1 k``;
    the last term (uncertainty of the GLS coefficients) is omitted when the
    coefficients were fixed. Negative values from cancellation are clamped to
    zero and counted. ``include_noise`` adds ``sigma_noise**2``.
    """
    X_query = np.asarray(X_query, dtype=float)
    if X_query.ndim == 1:
        X_query = X_query[:, None] if model.d == 1 else X_query[None, :]
    if X_query.shape[1] != model.d:
        raise ContractError(f"query has {X_query.shape[1]} columns, model expects {model.d}")
    L = model.chol
    s2 = model.signal_std**2
    H = basis_eval(model.basis, model.X_train)
    Hq = basis_eval(model.basis, X_query)
    Kq = s2 * gram(model.X_train, X_query, theta=model.theta)  # (n, m)

    resid = model.y_train - H @ model.beta
    alpha = chol_solve(L, resid)
    mean = Hq @ model.beta + Kq.T @ alpha

    V = linalg.solve_triangular(L, Kq, lower=True, check_finite=False)
    var = s2 - np.sum(V * V, axis=0)
    if H.shape[1] and not model.beta_fixed:
        A = linalg.solve_triangular(L, H, lower=True, check_finite=False)
        U = Hq - V.T @ A  # (m, M)
        N = _normal_factor(A, model.basis.order)
        W = linalg.solve_triangular(N, U.T, lower=True, check_finite=False)
        var = var + np.sum(W * W, axis=0)
    negative = var < 0
    var = np.where(negative, 0.0, var)
    if include_noise:
        var = var + model.sigma_noise**2
    return PredictiveDistribution(mean, var, includes_noise=include_noise,
                                  n_clamped=int(np.count_nonzero(negative)))
