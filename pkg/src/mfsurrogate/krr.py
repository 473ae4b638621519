"""Kernel ridge regression, used as the deterministic low-fidelity surrogate.

The fitted weights solve ``(K + lam I) w = y`` and predictions are
``K(X_query, X_train) w``. Hyperparameters are chosen by cross-validation
(closed-form leave-one-out by default) over a log grid, followed by a
per-dimension refinement of the length-scale parameters.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .exceptions import ContractError
from .kernels import THETA_LOG10_BOUNDS, chol_solve, default_jitter, gram, jittered_cholesky

DEFAULT_THETA_GRID = tuple(np.logspace(*THETA_LOG10_BOUNDS, 10))
DEFAULT_LAMBDA_GRID = (0.0,) + tuple(10.0 ** np.arange(-8, 1))
# "loo" is n-fold CV evaluated in closed form; an integer gives shuffled k-fold
DEFAULT_FOLDS = "loo"
# CV cost is cubic in the fold size; larger LF sets are subsampled for selection only
DEFAULT_MAX_CV_POINTS = 600
DEFAULT_TIE_RTOL = 0.01
# k-fold CV on a handful of points is dominated by the fold split; at or
# below this size leave-one-out is used whatever k was requested
LOO_MAX_POINTS = 30


@dataclass(frozen=True)
class KrrModel:
    """A fitted kernel ridge regressor.

    Attributes
    ----------
    X_train : (n, d) ndarray
    weights : (n,) ndarray
    theta : (d,) ndarray
    lam : float
        Ridge term added to the Gram diagonal.
    jitter : float
        Extra diagonal shift the factorization needed (0 when none).
    selection : dict
        CV diagnostics when the hyperparameters were selected automatically.
    """

    X_train: np.ndarray
    weights: np.ndarray
    theta: np.ndarray
    lam: float
    jitter: float = 0.0
    selection: dict = field(default_factory=dict, compare=False)

    @property
    def n(self):
        return self.X_train.shape[0]

    @property
    def d(self):
        return self.X_train.shape[1]

    def predict(self, X_query):
        return krr_predict(self, X_query)


def krr_fit(data, theta, lam=0.0, selection=None):
    """Solve for the KRR weights on a low-fidelity dataset.

    Raises
    ------
    ContractError
        If the data is not low fidelity or ``lam`` is negative.
    IllConditionedError
        If the Cholesky factorization fails after all jitter escalations.
    """
    if data.fidelity != "low":
        raise ContractError("KRR is the low-fidelity surrogate; got high-fidelity data")
    if lam < 0:
        raise ContractError("lam must be non-negative")
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (data.d,)).copy()
    K = gram(data.X, theta=theta)
    K[np.diag_indices_from(K)] += lam
    L, jitter = jittered_cholesky(K, jitter=0.0)
    w = chol_solve(L, data.y)
    return KrrModel(data.X.copy(), w, theta, float(lam), float(jitter), dict(selection or {}))


def krr_predict(model, X_query):
    X_query = np.asarray(X_query, dtype=float)
    if X_query.ndim == 1:
        X_query = X_query[:, None] if model.d == 1 else X_query[None, :]
    if X_query.shape[1] != model.d:
        raise ContractError(f"query has {X_query.shape[1]} columns, model expects {model.d}")
    return gram(X_query, model.X_train, theta=model.theta) @ model.weights


def _fold_ids(n, k, rng):
    return rng.permutation(n) % k


def _loo_mse(K, y, lams):
    """Closed-form leave-one-out MSE for every ridge value in ``lams``.

    The held-out residual of point ``i`` is ``a_i / [(K + lam I)^-1]_ii``
    with ``a = (K + lam I)^-1 y``, so no refits are needed.
    """
    floor = default_jitter(K)
    out = np.zeros(len(lams))
    if len(lams) == 1:
        L, _ = jittered_cholesky(K + lams[0] * np.eye(K.shape[0]),
                                 jitter=max(floor - lams[0], 0.0))
        Kinv = chol_solve(L, np.eye(K.shape[0]))
        out[0] = np.mean((Kinv @ y / np.diag(Kinv)) ** 2)
        return out
    evals, evecs = linalg.eigh(K, check_finite=False)
    proj = evecs.T @ y
    sq = evecs**2
    for j, lam in enumerate(lams):
        inv = 1.0 / np.maximum(evals + max(lam, floor), floor)
        out[j] = np.mean((evecs @ (proj * inv) / (sq @ inv)) ** 2)
    return out


def _cv_mse(X, y, folds, k, theta, lams):
    """k-fold CV mean squared error for every ridge value in ``lams``.

    ``folds=None`` means leave-one-out, evaluated in closed form. Otherwise
    each fold's training Gram matrix is eigendecomposed once, which makes the
    sweep over ``lams`` cheap; a single ridge value uses a Cholesky solve
    instead. Ridge values below the default jitter are raised to it.
    """
    K = gram(X, theta=theta)
    if folds is None:
        return _loo_mse(K, y, lams)
    sse = np.zeros(len(lams))
    for f in range(k):
        test = folds == f
        train = ~test
        Ktr = K[np.ix_(train, train)]
        if len(lams) == 1:
            shifted = Ktr + lams[0] * np.eye(Ktr.shape[0])
            L, _ = jittered_cholesky(shifted, jitter=max(default_jitter(Ktr) - lams[0], 0.0))
            pred = K[np.ix_(test, train)] @ chol_solve(L, y[train])
            sse[0] += np.sum((y[test] - pred) ** 2)
            continue
        evals, evecs = linalg.eigh(Ktr, check_finite=False)
        proj = evecs.T @ y[train]
        Kte = K[np.ix_(test, train)] @ evecs
        floor = default_jitter(Ktr)
        for j, lam in enumerate(lams):
            shifted = np.maximum(evals + max(lam, floor), floor)
            pred = Kte @ (proj / shifted)
            sse[j] += np.sum((y[test] - pred) ** 2)
    return sse / X.shape[0]


def _pick(table, tie_rtol):
    """Index ``(i, j)`` of the chosen cell of a (theta ascending, lam descending) table.

    Cells within ``tie_rtol`` of the minimum tie; the first tied column
    (largest lam) wins, then the first tied row in it (smallest theta).
    """
    ok = table <= table.min() * (1.0 + tie_rtol)
    j = int(np.argmax(ok.any(axis=0)))
    return int(np.argmax(ok[:, j])), j


def krr_select_hyperparams(data, theta_grid=DEFAULT_THETA_GRID, lambda_grid=DEFAULT_LAMBDA_GRID,
                           k=DEFAULT_FOLDS, seed=0, refine=True,
                           max_cv_points: Optional[int] = DEFAULT_MAX_CV_POINTS,
                           tie_rtol=DEFAULT_TIE_RTOL):
    """Choose ``(theta, lam)`` by cross-validated MSE.

    ``k="loo"`` (the default) scores leave-one-out in closed form, which is
    free of fold-assignment noise; an integer ``k`` gives shuffled k-fold CV.
    Datasets of at most ``LOO_MAX_POINTS`` points always use leave-one-out. The grid stage shares one ``theta`` across dimensions. With ``refine``
    each ``theta_c`` is then adjusted by coordinate descent (steps in
    log10, halved until below 0.05 decades), rescanning the ``lam`` grid at
    every trial ``theta``.
    Scores within a relative ``tie_rtol`` of the grid minimum count as
    ties; ties go to the larger ``lam`` and then to the smaller ``theta``,
    i.e. toward the smoother model.

    Returns
    -------
    theta : (d,) ndarray
    lam : float
    info : dict
        Best CV MSE and the number of points used for selection.
    """
    X, y = data.X, data.y
    n = X.shape[0]
    if k == "loo" or n <= LOO_MAX_POINTS:
        if n < 3:
            raise ContractError(f"cross-validation needs at least 3 points, got {n}")
        k = "loo"
    elif n < 2 * k:
        raise ContractError(f"{k}-fold CV needs at least {2 * k} points, got {n}")
    rng = np.random.default_rng(seed)
    if max_cv_points is not None and n > max_cv_points:
        keep = np.sort(rng.choice(n, size=max_cv_points, replace=False))
        X, y = X[keep], y[keep]
    folds = None if k == "loo" else _fold_ids(X.shape[0], k, rng)

    thetas = np.asarray(sorted(theta_grid), dtype=float)
    lams = np.asarray(sorted(lambda_grid, reverse=True), dtype=float)
    table = np.array([_cv_mse(X, y, folds, k, np.full(data.d, t), lams) for t in thetas])
    i, j = _pick(table, tie_rtol)
    score, theta, lam = float(table[i, j]), np.full(data.d, thetas[i]), float(lams[j])

    if refine and len(thetas) > 1:
        # the ridge grid is rescanned at every trial theta, so the descent
        # runs on the CV score with lam profiled out
        def profiled(log_t):
            column = _cv_mse(X, y, folds, k, 10.0**log_t, lams)
            _, jj = _pick(column[None, :], tie_rtol)
            return float(column[jj]), float(lams[jj])

        lo, hi = THETA_LOG10_BOUNDS
        step = 0.5 * float(np.min(np.diff(np.log10(thetas))))
        log_theta = np.log10(theta)
        while step >= 0.05:
            improved = False
            for c in range(data.d):
                for direction in (-1.0, 1.0):
                    trial = log_theta.copy()
                    trial[c] = np.clip(trial[c] + direction * step, lo, hi)
                    if trial[c] == log_theta[c]:
                        continue
                    s, trial_lam = profiled(trial)
                    if s < score:
                        score, lam, log_theta, improved = s, trial_lam, trial, True
                        break
            if not improved:
                step /= 2.0
        theta = 10.0**log_theta
    return theta, float(lam), {"cv_mse": float(score), "n_cv": int(X.shape[0]), "folds": k}


def krr_fit_auto(data, seed=0, **select_kwargs):
    """Select hyperparameters by CV, then fit on the full dataset."""
    theta, lam, info = krr_select_hyperparams(data, seed=seed, **select_kwargs)
    return krr_fit(data, theta, lam, selection=info)
