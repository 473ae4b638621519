"""RBF kernel and Gram-matrix assembly shared by KRR and GPR.

The kernel is ``k(a, b) = exp(-sum_c theta_c (a_c - b_c)^2)``, with one
positive ``theta_c`` per input dimension. Optimizers work on ``log10(theta)``
inside ``THETA_LOG10_BOUNDS``.
"""

import numpy as np
from scipy import linalg

from .exceptions import ContractError, IllConditionedError

THETA_LOG10_BOUNDS = (-3.0, 3.0)
JITTER_FACTOR = 1e-10
MAX_JITTER_RETRIES = 5


def _as_theta(theta, d):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.ndim != 1 or theta.shape[0] != d:
        raise ContractError(f"theta has {theta.shape[0]} entries, inputs have d={d}")
    if not np.all(theta > 0):
        raise ContractError("theta entries must be strictly positive")
    return theta


def rbf(x_i, x_j, theta):
    """Evaluate the RBF kernel between two d-vectors."""
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    x_j = np.atleast_1d(np.asarray(x_j, dtype=float))
    if x_i.shape != x_j.shape or x_i.ndim != 1:
        raise ContractError(f"point shapes differ: {x_i.shape} vs {x_j.shape}")
    theta = _as_theta(theta, x_i.shape[0])
    return float(np.exp(-np.sum(theta * (x_i - x_j) ** 2)))


def _as_matrix(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ContractError(f"{name} must be a 2-D array, got shape {X.shape}")
    return X


def gram(X_a, X_b=None, theta=1.0, jitter=0.0):
    """Assemble the RBF Gram matrix.

    Parameters
    ----------
    X_a : (n, d) array
    X_b : (m, d) array or None
        ``None`` means the same set as ``X_a``; only then is the result
        symmetric and only then is ``jitter`` added to the diagonal.
    theta : float or (d,) array
    jitter : float
        Non-negative diagonal shift, applied to same-set Gram matrices.

    Returns
    -------
    (n, m) ndarray
    """
    if jitter < 0:
        raise ContractError("jitter must be non-negative")
    X_a = _as_matrix(X_a, "X_a")
    same = X_b is None
    X_b = X_a if same else _as_matrix(X_b, "X_b")
    d = X_a.shape[1]
    if X_b.shape[1] != d:
        raise ContractError(f"column counts differ: {d} vs {X_b.shape[1]}")
    theta = _as_theta(theta, d)

    sq = np.zeros((X_a.shape[0], X_b.shape[0]))
    for c in range(d):
        diff = X_a[:, c, None] - X_b[None, :, c]
        sq += theta[c] * diff * diff
    K = np.exp(-sq)
    if same:
        # mirror the upper triangle so the result is exactly symmetric
        K = np.triu(K) + np.triu(K, 1).T
        if jitter:
            K[np.diag_indices_from(K)] += jitter
    return K


def default_jitter(K):
    """Diagonal shift ``1e-10 * n * mean(diag(K))`` used before factorization."""
    n = K.shape[0]
    return JITTER_FACTOR * n * float(np.mean(np.diag(K))) if n else 0.0


def jittered_cholesky(K, jitter=None, max_retries=MAX_JITTER_RETRIES):
    """Lower Cholesky factor of ``K + jitter*I`` with x10 escalation on failure.

    ``jitter=None`` starts from :func:`default_jitter`; ``jitter=0`` first
    tries an exact factorization.

    Returns
    -------
    L : (n, n) ndarray
    jitter : float
        The diagonal shift that was actually used.
    """
    if jitter is None:
        jitter = default_jitter(K)
    eye = np.eye(K.shape[0])
    for _ in range(max_retries + 1):
        try:
            return linalg.cholesky(K + jitter * eye, lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            # an exact attempt (jitter=0) falls back to the default shift
            jitter = jitter * 10.0 if jitter > 0 else max(default_jitter(K), JITTER_FACTOR)
    raise IllConditionedError(
        f"Cholesky failed for a {K.shape[0]}x{K.shape[0]} matrix after "
        f"{max_retries} jitter escalations (last jitter {jitter / 10.0:.3g})"
    )


def chol_solve(L, B):
    """Solve ``(L L^T) X = B`` given the lower factor ``L``."""
    return linalg.cho_solve((L, True), B, check_finite=False)
