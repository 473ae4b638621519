"""Bayesian neural networks sampled with preconditioned SGLD.

One chain iterates::

    v   <- alpha * v + (1 - alpha) * g * g
    G   <- 1 / (lambda_G + sqrt(v))
    th  <- th + (eps / 2) * G * g + sqrt(eps * G) * xi,   xi ~ N(0, I)

where ``g`` is the gradient of the log posterior. The curvature correction
of the preconditioner is dropped. With ``preconditioner="identity"`` the
update is plain SGLD: ``th + (eps / 2) g + sqrt(eps) xi``.

The chain is a strict sequence of updates driven by one generator, so a
fixed seed reproduces the samples exactly.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .data import PredictiveDistribution
from .exceptions import ContractError, SamplerDivergedError
from .nn import MlpSpec, init_params, mlp_backward, mlp_forward

PRECONDITIONERS = ("rmsprop", "identity")
NOISE_MODES = ("fixed", "estimate")


@dataclass(frozen=True)
class PsgldConfig:
    """Sampler settings.

    Attributes
    ----------
    step_size : float
        Base step ``eps``.
    burn_in : int
        Iterations discarded before collection starts.
    thinning : int
        Keep every ``thinning``-th iterate after burn-in.
    n_samples : int
        Number of kept iterates.
    decay : float
        EMA factor ``alpha`` of the squared-gradient average.
    floor : float
        ``lambda_G`` in the preconditioner.
    prior_std : float
        Standard deviation of the zero-mean Gaussian prior on every weight
        and bias; ``inf`` gives a flat prior.
    noise_mode : {"fixed", "estimate"}
        ``estimate`` samples ``log sigma`` as an extra coordinate.
    log_sigma_prior_std : float
        Prior std of ``log sigma`` around the supplied ``sigma`` (estimate mode).
    step_decay : float, optional
        If set, ``eps_t = step_size * (1 + t) ** (-step_decay)``.
    batch_size : int, optional
        Mini-batch size; the likelihood gradient is rescaled by ``N / n``.
    preconditioner : {"rmsprop", "identity"}
    """

    step_size: float = 1e-3
    burn_in: int = 20000
    thinning: int = 100
    n_samples: int = 300
    decay: float = 0.99
    floor: float = 1e-5
    prior_std: float = 1.0
    noise_mode: str = "fixed"
    log_sigma_prior_std: float = 1.0
    step_decay: Optional[float] = None
    batch_size: Optional[int] = None
    preconditioner: str = "rmsprop"

    def __post_init__(self):
        if not self.step_size >= 0:
            raise ContractError("step_size must be non-negative")
        if self.n_samples < 1 or self.burn_in < 0 or self.thinning < 1:
            raise ContractError("need n_samples >= 1, burn_in >= 0 and thinning >= 1")
        if not 0 < self.decay < 1:
            raise ContractError("decay must lie in (0, 1)")
        if not self.floor > 0 or not self.prior_std > 0:
            raise ContractError("floor and prior_std must be positive")
        if self.noise_mode not in NOISE_MODES:
            raise ContractError(f"noise_mode must be one of {NOISE_MODES}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ContractError(f"preconditioner must be one of {PRECONDITIONERS}")

    @property
    def n_iterations(self):
        return self.burn_in + self.n_samples * self.thinning

    def step_at(self, t):
        if self.step_decay is None:
            return self.step_size
        return self.step_size * (1.0 + t) ** (-self.step_decay)


@dataclass(frozen=True)
class PosteriorEnsemble:
    """Kept parameter vectors of one chain, one row per sample."""

    samples: np.ndarray
    spec: Any
    sigma_samples: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    def outputs(self, X):
        """``(n_samples, m)`` network outputs at ``X``."""
        return np.stack([mlp_forward(p, self.spec, X) for p in self.samples])


def _backward_for(model):
    if isinstance(model, MlpSpec):
        return lambda params, X, dout: mlp_backward(params, model, X, dout)
    if callable(model):
        return model
    raise ContractError("model must be an MlpSpec or a callable (params, X, dout) -> (out, grad)")


def log_posterior_grad(params, model, data, prior_std, sigma_noise, batch=None,
                       log_sigma=None, log_sigma_prior=None):
    """Log posterior (up to a constant) and its gradient.

    Parameters
    ----------
    params : (P,) ndarray
    model : MlpSpec or callable
        A callable must map ``(params, X, dout)`` to the outputs at ``X``
        and the gradient of ``sum(dout * outputs)``, where ``dout`` is a
        function of the outputs (see :func:`mlp_backward`).
    data : LabeledDataset or None
        ``None`` (or an empty set) leaves only the prior term.
    prior_std : float
        ``inf`` drops the prior.
    sigma_noise : float
        Observation noise standard deviation.
    batch : index array, optional
        Mini-batch rows; the likelihood term is scaled by ``N / len(batch)``.
    log_sigma : float, optional
        When given, ``sigma = exp(log_sigma)`` and the derivative with
        respect to ``log_sigma`` is returned as a third value.
    log_sigma_prior : (mean, std), optional
        Gaussian prior on ``log_sigma``.

    Returns
    -------
    value : float
    grad : (P,) ndarray
    grad_log_sigma : float
        Only when ``log_sigma`` is given.
    """
    params = np.asarray(params, dtype=float)
    if np.isinf(prior_std):
        value, grad = 0.0, np.zeros_like(params)
    else:
        value = -0.5 * float(params @ params) / prior_std**2
        grad = -params / prior_std**2
    sigma = float(np.exp(log_sigma)) if log_sigma is not None else float(sigma_noise)
    if not sigma > 0:
        raise ContractError("sigma_noise must be positive")
    g_ls = 0.0
    if data is not None and data.n:
        X, y = data.X, data.y
        scale = 1.0
        if batch is not None:
            X, y = X[batch], y[batch]
            scale = data.n / len(y)
        s2 = sigma * sigma
        box = {}

        def sensitivities(out):
            box["r"] = y - out
            return scale * box["r"] / s2

        _, g_lik = _backward_for(model)(params, X, sensitivities)
        r = box["r"]
        value += scale * (-0.5 * float(r @ r) / s2 - len(y) * np.log(sigma))
        grad = grad + g_lik
        g_ls = scale * (float(r @ r) / s2 - len(y))
    if log_sigma is None:
        return float(value), grad
    if log_sigma_prior is not None:
        mu, sd = log_sigma_prior
        value += -0.5 * (log_sigma - mu) ** 2 / sd**2
        g_ls += -(log_sigma - mu) / sd**2
    return float(value), grad, float(g_ls)


def psgld_step(theta, grad, v, eps, config, rng):
    """One update in place on ``theta`` and ``v``; returns ``theta``."""
    if config.preconditioner == "identity":
        G = 1.0
    else:
        v *= config.decay
        v += (1.0 - config.decay) * grad * grad
        G = 1.0 / (config.floor + np.sqrt(v))
    noise = rng.standard_normal(theta.shape[0])
    theta += 0.5 * eps * G * grad + np.sqrt(eps * G) * noise
    return theta


def psgld_chain(grad_fn: Callable, init, config, rng):
    """Run one chain on an arbitrary log-density gradient.

    ``grad_fn(theta, t)`` returns the gradient at iteration ``t``. The
    squared-gradient average starts at the first gradient's square so the
    first steps are not blown up by an empty average. Coordinates whose
    first gradient is exactly zero (zero-initialized biases under the prior
    alone) start at the mean of the others, or at 1, instead of giving a
    preconditioner of ``1 / floor``.

    Returns
    -------
    (n_samples, P) ndarray
    """
    theta = np.array(init, dtype=float)
    kept = np.empty((config.n_samples, theta.shape[0]))
    v = None
    k = 0
    for t in range(config.n_iterations):
        grad = grad_fn(theta, t)
        if v is None:
            v = grad * grad
            zero = v == 0
            if zero.any():
                v[zero] = v[~zero].mean() if not zero.all() else 1.0
        psgld_step(theta, grad, v, config.step_at(t), config, rng)
        if not np.all(np.isfinite(theta)):
            raise SamplerDivergedError(t)
        done = t + 1 - config.burn_in
        if done > 0 and done % config.thinning == 0:
            kept[k] = theta
            k += 1
    return kept


def psgld_sample(data, spec, config, init=None, sigma_noise=1.0, seed=0):
    """Sample BNN parameters given the HF-type dataset ``data``.

    Parameters
    ----------
    data : LabeledDataset
    spec : MlpSpec
    config : PsgldConfig
    init : ndarray, optional
        Starting parameters; default is the Glorot draw from ``spec.seed``.
    sigma_noise : float
        Known noise std, or the starting value and prior centre in
        ``estimate`` mode.
    seed : int, SeedSequence or Generator
        Drives the injected noise and mini-batch selection.

    Returns
    -------
    PosteriorEnsemble
    """
    if data.d != spec.d:
        raise ContractError(f"data has d={data.d}, network expects {spec.d}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    theta0 = init_params(spec) if init is None else np.asarray(init, dtype=float)
    estimate = config.noise_mode == "estimate"
    batch_size = config.batch_size
    n = data.n

    def batch_rows():
        if batch_size is None or batch_size >= n:
            return None
        return rng.choice(n, size=batch_size, replace=False)

    if estimate:
        prior = (float(np.log(sigma_noise)), config.log_sigma_prior_std)

        def grad_fn(theta, t):
            _, g, g_ls = log_posterior_grad(theta[:-1], spec, data, config.prior_std, None,
                                            batch_rows(), theta[-1], prior)
            return np.append(g, g_ls)

        start = np.append(theta0, np.log(sigma_noise))
    else:
        def grad_fn(theta, t):
            return log_posterior_grad(theta, spec, data, config.prior_std, sigma_noise,
                                      batch_rows())[1]

        start = theta0
    kept = psgld_chain(grad_fn, start, config, rng)
    if estimate:
        return PosteriorEnsemble(kept[:, :-1], spec, np.exp(kept[:, -1]))
    return PosteriorEnsemble(kept, spec, None)


def _noise_var(ensemble, sigma_noise):
    if sigma_noise is not None:
        return float(sigma_noise) ** 2
    if ensemble.sigma_samples is None:
        raise ContractError("sigma_noise is required for an ensemble sampled with fixed noise")
    return float(np.mean(ensemble.sigma_samples**2))


def bnn_predict(ensemble, X_query, sigma_noise=None, include_noise=False):
    """Moment-matched Gaussian summary of the ensemble's predictions.

    The mean is the sample average of the network outputs and the latent
    variance is their population variance (divisor ``n_samples``). With
    ``include_noise`` the noise variance is added: ``sigma_noise**2``, or
    the ensemble mean of ``sigma**2`` when the noise was sampled.
    """
    if ensemble.n_samples == 0:
        raise ContractError("empty ensemble")
    outs = ensemble.outputs(X_query)
    mean = outs.mean(axis=0)
    var = np.mean((outs - mean) ** 2, axis=0)
    pred = PredictiveDistribution(mean, var)
    return pred.add_noise(_noise_var(ensemble, sigma_noise)) if include_noise else pred


__all__ = ["PsgldConfig", "PosteriorEnsemble", "log_posterior_grad", "psgld_step", "psgld_chain",
           "psgld_sample", "bnn_predict"]
