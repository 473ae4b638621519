"""Dataset containers, standardization and the Gaussian predictive summary.

CSV layout written and read by :meth:`LabeledDataset.to_csv` /
:meth:`LabeledDataset.from_csv`: one header line ``x1,...,xd,y`` followed by
one row per sample. Fidelity and noise level are not stored in the file; they
belong to the experiment configuration.
"""

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from .exceptions import ContractError, DegenerateDataError

FIDELITIES = ("low", "high")


@dataclass(frozen=True)
class LabeledDataset:
    """Inputs ``X`` (n, d) and responses ``y`` (n,) tagged with a fidelity."""

    X: np.ndarray
    y: np.ndarray
    fidelity: str = "high"
    noise_std: Optional[float] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ContractError(f"X has shape {X.shape} but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ContractError("X and y must be finite")
        if self.fidelity not in FIDELITIES:
            raise ContractError(f"fidelity must be one of {FIDELITIES}, got {self.fidelity!r}")
        if self.noise_std is not None and self.noise_std < 0:
            raise ContractError("noise_std must be non-negative")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def with_y(self, y):
        return replace(self, y=y)

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(self.d)] + ["y"])
            for row, val in zip(self.X, self.y):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(val))])

    @classmethod
    def from_csv(cls, path, fidelity="high", noise_std=None):
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[-1] != "y":
                raise ContractError(f"{path}: last header column must be 'y'")
            rows = np.array([[float(v) for v in r] for r in reader if r])
        if rows.size == 0:
            raise ContractError(f"{path}: no data rows")
        return cls(rows[:, :-1], rows[:, -1], fidelity=fidelity, noise_std=noise_std)


def reject_duplicates(X, tol=1e-12):
    """Raise if two rows of ``X`` coincide within ``tol`` (max-norm)."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] > 1 and pdist(X, "chebyshev").min() <= tol:
        raise ContractError("duplicate input rows are not allowed for GPR training")


@dataclass(frozen=True)
class Standardizer:
    """Affine maps: inputs to the unit box, outputs to zero mean / unit variance."""

    input_lower: np.ndarray
    input_upper: np.ndarray
    output_mean: float
    output_std: float

    def __post_init__(self):
        lo = np.asarray(self.input_lower, dtype=float).reshape(-1)
        hi = np.asarray(self.input_upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ContractError("bounds must be finite and of equal length")
        if not np.all(lo < hi):
            raise ContractError("each lower bound must be below its upper bound")
        if not self.output_std > 0:
            raise DegenerateDataError("output standard deviation must be positive")
        object.__setattr__(self, "input_lower", lo)
        object.__setattr__(self, "input_upper", hi)

    @property
    def d(self):
        return self.input_lower.shape[0]

    def forward_x(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.d:
            raise ContractError(f"expected {self.d} input columns, got {X.shape[1]}")
        return (X - self.input_lower) / (self.input_upper - self.input_lower)

    def inverse_x(self, Z):
        return np.asarray(Z, dtype=float) * (self.input_upper - self.input_lower) + self.input_lower

    def forward_y(self, y):
        return (np.asarray(y, dtype=float) - self.output_mean) / self.output_std

    def inverse_y(self, z):
        return np.asarray(z, dtype=float) * self.output_std + self.output_mean

    def forward_std(self, sigma):
        """Map a noise standard deviation into standardized units."""
        return sigma / self.output_std

    def inverse_std(self, s):
        return s * self.output_std

    def transform(self, data):
        noise = None if data.noise_std is None else self.forward_std(data.noise_std)
        return LabeledDataset(self.forward_x(data.X), self.forward_y(data.y), data.fidelity, noise)

    def inverse_predictive(self, pred):
        """Map a standardized-space :class:`PredictiveDistribution` back to original units."""
        return PredictiveDistribution(
            self.inverse_y(pred.mean),
            pred.variance * self.output_std**2,
            includes_noise=pred.includes_noise,
            n_clamped=pred.n_clamped,
        )


def standardize_fit(train, domain_bounds):
    """Build a :class:`Standardizer` from the declared domain and HF training responses.

    ``domain_bounds`` is a (d, 2) array of ``[lower, upper]`` rows. The output
    scale uses the population standard deviation of ``train.y``.
    """
    bounds = np.asarray(domain_bounds, dtype=float)
    if bounds.ndim == 1:
        bounds = bounds[None, :]
    if bounds.shape != (train.d, 2):
        raise ContractError(f"domain_bounds must have shape ({train.d}, 2), got {bounds.shape}")
    std = float(np.std(train.y))
    if not std > 0:
        raise DegenerateDataError("training responses are constant; cannot standardize")
    return Standardizer(bounds[:, 0], bounds[:, 1], float(np.mean(train.y)), std)


def add_gaussian_noise(data, sigma, rng_seed):
    """Return a copy of ``data`` with i.i.d. N(0, sigma^2) added to ``y``.

    ``rng_seed`` may be an integer, a ``SeedSequence`` or a ``Generator``.
    """
    if sigma < 0:
        raise ContractError("sigma must be non-negative")
    if sigma == 0:
        return data
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    y = data.y + sigma * rng.standard_normal(data.n)
    return replace(data, y=y, noise_std=float(sigma))


@dataclass
class PredictiveDistribution:
    """Pointwise Gaussian prediction over a set of query points.

    ``n_clamped`` counts variances that came out negative through cancellation
    and were set to zero.
    """

    mean: np.ndarray
    variance: np.ndarray
    includes_noise: bool = False
    n_clamped: int = field(default=0)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.variance = np.asarray(self.variance, dtype=float).reshape(-1)
        if self.mean.shape != self.variance.shape:
            raise ContractError("mean and variance lengths differ")
        if np.any(self.variance < 0):
            raise ContractError("variances must be non-negative")

    @property
    def std(self):
        return np.sqrt(self.variance)

    def __len__(self):
        return self.mean.shape[0]

    def add_noise(self, noise_var):
        """Noise-inclusive copy; adding to an already noisy prediction is an error."""
        if self.includes_noise:
            raise ContractError("prediction already includes observation noise")
        return PredictiveDistribution(self.mean, self.variance + noise_var, True, self.n_clamped)
