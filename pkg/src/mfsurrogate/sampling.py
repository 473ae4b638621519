"""Design-of-experiments sampling on a box domain."""

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError

METHODS = ("uniform-grid", "latin-hypercube", "uniform-random")


def latin_hypercube(n, d, rng):
    """``n`` points in the unit cube, one per stratum in every 1-D projection."""
    u = rng.random((n, d))
    strata = np.column_stack([rng.permutation(n) for _ in range(d)]) if d else np.empty((n, 0))
    return (strata + u) / n


def uniform_grid(n, d):
    """Full-factorial grid with ``n`` points; requires ``n`` to be a perfect d-th power."""
    per_dim = int(round(n ** (1.0 / d)))
    if per_dim**d != n:
        raise ContractError(f"uniform-grid needs n to be a perfect power of d={d}, got n={n}")
    if per_dim == 1:
        return np.full((1, d), 0.5)
    axes = [np.linspace(0.0, 1.0, per_dim)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])


@dataclass(frozen=True)
class SamplePlan:
    method: str
    n: int
    seed: int
    domain: np.ndarray

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"unknown sampling method {self.method!r}; choose from {METHODS}")
        if self.n < 1:
            raise ContractError("n must be at least 1")
        dom = np.asarray(self.domain, dtype=float)
        if dom.ndim == 1:
            dom = dom[None, :]
        if dom.shape[1] != 2 or not np.all(dom[:, 0] < dom[:, 1]):
            raise ContractError("domain must be (d, 2) with lower < upper")
        object.__setattr__(self, "domain", dom)


def sample(plan):
    """Draw the (n, d) design described by ``plan``, scaled to its domain.

    ``plan.seed`` may also be a ``numpy.random.Generator`` or ``SeedSequence``.
    """
    d = plan.domain.shape[0]
    if plan.method == "uniform-grid":
        unit = uniform_grid(plan.n, d)
    else:
        seed = plan.seed
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        if plan.method == "latin-hypercube":
            unit = latin_hypercube(plan.n, d, rng)
        else:
            unit = rng.random((plan.n, d))
    lo, hi = plan.domain[:, 0], plan.domain[:, 1]
    return lo + unit * (hi - lo)
