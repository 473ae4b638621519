"""Analytical two-fidelity test functions.

Every function takes an (m, d) array and returns an (m,) array. Names and
variant keys are stable identifiers used by the command line:

============  ===  ===========================  ====================
name          d    low-fidelity variants        default (sigma_l, sigma_h)
============  ===  ===========================  ====================
forrester     1    lf1, lf2, lf3                (0.3, 0.3)
hartman3      3    lf                           (0.3, 0.3)
hartman6      6    lf                           (0.3, 0.3)
six_hump      2    lf                           (0.3, 0.3)
bohachevsky   2    lf                           (0.3, 0.3)
booth         2    lf                           (0.3, 0.3)
borehole      8    lf                           (0.3, 0.3)
currin_exp    2    lf                           (0.3, 0.3)
park91a       4    lf                           (0.3, 0.3)
park91b       4    lf                           (0.3, 0.3)
meng_1d       1    lf1, lf2, lf3                (0.05, 0.05)
meng_4d       4    lf                           (0.05, 0.01)
meng_nd       d    lf  (d = 20, 50, 100, ...)   (0.0, 50.0)
============  ===  ===========================  ====================
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from .exceptions import ContractError


class OutOfDomainWarning(UserWarning):
    pass


def _cols(X, d):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if d == 1 else X[None, :]
    if X.shape[1] != d:
        raise ContractError(f"expected {d} input columns, got {X.shape[1]}")
    return X


# ----------------------------------------------------------------------------
# Forrester family

def forrester_hf(X):
    x = _cols(X, 1)[:, 0]
    return (6 * x - 2) ** 2 * np.sin(12 * x - 4)


def forrester_lf(X, A, B, C):
    x = _cols(X, 1)[:, 0]
    return A * (6 * x - 2) ** 2 * np.sin(12 * x - 4) + B * (x - 0.5) - C


FORRESTER_VARIANTS = {
    "lf1": (1.0, 0.0, 5.0),
    "lf2": (0.5, 10.0, 5.0),
    "lf3": (0.1, 10.0, 0.1),
}

# ----------------------------------------------------------------------------
# Hartman

HARTMAN3_C = np.array([1.0, 1.2, 3.0, 3.2])
HARTMAN3_A = np.array([
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
])
HARTMAN3_P = np.array([
    [0.3689, 0.117, 0.2673],
    [0.4699, 0.4387, 0.747],
    [0.1091, 0.8732, 0.5547],
    [0.03815, 0.5743, 0.8828],
])

HARTMAN6_C = np.array([1.0, 1.2, 3.0, 3.2])
HARTMAN6_A = np.array([
    [10.00, 3.0, 17.00, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.00, 0.1, 8.0, 14.0],
    [3.00, 3.5, 1.70, 10.0, 17.0, 8.0],
    [17.00, 8.0, 0.05, 10.0, 0.1, 14.0],
])
HARTMAN6_P = np.array([
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
])
HARTMAN6_L = np.array([0.75, 1.0, 0.8, 1.3, 0.7, 1.1])


def _hartman(X, c, a, p):
    inner = np.einsum("ij,mij->mi", a, (X[:, None, :] - p[None, :, :]) ** 2)
    return -np.exp(-inner) @ c


def hartman3_hf(X):
    return _hartman(_cols(X, 3), HARTMAN3_C, HARTMAN3_A, HARTMAN3_P)


def hartman3_lf(X):
    x1, x2, x3 = _cols(X, 3).T
    return (0.585 - 0.324 * x1 - 0.379 * x2 - 0.431 * x3
            - 0.208 * x1 * x2 + 0.326 * x1 * x3 + 0.193 * x2 * x3
            + 0.225 * x1**2 + 0.263 * x2**2 + 0.274 * x3**2)


def hartman6_hf(X):
    return _hartman(_cols(X, 6), HARTMAN6_C, HARTMAN6_A, HARTMAN6_P)


def hartman6_lf(X):
    return _hartman(_cols(X, 6) * HARTMAN6_L, HARTMAN6_C, HARTMAN6_A, HARTMAN6_P)


# ----------------------------------------------------------------------------
# two-dimensional classics

def six_hump_hf(X):
    x1, x2 = _cols(X, 2).T
    return (4 - 2.1 * x1**2 + x1**4 / 3) * x1**2 + x1 * x2 - 4 * x2**2


def six_hump_lf(X):
    X = _cols(X, 2)
    return six_hump_hf(0.7 * X) - X[:, 0] * X[:, 1] - 15


def bohachevsky_hf(X):
    x1, x2 = _cols(X, 2).T
    return (x1**2 + 2 * x2**2 - 0.3 * np.cos(3 * np.pi * x1)
            - 0.4 * np.cos(4 * np.pi * x2) + 0.7) ** 2


def bohachevsky_lf(X):
    X = _cols(X, 2)
    return bohachevsky_hf(np.column_stack([0.7 * X[:, 0], X[:, 1]])) + X[:, 0] * X[:, 1] - 12


def booth_hf(X):
    # the modified form used for the multi-fidelity study, not the textbook Booth
    x1, x2 = _cols(X, 2).T
    return (x1**2 + 2 * x2**2 - 7) ** 2 + (2 * x1**2 + x2 - 5) ** 2


def booth_lf(X):
    X = _cols(X, 2)
    x1, x2 = X.T
    return booth_hf(np.column_stack([0.4 * x1, x2])) + 1.7 * x1 * x2 - x1 + 2 * x2


# ----------------------------------------------------------------------------
# Borehole: columns are (r_w, r, T_u, H_u, T_l, H_l, L, K_w)

BOREHOLE_BOUNDS = np.array([
    [0.05, 0.15],
    [100.0, 50000.0],
    [63070.0, 115600.0],
    [990.0, 1110.0],
    [63.1, 116.0],
    [700.0, 820.0],
    [1120.0, 1680.0],
    [9855.0, 12045.0],
])


def _borehole(X, A, B):
    rw, r, Tu, Hu, Tl, Hl, L, Kw = _cols(X, 8).T
    log_ratio = np.log(r / rw)
    return A * Tu * (Hu - Hl) / (log_ratio * (B + 2 * L * Tu / (log_ratio * rw**2 * Kw) + Tu / Tl))


def borehole_hf(X):
    return _borehole(X, 2 * np.pi, 1.0)


def borehole_lf(X):
    return _borehole(X, 5.0, 1.5)


# ----------------------------------------------------------------------------
# Currin exponential

def currin_exp_hf(X):
    x1, x2 = _cols(X, 2).T
    with np.errstate(divide="ignore"):
        factor = 1 - np.exp(-1 / (2 * x2))
    return factor * (2300 * x1**3 + 1900 * x1**2 + 2092 * x1 + 60) / (
        100 * x1**3 + 500 * x1**2 + 4 * x1 + 20)


def currin_exp_lf(X):
    # shifted points may leave the unit square; only the downward x2 shift is
    # floored at zero, otherwise exp(-1/(2 x2)) overflows for x2 just below 0
    X = _cols(X, 2)
    total = np.zeros(X.shape[0])
    for s1 in (0.05, -0.05):
        for s2 in (0.05, -0.05):
            Z = X + np.array([s1, s2])
            if s2 < 0:
                Z[:, 1] = np.maximum(Z[:, 1], 0.0)
            total += currin_exp_hf(Z)
    return total / 4


# ----------------------------------------------------------------------------
# Park 1991

PARK91A_X1_FLOOR = 1e-6


def park91a_hf(X):
    x1, x2, x3, x4 = _cols(X, 4).T
    x1 = np.clip(x1, PARK91A_X1_FLOOR, None)
    return (x1 / 2 * (np.sqrt(1 + (x2 + x3**2) * x4 / x1**2) - 1)
            + (x1 + 3 * x4) * np.exp(1 + np.sin(x3)))


def park91a_lf(X):
    X = _cols(X, 4)
    x1, x2, x3, _ = X.T
    return (1 + np.sin(x1) / 10) * park91a_hf(X) - 2 * x1 + x2**2 + x3**2 + 0.5


def park91b_hf(X):
    x1, x2, x3, x4 = _cols(X, 4).T
    return 2.0 / 3.0 * np.exp(x1 + x2) - x4 * np.sin(x3) + x3


def park91b_lf(X):
    return 1.2 * park91b_hf(X) - 1


# ----------------------------------------------------------------------------
# functions used for the network-based models

def meng_1d_hf(X):
    x = _cols(X, 1)[:, 0]
    return (x - np.sqrt(2)) * np.sin(8 * np.pi * x) ** 2


def meng_1d_lf1(X):
    x = _cols(X, 1)[:, 0]
    return np.sin(8 * np.pi * x)


def meng_1d_lf2(X):
    return 1.2 * meng_1d_hf(X) - 0.5


def meng_1d_lf3(X):
    x = _cols(X, 1)[:, 0]
    return np.sin(16 * np.pi * x) ** 2


def meng_4d_hf(X):
    x1, x2, x3, x4 = _cols(X, 4).T
    return 0.5 * (0.1 * np.exp(x1 + x2) - x4 * np.sin(12 * np.pi * x3) + x3)


def meng_4d_lf(X):
    return 1.2 * meng_4d_hf(X) - 0.5


def meng_nd_hf(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.sum((2 * X[:, 1:] ** 2 - X[:, :-1]) ** 2, axis=1) + (X[:, 0] - 1) ** 2


def meng_nd_lf(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return 0.8 * meng_nd_hf(X) + np.sum(0.4 * X[:, :-1] * X[:, 1:], axis=1) - 50


# ----------------------------------------------------------------------------
# catalog

@dataclass(frozen=True)
class BenchmarkFunction:
    """A high-fidelity function, its low-fidelity variants and declared domain."""

    name: str
    dim: int
    domain: np.ndarray
    hf: Callable
    lf_variants: Dict[str, Callable]
    default_noise: Tuple[float, float] = (0.3, 0.3)
    default_variant: str = "lf"
    notes: str = field(default="", compare=False)

    def __post_init__(self):
        dom = np.asarray(self.domain, dtype=float)
        if dom.shape != (self.dim, 2):
            raise ContractError(f"{self.name}: domain shape {dom.shape} does not match dim {self.dim}")
        object.__setattr__(self, "domain", dom)

    @property
    def variants(self):
        return tuple(self.lf_variants)

    def evaluate(self, fidelity, X):
        return evaluate(self, fidelity, X)


def _check_domain(fn, X):
    lo, hi = fn.domain[:, 0], fn.domain[:, 1]
    tol = 1e-9 * (hi - lo)
    if np.any(X < lo - tol) or np.any(X > hi + tol):
        warnings.warn(f"{fn.name}: evaluation outside the declared domain", OutOfDomainWarning,
                      stacklevel=3)


def evaluate(fn, fidelity, X):
    """Evaluate ``fn`` at ``X``.

    ``fidelity`` is ``"hf"``/``"high"`` or the key of a low-fidelity variant;
    ``"lf"``/``"low"`` selects the default variant. Points outside the domain
    are evaluated but raise :class:`OutOfDomainWarning`.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if fn.dim == 1 else X[None, :]
    if X.shape[1] != fn.dim:
        raise ContractError(f"{fn.name} expects {fn.dim} columns, got {X.shape[1]}")
    _check_domain(fn, X)
    if fidelity in ("hf", "high"):
        return fn.hf(X)
    key = fn.default_variant if fidelity in ("lf", "low") else fidelity
    if key not in fn.lf_variants:
        raise KeyError(f"{fn.name} has no variant {fidelity!r}; available: {fn.variants}")
    return fn.lf_variants[key](X)


def _unit(d):
    return np.tile([0.0, 1.0], (d, 1))


def meng_nd(dim, name=None):
    """The scalable quartic-chain function on ``[-3, 3]^dim``."""
    if dim < 2:
        raise ContractError("meng_nd needs dim >= 2")
    return BenchmarkFunction(
        name or f"meng_nd_{dim}",
        dim, np.tile([-3.0, 3.0], (dim, 1)), meng_nd_hf, {"lf": meng_nd_lf},
        default_noise=(0.0, 50.0),
    )


def _forrester_variant(A, B, C):
    return lambda X: forrester_lf(X, A, B, C)


def catalog():
    """All benchmark functions, in a fixed order."""
    return [
        BenchmarkFunction("forrester", 1, _unit(1), forrester_hf,
                          {k: _forrester_variant(*v) for k, v in FORRESTER_VARIANTS.items()},
                          default_variant="lf2"),
        BenchmarkFunction("hartman3", 3, _unit(3), hartman3_hf, {"lf": hartman3_lf}),
        BenchmarkFunction("hartman6", 6, _unit(6), hartman6_hf, {"lf": hartman6_lf}),
        BenchmarkFunction("six_hump", 2, np.tile([-2.0, 2.0], (2, 1)), six_hump_hf, {"lf": six_hump_lf}),
        BenchmarkFunction("bohachevsky", 2, np.tile([-5.0, 5.0], (2, 1)), bohachevsky_hf,
                          {"lf": bohachevsky_lf}),
        BenchmarkFunction("booth", 2, np.tile([-10.0, 10.0], (2, 1)), booth_hf, {"lf": booth_lf}),
        BenchmarkFunction("borehole", 8, BOREHOLE_BOUNDS, borehole_hf, {"lf": borehole_lf}),
        BenchmarkFunction("currin_exp", 2, _unit(2), currin_exp_hf, {"lf": currin_exp_lf}),
        BenchmarkFunction("park91a", 4, _unit(4), park91a_hf, {"lf": park91a_lf}),
        BenchmarkFunction("park91b", 4, _unit(4), park91b_hf, {"lf": park91b_lf}),
        BenchmarkFunction("meng_1d", 1, _unit(1), meng_1d_hf,
                          {"lf1": meng_1d_lf1, "lf2": meng_1d_lf2, "lf3": meng_1d_lf3},
                          default_noise=(0.05, 0.05), default_variant="lf2"),
        BenchmarkFunction("meng_4d", 4, _unit(4), meng_4d_hf, {"lf": meng_4d_lf},
                          default_noise=(0.05, 0.01)),
        meng_nd(20, name="meng_nd"),
    ]


def get(name):
    """Look up a benchmark by name; ``meng_nd_<d>`` builds the scalable function at any d."""
    for fn in catalog():
        if fn.name == name:
            return fn
    if name.startswith("meng_nd_"):
        try:
            return meng_nd(int(name.rsplit("_", 1)[1]))
        except ValueError:
            pass
    raise KeyError(f"unknown benchmark {name!r}; available: {[f.name for f in catalog()]}")
