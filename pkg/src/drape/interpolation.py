"""Empirical constant of the one-dimensional interpolation inequality

    ||phi'||^2 <= C (||phi|| ||phi''|| + ||phi||^2 / |I|^2)

on random trigonometric polynomials restricted to random intervals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

MAX_DEGREE = 8


@dataclass(frozen=True)
class TrigSample:
    a: np.ndarray  # cosine coefficients, index = frequency 0..K
    b: np.ndarray  # sine coefficients, b[0] unused
    lo: float
    length: float


@dataclass(frozen=True)
class InterpolationResult:
    constant: float  # refined constant used for validation
    sample_sup: float  # plain sup over the training draws
    n_train: int
    validation_max: float
    n_validation: int
    n_violations: int

    @property
    def holds(self):
        return self.n_violations == 0


def random_sample(rng, max_degree=MAX_DEGREE):
    K = int(rng.integers(1, max_degree + 1))
    a = rng.normal(size=K + 1)
    b = rng.normal(size=K + 1)
    b[0] = 0.0
    # scale high modes down sometimes so low-frequency shapes are well sampled
    decay = rng.uniform(0, 2)
    k = np.arange(K + 1)
    a /= (1 + k) ** decay
    b /= (1 + k) ** decay
    length = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
    lo = float(rng.uniform(0, 2 * np.pi))
    return TrigSample(a, b, lo, length)


def _values(s: TrigSample, x):
    k = np.arange(len(s.a))[:, None]
    c, sn = np.cos(k * x), np.sin(k * x)
    f = s.a @ c + s.b @ sn
    f1 = (s.b * k[:, 0]) @ c - (s.a * k[:, 0]) @ sn
    f2 = -(s.a * k[:, 0] ** 2) @ c - (s.b * k[:, 0] ** 2) @ sn
    return f, f1, f2


def norms(s: TrigSample):
    """``(||phi||, ||phi'||, ||phi''||)`` in L2 of the interval, by Gauss-Legendre
    with enough nodes to be exact to rounding for the sample's degree."""
    K = len(s.a) - 1
    n = 32 + int(2 * K * s.length)
    t, w = np.polynomial.legendre.leggauss(n)
    x = s.lo + 0.5 * s.length * (t + 1)
    w = 0.5 * s.length * w
    f, f1, f2 = _values(s, x)
    return tuple(float(np.sqrt(np.sum(w * v * v))) for v in (f, f1, f2))


def ratio(s: TrigSample):
    n0, n1, n2 = norms(s)
    den = n0 * n2 + n0**2 / s.length**2
    if den <= 0:
        return 0.0
    return n1**2 / den


def _pack(s):
    return np.concatenate([s.a, s.b[1:], [s.lo, np.log(s.length)]])


def _unpack(v, K):
    a = v[: K + 1]
    b = np.concatenate([[0.0], v[K + 1 : 2 * K + 1]])
    return TrigSample(a, b, float(v[-2]), float(np.exp(np.clip(v[-1], np.log(1e-3), np.log(1e3)))))


def refine(s: TrigSample, max_iter=400):
    """Local maximisation of the ratio starting from ``s`` (Nelder-Mead over the
    coefficients, interval position and log length)."""
    K = len(s.a) - 1
    res = _scipy_minimize(
        lambda v: -ratio(_unpack(v, K)), _pack(s), method="Nelder-Mead", options={"maxiter": max_iter, "xatol": 1e-8, "fatol": 1e-10}
    )
    best = _unpack(res.x, K)
    return best, ratio(best)


def empirical_constant(n_train=1000, n_validation=1000, seed=0, n_refine=5):
    rng = np.random.default_rng(seed)
    train = [random_sample(rng) for _ in range(n_train)]
    r = np.array([ratio(s) for s in train])
    sup = float(r.max())
    const = sup
    for i in np.argsort(r)[::-1][:n_refine]:
        const = max(const, refine(train[i])[1])
    val = np.array([ratio(random_sample(rng)) for _ in range(n_validation)])
    return InterpolationResult(
        constant=const,
        sample_sup=sup,
        n_train=n_train,
        validation_max=float(val.max()),
        n_validation=n_validation,
        n_violations=int(np.sum(val > const)),
    )
