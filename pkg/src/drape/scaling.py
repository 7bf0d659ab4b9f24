"""Closed-form excess-energy law, phase classification, sweeps and slope fits."""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .params import CanonicalParams, PhysicalParams, dimensionless_groups, params_from_dict, validate

GOLDEN = (1 + math.sqrt(5)) / 2
SCAN_POINTS = 10_000
SCAN_LO = 1e-6
CONFINED = "Confined"
RELEASED = "Released"
CONFINED_ONLY = "ConfinedOnly"
RELEASE_CANDIDATE = "ReleaseCandidate"


@dataclass(frozen=True)
class ScalingPoint:
    params: object
    alpha: float
    beta: float
    eps: float
    branch_values: dict
    phase: str

    def to_row(self):
        row = dict(self.params.to_dict())
        row.update(alpha=self.alpha, beta=self.beta, eps=self.eps, phase=self.phase)
        row.update(
            confined=self.branch_values["confined"],
            released=self.branch_values["released"],
            l_star=self.branch_values["l_star"],
        )
        return row


@dataclass(frozen=True)
class SlopeFit:
    exponent: float
    intercept: float
    r2: float
    n_points: int


@dataclass(frozen=True)
class Skipped:
    params: dict
    reasons: list


@dataclass
class SweepResult:
    points: list = field(default_factory=list)
    skipped: list = field(default_factory=list)


def golden_section(f, a, b, tol=1e-12, max_iter=200):
    """Minimize a unimodal ``f`` on ``[a, b]``. Returns ``(x, f(x))``."""
    invphi = 1 / GOLDEN
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def scan_then_refine(f, lo, hi, n=SCAN_POINTS):
    """Dense log-spaced scan of a vectorized ``f`` on ``(lo, hi)``, then golden
    section on the bracket around the best sample, working in log coordinates.

    Never returns a value above the best scan sample.
    """
    t = np.geomspace(lo, hi, n)
    v = f(t)
    i = int(np.argmin(v))
    best_t, best_v = float(t[i]), float(v[i])
    a = math.log(t[max(i - 1, 0)])
    b = math.log(t[min(i + 1, n - 1)])
    if b > a:
        s, fs = golden_section(lambda s: float(f(np.array([math.exp(s)]))[0]), a, b)
        if fs < best_v:
            return math.exp(s), fs
    return best_t, best_v


def _physical(p):
    if isinstance(p, CanonicalParams):
        return p.to_physical()
    return p


def confined_branch(p):
    p = _physical(p)
    stl = math.sqrt(p.tau * p.L)
    return p.h * stl * math.log(min(p.h * p.L / stl, 4 * p.W**2) / p.w0**2 + 1)


def released_objective(p):
    """Vectorized released-branch integrand as a function of ``l``."""
    p = _physical(p)
    stl = math.sqrt(p.tau * p.L)
    a = p.h / (p.w0**2 * stl)

    def f(l):
        l = np.asarray(l, dtype=float)
        t = p.W / l
        return p.h * stl * np.log(a * l + 1) + p.w0**2 * p.tau * p.L / l + p.W * p.Delta * np.minimum(t, t**3)

    return f


def released_branch(p):
    """``(value, l_star)`` for the released branch, minimized over ``l in (0, L)``."""
    p = _physical(p)
    l_star, value = scan_then_refine(released_objective(p), SCAN_LO * p.L, p.L)
    return value, l_star


def epsilon(p):
    """Excess-energy scale for physical or canonical params."""
    bad = validate(p)
    if bad:
        from .params import InvalidParamsError

        raise InvalidParamsError(bad)
    q = _physical(p)
    conf = confined_branch(q)
    rel, l_star = released_branch(q)
    scale = q.W * q.Delta
    phase = CONFINED if conf <= rel else RELEASED
    g = dimensionless_groups(p)
    return ScalingPoint(
        params=p,
        alpha=g["alpha"],
        beta=g["beta"],
        eps=scale * min(conf, rel),
        branch_values={"confined": scale * conf, "released": scale * rel, "l_star": l_star},
        phase=phase,
    )


def classify(alpha):
    if alpha < 0:
        raise ValueError(f"alpha = {alpha} must be >= 0")
    return CONFINED_ONLY if alpha < GOLDEN else RELEASE_CANDIDATE


def avg_excess(alpha, beta, W, L, Delta, w0=None):
    """Average excess ``eps / (L W Delta)`` from the two dimensionless groups.

    ``w0`` is only needed to check the not-too-long precondition
    ``alpha <= (2W/w0)^2``; without it the check is skipped.
    Returns ``(value, r_star)``.
    """
    if w0 is not None and alpha > (2 * W / w0) ** 2 * (1 + 1e-12):
        raise ValueError(f"alpha = {alpha:g} exceeds (2W/w0)^2 = {(2 * W / w0) ** 2:g}")
    ab2 = alpha * beta**2
    conf = ab2 * math.log(alpha + 1)

    def f(r):
        r = np.asarray(r, dtype=float)
        t = W / (L * r)
        return ab2 * (np.log(alpha * r + 1) + 1 / (alpha * r)) + W / L * Delta * np.minimum(t, t**3)

    r_star, rel = scan_then_refine(f, SCAN_LO, 1.0)
    return min(conf, rel), r_star


def monotone_h_check(p, hs):
    """Epsilon along a list of thicknesses, others fixed (convenience for tests)."""
    out = []
    for h in hs:
        q = type(p)(**{**p.to_dict(), "h": h})
        out.append(epsilon(q).eps)
    return out


def _expand(ranges, fixed):
    """Cartesian product of the ``ranges`` mapping. Each value is either an
    explicit list or ``{"min", "max", "n", "log"}``."""
    axes = []
    for k in sorted(ranges):
        spec = ranges[k]
        if isinstance(spec, dict):
            n = int(spec["n"])
            if spec.get("log", True):
                vals = np.geomspace(spec["min"], spec["max"], n)
            else:
                vals = np.linspace(spec["min"], spec["max"], n)
            vals = [float(v) for v in vals]
        else:
            vals = [float(v) for v in spec]
        if not vals:
            raise ValueError(f"range {k} is empty")
        axes.append((k, vals))
    if not axes:
        raise ValueError("sweep needs at least one range")
    keys = [k for k, _ in axes]
    for combo in itertools.product(*[v for _, v in axes]):
        d = dict(fixed)
        d.update(zip(keys, combo))
        yield d


def _evaluate(d):
    p = params_from_dict(d)
    bad = validate(p)
    if bad:
        return Skipped(params=d, reasons=[v.message for v in bad])
    return epsilon(p)


def sweep(ranges, fixed, jobs=1):
    """Evaluate epsilon over a product grid. Infeasible points are kept as
    :class:`Skipped` records. Result order follows the grid order."""
    dicts = list(_expand(ranges, fixed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_evaluate, dicts, chunksize=max(1, len(dicts) // (4 * jobs))))
    else:
        results = [_evaluate(d) for d in dicts]
    out = SweepResult()
    for r in results:
        (out.skipped if isinstance(r, Skipped) else out.points).append(r)
    return out


def fit_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D of equal length")
    if len(x) < 4:
        raise ValueError(f"need at least 4 points, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("x and y must be positive")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) <= 1e-12 * max(1.0, np.abs(lx).max()):
        raise ValueError("degenerate x range")
    A = np.vstack([lx, np.ones_like(lx)]).T
    (k, c), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (k * lx + c)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return SlopeFit(exponent=float(k), intercept=float(c), r2=float(r2), n_points=len(x))


SWEEP_COLUMNS = ["h", "W", "L", "tau", "w0", "Delta", "alpha", "beta", "eps", "confined", "released", "l_star", "phase"]


def write_sweep_csv(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for pt in result.points:
            row = pt.to_row()
            row.setdefault("W", 0.5)
            row.setdefault("Delta", 1.0)
            w.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])


def write_skipped_csv(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["params", "reasons"])
        for s in result.skipped:
            w.writerow([";".join(f"{k}={_fmt(v)}" for k, v in sorted(s.params.items())), " | ".join(s.reasons)])


def write_plot_data(x, y, path, header=None):
    """Two-column whitespace file readable by gnuplot."""
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for a, b in zip(x, y):
            fh.write(f"{_fmt(a)} {_fmt(b)}\n")


def read_plot_data(path):
    xs, ys = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, b = line.split()[:2]
            xs.append(float(a))
            ys.append(float(b))
    return np.array(xs), np.array(ys)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)
