"""Direct minimisation of the discrete energy with the top row clamped.

Limited-memory BFGS with a strong-Wolfe line search and a diagonal
preconditioner taken from the quadratic part of the energy. All other edges
are free. Several starts are run and the best one is reported.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import constructions as cons
from .energy import (
    DeformationField,
    EnergyBreakdown,
    Grid,
    boundary_profile,
    bulk_minimizer,
    energy_and_gradient,
    fvk_energy,
    operators,
)
from .params import CanonicalParams, require_valid

WRINKLED = "wrinkled"
FLAT = "flat"


@dataclass(frozen=True)
class InitStrategy:
    kind: str
    plan: object = None  # ConstructionPlan, or None for the best candidate
    sigma: float = 0.0
    seed: int = 0

    KINDS = ("flat", "bulk_only", "construction", "perturbed")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown init strategy {self.kind!r}; expected one of {self.KINDS}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def label(self):
        if self.kind == "construction":
            if self.plan is None:
                return "construction(best)"
            return f"construction({_plan_label(self.plan)})"
        if self.kind == "perturbed":
            return f"perturbed({self.sigma:g},{self.seed})"
        return self.kind

    @classmethod
    def parse(cls, s):
        """``flat``, ``bulk_only``, ``construction`` or ``perturbed:SIGMA:SEED``."""
        parts = s.split(":")
        if parts[0] == "perturbed":
            if len(parts) != 3:
                raise ValueError("perturbed needs the form perturbed:SIGMA:SEED")
            return cls("perturbed", sigma=float(parts[1]), seed=int(parts[2]))
        if parts[0] == "construction" and len(parts) in (1, 2):
            if len(parts) == 2 and parts[1] not in ("", "best"):
                raise ValueError("only construction:best is accepted on the command line")
            return cls("construction")
        if len(parts) != 1:
            raise ValueError(f"bad init strategy {s!r}")
        return cls(parts[0])

    def to_str(self):
        if self.kind == "perturbed":
            return f"perturbed:{self.sigma!r}:{self.seed}"
        if self.kind == "construction":
            return "construction:best"
        return self.kind


def _plan_label(plan):
    tag = plan.kind
    if plan.n is not None:
        tag += f",n={plan.n}"
    if plan.l is not None:
        tag += f",l={plan.l:g}"
    if plan.variant is not None:
        tag += f",{plan.variant}"
    return tag


@dataclass(frozen=True)
class MinimizeOptions:
    max_iters: int = 5000
    grad_tol: float = 1e-8
    relative_tol: bool = True  # tolerance is grad_tol * (1 + |E|)
    memory: int = 10
    max_line_search_steps: int = 40
    multistart: tuple = None  # None means the default set built from rng_seed
    rng_seed: int = 0
    boundary: str = WRINKLED
    max_seconds: float = None  # wall-clock cap per start; breaks determinism when hit
    jobs: int = 1

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.memory < 1 or self.max_line_search_steps < 1:
            raise ValueError("memory and max_line_search_steps must be >= 1")
        if self.boundary not in (WRINKLED, FLAT):
            raise ValueError(f"boundary must be {WRINKLED!r} or {FLAT!r}")

    def starts(self, p=None):
        if self.multistart is not None:
            return tuple(self.multistart)
        sigma = 0.25 * p.w0 / math.pi if p is not None else 1e-3
        return (
            InitStrategy("bulk_only"),
            InitStrategy("construction"),
            InitStrategy("perturbed", sigma=sigma, seed=self.rng_seed),
            InitStrategy("perturbed", sigma=sigma, seed=self.rng_seed + 1),
        )


@dataclass(frozen=True)
class StartTrace:
    label: str
    iterations: int
    n_evals: int
    energy: float
    grad_norm: float
    converged: bool
    message: str
    history: tuple = ()  # (iteration, energy, grad sup-norm, step)

    def to_dict(self, with_history=False):
        d = {
            "label": self.label,
            "iterations": self.iterations,
            "n_evals": self.n_evals,
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "message": self.message,
        }
        if with_history:
            d["history"] = [list(r) for r in self.history]
        return d


@dataclass(frozen=True)
class MinimizeReport:
    best_field: DeformationField
    breakdown: EnergyBreakdown
    starts: tuple
    best_index: int
    construction_total: float = None  # lowest realized construction total, if one was built
    construction_label: str = None

    @property
    def converged(self):
        return tuple(s.converged for s in self.starts)

    def sandwich(self, rtol_low=1e-9, rtol_high=1e-6):
        """``(bulk <= total, total <= best construction)`` with the usual tolerances."""
        b = self.breakdown
        low = b.bulk <= b.total + rtol_low * abs(b.bulk)
        if self.construction_total is None:
            return low, None
        high = b.total <= self.construction_total + rtol_high * abs(self.construction_total)
        return low, high

    def to_dict(self):
        low, high = self.sandwich()
        return {
            "breakdown": self.breakdown.to_dict(),
            "best_index": self.best_index,
            "best_label": self.starts[self.best_index].label,
            "construction_total": self.construction_total,
            "construction_label": self.construction_label,
            "sandwich": {"bulk_le_min": bool(low), "min_le_construction": None if high is None else bool(high)},
            "starts": [s.to_dict() for s in self.starts],
        }


# ---------------------------------------------------------------------------
# initial fields


def _top_row(p, grid, boundary):
    if boundary == FLAT:
        z = np.zeros(grid.nx)
        return z, z.copy(), z.copy()
    return boundary_profile(p, grid)


def _with_top(grid, ux, uy, xi, top):
    for a, t in zip((ux, uy, xi), top):
        a[-1, :] = t
    return DeformationField(grid, ux, uy, xi)


def smooth_noise(grid, seed, modes=6):
    """Smooth random field with unit sup-norm that vanishes on the top row."""
    rng = np.random.default_rng(seed)
    X, Y = grid.mesh()
    s = -Y / grid.L  # 0 at the top, 1 at the bottom
    out = np.zeros(grid.shape)
    for kx in range(1, modes + 1):
        for ky in range(1, modes + 1):
            c, ph = rng.normal(), rng.uniform(0, 2 * np.pi)
            out += c / (kx * ky) * np.cos(2 * np.pi * kx * X + ph) * np.sin(np.pi * ky * s / 2)
    out *= s
    m = np.abs(out).max()
    return out / m if m > 0 else out


def best_construction(p, grid, block=None):
    """Realize every candidate plan and return ``(plan, field, breakdown)`` of
    the one with the lowest total on this grid."""
    block = block or cons.make_block()
    best = None
    for plan in cons.candidate_plans(p):
        try:
            f = cons.realize(plan, block, grid, p)
        except ValueError:
            continue
        e = fvk_energy(f, p)
        if best is None or e.total < best[2].total:
            best = (plan, f, e)
    if best is None:
        raise ValueError("no construction can be realized on this grid")
    return best


def init_field(strategy, p, grid, boundary=WRINKLED, block=None):
    """Initial field for one start. The top row always holds the boundary values."""
    if isinstance(strategy, str):
        strategy = InitStrategy.parse(strategy)
    top = _top_row(p, grid, boundary)
    k = strategy.kind
    if k == "flat":
        z = np.zeros(grid.shape)
        return _with_top(grid, z, z.copy(), z.copy(), top)
    if k == "construction":
        if boundary == FLAT:
            raise ValueError("constructions assume the wrinkled boundary")
        if strategy.plan is None:
            return best_construction(p, grid, block)[1]
        return cons.realize(strategy.plan, block or cons.make_block(), grid, p)
    uy = np.broadcast_to(bulk_minimizer(p.tau, grid.L, grid.y)[:, None], grid.shape).copy()
    z = np.zeros(grid.shape)
    xi = z.copy()
    if k == "perturbed" and strategy.sigma > 0:
        xi = xi + strategy.sigma * smooth_noise(grid, strategy.seed)
    return _with_top(grid, z, uy, xi, top)


# ---------------------------------------------------------------------------
# preconditioner


def _corner_sum(grid, g):
    out = np.zeros(grid.shape)
    out[:-1, 1:] += g
    out[:-1, :-1] += g
    out[1:, 1:] += g
    out[1:, :-1] += g
    return out


def diagonal_hessian(grid, h, xi=None):
    """Diagonal of the Hessian of the energy's quadratic part (plus the
    Gauss-Newton membrane diagonal in ``xi`` if a current ``xi`` is given)."""
    op = operators(grid)
    A = op.area
    ones = np.ones((grid.ny - 1, grid.nx - 1))
    sx = _corner_sum(grid, ones) / (4 * op.dx**2)
    sy = _corner_sum(grid, ones) / (4 * op.dy**2)
    d_ux = A * (2 * sx + sy)
    d_uy = A * (sx + 2 * sy)
    w = op.w
    bend = (op.d2x.power(2).T @ w.T).T + op.d2y.power(2).T @ w
    bend = bend + 2 * (op.d1y.power(2).T @ ((op.d1x.power(2).T @ w.T).T))
    d_xi = 2 * h**2 * np.asarray(bend)
    if xi is not None:
        gx, gy = op.cx(xi), op.cy(xi)
        d_xi = d_xi + A * (_corner_sum(grid, 2 * gx**2 + gy**2) / (4 * op.dx**2) + _corner_sum(grid, gx**2 + 2 * gy**2) / (4 * op.dy**2))
    return np.stack([d_ux, d_uy, d_xi])


# ---------------------------------------------------------------------------
# L-BFGS


class _Problem:
    """Energy restricted to the free (non-top-row) nodes."""

    def __init__(self, field0, p):
        self.grid = field0.grid
        self.h, self.tau = p.h, p.tau
        self.base = field0.stacked().copy()
        self.n_evals = 0

    def x0(self):
        return self.base[:, :-1, :].ravel().copy()

    def full(self, x):
        z = self.base.copy()
        z[:, :-1, :] = x.reshape(3, self.grid.ny - 1, self.grid.nx)
        return z

    def __call__(self, x):
        self.n_evals += 1
        z = self.full(x)
        with np.errstate(all="ignore"):
            e, gx, gy, gz = energy_and_gradient(self.grid, z[0], z[1], z[2], self.h, self.tau)
        g = np.stack([gx, gy, gz])[:, :-1, :].ravel()
        return e, g


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic through two points with slopes, safeguarded to
    the interior of ``[a, b]``."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    s = d1 * d1 - ga * gb
    lo, hi = min(a, b), max(a, b)
    if s >= 0 and math.isfinite(s):
        d2 = math.copysign(math.sqrt(s), b - a)
        den = gb - ga + 2 * d2
        if den != 0:
            t = b - (b - a) * (gb + d2 - d1) / den
            if lo + 0.1 * (hi - lo) <= t <= hi - 0.1 * (hi - lo):
                return t
    return 0.5 * (a + b)


def strong_wolfe(fun, x, f0, g0, d, alpha0, c1=1e-4, c2=0.9, max_steps=40):
    """Line search satisfying the strong Wolfe conditions.

    Returns ``(alpha, f, g, evals, ok)``. Non-finite trial energies count as
    overshoots and halve the step.
    """
    dphi0 = float(g0 @ d)
    if not dphi0 < 0:
        return 0.0, f0, g0, 0, False
    a_prev, f_prev, dp_prev = 0.0, f0, dphi0
    a = alpha0
    evals = 0
    best = (0.0, f0, g0)
    lo = hi = None
    while evals < max_steps:
        f, g = fun(x + a * d)
        evals += 1
        if not math.isfinite(f):
            hi = (a, math.inf, math.nan, None)
            a = 0.5 * (a_prev + a)
            continue
        dp = float(g @ d)
        if f < best[1]:
            best = (a, f, g)
        if f > f0 + c1 * a * dphi0 or (a_prev > 0 and f >= f_prev):
            lo, hi = (a_prev, f_prev, dp_prev, None), (a, f, dp, g)
            break
        if abs(dp) <= -c2 * dphi0:
            return a, f, g, evals, True
        if dp >= 0:
            lo, hi = (a, f, dp, g), (a_prev, f_prev, dp_prev, None)
            break
        if hi is not None:
            # a previous trial was non-finite: bisect toward it
            a_prev, f_prev, dp_prev = a, f, dp
            a = 0.5 * (a + hi[0])
            continue
        a_prev, f_prev, dp_prev = a, f, dp
        a = 2.0 * a
    else:
        a, f, g = best
        return a, f, g, evals, a > 0 and f <= f0 + c1 * a * dphi0
    # zoom(lo, hi): lo satisfies sufficient decrease and has the lowest energy
    while evals < max_steps:
        al, fl, dl, _ = lo
        ah, fh, dh, _ = hi
        if math.isfinite(fh) and math.isfinite(dh):
            a = _cubic_min(al, fl, dl, ah, fh, dh)
        else:
            a = 0.5 * (al + ah)
        if abs(ah - al) <= 1e-16 * max(1.0, abs(al)):
            break
        f, g = fun(x + a * d)
        evals += 1
        if not math.isfinite(f):
            hi = (a, math.inf, math.nan, None)
            continue
        dp = float(g @ d)
        if f < best[1]:
            best = (a, f, g)
        if f > f0 + c1 * a * dphi0 or f >= fl:
            hi = (a, f, dp, g)
        else:
            if abs(dp) <= -c2 * dphi0:
                return a, f, g, evals, True
            if dp * (ah - al) >= 0:
                hi = lo
            lo = (a, f, dp, g)
    # fall back to any sufficient-decrease point found
    a, f, g = best
    ok = a > 0 and f <= f0 + c1 * a * dphi0
    return a, f, g, evals, ok


def lbfgs(fun, x0, precond, opts: MinimizeOptions, deadline=None):
    """Preconditioned L-BFGS; ``precond`` is the positive diagonal ``D`` with
    ``H0 = gamma D^-1``. Returns ``(x, f, g, trace_info)``."""
    x = x0.copy()
    f, g = fun(x)
    if not math.isfinite(f):
        raise FloatingPointError("non-finite energy at the initial field")
    dinv = 1.0 / precond
    S, Yv, rho = [], [], []
    history = [(0, f, float(np.abs(g).max()), 0.0)]
    evals = 1
    converged = False
    message = "max_iters reached"
    fails = 0
    it = 0
    gamma = 1.0
    for it in range(1, opts.max_iters + 1):
        gnorm = float(np.abs(g).max())
        tol = opts.grad_tol * (1 + abs(f)) if opts.relative_tol else opts.grad_tol
        if gnorm <= tol:
            converged = True
            message = "gradient tolerance met"
            it -= 1
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Yv), reversed(rho)):
            a = r * (s @ q)
            alphas.append(a)
            q -= a * y
        z = gamma * dinv * q
        for (s, y, r), a in zip(zip(S, Yv, rho), reversed(alphas)):
            b = r * (y @ z)
            z += (a - b) * s
        d = -z
        if not float(g @ d) < 0:
            S, Yv, rho = [], [], []
            d = -dinv * g
        if S:
            alpha0 = 1.0
        else:
            # first step or restart: limit the first trial to a modest move
            alpha0 = min(1.0, 1e-3 / max(float(np.abs(d).max()), 1e-300))
        a, fn, gn, ne, ok = strong_wolfe(fun, x, f, g, d, alpha0, max_steps=opts.max_line_search_steps)
        evals += ne
        if not ok or a == 0.0:
            fails += 1
            if a > 0 and fn < f:
                x, f, g = x + a * d, fn, gn
            if fails >= 2:
                message = "line search failed after steepest-descent restart"
                break
            S, Yv, rho = [], [], []
            gamma = 1.0
            history.append((it, f, float(np.abs(g).max()), a))
            continue
        fails = 0
        s = a * d
        y = gn - g
        sy = float(s @ y)
        x, f, g = x + s, fn, gn
        if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
            S.append(s)
            Yv.append(y)
            rho.append(1.0 / sy)
            if len(S) > opts.memory:
                S.pop(0)
                Yv.pop(0)
                rho.pop(0)
            gamma = sy / float(y @ (dinv * y))
        history.append((it, f, float(np.abs(g).max()), a))
        if deadline is not None and time.monotonic() > deadline:
            message = "time limit reached"
            break
    return x, f, g, {"iterations": it, "evals": evals, "converged": converged, "message": message, "history": history}


# ---------------------------------------------------------------------------
# driver


def _run_start(args):
    p, grid, strategy, opts, block = args
    field0 = init_field(strategy, p, grid, boundary=opts.boundary, block=block)
    prob = _Problem(field0, p)
    D = diagonal_hessian(grid, p.h, field0.xi)[:, :-1, :].ravel()
    deadline = None if opts.max_seconds is None else time.monotonic() + opts.max_seconds
    x, f, g, info = lbfgs(prob, prob.x0(), D, opts, deadline)
    z = prob.full(x)
    out = DeformationField.from_stacked(grid, z)
    trace = StartTrace(
        label=strategy.label(),
        iterations=info["iterations"],
        n_evals=info["evals"],
        energy=float(f),
        grad_norm=float(np.abs(g).max()),
        converged=info["converged"],
        message=info["message"],
        history=tuple(info["history"]),
    )
    return out, trace


def minimize(p, grid: Grid, opts: MinimizeOptions = None, block=None):
    """Multistart minimisation; returns a :class:`MinimizeReport`."""
    if not isinstance(p, CanonicalParams):
        raise TypeError("minimize works in canonical units; call canonicalize first")
    require_valid(p)
    opts = opts or MinimizeOptions()
    starts = opts.starts(p)
    if not starts:
        raise ValueError("multistart is empty")
    construction_total = construction_label = None
    if opts.boundary == WRINKLED:
        block = block or cons.make_block()
        plan, _, e = best_construction(p, grid, block)
        construction_total, construction_label = e.total, _plan_label(plan)
        # pin the best plan so every start sees the same construction
        starts = tuple(replace(s, plan=plan) if s.kind == "construction" and s.plan is None else s for s in starts)
    jobs = [(p, grid, s, opts, block) for s in starts]
    if opts.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(opts.jobs, len(jobs))) as ex:
            results = list(ex.map(_run_start, jobs))
    else:
        results = [_run_start(j) for j in jobs]
    energies = [t.energy for _, t in results]
    best = int(np.argmin(energies))
    best_field = results[best][0]
    return MinimizeReport(
        best_field=best_field,
        breakdown=fvk_energy(best_field, p),
        starts=tuple(t for _, t in results),
        best_index=best,
        construction_total=construction_total,
        construction_label=construction_label,
    )
