"""Explicit low-energy deformations of the canonical drape and their bounds.

All constructions keep ``ux + xi_x^2 / 2`` identically zero in x, so the
horizontal membrane term vanishes; they differ in how the wrinkle profile is
carried down the sheet:

* ``type1``: coarsening cascade of building blocks, period tripled per generation;
* ``type2``: cascade for ``n - 1`` generations, then release of the lateral
  confinement over the height ``l_n``;
* ``type3``: release directly below the clamped edge over a chosen height ``l``;
* ``propagate``: the top profile copied down unchanged.

Type II/III come in variant ``A`` (``uy = f``) and ``B`` (``uy`` chosen so that
the shear strain vanishes below the release point).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .energy import DeformationField, Grid, boundary_profile, bulk_minimizer
from .params import CanonicalParams, require_valid

RAMP_SHOULDER = 0.1
MIN_REALIZE_NODES = 8
_A1 = math.atan(1 / 3)
_SQ10 = math.sqrt(10)
_THETA_SPAN = 4 / (3 * math.pi)


# ---------------------------------------------------------------------------
# smooth ramps


def plateau_ramp(t, shoulder=RAMP_SHOULDER):
    """C^2 monotone ramp from 0 (t <= 0) to 1 (t >= 1).

    Its slope is flat at ``1 / (1 - shoulder)`` except for cubic-smoothstep
    shoulders of width ``shoulder`` at both ends. Returns ``(R, R', R'')``.
    """
    t = np.asarray(t, dtype=float)
    d = shoulder
    cmax = 1.0 / (1.0 - d)
    r = np.zeros_like(t)
    r1 = np.zeros_like(t)
    r2 = np.zeros_like(t)

    lo = (t > 0) & (t < d)
    s = t[lo] / d
    r[lo] = cmax * d * (s**3 - s**4 / 2)
    r1[lo] = cmax * (3 * s**2 - 2 * s**3)
    r2[lo] = cmax * (6 * s - 6 * s**2) / d

    mid = (t >= d) & (t <= 1 - d)
    r[mid] = cmax * (d / 2 + t[mid] - d)
    r1[mid] = cmax

    hi = (t > 1 - d) & (t < 1)
    s = (1 - t[hi]) / d
    r[hi] = 1 - cmax * d * (s**3 - s**4 / 2)
    r1[hi] = cmax * (3 * s**2 - 2 * s**3)
    r2[hi] = -cmax * (6 * s - 6 * s**2) / d

    r[t >= 1] = 1.0
    return r, r1, r2


def cutoff(t):
    """Decreasing cutoff: 1 on [0, 1/3], 0 on [1, inf), ``|phi'| <= 5/3``.
    Returns ``(phi, phi', phi'')``."""
    r, r1, r2 = plateau_ramp((np.asarray(t, dtype=float) - 1 / 3) * 1.5)
    return 1 - r, -1.5 * r1, -2.25 * r2


def envelope(y):
    """The pair ``(g1, g2) = (cos theta, sin theta)`` with derivatives.

    ``theta`` rises from 0 on [0, 1/4] to pi/2 on [3/4, 1], paced so that
    ``|g1'| + 3 |g2'| = 3 pi R'`` stays below ``3 pi``. Outside [0, 1] the pair
    extends by ``(1, 0)`` below and ``(0, 1)`` above.
    """
    y = np.asarray(y, dtype=float)
    r, r1, r2 = plateau_ramp((y - 0.25) * 2)
    c = _THETA_SPAN * r
    c1 = 2 * _THETA_SPAN * r1
    c2 = 4 * _THETA_SPAN * r2
    arg = np.clip((3 * math.pi * c - 1) / _SQ10, -1.0, 1.0)
    th = np.arcsin(arg) + _A1
    den = 3 * np.cos(th) + np.sin(th)
    th1 = 3 * math.pi * c1 / den
    th2 = 3 * math.pi * c2 / den - th1 * (-3 * np.sin(th) + np.cos(th)) * th1 / den
    g1, g2 = np.cos(th), np.sin(th)
    g1p, g2p = -g2 * th1, g1 * th1
    g1pp = -g1 * th1**2 - g2 * th2
    g2pp = -g2 * th1**2 + g1 * th2
    return g1, g2, g1p, g2p, g1pp, g2pp


# ---------------------------------------------------------------------------
# building block


def block_fields(xh, yh):
    """Building block on the unit cell, 1-periodic in ``xh``.

    ``P`` is the periodic part of the horizontal displacement,
    ``v = P - xh``, obtained in closed form from ``v_x = -mu_x^2 / 2``.
    """
    xh = np.asarray(xh, dtype=float)
    g1, g2, g1p, g2p, g1pp, g2pp = envelope(yh)
    tp = 2 * np.pi
    s3, c3 = np.sin(3 * tp * xh), np.cos(3 * tp * xh)
    s1, c1 = np.sin(tp * xh), np.cos(tp * xh)
    s6, s4, s2 = np.sin(6 * tp * xh), np.sin(4 * tp * xh), np.sin(2 * tp * xh)
    k3, k1 = 1 / (3 * np.pi), 1 / np.pi
    mu = g1 * k3 * s3 + g2 * k1 * s1
    mu_x = 2 * g1 * c3 + 2 * g2 * c1
    mu_y = g1p * k3 * s3 + g2p * k1 * s1
    mu_xx = -12 * np.pi * g1 * s3 - 4 * np.pi * g2 * s1
    mu_xy = 2 * g1p * c3 + 2 * g2p * c1
    mu_yy = g1pp * k3 * s3 + g2pp * k1 * s1
    q6 = s6 / (12 * np.pi)
    qx = s4 / (4 * np.pi) + s2 / (2 * np.pi)
    q2 = s2 / (4 * np.pi)
    P = -(g1**2 * q6 + g1 * g2 * qx + g2**2 * q2)
    P_y = -(2 * g1 * g1p * q6 + (g1p * g2 + g1 * g2p) * qx + 2 * g2 * g2p * q2)
    return {
        "mu": mu,
        "mu_x": mu_x,
        "mu_y": mu_y,
        "mu_xx": mu_xx,
        "mu_xy": mu_xy,
        "mu_yy": mu_yy,
        "P": P,
        "v": P - xh,
        "v_x": -0.5 * mu_x**2,
        "v_y": P_y,
    }


def _block_quadrature(nx=256, ngauss=24):
    """E_m and E_b by periodic trapezoid in x and composite Gauss in y."""
    d = RAMP_SHOULDER
    knots = 0.25 + 0.5 * np.array([0.0, d, 1 - d, 1.0])
    breaks = np.concatenate([[0.0], knots, [1.0]])
    gx, gw = np.polynomial.legendre.leggauss(ngauss)
    ys, wys = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        ys.append(0.5 * (b - a) * gx + 0.5 * (a + b))
        wys.append(0.5 * (b - a) * gw)
    y = np.concatenate(ys)
    wy = np.concatenate(wys)
    x = np.arange(nx) / nx
    X, Y = np.meshgrid(x, y)
    F = block_fields(X, Y)
    wm = (F["v_y"] + F["mu_x"] * F["mu_y"]) ** 2 + F["mu_y"] ** 2
    wb = F["mu_xx"] ** 2 + 2 * F["mu_xy"] ** 2 + F["mu_yy"] ** 2
    E_m = float(np.sum(wy[:, None] * wm) / nx)
    E_b = float(np.sum(wy[:, None] * wb) / nx)
    return E_m, E_b


@dataclass(frozen=True)
class BuildingBlock:
    """Reference cell with period 1/3 at the top and 1 at the bottom."""

    E_m: float
    E_b: float
    derivative_budget: float
    max_abs_mu_y: float
    max_abs_mu: float

    def g(self, y):
        return envelope(y)[:2]

    def fields(self, xh, yh):
        return block_fields(xh, yh)


def make_block(nx=256, ngauss=24):
    E_m, E_b = _block_quadrature(nx, ngauss)
    y = np.linspace(0, 1, 4001)
    _, _, g1p, g2p, _, _ = envelope(y)
    X, Y = np.meshgrid(np.linspace(0, 1, 721), np.linspace(0, 1, 401))
    F = block_fields(X, Y)
    return BuildingBlock(
        E_m=E_m,
        E_b=E_b,
        derivative_budget=float(np.max(np.abs(g1p) + 3 * np.abs(g2p))),
        max_abs_mu_y=float(np.abs(F["mu_y"]).max()),
        max_abs_mu=float(np.abs(F["mu"]).max()),
    )


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class Generation:
    n: int
    omega: float
    l: float
    s: float


@dataclass(frozen=True)
class ConstructionPlan:
    kind: str
    generations: tuple = ()
    N: int = 0
    n: int | None = None
    variant: str | None = None
    l: float | None = None
    tail: float | None = None
    notes: tuple = ()

    def to_dict(self):
        d = asdict(self)
        d["generations"] = [asdict(g) for g in self.generations]
        d["notes"] = list(self.notes)
        return d


@dataclass(frozen=True)
class BoundValue:
    branch: str
    value: float
    formula_inputs: dict = field(default_factory=dict)


def generation_length(p, n):
    """``l_n = 9^n w0^2 sqrt(tau L) / h``, built by repeated multiplication so
    that consecutive lengths differ by exactly a factor 9 in floating point."""
    ln = p.w0**2 * math.sqrt(p.tau * p.L) / p.h
    for _ in range(n):
        ln = 9.0 * ln
    return ln


def generation_count(p):
    """Closed form of the smallest ``N`` with ``l_1 + ... + l_N >= L``."""
    alpha = p.h * p.L / (p.w0**2 * math.sqrt(p.tau * p.L))
    return max(1, math.ceil(math.log(8 / 9 * alpha + 1, 9) - 1e-12))


def _canonical(p):
    if not isinstance(p, CanonicalParams):
        raise TypeError("constructions work in canonical units; call canonicalize() first")
    return require_valid(p)


def plan_propagate(p):
    _canonical(p)
    return ConstructionPlan(kind="propagate")


def plan_type1(p):
    """Coarsening schedule; falls back to ``propagate`` for thin short sheets."""
    _canonical(p)
    if p.h < p.w0**2 * math.sqrt(p.tau * p.L) / p.L:
        return ConstructionPlan(kind="propagate", notes=("h < w0^2 sqrt(tau L)/L: no room to coarsen",))
    K = math.log(1 / (2 * p.w0), 3)
    Kf = int(math.floor(K + 1e-9))
    gens = []
    s = 0.0
    n = 0
    ln = generation_length(p, 0)
    om = p.w0
    while s < p.L and n < Kf:
        n += 1
        ln, om = 9.0 * ln, 3.0 * om
        gens.append(Generation(n=n, omega=om, l=ln, s=s))
        s += ln
    if s >= p.L:
        return ConstructionPlan(kind="type1", generations=tuple(gens), N=len(gens))
    if abs(K - round(K)) > 1e-9:
        raise ValueError(
            f"sheet longer than the full cascade needs 3^K w0 = 1/2 for an integer K; got K = {K:.6g}"
        )
    tail = math.sqrt(p.tau * p.L) / p.h
    return ConstructionPlan(
        kind="type1", generations=tuple(gens), N=len(gens), tail=tail, notes=("long sheet: affine tail",)
    )


def plan_type2(p, n, variant="A"):
    base = plan_type1(p)
    if base.kind != "type1" or not (1 <= n <= base.N):
        raise ValueError(f"type2 generation n={n} out of range; valid range is 1..{base.N}")
    if variant not in ("A", "B"):
        raise ValueError("variant must be 'A' or 'B'")
    gens = base.generations[:n]
    notes = ()
    if variant == "B" and gens[-1].l < 1:
        variant = "A"
        notes = (f"l_n = {gens[-1].l:.4g} < 1: variant B replaced by A",)
    return ConstructionPlan(kind="type2", generations=gens, N=base.N, n=n, variant=variant, notes=notes)


def plan_type3(p, l, variant="A"):
    _canonical(p)
    if not (0 < l <= p.L):
        raise ValueError(f"release height l={l} must lie in (0, L]")
    if variant not in ("A", "B"):
        raise ValueError("variant must be 'A' or 'B'")
    return ConstructionPlan(kind="type3", l=float(l), variant=variant)


# ---------------------------------------------------------------------------
# realization


def _cascade(X, Y, gens, out_ux, out_xi, rows):
    for g in gens:
        sel = rows & (Y <= -g.s) & (Y >= -(g.s + g.l))
        if not sel.any():
            continue
        yh = np.clip(-(Y[sel] + g.s) / g.l, 0.0, 1.0)
        F = block_fields(X[sel] / g.omega, yh)
        out_xi[sel] = g.omega * F["mu"]
        out_ux[sel] = -X[sel] + g.omega * F["P"]


def _sinusoid(x, period):
    """Compression-free sinusoidal profile of the given period, ``xi`` and ``ux``."""
    k = 2 * np.pi / period
    return -(x + np.sin(2 * k * x) / (2 * k)), period / np.pi * np.sin(k * x)


def _release(X, Y, f, s, l, period, variant, out_ux, out_uy, out_xi, rows):
    """Cut the profile of the given period off over ``[-(s + l), -s]``."""
    x = X[rows]
    ub, xb = _sinusoid(x, period)
    t = np.maximum(-(Y[rows] + s) / l, 0.0)
    ph, ph1, _ = cutoff(t)
    out_ux[rows] = ph**2 * ub
    out_xi[rows] = ph * xb
    if variant == "B":
        # shear-free choice: uy_x = -(Ux_y + zeta_x zeta_y), integrated from x = 0
        w = period
        I = -(x**2) + w**2 / (8 * np.pi**2) * (1 - np.cos(4 * np.pi * x / w))
        out_uy[rows] = f[rows] + ph * ph1 * I / l
    else:
        out_uy[rows] = f[rows]


def _affine_tail(X, Y, L0, lt, out_ux, out_xi, rows):
    t = -(Y[rows] + L0) / lt
    g1, g2 = envelope(t)[:2]
    x = X[rows]
    out_xi[rows] = g1 * np.sin(4 * np.pi * x) / (2 * np.pi) + g2 * math.sqrt(2) * x
    out_ux[rows] = -x - g1**2 * np.sin(8 * np.pi * x) / (8 * np.pi) - g1 * g2 * np.sin(4 * np.pi * x) / (math.sqrt(2) * np.pi)


def realize(plan: ConstructionPlan, block, grid: Grid, p) -> DeformationField:
    """Sample a construction on ``grid``; the top row is the boundary profile."""
    _canonical(p)
    if grid.width != 1.0 or abs(grid.L - p.L) > 1e-12 * p.L:
        raise ValueError("grid must span the canonical domain [-1/2, 1/2] x [-L, 0]")
    if p.w0 / grid.dx < MIN_REALIZE_NODES:
        raise ValueError(f"grid too coarse: {p.w0 / grid.dx:.1f} nodes per wrinkle period")
    X, Y = grid.mesh()
    f = bulk_minimizer(p.tau, p.L, Y)
    ux = np.empty(grid.shape)
    xi = np.empty(grid.shape)
    uy = f.copy()
    every = np.ones(grid.shape, dtype=bool)
    bux, _, bxi = boundary_profile(p, grid)

    if plan.kind == "propagate":
        ux[:] = bux
        xi[:] = bxi
    elif plan.kind == "type1":
        ux[:] = bux
        xi[:] = bxi
        _cascade(X, Y, plan.generations, ux, xi, every)
        if plan.tail is not None:
            L0 = sum(g.l for g in plan.generations)
            _affine_tail(X, Y, L0, plan.tail, ux, xi, Y < -L0)
    elif plan.kind == "type2":
        g = plan.generations[-1]
        ux[:] = bux
        xi[:] = bxi
        _cascade(X, Y, plan.generations[:-1], ux, xi, Y >= -g.s)
        period = g.omega / 3
        _release(X, Y, f, g.s, g.l, period, plan.variant, ux, uy, xi, Y < -g.s)
    elif plan.kind == "type3":
        _release(X, Y, f, 0.0, plan.l, p.w0, plan.variant, ux, uy, xi, every)
    else:
        raise ValueError(f"unknown construction kind {plan.kind!r}")

    ux[-1], uy[-1], xi[-1] = bux, 0.0, bxi
    return DeformationField(grid, ux, uy, xi)


# ---------------------------------------------------------------------------
# closed-form bounds (unit prefactor)


def _coarsening_term(p, length):
    stl = math.sqrt(p.tau * p.L)
    return p.h * stl * math.log(p.h * length / (p.w0**2 * stl) + 1)


def bound_A(p):
    stl = math.sqrt(p.tau * p.L)
    return p.h * stl * math.log(p.w0**-2 * min(p.h * p.L / stl, 1.0) + 1)


def bound_ub3(p, ln):
    return _coarsening_term(p, ln) + 1 / ln


def bound_ub5(p, ln):
    return _coarsening_term(p, ln) + ln**-3


def bound_special1(p, l):
    return p.h**2 * p.w0**-2 * l + 1 / l + p.w0**2 * p.tau * p.L / l


def bound_special2(p, l):
    return p.h**2 * p.w0**-2 * l + l**-3 + p.w0**2 * p.tau * p.L / l


def bound_propagate(p):
    return p.h**2 * p.w0**-2 * p.L


def predicted_excess(plan: ConstructionPlan, p) -> BoundValue:
    inputs = {"h": p.h, "tauL": p.tau * p.L, "w0": p.w0}
    if plan.kind == "propagate":
        return BoundValue("propagateA2", bound_propagate(p), {**inputs, "L": p.L})
    if plan.kind == "type1":
        return BoundValue("boundA", bound_A(p), {**inputs, "L": p.L})
    if plan.kind == "type2":
        ln = plan.generations[-1].l
        inputs.update(n=plan.n, l=ln)
        if plan.variant == "B":
            return BoundValue("ub5", bound_ub5(p, ln), inputs)
        return BoundValue("ub3", bound_ub3(p, ln), inputs)
    if plan.kind == "type3":
        inputs["l"] = plan.l
        if plan.variant == "B":
            return BoundValue("ubspecial2", bound_special2(p, plan.l), inputs)
        return BoundValue("ubspecial1", bound_special1(p, plan.l), inputs)
    raise ValueError(f"unknown construction kind {plan.kind!r}")


def candidate_plans(p, n_release=3):
    """Every construction worth trying at ``p``: type I (or propagate), type II
    for each generation and variant, and type III at a few release heights."""
    plans = [plan_type1(p)]
    if plans[0].kind == "type1":
        plans.append(plan_propagate(p))
        seen = set()
        for n in range(1, plans[0].N + 1):
            for v in ("A", "B"):
                q = plan_type2(p, n, v)
                # a B request may come back as A; keep one copy
                if (q.n, q.variant) not in seen:
                    seen.add((q.n, q.variant))
                    plans.append(q)
    for l in np.geomspace(max(p.w0, 1e-3 * p.L), p.L, n_release):
        for v in ("A", "B"):
            plans.append(plan_type3(p, float(l), v))
    return plans
