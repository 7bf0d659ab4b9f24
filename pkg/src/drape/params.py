"""Parameter model for the hanging drape and its exact rescalings.

Physical parameters describe a sheet on ``[-W, W] x [-L, 0]``. Two exact
rescalings reduce every problem to the canonical one with ``W = 1/2`` and
``Delta = 1``; :func:`canonicalize` applies both and records the factor that
converts canonical energies back to physical ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

DEFAULT_CW = 0.05
INTEGER_RTOL = 1e-9
# slack on the inequality checks so rescaled parameters are not rejected by rounding
INEQ_RTOL = 1e-12


@dataclass(frozen=True)
class PhysicalParams:
    """Thickness ``h``, half-width ``W``, length ``L``, gravity ratio ``tau``,
    top wrinkle period ``w0`` and confinement ``Delta``."""

    h: float
    W: float
    L: float
    tau: float
    w0: float
    Delta: float = 1.0

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CanonicalParams:
    """Dimensionless parameters with ``W = 1/2`` and ``Delta = 1`` implied."""

    h: float
    L: float
    tau: float
    w0: float

    W = 0.5
    Delta = 1.0

    def to_dict(self):
        return asdict(self)

    def to_physical(self) -> PhysicalParams:
        return PhysicalParams(h=self.h, W=0.5, L=self.L, tau=self.tau, w0=self.w0, Delta=1.0)


@dataclass(frozen=True)
class ScaleRecord:
    length_scale: float
    energy_factor: float


@dataclass(frozen=True)
class Violation:
    """One failed hypothesis: a machine-readable ``code`` and a message."""

    code: str
    message: str
    values: dict


class InvalidParamsError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


def _is_integer_multiple(a, b, rtol=INTEGER_RTOL):
    k = a / b
    return round(k) >= 1 and abs(k - round(k)) <= rtol * max(1.0, abs(k))


def validate(p, c_w=DEFAULT_CW):
    """Return the list of violated hypotheses; an empty list means ``p`` is admissible.

    Accepts either :class:`PhysicalParams` or :class:`CanonicalParams`.
    """
    if isinstance(p, CanonicalParams):
        p = p.to_physical()
    out = []
    for f in fields(PhysicalParams):
        v = getattr(p, f.name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            out.append(Violation("positive", f"{f.name} = {v!r} must be finite and > 0", {f.name: v}))
    if out:
        return out
    if p.Delta > 1:
        out.append(Violation("delta_range", f"Delta = {p.Delta:g} must lie in (0, 1]", {"Delta": p.Delta}))
    tl = p.tau * p.L
    if tl < 4 * (1 - INEQ_RTOL):
        out.append(Violation("tauL", f"tau*L = {tl:g} < 4", {"tau": p.tau, "L": p.L}))
    hd = p.h / math.sqrt(p.Delta)
    if hd > p.w0 * (1 + INEQ_RTOL):
        out.append(
            Violation(
                "h_over_w0",
                f"h*Delta^(-1/2) = {hd:g} > w0 = {p.w0:g}",
                {"h": p.h, "Delta": p.Delta, "w0": p.w0},
            )
        )
    if p.w0 > 2 * c_w * p.W * (1 + INEQ_RTOL):
        out.append(
            Violation(
                "w0_over_W",
                f"w0 = {p.w0:g} > 2*c_w*W = {2 * c_w * p.W:g}",
                {"w0": p.w0, "W": p.W, "c_w": c_w},
            )
        )
    if not _is_integer_multiple(p.W, p.w0):
        out.append(
            Violation("W_multiple", f"W/w0 = {p.W / p.w0:.12g} is not a positive integer", {"W": p.W, "w0": p.w0})
        )
    return out


def require_valid(p, c_w=DEFAULT_CW):
    v = validate(p, c_w=c_w)
    if v:
        raise InvalidParamsError(v)
    return p


def canonicalize(p: PhysicalParams, c_w=DEFAULT_CW):
    """Rescale to ``W = 1/2``, ``Delta = 1``.

    Returns ``(CanonicalParams, ScaleRecord)``. Physical energy equals
    ``energy_factor`` times the canonical energy of the rescaled field.
    """
    if isinstance(p, CanonicalParams):
        require_valid(p, c_w)
        return p, ScaleRecord(1.0, 1.0)
    require_valid(p, c_w)
    s = 2.0 * p.W
    q = CanonicalParams(
        h=p.h / math.sqrt(p.Delta) / s,
        L=p.L / s,
        tau=s * p.tau / p.Delta,
        w0=p.w0 / s,
    )
    return q, ScaleRecord(length_scale=s, energy_factor=s**2 * p.Delta**2)


def dimensionless_groups(p):
    """``alpha = h L / (w0^2 sqrt(tau L))`` and ``beta = (w0 / L) sqrt(tau L)``.

    Both are unchanged by :func:`canonicalize`, so physical parameters give
    the same values.
    """
    h, L, tau, w0 = p.h, p.L, p.tau, p.w0
    if isinstance(p, PhysicalParams):
        # the factors of Delta cancel in alpha; beta has none
        h = h / math.sqrt(p.Delta)
        tau = tau / p.Delta
    stl = math.sqrt(tau * L)
    return {"alpha": h * L / (w0**2 * stl), "beta": w0 / L * stl}


def params_from_dict(d):
    """Build params from a flat mapping. Keys must match one of the two
    field sets exactly; anything else is rejected."""
    if not isinstance(d, dict):
        raise ValueError("parameters must be a JSON object")
    keys = set(d)
    phys = {f.name for f in fields(PhysicalParams)}
    canon = {f.name for f in fields(CanonicalParams)}
    if keys == phys or keys == phys - {"Delta"}:
        cls = PhysicalParams
    elif keys == canon:
        cls = CanonicalParams
    else:
        unknown = sorted(keys - phys)
        missing = sorted(phys - keys - {"Delta"})
        raise ValueError(f"bad parameter keys: unknown={unknown} missing={missing}")
    vals = {}
    for k, v in d.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"parameter {k} must be a number, got {v!r}")
        vals[k] = float(v)
    return cls(**vals)


def load_params(path):
    with open(path) as fh:
        return params_from_dict(json.load(fh))


def save_params(p, path):
    Path(path).write_text(json.dumps(p.to_dict(), indent=2, sort_keys=True) + "\n")
