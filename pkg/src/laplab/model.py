"""Grids, potential families, smooth cutoffs, and decay-condition validation.

The spatial variable is x on [-X, X] for d = 1 and the radial sector
coordinate rho on (0, X] for d >= 2 (origin excluded).  Everything radial is
expressed through the regularized radius r = sqrt(1 + |x|^2) >= 1, with unit
"direction" omega = x / r, so that |omega|^2 + r^{-2} = 1 holds exactly at
every node.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import GridError, PotentialError

__all__ = [
    "RadialGrid",
    "PotentialModel",
    "EnvelopeReport",
    "CutoffFamily",
    "build_grid",
    "builtin_potential",
    "validate_conditions",
    "cutoff_chi",
    "cutoff_chi_prime",
    "dyadic_windows",
    "decreasing_trend",
]

TRUNCATION_DISCLAIMER = (
    "Decay and integrability verdicts are grid-truncated evidence based on "
    "monotone dyadic-window trends; they are not proofs about r -> infinity."
)


# ---------------------------------------------------------------------------
# smooth cutoff chi
# ---------------------------------------------------------------------------

def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    lo = t <= 0.0
    hi = t >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    tm = t[mid]
    # s(t) = g(t)/(g(t)+g(1-t)) with g = exp(-1/t); stable via expit
    h = 1.0 / tm - 1.0 / (1.0 - tm)
    out[mid] = expit(-h)
    return out


def _smooth_step_prime(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    h = 1.0 / tm - 1.0 / (1.0 - tm)
    hp = -1.0 / tm**2 - 1.0 / (1.0 - tm) ** 2
    # d/dt expit(-h) = -expit(-h) expit(h) h'
    out[mid] = -expit(-h) * expit(h) * hp
    return out


def cutoff_chi(t):
    """Smooth cutoff: chi = 1 for t <= 1, chi = 0 for t >= 2, chi' <= 0."""
    return 1.0 - _smooth_step(np.asarray(t, dtype=float) - 1.0)


def cutoff_chi_prime(t):
    """Derivative of :func:`cutoff_chi`."""
    return -_smooth_step_prime(np.asarray(t, dtype=float) - 1.0)


@dataclass(frozen=True)
class CutoffFamily:
    """The dyadic cutoff family chi_n(r) = chi(r / 2^n), n >= 0.

    chi is a fixed C-infinity bump with chi(t) = 1 for t <= 1, chi(t) = 0
    for t >= 2 and chi' <= 0.  Consequently |chi_n'| is supported in
    [2^n, 2^(n+1)] and bounded by C * 2^(-n) with C = max |chi'|.
    """

    chi: Callable = cutoff_chi
    chi_prime: Callable = cutoff_chi_prime

    def chi_n(self, n: int, r):
        return self.chi(np.asarray(r, dtype=float) / 2.0**n)

    def chi_n_prime(self, n: int, r):
        return self.chi_prime(np.asarray(r, dtype=float) / 2.0**n) / 2.0**n


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialGrid:
    """Uniform discretization carrying the regularized radius arrays.

    Attributes
    ----------
    d : int
        Ambient dimension.  d = 1 is the exact flagship configuration; for
        d >= 2 the grid lives on the spherically symmetric sector with the
        origin excluded (x is then the radial coordinate rho, starting at dx).
    x : np.ndarray
        Node coordinates, strictly increasing.
    dx : float
        Uniform spacing.
    extent : float
        Half-width X (d = 1) or outer radius (d >= 2).
    r, omega : np.ndarray
        r = sqrt(1 + x^2) and omega = x / r at the nodes.
    lap_r, lap_r_prime : np.ndarray
        Laplacian of r, (d-1)/r + r^-3, and its radial derivative.
    hess_r : np.ndarray
        Radial Hessian scalar r^-3 (the action of the Hessian of r on the
        radial derivative direction).
    quad_w : np.ndarray
        Trapezoidal quadrature weights; all integrals and norms use these.
    """

    d: int
    x: np.ndarray
    dx: float
    extent: float
    r: np.ndarray
    omega: np.ndarray
    lap_r: np.ndarray
    lap_r_prime: np.ndarray
    hess_r: np.ndarray
    quad_w: np.ndarray

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def r_max(self) -> float:
        return float(self.r.max())

    def interior_mask(self, width: int = 4) -> np.ndarray:
        """Boolean mask excluding ``width`` nodes at each boundary."""
        m = np.zeros(self.n, dtype=bool)
        if 2 * width < self.n:
            m[width : self.n - width] = True
        return m

    def inner(self, u, v, mask: np.ndarray | None = None) -> complex:
        """Quadrature inner product, conjugate-linear in the first slot."""
        w = self.quad_w if mask is None else self.quad_w * mask
        return complex(np.sum(np.conj(u) * v * w))

    def norm(self, u, mask: np.ndarray | None = None) -> float:
        w = self.quad_w if mask is None else self.quad_w * mask
        return float(np.sqrt(np.sum(np.abs(u) ** 2 * w)))


def build_grid(d: int, extent: float, n_points: int) -> RadialGrid:
    """Build a uniform grid on [-X, X] (d = 1) or the sector (0, X] (d >= 2).

    Parameters
    ----------
    d : int
        Dimension, >= 1.
    extent : float
        X > 1.
    n_points : int
        Number of nodes, >= 16.

    Raises
    ------
    GridError
        For non-finite extent, extent <= 1, or n_points < 16.
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise GridError(f"dimension must be a positive integer, got {d!r}")
    if not math.isfinite(extent) or extent <= 1.0:
        raise GridError(f"extent must be finite and > 1, got {extent!r}")
    if n_points < 16:
        raise GridError(f"n_points must be >= 16, got {n_points}")

    if d == 1:
        x = np.linspace(-extent, extent, int(n_points))
    else:
        # origin excluded: rho_min = dx
        x = np.linspace(0.0, extent, int(n_points) + 1)[1:]
    dx = float(x[1] - x[0])
    r = np.sqrt(1.0 + x * x)
    omega = x / r
    lap_r = (d - 1) / r + r**-3.0
    lap_r_prime = -(d - 1) * r**-2.0 - 3.0 * r**-4.0
    hess_r = r**-3.0
    quad_w = np.full(x.size, dx)
    quad_w[0] = quad_w[-1] = 0.5 * dx
    return RadialGrid(
        d=int(d), x=x, dx=dx, extent=float(extent), r=r, omega=omega,
        lap_r=lap_r, lap_r_prime=lap_r_prime, hess_r=hess_r, quad_w=quad_w,
    )


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialModel:
    """Analytic samplers for a potential split V = V_sr + V_lr with envelope.

    All samplers are radial: they take r = sqrt(1+|x|^2) >= 1 and return
    arrays of the same shape.  ``grad_v_lr`` is the derivative in r.
    ``w0_tail`` (optional) returns the analytic tail integral of w0 over
    [r, infinity); it is used by escort-weight construction to avoid
    truncation bias.
    """

    name: str
    v_sr: Callable
    v_lr: Callable
    grad_v_lr: Callable
    w0: Callable
    claims_condition1: bool
    claims_condition2: bool
    params: dict = field(default_factory=dict)
    w0_tail: Callable | None = None
    short_range_only: bool = False
    _onset_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def v_total(self, r):
        return self.v_sr(r) + self.v_lr(r)


def _zero(r):
    return np.zeros_like(np.asarray(r, dtype=float))


def builtin_potential(name: str, **params) -> PotentialModel:
    """Construct one of the built-in potential families.

    Families
    --------
    free
        V = 0, W0 = 0.
    short_range_power(c=-1.0, alpha)
        V_sr = c r^-alpha with alpha > 1; W0 = |c| r^-alpha.
    coulomb_like(c)
        V_lr = c / r; W0 = |c| / r^2.
    log_borderline(c)
        V_lr = -c / log(e + r) with c > 0; W0 = c / (r log^2(e + r)).
    wvn_like(c, lam0)
        V_lr = c sin(2 sqrt(lam0) r) / r.  The derivative envelope is only
        O(1/r), so this family declares claims_condition1 = False; it is the
        built-in sharpness example with an embedded-eigenvalue candidate
        near lam0.
    """
    if name == "free":
        if params:
            raise PotentialError(f"free takes no parameters, got {params}")
        return PotentialModel(
            name="free", v_sr=_zero, v_lr=_zero, grad_v_lr=_zero, w0=_zero,
            claims_condition1=True, claims_condition2=True,
            params={}, w0_tail=lambda r: _zero(r), short_range_only=True,
        )

    if name == "short_range_power":
        alpha = float(params.pop("alpha"))
        c = float(params.pop("c", -1.0))
        if params:
            raise PotentialError(f"unknown parameters {params}")
        if not alpha > 1.0:
            raise PotentialError(f"short_range_power needs alpha > 1, got {alpha}")
        ac = abs(c)
        return PotentialModel(
            name="short_range_power",
            v_sr=lambda r: c * np.asarray(r, float) ** -alpha,
            v_lr=_zero, grad_v_lr=_zero,
            w0=lambda r: ac * np.asarray(r, float) ** -alpha,
            claims_condition1=True, claims_condition2=True,
            params={"alpha": alpha, "c": c},
            w0_tail=lambda r: ac * np.asarray(r, float) ** (1.0 - alpha) / (alpha - 1.0),
            short_range_only=True,
        )

    if name == "coulomb_like":
        c = float(params.pop("c"))
        if params:
            raise PotentialError(f"unknown parameters {params}")
        ac = abs(c)
        return PotentialModel(
            name="coulomb_like",
            v_sr=_zero,
            v_lr=lambda r: c / np.asarray(r, float),
            grad_v_lr=lambda r: -c / np.asarray(r, float) ** 2,
            w0=lambda r: ac / np.asarray(r, float) ** 2,
            claims_condition1=True, claims_condition2=True,
            params={"c": c},
            w0_tail=lambda r: ac / np.asarray(r, float),
        )

    if name == "log_borderline":
        c = float(params.pop("c"))
        if params:
            raise PotentialError(f"unknown parameters {params}")
        if c <= 0:
            raise PotentialError(f"log_borderline needs c > 0, got {c}")

        def v_lr(r):
            return -c / np.log(np.e + np.asarray(r, float))

        def grad_v_lr(r):
            r = np.asarray(r, float)
            return c / ((np.e + r) * np.log(np.e + r) ** 2)

        def w0(r):
            r = np.asarray(r, float)
            return c / (r * np.log(np.e + r) ** 2)

        return PotentialModel(
            name="log_borderline", v_sr=_zero, v_lr=v_lr,
            grad_v_lr=grad_v_lr, w0=w0,
            claims_condition1=True, claims_condition2=True,
            params={"c": c},
            w0_tail=_log_borderline_tail(c),
        )

    if name == "wvn_like":
        c = float(params.pop("c"))
        lam0 = float(params.pop("lam0"))
        if params:
            raise PotentialError(f"unknown parameters {params}")
        if lam0 <= 0:
            raise PotentialError(f"wvn_like needs lam0 > 0, got {lam0}")
        k2 = 2.0 * math.sqrt(lam0)
        ac = abs(c)

        def v_lr(r):
            r = np.asarray(r, float)
            return c * np.sin(k2 * r) / r

        def grad_v_lr(r):
            r = np.asarray(r, float)
            return c * (k2 * np.cos(k2 * r) / r - np.sin(k2 * r) / r**2)

        def w0(r):
            # honest envelope of |grad V_lr|: O(1/r), deliberately not o(1/r)
            r = np.asarray(r, float)
            return ac * (k2 + 1.0) / r

        return PotentialModel(
            name="wvn_like", v_sr=_zero, v_lr=v_lr, grad_v_lr=grad_v_lr,
            w0=w0, claims_condition1=False, claims_condition2=False,
            params={"c": c, "lam0": lam0}, w0_tail=None,
        )

    raise PotentialError(
        f"unknown potential family {name!r}; expected one of free, "
        "short_range_power, coulomb_like, log_borderline, wvn_like"
    )


def _log_borderline_tail(c: float) -> Callable:
    """Tail integral of c/(r log^2(e+r)) by cached quadrature + analytic remainder."""
    big = 1.0e9
    mesh = np.geomspace(1.0, big, 20001)
    vals = c / (mesh * np.log(np.e + mesh) ** 2)
    # cumulative integral from each mesh point out to `big`
    seg = 0.5 * (vals[1:] + vals[:-1]) * np.diff(mesh)
    cum = np.concatenate([seg[::-1].cumsum()[::-1], [0.0]])
    remainder = c / np.log(np.e + big)

    def tail(r):
        r = np.asarray(r, float)
        return np.interp(r, mesh, cum) + remainder

    return tail


# ---------------------------------------------------------------------------
# condition validation
# ---------------------------------------------------------------------------

def dyadic_windows(r_max: float):
    """Window edges [2^k, 2^(k+1)) covering [1, r_max]; only complete windows."""
    k_top = int(math.floor(math.log2(r_max)))
    return [(2.0**k, 2.0 ** (k + 1)) for k in range(0, k_top)]


def decreasing_trend(seq: np.ndarray, tol: float) -> tuple[bool, float]:
    """Trend test: least-squares slope of log(seq) vs window index over the
    outer half must be <= -tol.  All-zero sequences pass trivially.

    Returns (passed, slope).
    """
    seq = np.asarray(seq, dtype=float)
    if seq.size == 0:
        return False, math.nan
    top = float(seq.max())
    if top == 0.0:
        return True, -math.inf
    half = seq[seq.size // 2 :]
    if np.any(half <= 0):
        # decayed to zero within the window range
        return True, -math.inf
    k = np.arange(half.size, dtype=float)
    slope = float(np.polyfit(k, np.log(half), 1)[0]) if half.size > 1 else 0.0
    return slope <= -tol, slope


@dataclass(frozen=True)
class EnvelopeReport:
    """Result of checking the decay conditions for a potential on a grid.

    sup violations are max over the grid of (quantity - W0); a clause passes
    when its violation is <= tol (relative to the potential's scale) and, for
    the decay/integrability clauses, when the dyadic window trends decrease.
    """

    potential: str
    sup_violation_sr: float
    sup_violation_lr_derivative: float
    sup_violation_grad: float
    tail_decay_trend: tuple
    integral_estimate: tuple
    verdicts: dict
    trend_slopes: dict
    tol: float
    disclaimer: str = TRUNCATION_DISCLAIMER

    @property
    def condition1(self) -> bool:
        keys = ("w0_nonnegative", "w0_small_o", "w0_integrable",
                "sr_bounded_by_w0", "lr_derivative_bounded", "lr_vanishes")
        return all(self.verdicts[k] for k in keys)

    @property
    def condition2(self) -> bool:
        return self.condition1 and self.verdicts["grad_bounded_by_w0"]

    def to_json(self) -> str:
        payload = {
            "schema_version": 1,
            "potential": self.potential,
            "sup_violation_sr": self.sup_violation_sr,
            "sup_violation_lr_derivative": self.sup_violation_lr_derivative,
            "sup_violation_grad": self.sup_violation_grad,
            "tail_decay_trend": list(self.tail_decay_trend),
            "integral_estimate": list(self.integral_estimate),
            "verdicts": {k: bool(v) for k, v in sorted(self.verdicts.items())},
            "trend_slopes": {k: self.trend_slopes[k] for k in sorted(self.trend_slopes)},
            "condition1": self.condition1,
            "condition2": self.condition2,
            "tol": self.tol,
            "disclaimer": self.disclaimer,
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def _window_stats(fn: Callable, windows, n_sub: int = 256):
    """Max of fn and integral of fn over each dyadic window."""
    maxima, integrals = [], []
    for lo, hi in windows:
        rr = np.linspace(lo, hi, n_sub)
        v = np.asarray(fn(rr), dtype=float)
        if not np.all(np.isfinite(v)):
            bad = rr[~np.isfinite(v)][0]
            raise PotentialError(f"sampler returned non-finite value at r = {bad:.6g}")
        maxima.append(float(v.max()))
        integrals.append(float(np.trapezoid(v, rr)))
    return np.array(maxima), np.array(integrals)


def validate_conditions(pot: PotentialModel, g: RadialGrid, tol: float = 1e-10,
                        trend_tol: float = 0.02) -> EnvelopeReport:
    """Check the short-range / long-range decay conditions on the grid.

    Pointwise clauses (|V_sr| <= W0, omega.grad(V_lr) <= W0, |grad V_lr| <= W0,
    W0 >= 0) are checked at every node.  The o(1/r) and L1 clauses for W0 and
    the o(1) clause for V_lr are grid-truncated trend tests over dyadic
    windows; see the report's disclaimer.

    Raises
    ------
    PotentialError
        If any sampler returns a non-finite value (the offending radius is
        named in the message).
    """
    r = g.r
    for label, fn in (("v_sr", pot.v_sr), ("v_lr", pot.v_lr),
                      ("grad_v_lr", pot.grad_v_lr), ("w0", pot.w0)):
        v = np.asarray(fn(r), dtype=float)
        if not np.all(np.isfinite(v)):
            bad = r[~np.isfinite(v)][0]
            raise PotentialError(
                f"{label} sampler returned non-finite value at r = {bad:.6g}")

    w0 = np.asarray(pot.w0(r), float)
    v_sr = np.asarray(pot.v_sr(r), float)
    dv_lr = np.asarray(pot.grad_v_lr(r), float)
    omega2 = g.omega**2

    scale = max(1.0, float(np.max(np.abs(w0))), float(np.max(np.abs(v_sr))))
    sup_sr = float(np.max(np.abs(v_sr) - w0))
    sup_lr_deriv = float(np.max(omega2 * dv_lr - w0))
    sup_grad = float(np.max(np.abs(dv_lr) * np.abs(g.omega) - w0))

    windows = dyadic_windows(g.r_max)
    rw0_max, _ = _window_stats(lambda rr: rr * np.asarray(pot.w0(rr), float), windows)
    _, w0_int = _window_stats(pot.w0, windows)
    vlr_max, _ = _window_stats(lambda rr: np.abs(np.asarray(pot.v_lr(rr), float)), windows)

    ok_small_o, slope_o = decreasing_trend(rw0_max, trend_tol)
    ok_l1, slope_l1 = decreasing_trend(w0_int, trend_tol)
    ok_vlr, slope_vlr = decreasing_trend(vlr_max, trend_tol)

    verdicts = {
        "w0_nonnegative": bool(np.min(w0) >= -tol * scale),
        "w0_small_o": ok_small_o,
        "w0_integrable": ok_l1,
        "sr_bounded_by_w0": bool(sup_sr <= tol * scale),
        "lr_derivative_bounded": bool(sup_lr_deriv <= tol * scale),
        "lr_vanishes": ok_vlr,
        "grad_bounded_by_w0": bool(sup_grad <= tol * scale),
    }
    cum = np.cumsum(w0_int)
    return EnvelopeReport(
        potential=pot.name,
        sup_violation_sr=sup_sr,
        sup_violation_lr_derivative=sup_lr_deriv,
        sup_violation_grad=sup_grad,
        tail_decay_trend=tuple(rw0_max),
        integral_estimate=tuple(cum),
        verdicts=verdicts,
        trend_slopes={"w0_small_o": slope_o, "w0_integrable": slope_l1,
                      "lr_vanishes": slope_vlr},
        tol=tol,
    )
