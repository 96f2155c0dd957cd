"""Weight classes: envelopes W, escort weights h, and the named f-families.

Three classes appear throughout the verification suites:

* W_CLASS: w >= 0 with w = o(1/r) and w integrable on [1, inf) (grid-level
  trend tests, same semantics as the potential validator).
* H_CLASS: h > 0, 0 <= h' <= beta0 h / r with beta0 < 1, and h^2 W0 again in
  the W class.  These quantify the "wiggle room" left by the envelope and
  control the Hoelder modulus of the limiting resolvent.
* F_FAMILY: 0 <= f' <= beta1 f / r and |f''| <= beta2 f / r^2; the commutator
  machinery is evaluated on these.

Weights are represented by callables over r in [1, r_max] plus derivative
callables, so they can be sampled on any grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import WeightClassError
from .model import decreasing_trend, dyadic_windows

__all__ = [
    "WeightFn",
    "validate_w",
    "validate_h",
    "construct_escort_h",
    "named_f_family",
    "exponential_weight",
    "HValidationReport",
    "EscortResult",
    "power_weight",
]

W_CLASS = "W_CLASS"
H_CLASS = "H_CLASS"
F_FAMILY = "F_FAMILY"


@dataclass(frozen=True)
class WeightFn:
    """A radial weight with analytic (or mesh-interpolated) derivatives."""

    name: str
    kind: str  # W_CLASS | H_CLASS | F_FAMILY
    value: Callable
    deriv: Callable
    second_deriv: Callable | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, r):
        return self.value(np.asarray(r, dtype=float))

    def d(self, r):
        return self.deriv(np.asarray(r, dtype=float))

    def d2(self, r):
        if self.second_deriv is None:
            raise WeightClassError(f"{self.name} carries no second derivative")
        return self.second_deriv(np.asarray(r, dtype=float))


def power_weight(s: float, kind: str = W_CLASS, name: str | None = None) -> WeightFn:
    """r^s as a WeightFn (derivatives analytic)."""
    s = float(s)
    return WeightFn(
        name=name or f"r^{s:g}", kind=kind,
        value=lambda r: r**s,
        deriv=lambda r: s * r ** (s - 1.0),
        second_deriv=lambda r: s * (s - 1.0) * r ** (s - 2.0),
        params={"exponent": s, "beta0": max(s, 0.0), "alpha_lower": s if s > 0 else None},
    )


def _mesh(r_max: float, n: int = 8193) -> np.ndarray:
    return np.geomspace(1.0, max(r_max, 2.0), n)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_w(w: Callable, r_max: float, trend_tol: float = 0.02) -> dict:
    """W-class check: nonnegativity plus o(1/r) and L1 window trends."""
    mesh = _mesh(r_max)
    vals = np.asarray(w(mesh), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise WeightClassError("weight sampler returned non-finite values")
    windows = dyadic_windows(r_max)
    maxima, integrals = [], []
    for lo, hi in windows:
        rr = np.linspace(lo, hi, 257)
        v = np.asarray(w(rr), dtype=float)
        maxima.append(float((rr * v).max()))
        integrals.append(float(np.trapezoid(v, rr)))
    ok_o, slope_o = decreasing_trend(np.array(maxima), trend_tol)
    ok_l1, slope_l1 = decreasing_trend(np.array(integrals), trend_tol)
    return {
        "nonnegative": bool(vals.min() >= -1e-14 * max(1.0, vals.max())),
        "small_o": ok_o,
        "integrable": ok_l1,
        "slope_small_o": slope_o,
        "slope_integrable": slope_l1,
        "passed": bool(vals.min() >= -1e-14 * max(1.0, vals.max())) and ok_o and ok_l1,
    }


@dataclass(frozen=True)
class HValidationReport:
    name: str
    beta0: float
    max_negative_derivative: float
    max_growth_violation: float
    gronwall_violations: int
    h2w0_small_o: bool
    h2w0_integrable: bool
    trend_slopes: dict
    passed: bool


def validate_h(h: WeightFn, w0: Callable, beta0: float, r_max: float,
               trend_tol: float = 0.02, n_pairs: int = 1000,
               seed: int = 7) -> HValidationReport:
    """Check the escort-weight requirements for h against the envelope w0.

    Pointwise: h > 0 and 0 <= h' <= beta0 h / r (with beta0 < 1).  Global:
    the Gronwall sandwich (s/t)^beta0 <= h(s)/h(t) <= (t/s)^beta0 on random
    pairs s <= t, and dyadic trend tests for h^2 w0 = o(1/r) and h^2 w0
    integrable.
    """
    if not 0.0 <= beta0 < 1.0:
        raise WeightClassError(f"beta0 must lie in [0, 1), got {beta0}")
    mesh = _mesh(r_max)
    hv = np.asarray(h(mesh), dtype=float)
    hd = np.asarray(h.d(mesh), dtype=float)
    if np.any(hv <= 0.0):
        raise WeightClassError(f"{h.name}: escort weight must be positive")

    scale = float(np.max(hv / mesh))
    max_neg = float(np.max(-hd))
    max_growth = float(np.max(hd - beta0 * hv / mesh))

    rng = np.random.default_rng(seed)
    s = rng.uniform(1.0, r_max, n_pairs)
    t = rng.uniform(1.0, r_max, n_pairs)
    s, t = np.minimum(s, t), np.maximum(s, t)
    ratio = np.interp(s, mesh, hv) / np.interp(t, mesh, hv)
    lo = (s / t) ** beta0
    hi = (t / s) ** beta0
    viol = int(np.sum((ratio < lo * (1 - 1e-9)) | (ratio > hi * (1 + 1e-9))))

    h2w0 = lambda r: np.asarray(h(r), float) ** 2 * np.asarray(w0(r), float)
    wrep = validate_w(h2w0, r_max, trend_tol)

    passed = (max_neg <= 1e-12 * scale and max_growth <= 1e-10 * scale
              and viol == 0 and wrep["small_o"] and wrep["integrable"])
    return HValidationReport(
        name=h.name, beta0=beta0, max_negative_derivative=max_neg,
        max_growth_violation=max_growth, gronwall_violations=viol,
        h2w0_small_o=wrep["small_o"], h2w0_integrable=wrep["integrable"],
        trend_slopes={"small_o": wrep["slope_small_o"],
                      "integrable": wrep["slope_integrable"]},
        passed=bool(passed),
    )


# ---------------------------------------------------------------------------
# escort construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EscortResult:
    h: WeightFn
    outcome: str  # "divergent" | "insufficient_wiggle_room" | "constant" | "bounded"
    growth_ratio: float
    c_used: float
    notes: str = ""


def construct_escort_h(w0: Callable, beta0: float, r_max: float,
                       target: str = "bounded", *,
                       tail_integral: Callable | None = None,
                       c: float = 0.45, trend_tol: float = 0.02,
                       divergence_threshold: float = 10.0) -> EscortResult:
    """Build an escort weight by the clamped growth recursion.

    h is defined through h'/h = min(beta0 / r, c * w0(r) / G(r)) with
    G(r) the tail integral of w0 over [r, inf).  The constant c starts at
    the requested value (default 0.45, which keeps the true integral
    h^2 w0 convergent with margin for power-law envelopes) and is halved
    until the grid-level h^2 w0 trend tests pass.

    ``tail_integral``, if supplied, is the analytic tail of w0 and avoids
    truncation bias; otherwise a wide numerical mesh is used.  When w0
    vanishes identically the result is h = 1 with a note.

    For target="divergent" the outcome field records whether
    h(r_max)/h(1) >= divergence_threshold was achieved, else
    "insufficient_wiggle_room".
    """
    if not 0.0 < beta0 < 1.0:
        raise WeightClassError(f"beta0 must lie in (0, 1), got {beta0}")
    mesh = _mesh(r_max, 16385)
    w0v = np.asarray(w0(mesh), dtype=float)
    scale = float(np.max(w0v, initial=0.0))
    notes = ""

    if scale <= 0.0:
        h = power_weight(0.0, H_CLASS, name="escort[h=1]")
        return EscortResult(h=h, outcome="constant", growth_ratio=1.0,
                            c_used=0.0, notes="w0 vanishes; h = 1")

    floor = 1e-30 * scale
    w0f = np.maximum(w0v, floor)

    if tail_integral is not None:
        big_g = np.asarray(tail_integral(mesh), dtype=float)
    else:
        wide = np.geomspace(1.0, max(1e6, 100.0 * r_max), 32769)
        wv = np.maximum(np.asarray(w0(wide), dtype=float), 0.0)
        seg = 0.5 * (wv[1:] + wv[:-1]) * np.diff(wide)
        cum = np.concatenate([seg[::-1].cumsum()[::-1], [0.0]])
        big_g = np.interp(mesh, wide, cum)
        notes = "numeric tail integral (no analytic extension supplied)"
    big_g = np.maximum(big_g, floor)

    c_try = float(c)
    for _ in range(8):
        rate = np.minimum(beta0 / mesh, c_try * w0f / big_g)
        log_h = np.concatenate([[0.0], np.cumsum(
            0.5 * (rate[1:] + rate[:-1]) * np.diff(mesh))])
        hv = np.exp(log_h)
        h2w0 = lambda r: np.interp(r, mesh, hv) ** 2 * np.asarray(w0(r), float)
        wrep = validate_w(h2w0, r_max, trend_tol)
        if wrep["small_o"] and wrep["integrable"]:
            break
        c_try *= 0.5
    else:
        raise WeightClassError("escort construction failed its own trend tests")

    rate_arr = rate

    def value(r):
        return np.interp(np.asarray(r, float), mesh, hv)

    def deriv(r):
        r = np.asarray(r, float)
        return np.interp(r, mesh, rate_arr) * value(r)

    h = WeightFn(name=f"escort[c={c_try:g},beta0={beta0:g}]", kind=H_CLASS,
                 value=value, deriv=deriv,
                 params={"beta0": beta0, "c": c_try, "alpha_lower": None})
    ratio = float(hv[-1] / hv[0])
    if target == "divergent":
        outcome = "divergent" if ratio >= divergence_threshold \
            else "insufficient_wiggle_room"
    else:
        outcome = "bounded" if ratio < divergence_threshold else "divergent"
    return EscortResult(h=h, outcome=outcome, growth_ratio=ratio,
                        c_used=c_try, notes=notes)


# ---------------------------------------------------------------------------
# named f families
# ---------------------------------------------------------------------------

def _verify_f_family(w: WeightFn, r_max: float, beta1: float, beta2: float | None):
    mesh = _mesh(r_max)
    f = np.asarray(w(mesh), float)
    fp = np.asarray(w.d(mesh), float)
    scale = max(float(np.max(f)), 1e-300)
    if float(np.min(fp)) < -1e-10 * scale:
        raise WeightClassError(f"{w.name}: f' must be nonnegative")
    if float(np.max(fp * mesh - beta1 * f)) > 1e-8 * scale:
        raise WeightClassError(f"{w.name}: f' <= beta1 f / r violated")
    if beta2 is not None and w.second_deriv is not None:
        fpp = np.asarray(w.d2(mesh), float)
        if float(np.max(np.abs(fpp) * mesh**2 - beta2 * f)) > 1e-8 * scale:
            raise WeightClassError(f"{w.name}: |f''| <= beta2 f / r^2 violated")


def named_f_family(kind: str, *, r_max: float, k: float | None = None,
                   alpha: float | None = None, alpha_max: float = 4.0,
                   h: WeightFn | None = None,
                   beta1: float | None = None) -> WeightFn:
    """Construct one of the named commutator weight families.

    Kinds
    -----
    theta_alpha(k, alpha)
        f = (r / (1 + k r))^alpha, alpha in [1/2, alpha_max], k > 0.  Bounded
        with f' <= alpha f / r and |f''| <= alpha (alpha + 3) f / r^2
        uniformly in k.
    lap_fk(k)
        f = 1 - (1 + r / 2^k)^{-1}, k >= 1: the resolvent-bound family with
        f' <= f / r and |f''| <= 2 f / r^2.
    h2_theta(h, beta1, k)
        f = h^2 * Theta^beta1 with Theta the lap_fk profile; requires
        2 beta0 + beta1 < 2 for the radiation machinery.
    """
    if kind == "theta_alpha":
        if k is None or k <= 0:
            raise WeightClassError(f"theta_alpha needs k > 0, got {k!r}")
        if alpha is None or not (0.5 <= alpha <= alpha_max):
            raise WeightClassError(
                f"theta_alpha needs alpha in [0.5, {alpha_max}], got {alpha!r}")
        kk, aa = float(k), float(alpha)

        def value(r):
            return (r / (1.0 + kk * r)) ** aa

        def deriv(r):
            th = r / (1.0 + kk * r)
            return aa * th ** (aa - 1.0) / (1.0 + kk * r) ** 2

        def second(r):
            th = r / (1.0 + kk * r)
            thp = 1.0 / (1.0 + kk * r) ** 2
            thpp = -2.0 * kk / (1.0 + kk * r) ** 3
            return aa * (aa - 1.0) * th ** (aa - 2.0) * thp**2 \
                + aa * th ** (aa - 1.0) * thpp

        w = WeightFn(name=f"theta^alpha[k={kk:g},a={aa:g}]", kind=F_FAMILY,
                     value=value, deriv=deriv, second_deriv=second,
                     params={"beta1": aa, "beta2": aa * (aa + 3.0), "k": kk,
                             "alpha": aa})
        _verify_f_family(w, r_max, aa, aa * (aa + 3.0))
        return w

    if kind == "lap_fk":
        if k is None or k <= 0:
            raise WeightClassError(f"lap_fk needs k > 0, got {k!r}")
        s0 = 2.0 ** float(-k)

        def value(r):
            return 1.0 - 1.0 / (1.0 + r * s0)

        def deriv(r):
            return s0 / (1.0 + r * s0) ** 2

        def second(r):
            return -2.0 * s0**2 / (1.0 + r * s0) ** 3

        w = WeightFn(name=f"lap_f[k={k:g}]", kind=F_FAMILY,
                     value=value, deriv=deriv, second_deriv=second,
                     params={"beta1": 1.0, "beta2": 2.0, "k": float(k)})
        _verify_f_family(w, r_max, 1.0, 2.0)
        return w

    if kind == "h2_theta":
        if h is None or beta1 is None or k is None:
            raise WeightClassError("h2_theta needs h, beta1 and k")
        theta = named_f_family("lap_fk", r_max=r_max, k=k)
        b1 = float(beta1)
        beta0 = float(h.params.get("beta0", 0.0))
        if 2.0 * beta0 + b1 >= 2.0:
            raise WeightClassError(
                f"h2_theta requires 2*beta0 + beta1 < 2, got {2*beta0 + b1:g}")

        def value(r):
            return np.asarray(h(r), float) ** 2 * np.asarray(theta(r), float) ** b1

        def deriv(r):
            hv = np.asarray(h(r), float)
            hd = np.asarray(h.d(r), float)
            th = np.asarray(theta(r), float)
            thp = np.asarray(theta.d(r), float)
            return 2.0 * hv * hd * th**b1 + hv**2 * b1 * th ** (b1 - 1.0) * thp

        w = WeightFn(name=f"h2theta[{h.name},b1={b1:g},k={k:g}]", kind=F_FAMILY,
                     value=value, deriv=deriv, second_deriv=None,
                     params={"beta1": 2.0 * beta0 + b1, "k": float(k),
                             "beta0": beta0})
        _verify_f_family(w, r_max, 2.0 * beta0 + b1, None)
        return w

    raise WeightClassError(
        f"unknown f family {kind!r}; expected theta_alpha, lap_fk or h2_theta")


def exponential_weight(f: WeightFn, big_k: float, w: Callable,
                       r_max: float) -> WeightFn:
    """The exponentially tilted weight f~(r) = f(r) exp(K int_1^r W ds).

    Satisfies 0 <= f~' <= C f~ / r with C depending only on (beta1, K); the
    constructor verifies this pointwise on a mesh and records C.
    """
    if big_k < 0:
        raise WeightClassError(f"K must be >= 0, got {big_k}")
    mesh = _mesh(r_max, 16385)
    wv = np.asarray(w(mesh), dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (wv[1:] + wv[:-1]) * np.diff(mesh))])
    theta = np.exp(big_k * cum)

    def value(r):
        r = np.asarray(r, float)
        return np.asarray(f(r), float) * np.interp(r, mesh, theta)

    def deriv(r):
        r = np.asarray(r, float)
        th = np.interp(r, mesh, theta)
        return np.asarray(f.d(r), float) * th \
            + np.asarray(f(r), float) * th * big_k * np.asarray(w(r), float)

    beta1 = float(f.params.get("beta1", 0.0))
    tilted = WeightFn(name=f"tilted[{f.name},K={big_k:g}]", kind=F_FAMILY,
                      value=value, deriv=deriv, second_deriv=None,
                      params={**f.params, "K": big_k, "base_beta1": beta1})
    # record the effective growth constant C with f~' <= C f~ / r
    fv = value(mesh)
    fd = deriv(mesh)
    pos = fv > 0
    c_eff = float(np.max((fd[pos] * mesh[pos]) / fv[pos], initial=0.0))
    tilted.params["c_effective"] = c_eff
    return tilted
