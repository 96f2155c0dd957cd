"""Verification suites: measured resolvent bounds, radiation-condition
plateaus, Hoelder-modulus fits, an eigenvalue scanner, and commutator-form
feasibility diagnostics.

Each suite turns one quantitative statement about the resolvent family
R(z) = (H - z)^{-1} into a sweep of measured numbers plus machine-checkable
verdict fields.  "Uniformly bounded" is operationalized as: the maximal
normalized ratio varies by less than one order of magnitude across the
eps-decades of the sweep (threshold configurable), after a domain-truncation
audit.  Negative controls (swapping the radiation combination, or measuring
plain L2 mass instead of shell-normalized mass) must blow up where the
bounded quantities plateau; both sides are recorded.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .calculus import assemble_operators, quadratic_form
from .errors import (LapLabError, PotentialError, SolveError,
                     TruncationLimitedError, WeightClassError)
from .model import PotentialModel, RadialGrid, build_grid, validate_conditions
from .norms import B_STAR_0, besov_norm, dyadic_profile, shell_index, tail_class
from .phase import build_phase
from .records import SweepRecord
from .resolvent import BandedLU, SpectralParam, _assemble_system, _embed, solve
from .weights import WeightFn, exponential_weight, validate_h, validate_w

__all__ = [
    "gaussian_ensemble",
    "lap_suite",
    "smoothing_suite",
    "radiation_suite",
    "hoelder_suite",
    "rellich_scan",
    "commutator_diagnostic",
    "RellichReport",
    "DiagnosticReport",
    "HoelderReport",
]


# ---------------------------------------------------------------------------
# state ensembles
# ---------------------------------------------------------------------------

def gaussian_ensemble(g: RadialGrid, n_states: int, seed: int = 0, *,
                      momentum_scale: float = 1.5,
                      margin: float = 0.15) -> list:
    """Fixed-seed modulated Gaussians with dyadic-support variants.

    Centers are drawn across dyadic distance scales so the ensemble spans a
    range of shell-norm profiles; widths span [2^-1, 2^2]; each state carries
    a random momentum modulation and a global complex phase.  All states are
    compactly supported away from the boundary layer.
    """
    rng = np.random.default_rng(seed)
    out = []
    x = g.x
    lo = x[0] + margin * (x[-1] - x[0])
    hi = x[-1] - margin * (x[-1] - x[0])
    for i in range(n_states):
        sigma = 2.0 ** rng.uniform(-1.0, 2.0)
        if g.d == 1:
            scale = 2.0 ** rng.uniform(0.0, max(1.0, math.log2(max(hi, 2.0))))
            c = rng.choice([-1.0, 1.0]) * min(scale - 1.0, hi - 6.0 * sigma)
            c = float(np.clip(c, lo + 6.0 * sigma, hi - 6.0 * sigma))
        else:
            scale = 2.0 ** rng.uniform(0.0, max(1.0, math.log2(max(hi, 2.0))))
            c = float(np.clip(scale, lo + 6.0 * sigma, hi - 6.0 * sigma))
        xi = momentum_scale * rng.uniform(-1.0, 1.0)
        amp = np.exp(2j * np.pi * rng.uniform())
        psi = amp * np.exp(-((x - c) ** 2) / (2.0 * sigma**2) + 1j * xi * x)
        psi[np.abs(x - c) > 8.0 * sigma] = 0.0
        out.append((f"g{i}[c={c:.3g},s={sigma:.2g},xi={xi:.2g}]", psi))
    return out


def _map_items(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# LAP suite
# ---------------------------------------------------------------------------

def _plateau(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    lo = float(values.min())
    return math.inf if lo <= 0 else float(values.max()) / lo


def _decade_variation(eps: np.ndarray, values: np.ndarray) -> float:
    """Variation of the per-decade maxima of ``values`` across eps-decades.

    The operational reading of "uniformly bounded": the largest normalized
    ratio seen in each eps-decade must be comparable across decades (no
    growth trend as eps -> 0).  Returns max/min over the decade maxima.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    дec = np.floor(np.log10(eps) + 1e-12)
    maxima = [float(values[дec == dv].max()) for dv in np.unique(дec)]
    return _plateau(np.asarray(maxima))


def lap_suite(pot: PotentialModel, g: RadialGrid, lams, psis, eps_list, *,
              sign: int = +1, ratio_tol: float = 10.0,
              contrast_min: float = 100.0, audit: bool = True,
              audit_tol: float = 0.2, workers: int = 1) -> SweepRecord:
    """Measure the shell-normalized resolvent bound along an eps sweep.

    For each (lam, eps, psi) the three bounded quantities

        ||R(z) psi||_{B*}^2,  ||A R(z) psi||_{B*}^2,  <p* hess_r p>_{R(z)psi}

    are recorded, normalized by ||psi||_B^2, together with the plain-L2
    contrast ||R(z) psi||^2 / ||psi||_B^2 which must (and does) diverge like
    1/eps.  Verdicts: `plateau_ok` (max normalized ratio varies < ratio_tol
    across the sweep), `contrast_ok` (L2 growth >= contrast_min), and the
    shell-wise derivative-extension inequality

        2^-k ||F_k P u||^2 <= <p* F_k hess_r p>_u + 2^-k ||F_k omega P u||^2

    checked on sampled shells.  lam values are the caller's responsibility
    to keep away from detected eigenvalues.
    """
    lams = list(np.atleast_1d(lams).astype(float))
    eps_arr = np.asarray(list(eps_list), dtype=float)
    ops = assemble_operators(g, pot)
    rec = SweepRecord(meta={
        "suite": "lap", "potential": pot.name, "sign": sign,
        "extent": g.extent, "n": g.n, "d": g.d,
        "lams": lams, "eps_list": list(map(float, eps_arr)),
        "ratio_tol": ratio_tol, "contrast_min": contrast_min,
    })

    def one(item):
        lam, eps, (label, psi) = item
        res = solve(ops, SpectralParam(lam, eps, sign), psi,
                    estimate_condition=False)
        if res.failed:
            raise SolveError(f"lap solve failed at lam={lam} eps={eps}")
        u = res.u
        bpsi = besov_norm(g, psi) ** 2
        au = ops.a.matvec(u)
        vals = {
            "bstar_sq": dyadic_profile(g, u).besov_star ** 2 / bpsi,
            "bstar_a_sq": dyadic_profile(g, au).besov_star ** 2 / bpsi,
            "hessian": quadratic_form(ops, "hessian", u) / bpsi,
            "l2_sq": g.norm(u) ** 2 / bpsi,
        }
        vals["lhs_ratio"] = vals["bstar_sq"] + vals["bstar_a_sq"] + vals["hessian"]
        # derivative-extension inequality on sampled shells
        pu = ops.p.matvec(u)
        k_idx = shell_index(g.r)
        kmax = int(k_idx.max()) - 1
        margin = math.inf
        for k in {2, max(2, kmax // 2), kmax}:
            mk = (k_idx == k) & ops.interior
            w = g.quad_w * mk
            lhs = 2.0**-k * float(np.sum(np.abs(pu) ** 2 * w))
            rhs = float(np.sum(g.hess_r * np.abs(pu) ** 2 * w)) \
                + 2.0**-k * float(np.sum(g.omega**2 * np.abs(pu) ** 2 * w))
            margin = min(margin, rhs - lhs + 1e-15 * rhs)
        vals["p_extension_margin"] = margin
        return lam, eps, label, vals

    items = [(lam, float(eps), p) for lam in lams for eps in eps_arr
             for p in psis]
    for lam, eps, label, vals in _map_items(one, items, workers):
        for name, v in vals.items():
            rec.add(lam, eps, sign, label, name, v)

    if audit:
        _audit_smallest_eps(rec, pot, g, lams, psis, float(eps_arr[-1]), sign,
                            audit_tol, metric="lhs_ratio")

    worst_var = 0.0
    worst_contrast = math.inf
    ext_ok = True
    for lam in lams:
        for label, _ in psis:
            _, ratios = rec.series("lhs_ratio", lam=lam, psi=label)
            worst_var = max(worst_var, _plateau(ratios))
            _, l2 = rec.series("l2_sq", lam=lam, psi=label)
            worst_contrast = min(worst_contrast, float(l2[-1] / l2[0]))
            _, margins = rec.series("p_extension_margin", lam=lam, psi=label)
            ext_ok = ext_ok and bool(np.all(margins >= 0.0))
    rec.verdicts.update({
        "plateau_variation": worst_var,
        "plateau_ok": bool(worst_var < ratio_tol) and not rec.truncation_limited,
        "contrast_growth": worst_contrast,
        "contrast_ok": bool(worst_contrast > contrast_min),
        "p_extension_ok": ext_ok,
        "withheld": bool(rec.truncation_limited),
    })
    return rec


def _audit_smallest_eps(rec: SweepRecord, pot, g, lams, psis, eps_min, sign,
                        audit_tol, metric: str, h: WeightFn | None = None):
    """Re-run the smallest eps at doubled extent and compare one metric."""
    g2 = build_grid(g.d, 2.0 * g.extent, 2 * g.n - (1 if g.d == 1 else 0))
    ops2 = assemble_operators(g2, pot)
    worst = 0.0
    for lam in lams:
        phase2 = None
        for label, psi in psis:
            psi2 = _embed(g, g2, psi)
            res2 = solve(ops2, SpectralParam(lam, eps_min, sign), psi2,
                         estimate_condition=False)
            u2 = res2.u
            bpsi2 = besov_norm(g2, psi2) ** 2
            if metric == "lhs_ratio":
                au2 = ops2.a.matvec(u2)
                v2 = (dyadic_profile(g2, u2).besov_star ** 2
                      + dyadic_profile(g2, au2).besov_star ** 2
                      + quadratic_form(ops2, "hessian", u2)) / bpsi2
            elif metric == "rad_lhs_ratio":
                if phase2 is None:
                    phase2 = build_phase(pot, g2,
                                         complex(lam, sign * eps_min), sign)
                hv2 = np.asarray(h(g2.r), float)
                a_c2 = phase2.grid_corrected_a(g2.dx)
                am2 = ops2.a.matvec(u2) - a_c2 * u2
                bh2 = besov_norm(g2, hv2 * psi2) ** 2
                v2 = (dyadic_profile(g2, hv2 * am2).besov_star ** 2
                      + float(np.sum(hv2**2 * g2.hess_r
                                     * np.abs(ops2.p.matvec(u2)) ** 2
                                     * g2.quad_w * ops2.interior))) / bh2
            else:
                raise LapLabError(f"unknown audit metric {metric}")
            v1 = rec.values(metric, lam=lam, eps=eps_min, psi=label)[0]["value"]
            move = abs(v1 - v2) / max(abs(v1), abs(v2), 1e-300)
            rec.add(lam, eps_min, sign, label, f"audit_move:{metric}", move)
            worst = max(worst, move)
    rec.meta["audit_worst_move"] = worst
    rec.truncation_limited = bool(worst > audit_tol)


# ---------------------------------------------------------------------------
# smoothing suite (weighted operator-norm estimates)
# ---------------------------------------------------------------------------

def _power_norm(apply_t, apply_tstar, n, rng, iters=25, tol=1e-3):
    """sqrt of the largest eigenvalue of T*T by power iteration."""
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = apply_tstar(apply_t(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, True
        new = math.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * max(new, 1e-300):
            return new, True
        est = new
    return est, False


def smoothing_suite(pot: PotentialModel, g: RadialGrid, lams, w1: WeightFn,
                    w2: WeightFn, eps_list, *, sign: int = +1,
                    uniformity_factor: float = 10.0, iters: int = 30,
                    seed: int = 3) -> SweepRecord:
    """Estimate the four weighted resolvent operator-norm families.

    Items (all uniform in z across the sweep when the envelope conditions
    hold):

    * a: the quadratic form psi -> <p* hess_r p>_{R(z) W2^(1/2) psi} on L2,
    * b: W1^(1/2) R(z) and W1^(1/2) P R(z) from the shell space into L2,
    * c: R(z) W1^(1/2) and P R(z) W1^(1/2) from L2 into the dual shell space,
    * d: W1^(1/2) R(z) W2^(1/2) and W1^(1/2) P R(z) W2^(1/2) on L2.

    Norms are estimated by power iteration on the composed maps (apply-only;
    nothing is materialized).  The shell-space norms use the exact
    decomposition sup_k 2^(-k/2) ||T F_k|| (and its adjoint analogue).
    Non-convergent estimates are reported per item.
    """
    for label, wfun in (("W1", w1), ("W2", w2)):
        rep = validate_w(wfun, g.r_max)
        if not rep["passed"]:
            raise WeightClassError(f"{label} fails the envelope class: {rep}")

    ops = assemble_operators(g, pot)
    n = g.n
    sq1 = np.sqrt(np.asarray(w1(g.r), dtype=float))
    sq2 = np.sqrt(np.asarray(w2(g.r), dtype=float))
    sqh = np.sqrt(g.hess_r)
    k_idx = shell_index(g.r)
    kmax = int(k_idx.max()) - 1  # complete shells only
    rng = np.random.default_rng(seed)

    rec = SweepRecord(meta={
        "suite": "smoothing", "potential": pot.name, "sign": sign,
        "extent": g.extent, "n": g.n, "w1": w1.name, "w2": w2.name,
        "lams": list(np.atleast_1d(lams).astype(float)),
        "eps_list": list(map(float, eps_list)),
    })

    for lam in np.atleast_1d(lams).astype(float):
        for eps in eps_list:
            z = complex(lam, sign * float(eps))
            kl, ku, ab, _ = _assemble_system(ops, z, "dirichlet", None, 1)
            lu = BandedLU(ab, kl, ku)
            klc, kuc, abc, _ = _assemble_system(ops, np.conj(z), "dirichlet",
                                                None, 1)
            luc = BandedLU(abc, klc, kuc)
            rz = lu.solve            # R(z)
            rzb = luc.solve          # R(conj z) = R(z)^H

            conv_notes = []

            def record(item, value, ok):
                rec.add(lam, float(eps), sign, "-", item, value)
                if not ok:
                    conv_notes.append(item)

            # a) hessian form after R(z) W2^(1/2): norm of diag(sqh) P R W2
            va, ok = _power_norm(
                lambda v: sqh * ops.p.matvec(rz(sq2 * v)),
                lambda v: sq2 * rzb(ops.p.matvec(sqh * v)),
                n, rng, iters)
            record("a_form_norm", va**2, ok)

            # d) W1 R W2 and W1 P R W2 on L2
            vd1, ok1 = _power_norm(
                lambda v: sq1 * rz(sq2 * v),
                lambda v: sq2 * rzb(sq1 * v), n, rng, iters)
            vd2, ok2 = _power_norm(
                lambda v: sq1 * ops.p.matvec(rz(sq2 * v)),
                lambda v: sq2 * rzb(ops.p.matvec(sq1 * v)), n, rng, iters)
            record("d_norm", vd1, ok1)
            record("d_p_norm", vd2, ok2)

            # b) W1 R and W1 P R from the shell space: sup_k 2^{-k/2}||T F_k||
            def shell_sup(apply_t, apply_tstar):
                best, okall = 0.0, True
                for k in range(1, kmax + 1):
                    fk = (k_idx == k).astype(float)
                    val, ok = _power_norm(
                        lambda v: apply_t(fk * v),
                        lambda v: fk * apply_tstar(v), n, rng,
                        max(10, iters // 2), tol=3e-3)
                    best = max(best, 2.0 ** (-k / 2.0) * val)
                    okall = okall and ok
                return best, okall

            vb1, ok1 = shell_sup(lambda v: sq1 * rz(v),
                                 lambda v: rzb(sq1 * v))
            vb2, ok2 = shell_sup(lambda v: sq1 * ops.p.matvec(rz(v)),
                                 lambda v: rzb(ops.p.matvec(sq1 * v)))
            record("b_norm", vb1, ok1)
            record("b_p_norm", vb2, ok2)

            # c) R W1 and P R W1 into the dual shell space: sup_k 2^{-k/2}||F_k T||
            def shell_sup_left(apply_t, apply_tstar):
                best, okall = 0.0, True
                for k in range(1, kmax + 1):
                    fk = (k_idx == k).astype(float)
                    val, ok = _power_norm(
                        lambda v: fk * apply_t(v),
                        lambda v: apply_tstar(fk * v), n, rng,
                        max(10, iters // 2), tol=3e-3)
                    best = max(best, 2.0 ** (-k / 2.0) * val)
                    okall = okall and ok
                return best, okall

            vc1, ok1 = shell_sup_left(lambda v: rz(sq1 * v),
                                      lambda v: sq1 * rzb(v))
            vc2, ok2 = shell_sup_left(lambda v: ops.p.matvec(rz(sq1 * v)),
                                      lambda v: sq1 * rzb(ops.p.matvec(v)))
            record("c_norm", vc1, ok1)
            record("c_p_norm", vc2, ok2)

            if conv_notes:
                rec.add(lam, float(eps), sign, "-", "nonconvergent",
                        ",".join(conv_notes))

    # uniformity verdicts per item
    items = ["a_form_norm", "b_norm", "b_p_norm", "c_norm", "c_p_norm",
             "d_norm", "d_p_norm"]
    verdicts = {}
    for item in items:
        vals = np.array([row["value"] for row in rec.values(item)], dtype=float)
        variation = _plateau(vals[vals > 0]) if np.any(vals > 0) else 1.0
        verdicts[f"{item}_variation"] = variation
        verdicts[f"{item}_uniform"] = bool(variation < uniformity_factor)
    verdicts["all_uniform"] = all(verdicts[f"{i}_uniform"] for i in items)
    rec.verdicts.update(verdicts)
    return rec


# ---------------------------------------------------------------------------
# radiation suite
# ---------------------------------------------------------------------------

def radiation_suite(pot: PotentialModel, g: RadialGrid, lams, h: WeightFn,
                    psis, eps_list, *, sign: int = +1,
                    ratio_tol: float = 10.0, contrast_min: float = 100.0,
                    audit: bool = True, audit_tol: float = 0.25,
                    beta0: float | None = None,
                    workers: int = 1) -> SweepRecord:
    """Measure the weighted radiation-condition bound along an eps sweep.

    Records, normalized by ||h psi||_B^2:

    * rad_lhs_ratio: ||h (A - a) R(z) psi||_{B*}^2 + <p* h^2 hess_r p>,
      which must plateau (the measured form of the radiation bound);
    * control_l2: ||h (A + a) R(z) psi||_{L2}^2, the negative control, which
      must grow like 1/eps (the incoming combination is not smoothed);
    * control_bstar: the sup-type-norm control, recorded for information
      (it cannot exceed ~h(extent)^2 growth and is flat for bounded h);
    * radsmooth_c_ratio: the lower-bound item, when h carries a positive
      `alpha_lower` parameter.

    The suite refuses potentials that do not pass the gradient-envelope
    condition (the strengthened hypothesis is what bounds the phase
    derivative), and escorts h through its own validation first.
    """
    rep = validate_conditions(pot, g)
    if not rep.condition2:
        raise PotentialError(
            f"radiation suite requires the gradient envelope; {pot.name} "
            f"fails: {rep.verdicts}")
    b0 = beta0 if beta0 is not None else float(h.params.get("beta0", 0.45))
    hrep = validate_h(h, pot.w0, b0, g.r_max)
    if not hrep.passed:
        raise WeightClassError(f"escort weight fails validation: {hrep}")

    lams = list(np.atleast_1d(lams).astype(float))
    eps_arr = np.asarray(list(eps_list), dtype=float)
    ops = assemble_operators(g, pot)
    hv = np.asarray(h(g.r), dtype=float)
    rec = SweepRecord(meta={
        "suite": "radiation", "potential": pot.name, "sign": sign,
        "extent": g.extent, "n": g.n, "h": h.name, "beta0": b0,
        "lams": lams, "eps_list": list(map(float, eps_arr)),
        "ratio_tol": ratio_tol, "contrast_min": contrast_min,
    })

    phase_by = {(lam, float(eps)): build_phase(pot, g, complex(lam, sign * eps), sign)
                for lam in lams for eps in eps_arr}

    def one(item):
        lam, eps, (label, psi) = item
        res = solve(ops, SpectralParam(lam, eps, sign), psi,
                    estimate_condition=False)
        if res.failed:
            raise SolveError(f"radiation solve failed at lam={lam} eps={eps}")
        u = res.u
        a_c = phase_by[(lam, eps)].grid_corrected_a(g.dx)
        au = ops.a.matvec(u)
        am, ap = au - a_c * u, au + a_c * u
        bh = besov_norm(g, hv * psi) ** 2
        w_int = g.quad_w * ops.interior
        pu = ops.p.matvec(u)
        vals = {
            "rad_bstar_sq": dyadic_profile(g, hv * am).besov_star ** 2 / bh,
            "rad_hessian": float(np.sum(hv**2 * g.hess_r * np.abs(pu) ** 2
                                        * w_int)) / bh,
            "control_l2": float(np.sum(hv**2 * np.abs(ap) ** 2 * w_int)) / bh,
            "control_bstar": dyadic_profile(g, hv * ap).besov_star ** 2 / bh,
            "rad_l2": float(np.sum(hv**2 * np.abs(am) ** 2 * w_int)) / bh,
        }
        vals["rad_lhs_ratio"] = vals["rad_bstar_sq"] + vals["rad_hessian"]
        alpha_low = h.params.get("alpha_lower")
        if alpha_low:
            num = g.norm(g.r**-0.5 * hv * am)
            den = g.norm(g.r**0.5 * hv * psi)
            vals["radsmooth_c_ratio"] = num / den if den > 0 else 0.0
        return lam, eps, label, vals

    items = [(lam, float(eps), p) for lam in lams for eps in eps_arr
             for p in psis]
    for lam, eps, label, vals in _map_items(one, items, workers):
        for name, v in vals.items():
            rec.add(lam, eps, sign, label, name, v)

    if audit:
        _audit_smallest_eps(rec, pot, g, lams, psis, float(eps_arr[-1]), sign,
                            audit_tol, metric="rad_lhs_ratio", h=h)

    worst_var = 0.0
    worst_growth = math.inf
    for lam in lams:
        for label, _ in psis:
            _, ratios = rec.series("rad_lhs_ratio", lam=lam, psi=label)
            worst_var = max(worst_var, _plateau(ratios))
            _, ctl = rec.series("control_l2", lam=lam, psi=label)
            worst_growth = min(worst_growth, float(ctl[-1] / ctl[0]))
    rec.verdicts.update({
        "plateau_variation": worst_var,
        "plateau_ok": bool(worst_var < ratio_tol) and not rec.truncation_limited,
        "control_growth": worst_growth,
        "control_ok": bool(worst_growth > contrast_min),
        "withheld": bool(rec.truncation_limited),
    })
    return rec


# ---------------------------------------------------------------------------
# Hoelder suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HoelderReport:
    pairs: tuple
    norm_diffs: tuple
    slope: float
    slope_stderr: float
    fitted_c: float
    c_by_decade: tuple
    c_stable: bool
    modulus_name: str
    truncation_dropped: int

    def to_dict(self):
        return {
            "pairs": [[_c2l(z), _c2l(zp)] for z, zp in self.pairs],
            "norm_diffs": list(self.norm_diffs),
            "slope": self.slope, "slope_stderr": self.slope_stderr,
            "fitted_c": self.fitted_c,
            "c_by_decade": list(self.c_by_decade),
            "c_stable": self.c_stable, "modulus_name": self.modulus_name,
            "truncation_dropped": self.truncation_dropped,
        }


def _c2l(z):
    return [float(np.real(z)), float(np.imag(z))]


def default_pairs(lam: float, sign: int = +1, n_decades: float = 3.0,
                  per_decade: int = 2, eps_top: float = 0.5):
    """(z, z') pairs with |z - z'| spanning the requested decades."""
    n = int(n_decades * per_decade) + 1
    seps = eps_top * 10.0 ** (-np.arange(n) / per_decade)
    return [(complex(lam, sign * 2.0 * e), complex(lam, sign * e))
            for e in seps]


def hoelder_suite(pot: PotentialModel, g: RadialGrid, lam: float,
                  w: WeightFn, h: WeightFn, pair_list=None, *,
                  sign: int = +1, iters: int = 40, seed: int = 5,
                  stability_factor: float = 10.0, audit: bool = True,
                  audit_tol: float = 0.25,
                  trend_tol: float = 0.02) -> HoelderReport:
    """Fit the continuity modulus of z -> W^(1/2) R(z) W^(1/2).

    Measures ||W^(1/2)(R(z) - R(z'))W^(1/2)|| by power iteration over a pair
    list whose gaps |z - z'| span >= 3 decades, then fits

        log ||diff||  =  log C  +  slope * log |z - z'|

    and the modulus constant C = max ||diff|| * h(1/|z-z'|).  The verdict
    `c_stable` asks the per-decade C to vary by less than
    ``stability_factor``.  The smallest-gap pair is audited at doubled
    extent; pairs that move more than ``audit_tol`` are dropped, and the
    suite refuses when fewer than two decades remain.
    """
    wrep = validate_w(w, g.r_max, trend_tol)
    if not wrep["passed"]:
        raise WeightClassError(f"W fails the envelope class: {wrep}")
    b0 = float(h.params.get("beta0", 0.45))
    hrep = validate_h(h, lambda r: np.asarray(w(r), float), b0, g.r_max,
                      trend_tol)
    if not hrep.passed:
        raise WeightClassError(
            f"h fails compatibility with W (h^2 W trends): {hrep}")

    pairs = pair_list if pair_list is not None else default_pairs(lam, sign)
    ops = assemble_operators(g, pot)
    sqw = np.sqrt(np.asarray(w(g.r), dtype=float))
    rng = np.random.default_rng(seed)

    def norm_diff(ops_, g_, z, zp, it=iters):
        sqw_ = np.sqrt(np.asarray(w(g_.r), dtype=float))
        lus = {}
        for zz in (z, zp, np.conj(z), np.conj(zp)):
            kl, ku, ab, _ = _assemble_system(ops_, zz, "dirichlet", None, 1)
            lus[complex(zz)] = BandedLU(ab, kl, ku)

        def t(v):
            y = sqw_ * v
            return sqw_ * (lus[complex(z)].solve(y) - lus[complex(zp)].solve(y))

        def tstar(v):
            y = sqw_ * v
            return sqw_ * (lus[complex(np.conj(z))].solve(y)
                           - lus[complex(np.conj(zp))].solve(y))

        val, ok = _power_norm(t, tstar, g_.n, rng, it, tol=1e-3)
        return val, ok

    diffs = []
    for z, zp in pairs:
        val, ok = norm_diff(ops, g, z, zp)
        diffs.append(val)

    dropped = 0
    if audit:
        # re-measure the smallest gap on a doubled domain
        g2 = build_grid(g.d, 2.0 * g.extent, 2 * g.n - (1 if g.d == 1 else 0))
        ops2 = assemble_operators(g2, pot)
        z, zp = pairs[-1]
        v2, _ = norm_diff(ops2, g2, z, zp, it=max(10, iters // 2))
        move = abs(diffs[-1] - v2) / max(diffs[-1], v2, 1e-300)
        if move > audit_tol:
            pairs, diffs = pairs[:-1], diffs[:-1]
            dropped = 1
    gaps = np.array([abs(z - zp) for z, zp in pairs])
    if gaps.size < 3 or math.log10(gaps.max() / gaps.min()) < 2.0:
        raise TruncationLimitedError(
            "fewer than 2 decades of usable gaps after the truncation audit")

    logs_g = np.log10(gaps)
    logs_d = np.log10(np.maximum(diffs, 1e-300))
    coef, cov = np.polyfit(logs_g, logs_d, 1, cov=True)
    slope = float(coef[0])
    stderr = float(np.sqrt(cov[0, 0]))

    hvals = np.asarray(h(1.0 / gaps), dtype=float)
    cs = np.asarray(diffs) * hvals
    decades = np.floor(logs_g - logs_g.max())
    c_by_decade = [float(np.max(cs[decades == dv])) for dv in np.unique(decades)]
    pos = [c for c in c_by_decade if c > 0]
    stable = bool(max(pos) / min(pos) < stability_factor) if pos else False

    return HoelderReport(
        pairs=tuple(pairs), norm_diffs=tuple(float(d) for d in diffs),
        slope=slope, slope_stderr=stderr, fitted_c=float(np.max(cs)),
        c_by_decade=tuple(c_by_decade), c_stable=stable,
        modulus_name=h.name, truncation_dropped=dropped,
    )


# ---------------------------------------------------------------------------
# Rellich scan (generalized-eigenfunction tails, eigenvalue detector)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RellichReport:
    window: tuple
    roots: tuple              # matching-determinant zeros found
    candidates: tuple         # roots whose stitched solution has decaying tail
    details: tuple            # per-root dicts
    alpha_grid: tuple
    failures: tuple

    def to_dict(self):
        return {
            "window": list(self.window), "roots": list(self.roots),
            "candidates": list(self.candidates),
            "details": list(self.details),
            "alpha_grid": list(self.alpha_grid),
            "failures": list(self.failures),
        }


def _sturm_count_batch(main: np.ndarray, off: float,
                       lams: np.ndarray) -> np.ndarray:
    """Number of eigenvalues of the truncated tridiagonal operator below
    each energy, via the sign count of the principal-minor (Sturm)
    recurrence.  Robust to degenerate clusters, which the plain sign of the
    matching determinant misses (symmetric potentials in d = 1 pair their
    even/odd modes almost exactly)."""
    off2 = off * off
    d = np.full(lams.size, np.inf)
    count = np.zeros(lams.size, dtype=np.int64)
    first = True
    for mj in main:
        if first:
            d = mj - lams
            first = False
        else:
            tiny = 1e-300
            dd = np.where(np.abs(d) < tiny, np.where(d < 0, -tiny, tiny), d)
            d = (mj - lams) - off2 / dd
        count += (d < 0.0)
    return count


def _wronskian_batch(main: np.ndarray, off: float, lams: np.ndarray,
                     renorm_every: int = 256):
    """Scaled two-sided matching determinant for a batch of energies.

    The three-term recurrence u_{j+1} = ((main_j - lam)/|off|) u_j - u_{j-1}
    is propagated from both ends with Dirichlet seeds and periodic
    renormalization; the discrete Wronskian u_L[m] u_R[m+1] - u_L[m+1] u_R[m]
    (conserved for the exact recurrence) vanishes exactly at eigenvalues of
    the truncated operator.  Only signs and zeros are meaningful.
    """
    n = main.size
    m = n // 2
    coef = (main[None, :] - lams[:, None]) / abs(off)

    def sweep(left: bool):
        # returns (u at node m, u at node m+1), consistently scaled
        idx = range(1, m + 2) if left else range(n - 2, m - 1, -1)
        u_prev = np.zeros(lams.size)
        u_cur = np.ones(lams.size)
        steps = 0
        for j in idx:
            jm = j - 1 if left else j + 1
            u_next = coef[:, jm] * u_cur - u_prev
            u_prev, u_cur = u_cur, u_next
            steps += 1
            if steps % renorm_every == 0:
                s = np.maximum(np.abs(u_cur), np.abs(u_prev))
                s[s == 0] = 1.0
                u_cur = u_cur / s
                u_prev = u_prev / s
        # left sweep ends at j = m+1 with (u_prev, u_cur) = (u_m, u_{m+1});
        # right sweep ends at j = m with (u_prev, u_cur) = (u_{m+1}, u_m)
        return (u_prev, u_cur) if left else (u_cur, u_prev)

    lm, lm1 = sweep(True)
    rm, rm1 = sweep(False)
    return lm * rm1 - lm1 * rm


def _solve_recurrence(main: np.ndarray, off: float, lam: float,
                      renorm_every: int = 256):
    """Stitched two-sided solution of (H - lam) u = 0 at one energy."""
    n = main.size
    coef = (main - lam) / abs(off)

    def sweep(left: bool):
        u = np.zeros(n)
        order = range(1, n) if left else range(n - 2, -1, -1)
        start = 0 if left else n - 1
        u[start] = 1.0
        prev, cur = 0.0, 1.0
        steps = 0
        for j in order:
            jm = j - 1 if left else j + 1
            prev, cur = cur, coef[jm] * cur - prev
            u[j] = cur
            steps += 1
            if steps % renorm_every == 0:
                s = max(abs(cur), abs(prev))
                if s == 0 or not math.isfinite(s):
                    return None
                prev /= s
                cur /= s
                if left:
                    u[: j + 1] /= s
                else:
                    u[j:] /= s
        return u

    ul = sweep(True)
    ur = sweep(False)
    if ul is None or ur is None:
        return None
    m = n // 2
    # stitch where both branches carry weight, scaling the right branch
    j = m
    while (abs(ul[j]) < 1e-200 or abs(ur[j]) < 1e-200) and j + 1 < n - 1:
        j += 1
    if abs(ul[j]) < 1e-200 or abs(ur[j]) < 1e-200:
        return None
    phi = np.concatenate([ul[: j + 1] * ur[j], ur[j + 1 :] * ul[j]])
    nrm = np.linalg.norm(phi)
    return phi / nrm if nrm > 0 else None


def rellich_scan(pot: PotentialModel, g: RadialGrid, window, alpha_grid, *,
                 n_scan: int = 601, tail_tol: float = 0.08,
                 growth_tol: float = 0.3,
                 bisect_iters: int = 48) -> RellichReport:
    """Scan a spectral window for truncated-operator eigenvalues and
    classify the stitched generalized eigenfunctions.

    Roots of the matching determinant are localized by bisection on the
    Sturm (principal-minor) sign count, which is robust to the near-exact
    even/odd degeneracies of symmetric potentials in d = 1.  For each root
    the two-sided recurrence solution is stitched and its shell tail
    classified:

    * B_star_0 (vanishing tail): a genuine decaying eigenfunction -- the
      detector's positive for bound states and embedded eigenvalues;
    * B_star_only (plateau): a plane-wave-like mode, the expected class for
      every positive energy under the decay conditions;
    * still growing across the outermost shells: also flagged as a
      candidate, since a two-sided-matched solution that grows all the way
      to the boundary certifies a complementary decaying solution at the
      same energy (their Wronskian is constant).  This is how the
      borderline oscillating family betrays its resonance: detuned modes
      stop growing at the beat radius and plateau in the outer shells,
      while the resonant one grows throughout.

    For the decay-condition families the positive window must come back
    with no candidates; negative windows locate genuine bound states.  The
    quotients ||r^alpha phi|| / ||r^(-3/4) phi|| are reported per root for
    each requested alpha: bounded for decaying candidates, extent-sized for
    plateau or growing solutions.
    """
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise LapLabError(f"bad window {window}")
    ops = assemble_operators(g, pot)
    main = ops.h.diags[0].real
    off = float(ops.h.diags[1][0].real)

    lams = np.linspace(lo, hi, n_scan)
    counts = _sturm_count_batch(main, off, lams)
    jump_at = np.where(np.diff(counts) > 0)[0]

    roots, mults, details, candidates, failures = [], [], [], [], []
    if jump_at.size:
        # subdivide every counting bracket until each isolated cluster is
        # pinned; a bracket may split when it holds several roots
        a = lams[jump_at].copy()
        b = lams[jump_at + 1].copy()
        ca = counts[jump_at].copy()
        cb = counts[jump_at + 1].copy()
        tol_w = (hi - lo) * 0.5**bisect_iters
        for _ in range(bisect_iters):
            mid = 0.5 * (a + b)
            cm = _sturm_count_batch(main, off, mid)
            keep_l = cm > ca
            keep_r = cb > cm
            na = np.concatenate([a[keep_l], mid[keep_r]])
            nb = np.concatenate([mid[keep_l], b[keep_r]])
            nca = np.concatenate([ca[keep_l], cm[keep_r]])
            ncb = np.concatenate([cm[keep_l], cb[keep_r]])
            order = np.argsort(na)
            a, b, ca, cb = na[order], nb[order], nca[order], ncb[order]
            if np.all(b - a <= tol_w):
                break
        for aa, bb, c_lo, c_hi in zip(a, b, ca, cb):
            roots.append(float(0.5 * (aa + bb)))
            mults.append(int(c_hi - c_lo))

    for lam_root, mult in zip(roots, mults):
        phi = _solve_recurrence(main, off, lam_root)
        if phi is None:
            failures.append(float(lam_root))
            continue
        prof = dyadic_profile(g, phi)
        cls = tail_class(prof, tail_tol)
        match_res = float(np.linalg.norm(ops.h.matvec(phi) - lam_root * phi)
                          / abs(off))
        quot = {float(al): float(g.norm(g.r**float(al) * phi)
                                 / g.norm(g.r**-0.75 * phi))
                for al in np.atleast_1d(alpha_grid)}
        # slope of log(tail) vs shell over the outermost shells: positive
        # only when the growth persists all the way to the boundary
        outer = prof.tail[-min(4, prof.tail.size):]
        if np.all(outer > 0):
            kk = np.arange(outer.size, dtype=float)
            boundary_slope = float(np.polyfit(kk, np.log(outer), 1)[0])
        else:
            boundary_slope = -math.inf
        detail = {
            "lam": float(lam_root), "multiplicity": mult, "tail_class": cls,
            "match_residual": match_res,
            "rellich_quotients": quot,
            "boundary_slope": boundary_slope,
            "tail": [float(t) for t in prof.tail],
        }
        if cls == B_STAR_0:
            detail["candidate_kind"] = "decaying"
            candidates.append(float(lam_root))
        elif boundary_slope >= growth_tol:
            detail["candidate_kind"] = "complementary"
            candidates.append(float(lam_root))
        details.append(detail)

    return RellichReport(
        window=(lo, hi), roots=tuple(float(r) for r in roots),
        candidates=tuple(candidates), details=tuple(details),
        alpha_grid=tuple(float(a) for a in np.atleast_1d(alpha_grid)),
        failures=tuple(failures),
    )


# ---------------------------------------------------------------------------
# commutator diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticReport:
    """Feasibility fit for one commutator lower bound.

    Exploratory by design: feasibility of the fitted constants on the
    sampled states is numerical evidence for the form inequality, not a
    proof.
    """

    lemma: str
    feasible: bool
    c_star: float
    big_c_star: float
    gamma_coefficients: tuple
    n_states: int
    per_state_c0: tuple
    notes: str = "feasibility on sampled states is evidence, not proof"

    def to_dict(self):
        return {
            "lemma": self.lemma, "feasible": self.feasible,
            "c_star": self.c_star, "big_c_star": self.big_c_star,
            "gamma_coefficients": list(self.gamma_coefficients),
            "n_states": self.n_states,
            "per_state_c0": list(self.per_state_c0),
            "notes": self.notes,
        }


def commutator_diagnostic(pot: PotentialModel, g: RadialGrid, lemma: str,
                          f: WeightFn, z, states, *, w0: WeightFn | None = None,
                          big_k: float | None = None, c_cap: float = 1e3,
                          big_c_cap: float = 1e5, t_cap: float = 1e4,
                          sign: int = +1) -> DiagnosticReport:
    """Fit the constants of a commutator lower bound over sampled states.

    lemma selects the form inequality:

    * "key1" (real spectral parameter) and "key2" (complex) bound
      2 Im <A psi, f~ (H - z) psi> from below by
      c (f' + f W + A f' A + A f W A + p* f hess_r p) - C r^-2 f
      - Re<gamma (H - z)>, with f~ the exponentially tilted f and gamma
      fitted on the structural basis {f' theta, r^-2 f} (key2 adds the
      constants {1, i}).
    * "rad_bound" bounds 2 Im <(A - a) psi, f (H - z) psi> from below by
      c (A - a)* f' (A - a) + (2 - beta) p* f hess_r p - C Q with
      Q = (W0 + r^-3) f (1 + p* . p) and beta the growth constant of f.

    The fit is a small linear program, shared across all states: maximize c
    (with a tiny penalty on C) subject to per-state feasibility, the
    constants capped at ``c_cap``/``big_c_cap``/``t_cap``.  States touching
    the boundary layer are excluded and reported in the notes.
    """
    if lemma not in ("key1", "key2", "rad_bound"):
        raise LapLabError(f"unknown lemma {lemma!r}")
    z = complex(z)
    lam = z.real
    ops = assemble_operators(g, pot)
    w_int = g.quad_w * ops.interior
    r = g.r

    fv = np.asarray(f(r), dtype=float)
    fp = np.asarray(f.d(r), dtype=float)
    if not np.any(fv != 0.0):
        return DiagnosticReport(lemma=lemma, feasible=True, c_star=1.0,
                                big_c_star=0.0, gamma_coefficients=(),
                                n_states=len(states), per_state_c0=(),
                                notes="f = 0: both sides vanish; trivially feasible")

    from .calculus import boundary_touching

    w0v = np.asarray((w0(r) if w0 is not None else pot.w0(r)), dtype=float)

    if lemma in ("key1", "key2"):
        kk = big_k if big_k is not None else max(4.0, 8.0 / lam)
        w0fun = (lambda rr: np.asarray(w0(rr), float)) if w0 is not None \
            else (lambda rr: np.asarray(pot.w0(rr), float))
        ftilde = exponential_weight(f, kk, w0fun, g.r_max)
        ftv = np.asarray(ftilde(r), dtype=float)
        theta = np.where(fv > 0, ftv / np.maximum(fv, 1e-300), 1.0)
    else:
        kk = 0.0
        phase = build_phase(pot, g, z if z.imag else complex(lam), sign)
        a_c = phase.grid_corrected_a(g.dx)
        beta = float(f.params.get("beta1", 2.0))

    rows_v, rows_good, rows_err, rows_gamma, c0 = [], [], [], [], []
    excluded = 0
    for label, psi in states:
        if boundary_touching(g, psi, buffer=8):
            excluded += 1
            continue
        hz = ops.h.matvec(psi) - z * psi
        a_psi = ops.a.matvec(psi)
        p_psi = ops.p.matvec(psi)
        if lemma in ("key1", "key2"):
            v = float(2.0 * np.imag(np.sum(np.conj(a_psi) * ftv * hz * w_int)))
            good = (
                float(np.sum(fp * np.abs(psi) ** 2 * w_int))
                + float(np.sum(fv * w0v * np.abs(psi) ** 2 * w_int))
                + float(np.sum(fp * np.abs(a_psi) ** 2 * w_int))
                + float(np.sum(fv * w0v * np.abs(a_psi) ** 2 * w_int))
                + float(np.sum(fv * g.hess_r * np.abs(p_psi) ** 2 * w_int))
            )
            err = float(np.sum(r**-2.0 * fv * np.abs(psi) ** 2 * w_int))
            basis = [fp * theta, r**-2.0 * fv]
            if lemma == "key2":
                basis += [np.ones(g.n), 1j * np.ones(g.n)]
            gam = [float(np.real(np.sum(np.conj(psi) * b * hz * w_int)))
                   for b in basis]
        else:
            am_psi = a_psi - a_c * psi
            v = float(2.0 * np.imag(np.sum(np.conj(am_psi) * fv * hz * w_int)))
            good = float(np.sum(fp * np.abs(am_psi) ** 2 * w_int))
            fixed = (2.0 - beta) * float(
                np.sum(fv * g.hess_r * np.abs(p_psi) ** 2 * w_int))
            v = v - fixed
            err = float(np.sum((w0v + r**-3.0) * fv
                               * (np.abs(psi) ** 2 + np.abs(p_psi) ** 2)
                               * w_int))
            gam = []
        rows_v.append(v)
        rows_good.append(good)
        rows_err.append(err)
        rows_gamma.append(gam)
        c0.append(v / good if good > 0 else math.inf)

    n_used = len(rows_v)
    if n_used == 0:
        raise LapLabError("no usable states (all touch the boundary layer)")

    n_gamma = len(rows_gamma[0])
    # variables: [c, C, t_1..t_m]; maximize c - small*C
    # constraint per state: c*G_i - C*e_i - sum t_k q_ki <= v_i
    a_ub = np.zeros((n_used, 2 + n_gamma))
    a_ub[:, 0] = rows_good
    a_ub[:, 1] = -np.asarray(rows_err)
    for i, gam in enumerate(rows_gamma):
        for k, qk in enumerate(gam):
            a_ub[i, 2 + k] = -qk
    b_ub = np.asarray(rows_v)
    cost = np.zeros(2 + n_gamma)
    cost[0] = -1.0
    cost[1] = 1e-6
    bounds = [(0.0, c_cap), (0.0, big_c_cap)] + [(-t_cap, t_cap)] * n_gamma
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    feasible = bool(res.success and res.x[0] > 0.0)

    notes = "feasibility on sampled states is evidence, not proof"
    if excluded:
        notes += f"; {excluded} boundary-touching states excluded"
    if lemma in ("key1", "key2"):
        notes += f"; K = {kk:g}"
    else:
        notes += f"; beta = {beta:g} (fixed hessian coefficient 2 - beta)"
    return DiagnosticReport(
        lemma=lemma, feasible=feasible,
        c_star=float(res.x[0]) if res.success else 0.0,
        big_c_star=float(res.x[1]) if res.success else math.nan,
        gamma_coefficients=tuple(float(t) for t in res.x[2:]) if res.success else (),
        n_states=n_used, per_state_c0=tuple(c0), notes=notes,
    )
