"""Dyadic Besov-type norms, weighted norms, and shell-tail classification.

The dyadic blocks are F_k = 1{2^(k-1) <= r < 2^k}, k >= 1.  On our grids
r >= 1 everywhere, so the blocks partition the whole domain.  The l^1-type
norm sums 2^(k/2) ||F_k psi|| over all shells (partial outermost included);
the sup-type norm and the tail sequence use complete shells only, which
keeps truncation-boundary artifacts out of sup-type quantities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ShellCountError
from .model import RadialGrid

__all__ = [
    "BesovProfile",
    "dyadic_profile",
    "weighted_norm",
    "tail_class",
    "besov_norm",
    "besov_star_norm",
    "B_STAR_0",
    "B_STAR_ONLY",
    "UNBOUNDED",
]

B_STAR_0 = "B_star_0"
B_STAR_ONLY = "B_star_only"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class BesovProfile:
    """Per-shell L2 block norms and the derived l^1 / sup type norms.

    Attributes
    ----------
    k_values : np.ndarray
        Shell indices 1..K (K includes a partial outermost shell if any).
    block_norms : np.ndarray
        ||F_k psi|| per shell (trapezoidal quadrature).
    complete : np.ndarray of bool
        Whether shell k lies entirely inside the grid.
    besov : float
        sum_k 2^(k/2) ||F_k psi||, all shells.
    besov_star : float
        max over complete shells of 2^(-k/2) ||F_k psi||.
    tail : np.ndarray
        2^(-k/2) ||F_k psi|| over complete shells.
    k_max : int
        Number of complete shells.
    """

    k_values: np.ndarray
    block_norms: np.ndarray
    complete: np.ndarray
    besov: float
    besov_star: float
    tail: np.ndarray
    k_max: int

    def to_json(self) -> str:
        rows = [
            {"k": int(k), "block_norm": float(b), "complete": bool(c)}
            for k, b, c in zip(self.k_values, self.block_norms, self.complete)
        ]
        return json.dumps(
            {"schema_version": 1, "shells": rows, "besov": self.besov,
             "besov_star": self.besov_star, "k_max": self.k_max,
             "tail": [float(t) for t in self.tail]},
            sort_keys=True)


def shell_index(r: np.ndarray) -> np.ndarray:
    """k such that r in [2^(k-1), 2^k); r = 1 belongs to shell 1."""
    k = np.floor(np.log2(np.asarray(r, dtype=float))).astype(int) + 1
    return np.maximum(k, 1)


def dyadic_profile(g: RadialGrid, psi: np.ndarray,
                   weights: np.ndarray | None = None) -> BesovProfile:
    """Compute the dyadic shell profile of psi on the grid.

    ``weights`` optionally replaces the grid quadrature weights (used for
    interior-restricted profiles).  Requires grid extent >= 2 so at least one
    complete shell exists.
    """
    if g.r_max < 2.0:
        raise ShellCountError(
            f"grid extent {g.extent} leaves no complete dyadic shell")
    w = g.quad_w if weights is None else weights
    k = shell_index(g.r)
    k_top = int(k.max())
    mass = np.bincount(k, weights=np.abs(psi) ** 2 * w, minlength=k_top + 1)[1:]
    block = np.sqrt(mass)
    k_values = np.arange(1, k_top + 1)
    complete = (2.0**k_values) <= g.r_max * (1.0 + 1e-12)
    if not complete.any():
        raise ShellCountError("no complete dyadic shell inside the grid")
    scale = 2.0 ** (k_values / 2.0)
    besov = float(np.sum(scale * block))
    tail_all = block / scale
    tail = tail_all[complete]
    return BesovProfile(
        k_values=k_values, block_norms=block, complete=complete,
        besov=besov, besov_star=float(tail.max()), tail=tail,
        k_max=int(complete.sum()),
    )


def besov_norm(g: RadialGrid, psi) -> float:
    return dyadic_profile(g, psi).besov


def besov_star_norm(g: RadialGrid, psi) -> float:
    return dyadic_profile(g, psi).besov_star


def weighted_norm(g: RadialGrid, psi, s: float) -> float:
    """||r^s psi|| with trapezoidal quadrature."""
    if not math.isfinite(s):
        raise ValueError(f"weight exponent must be finite, got {s}")
    return g.norm(g.r**float(s) * np.asarray(psi))


def tail_class(profile: BesovProfile, tol: float = 0.05) -> str:
    """Classify the shell tail 2^(-k/2)||F_k psi|| by its trend.

    Least-squares slope of log(tail) vs k over the outer half of the
    complete shells, thresholded at +-tol:

    * slope <= -tol: B_star_0 (tail decreasing to zero),
    * slope >= +tol: unbounded (growing),
    * otherwise:     B_star_only (plateau).

    Raises
    ------
    ShellCountError
        If fewer than 4 complete shells are available; classification is
        refused rather than guessed.
    """
    if profile.k_max < 4:
        raise ShellCountError(
            f"need >= 4 complete shells to classify, have {profile.k_max}")
    tail = profile.tail
    top = float(tail.max())
    if top == 0.0:
        return B_STAR_0
    outer = tail[tail.size // 2 :]
    # decayed below numerical noise: decisively vanishing
    if float(outer.max()) < 1e-13 * top:
        return B_STAR_0
    k = np.arange(outer.size, dtype=float)
    logs = np.log(np.maximum(outer, 1e-300))
    slope = float(np.polyfit(k, logs, 1)[0])
    if slope <= -tol:
        return B_STAR_0
    if slope >= tol:
        return UNBOUNDED
    return B_STAR_ONLY
