"""Bounded principal component pursuit via an inexact augmented Lagrangian method.

Solves ``min ||L||_* + lam * ||Z||_1  s.t.  L + Z = Y`` by alternating a
singular value thresholding step on ``L``, a soft-thresholding step on ``Z``
and a multiplier update. The entrywise bound ``||L||_inf <= alpha`` is
checked once the iteration stops (``alpha_mode="verify"``) or, optionally,
enforced by clipping each ``L`` iterate (``alpha_mode="clip"``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .linalg_core import as_matrix, svd, svd_skinny

logger = logging.getLogger(__name__)

SVD_MODES = ("full", "truncated", "validate")
ALPHA_MODES = ("verify", "clip")


def soft_threshold(a, tau: float) -> np.ndarray:
    """Entrywise ``sign(x) * max(|x| - tau, 0)``."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    a = np.asarray(a, dtype=np.float64)
    # a - clip(a) equals sign(a) * max(|a| - tau, 0) exactly
    return a - np.clip(a, -tau, tau)


def svt(a, tau: float) -> np.ndarray:
    """Singular value thresholding, the proximal map of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    u, s, v = svd(a)
    s = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(s))
    return (u[:, :k] * s[:k]) @ v[:, :k].T


def default_nu(y) -> float:
    """Penalty ``N*T / (4 * ||Y||_1)``."""
    y = as_matrix(y, "y")
    l1 = float(np.sum(np.abs(y)))
    if l1 == 0.0:
        raise ValueError("default_nu is undefined for an all-zero matrix")
    return y.size / (4.0 * l1)


def default_lambda(n: int, t: int, c: float = 0.7) -> float:
    """``c * (log(min(n, t)) / (n * t)) ** (1/3)`` with the natural log."""
    if n < 2 or t < 2:
        raise ValueError("n and t must both be at least 2")
    if c <= 0:
        raise ValueError("c must be positive")
    return c * (math.log(min(n, t)) / (n * t)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class SolverConfig:
    """Tuning for :func:`solve_bpcp`.

    ``lam`` weights the l1 term. ``alpha`` is the entrywise bound on L, with
    ``math.inf`` meaning unbounded. ``nu`` is the penalty or ``"auto"``.
    ``svd_mode="truncated"`` computes only the leading singular triplets
    (previous rank + 5) and ``"validate"`` additionally checks each
    truncated step against a full SVD.
    """

    lam: float
    alpha: float = math.inf
    nu: float | str = "auto"
    tol_feasibility: float = 1e-7
    tol_progress: float = 1e-5
    max_iters: int = 1000
    alpha_mode: str = "verify"
    svd_mode: str = "full"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if isinstance(self.nu, str):
            if self.nu != "auto":
                raise ValueError(f"nu must be a positive number or 'auto', got {self.nu!r}")
        elif not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not (self.tol_feasibility > 0 and self.tol_progress > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.svd_mode not in SVD_MODES:
            raise ValueError(f"svd_mode must be one of {SVD_MODES}")


class IterationRecord(NamedTuple):
    iteration: int
    objective: float
    feasibility: float
    progress: float
    lagrangian: float
    rank: int


@dataclass
class SolveResult:
    l_hat: np.ndarray
    z_hat: np.ndarray
    iterations: int
    converged: bool
    feasibility_residual: float
    progress_residual: float
    alpha_satisfied: bool
    objective: float
    nu: float
    lam: float
    per_iteration_log: list[IterationRecord] = field(default_factory=list, repr=False)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iters"


class _TruncatedSvt:
    """SVT from a warm-started block subspace iteration.

    The block keeps ``rank + pad`` columns across calls, so consecutive ALM
    iterates (which change little) need only a few sweeps. Falls back to a
    full SVD when the block would be large or the sweep budget runs out.
    """

    def __init__(self, shape, pad: int = 5, max_sweeps: int = 40, rtol: float = 1e-11):
        self.shape = shape
        self.pad = pad
        self.max_sweeps = max_sweeps
        self.rtol = rtol
        self.max_block = max(min(shape) // 4, 1)
        # Cholesky-QR2 beats gesdd once one side is several times the other
        self.skinny = max(shape) >= 4 * min(shape)
        self.rng = np.random.default_rng(0)
        self.basis: np.ndarray | None = None
        self.full_calls = 0
        self.partial_calls = 0

    def _full(self, a, tau):
        u, s, v = svd_skinny(a) if self.skinny else svd(a)
        keep = int(np.count_nonzero(s > tau))
        self.full_calls += 1
        self.basis = v[:, : min(keep + self.pad, v.shape[1])].copy()
        return u, s, v, keep

    def __call__(self, a, tau, prev_rank):
        k = prev_rank + self.pad
        while k <= self.max_block:
            out = self._partial(a, tau, k)
            if out is not None:
                self.partial_calls += 1
                return out
            k *= 2
        return self._full(a, tau)

    def _partial(self, a, tau, k):
        t = self.shape[1]
        if self.basis is None:
            v = self.rng.standard_normal((t, k))
        else:
            v = self.basis[:, :k]
            if v.shape[1] < k:
                v = np.hstack([v, self.rng.standard_normal((t, k - v.shape[1]))])
        v = scipy.linalg.qr(v, mode="economic")[0]
        for _ in range(self.max_sweeps):
            q = scipy.linalg.qr(a @ v, mode="economic")[0]
            ub, s, vbt = scipy.linalg.svd(q.T @ a, full_matrices=False)
            u = q @ ub
            v = vbt.T
            keep = int(np.count_nonzero(s > tau))
            if keep == k:
                # every Ritz value is above the threshold: the block is too small
                return None
            resid = np.linalg.norm(a @ v[:, :keep] - u[:, :keep] * s[:keep], axis=0)
            if keep == 0 or np.all(resid <= self.rtol * s[0]):
                self.basis = v
                return u, s, v, keep
        return None


def solve_bpcp(y, config: SolverConfig) -> SolveResult:
    """Recover ``(L_hat, Z_hat)`` from ``Y = L + Z``.

    The iteration stops when ``||Y - L_k - Z_k||_F <= tol_feasibility * ||Y||_F``
    and ``nu * ||Z_k - Z_{k-1}||_F <= tol_progress`` both hold. Hitting
    ``max_iters`` is reported through ``converged=False``, not raised.
    """
    y = as_matrix(y, "y")
    if config.nu == "auto":
        nu = default_nu(y) if np.any(y) else 1.0
    else:
        nu = float(config.nu)
    lam = float(config.lam)
    y_fro = float(np.linalg.norm(y, "fro"))

    scale = max(float(scipy.linalg.norm(y, 2)) if y_fro > 0 else 0.0, float(np.max(np.abs(y))) / lam)
    mult = y / scale if scale > 0 else np.zeros_like(y)
    l_k = np.zeros_like(y)
    z_k = np.zeros_like(y)

    truncated = _TruncatedSvt(y.shape) if config.svd_mode != "full" else None
    rank = 0
    log: list[IterationRecord] = []
    converged = False
    feas = prog = math.inf
    inv_nu = 1.0 / nu

    shift = mult * inv_nu
    for it in range(1, config.max_iters + 1):
        target = y - z_k
        target += shift
        if truncated is None:
            u, s, v = svd(target)
            keep = int(np.count_nonzero(s > inv_nu))
        else:
            u, s, v, keep = truncated(target, inv_nu, rank)
            if config.svd_mode == "validate":
                _check_against_full(target, inv_nu, u, s, v, keep)
        s_thr = s[:keep] - inv_nu
        l_k = (u[:, :keep] * s_thr) @ v[:, :keep].T
        rank = keep
        nuclear = float(np.sum(s_thr))
        if config.alpha_mode == "clip" and math.isfinite(config.alpha):
            l_k = np.clip(l_k, -config.alpha, config.alpha)
            nuclear = float(np.sum(svd(l_k).sigma))

        resid = y - l_k
        z_next = soft_threshold(resid + shift, lam * inv_nu)
        resid -= z_next
        mult += nu * resid
        shift = mult * inv_nu
        feas = float(np.linalg.norm(resid, "fro"))
        prog = nu * float(np.linalg.norm(z_next - z_k, "fro"))
        z_k = z_next

        l1 = float(np.sum(np.abs(z_k)))
        objective = nuclear + lam * l1
        lagrangian = objective + float(np.vdot(mult, resid)) + 0.5 * nu * feas * feas
        log.append(IterationRecord(it, objective, feas, prog, lagrangian, rank))
        if feas <= config.tol_feasibility * y_fro and prog <= config.tol_progress:
            converged = True
            break

    if not converged:
        logger.warning("BPCP stopped at max_iters=%d (feasibility %.3g, progress %.3g)", config.max_iters, feas, prog)
    if truncated is not None:
        logger.debug("truncated SVT: %d partial, %d full", truncated.partial_calls, truncated.full_calls)

    return SolveResult(
        l_hat=l_k,
        z_hat=z_k,
        iterations=len(log),
        converged=converged,
        feasibility_residual=feas,
        progress_residual=prog,
        alpha_satisfied=bool(np.max(np.abs(l_k)) <= config.alpha),
        objective=log[-1].objective,
        nu=nu,
        lam=lam,
        per_iteration_log=log,
    )


def _check_against_full(a, tau, u, s, v, keep, tol=1e-9):
    approx = (u[:, :keep] * (s[:keep] - tau)) @ v[:, :keep].T
    exact = svt(a, tau)
    scale = max(float(np.linalg.norm(a, "fro")), 1.0)
    err = float(np.linalg.norm(approx - exact, "fro"))
    if err > tol * scale:
        raise AssertionError(f"truncated SVT disagrees with full SVD: {err:.3e} > {tol:.0e} * {scale:.3e}")
