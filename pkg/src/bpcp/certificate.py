"""Finite-size dual certificate construction and checks.

Works with two linear spaces of N x T matrices: the tangent space of the
low-rank part (column space ``U``, row space ``V``) and the space of
matrices supported on ``Omega``, the support of the large error part. The
certificate is ``W = W_L + W_S`` where ``W_L`` comes from the golfing
scheme over ``j0 = 4`` random batches and ``W_S`` from a Neumann series.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg_core import as_matrix, svd

J0 = 4


@dataclass(frozen=True)
class TangentSpace:
    u: np.ndarray  # N x r, orthonormal columns
    v: np.ndarray  # T x r, orthonormal columns

    def __post_init__(self):
        if self.u.ndim != 2 or self.v.ndim != 2 or self.u.shape[1] != self.v.shape[1]:
            raise ValueError("u and v must be 2-D with the same number of columns")

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    @classmethod
    def from_matrix(cls, l0, r: int) -> "TangentSpace":
        """Leading ``r`` singular vectors of ``l0``."""
        f = svd(l0)
        return cls(f.u[:, :r].copy(), f.v[:, :r].copy())

    @classmethod
    def random_orthogonal(cls, n: int, t: int, r: int, rng: np.random.Generator) -> "TangentSpace":
        u = np.linalg.qr(rng.standard_normal((n, r)))[0] if r else np.zeros((n, 0))
        v = np.linalg.qr(rng.standard_normal((t, r)))[0] if r else np.zeros((t, 0))
        return cls(u, v)

    def uvt(self) -> np.ndarray:
        return self.u @ self.v.T

    def orthonormality_error(self) -> float:
        r = self.rank
        eye = np.eye(r)
        return max(
            float(np.max(np.abs(self.u.T @ self.u - eye), initial=0.0)),
            float(np.max(np.abs(self.v.T @ self.v - eye), initial=0.0)),
        )


@dataclass(frozen=True)
class SupportSet:
    """The set Omega, stored as a boolean N x T mask."""

    mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @classmethod
    def from_indices(cls, shape, indices) -> "SupportSet":
        n, t = shape
        mask = np.zeros((n, t), dtype=bool)
        for i, j in indices:
            if not (0 <= i < n and 0 <= j < t):
                raise IndexError(f"index ({i}, {j}) out of range for shape {shape}")
            if mask[i, j]:
                raise ValueError(f"duplicate index ({i}, {j})")
            mask[i, j] = True
        return cls(mask)

    @classmethod
    def from_mask(cls, mask) -> "SupportSet":
        return cls(np.asarray(mask, dtype=bool))

    def indices(self) -> list[tuple[int, int]]:
        return [tuple(ix) for ix in np.argwhere(self.mask)]

    def complement(self) -> "SupportSet":
        return SupportSet(~self.mask)


def _check_shape(shape, r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != tuple(shape):
        raise ValueError(f"shape mismatch: expected {tuple(shape)}, got {r.shape}")
    return r


def proj_phi(ts: TangentSpace, r) -> np.ndarray:
    """``U U^T R + R V V^T - U U^T R V V^T``."""
    r = _check_shape(ts.shape, r)
    u, v = ts.u, ts.v
    ur = u @ (u.T @ r)
    return ur + (r @ v) @ v.T - (ur @ v) @ v.T


def proj_phi_perp(ts: TangentSpace, r) -> np.ndarray:
    """``(I - U U^T) R (I - V V^T)``."""
    r = _check_shape(ts.shape, r)
    left = r - ts.u @ (ts.u.T @ r)
    return left - (left @ ts.v) @ ts.v.T


def proj_omega(s: SupportSet, r) -> np.ndarray:
    r = _check_shape(s.shape, r)
    return np.where(s.mask, r, 0.0)


def proj_omega_perp(s: SupportSet, r) -> np.ndarray:
    r = _check_shape(s.shape, r)
    return np.where(s.mask, 0.0, r)


class NormEstimate(NamedTuple):
    value: float
    iterations: int
    converged: bool


def _instance_seed(ts: TangentSpace, s: SupportSet) -> int:
    h = hashlib.sha256()
    for arr in (ts.u, ts.v, s.mask):
        h.update(np.ascontiguousarray(arr).tobytes())
    return int.from_bytes(h.digest()[:8], "little")


def op_norm_composed(ts: TangentSpace, s: SupportSet, tol: float = 1e-13, max_iters: int = 20000) -> NormEstimate:
    """Estimate ``||P_Omega P_Phi||`` by power iteration on ``P_Phi P_Omega P_Phi``.

    The top eigenvalue of the self-adjoint composition is the squared norm.
    Iteration stops once successive Rayleigh quotients differ by less than
    ``tol``. The start vector is derived from a hash of the instance; a
    second start is tried if the first one stagnates at zero.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.any(s.mask) or ts.rank == 0:
        return NormEstimate(0.0, 0, True)

    base = _instance_seed(ts, s)
    total = 0
    for attempt in range(2):
        rng = np.random.default_rng([base, attempt])
        x = proj_phi(ts, rng.standard_normal(ts.shape))
        x /= np.linalg.norm(x)
        prev = -1.0
        for it in range(1, max_iters + 1):
            y = proj_phi(ts, proj_omega(s, x))
            rq = float(np.sum(x * y))
            ny = float(np.linalg.norm(y))
            total += 1
            if ny == 0.0:
                break
            x = y / ny
            if abs(rq - prev) < tol:
                return NormEstimate(math.sqrt(max(rq, 0.0)), total, True)
            prev = rq
        else:
            return NormEstimate(math.sqrt(max(prev, 0.0)), total, False)
    # both starts collapsed: the composition annihilates the tangent space
    return NormEstimate(0.0, total, True)


def golfing_q(delta: float) -> float:
    """Per-batch probability q with ``(1 - q)**4 = 1 - delta``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return delta / ((1.0 + math.sqrt(1.0 - delta)) * (1.0 + (1.0 - delta) ** 0.25))


class GolfingResult(NamedTuple):
    w_l: np.ndarray
    q_final: np.ndarray
    empty_batches: list[int]


def golfing_wl(ts: TangentSpace, batches, q: float) -> GolfingResult:
    """Golfing scheme: ``Q_j = Q_{j-1} + P_{Omega_j} P_Phi (UV^T - Q_{j-1}) / q``.

    Returns ``W_L = P_Phi_perp Q_j0``. Empty batches are listed in the
    result rather than rejected.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    target = ts.uvt()
    qj = np.zeros(ts.shape)
    empty = []
    for j, batch in enumerate(batches, start=1):
        if not np.any(batch.mask):
            empty.append(j)
        qj = qj + proj_omega(batch, proj_phi(ts, target - qj)) / q
    return GolfingResult(proj_phi_perp(ts, qj), qj, empty)


class CertificateError(RuntimeError):
    def __init__(self, message: str, measured_norm: float):
        super().__init__(message)
        self.measured_norm = measured_norm


class NeumannResult(NamedTuple):
    w_s: np.ndarray
    series: np.ndarray  # sum_k (P_Omega P_Phi P_Omega)^k E, before scaling and projection
    terms: int
    composed_norm: float


def neumann_ws(
    ts: TangentSpace, s: SupportSet, e, lam: float, tol: float = 1e-12, max_terms: int = 200000
) -> NeumannResult:
    """``W_S = lam * P_Phi_perp sum_k (P_Omega P_Phi P_Omega)^k E``.

    Refuses with :class:`CertificateError` unless ``||P_Omega P_Phi|| < 1``.
    The series stops when a term's Frobenius norm drops below ``tol``.
    """
    e = _check_shape(s.shape, e)
    if np.any(e[~s.mask] != 0) or np.any(np.abs(e[s.mask]) != 1):
        raise ValueError("e must be a sign matrix supported exactly on Omega")
    est = op_norm_composed(ts, s)
    if est.value >= 1.0 - 1e-12:
        raise CertificateError(f"||P_Omega P_Phi|| = {est.value:.6f} is not below 1", est.value)

    term = e.copy()
    total = term.copy()
    k = 0
    while np.linalg.norm(term) >= tol:
        if k >= max_terms:
            raise CertificateError(f"Neumann series did not reach tol={tol} in {max_terms} terms", est.value)
        term = proj_omega(s, proj_phi(ts, term))
        total += term
        k += 1
    return NeumannResult(lam * proj_phi_perp(ts, total), total, k + 1, est.value)


@dataclass(frozen=True)
class CertificateReport:
    norm_w: float
    cond1_residual: float  # ||P_Phi W||_F
    cond3_lhs: float
    cond3_bound: float  # lam * delta / 16
    cond4_lhs: float
    cond4_bound: float  # lam / 2 (strict)
    overlap_lhs: float  # ||P_Omega P_Phi||^2
    overlap_bound: float  # 1 - delta + eps * delta
    uvt_inf: float
    implied_mu: float  # sqrt(NT) ||UV^T||_inf / r
    incoherence_mu: float  # max(N/r max||U^T e_i||^2, T/r max||V^T e_t||^2)
    mu_regime_ok: bool  # implied_mu > log N
    cond1_ok: bool
    cond2_ok: bool
    cond3_ok: bool
    cond4_ok: bool
    overlap_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.cond1_ok and self.cond2_ok and self.cond3_ok and self.cond4_ok


def incoherence(ts: TangentSpace) -> tuple[float, float]:
    """Return ``(implied_mu, incoherence_mu)`` for the tangent space."""
    n, t = ts.shape
    r = ts.rank
    if r == 0:
        return 0.0, 0.0
    implied = math.sqrt(n * t) * float(np.max(np.abs(ts.uvt()))) / r
    row_u = float(np.max(np.sum(ts.u**2, axis=1))) * n / r
    row_v = float(np.max(np.sum(ts.v**2, axis=1))) * t / r
    return implied, max(row_u, row_v)


def verify_certificate(
    ts: TangentSpace, s: SupportSet, e, w, lam: float, delta: float, eps: float = 0.2, cond1_tol: float = 1e-9
) -> CertificateReport:
    """Measure the four certificate conditions and the composed-norm bound."""
    e = _check_shape(s.shape, e)
    w = _check_shape(s.shape, w)
    n, t = ts.shape
    uvt = ts.uvt()
    norm_w = float(svd(w).sigma[0])
    cond1 = float(np.linalg.norm(proj_phi(ts, w)))
    cond3 = float(np.linalg.norm(proj_omega(s, uvt + w - lam * e)))
    cond4 = float(np.max(np.abs(proj_omega_perp(s, uvt + w))))
    overlap = op_norm_composed(ts, s).value ** 2
    implied, mu = incoherence(ts)
    return CertificateReport(
        norm_w=norm_w,
        cond1_residual=cond1,
        cond3_lhs=cond3,
        cond3_bound=lam * delta / 16.0,
        cond4_lhs=cond4,
        cond4_bound=lam / 2.0,
        overlap_lhs=overlap,
        overlap_bound=1.0 - delta + eps * delta,
        uvt_inf=float(np.max(np.abs(uvt))) if ts.rank else 0.0,
        implied_mu=implied,
        incoherence_mu=mu,
        mu_regime_ok=implied > math.log(n),
        cond1_ok=cond1 <= cond1_tol,
        cond2_ok=norm_w <= 0.5,
        cond3_ok=cond3 <= lam * delta / 16.0,
        cond4_ok=cond4 < lam / 2.0,
        overlap_ok=overlap <= 1.0 - delta + eps * delta,
    )


class Rates(NamedTuple):
    delta: float
    lam: float
    eps: float


def rates(n: int, mu: float, r: int, c_delta: float = 1.0, c_lambda: float = 1.0, c_eps: float = 1.0) -> Rates:
    """Order-of-magnitude choices for delta, lambda and epsilon.

    Only the orders ``mu r / n^(1/3)``, ``mu^(1/3) / n^(2/3)`` and
    ``log n / n^(1/3)`` are prescribed; the unit constants are arbitrary.
    """
    cube = n ** (1.0 / 3.0)
    return Rates(c_delta * mu * r / cube, c_lambda * mu ** (1.0 / 3.0) / cube**2, c_eps * math.log(n) / cube)


@dataclass(frozen=True)
class CertificateInstance:
    ts: TangentSpace
    support: SupportSet
    batches: list[SupportSet]
    e: np.ndarray
    q: float
    delta: float


def sample_instance(n: int, t: int, r: int, delta: float, rng: np.random.Generator) -> CertificateInstance:
    """Random-orthogonal tangent space plus batches ``Omega_j ~ Ber(q)``.

    ``Omega`` is derived as the complement of the union of the batches, and
    ``E`` carries independent symmetric signs on ``Omega``.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    ts = TangentSpace.random_orthogonal(n, t, r, rng)
    q = golfing_q(delta)
    batch_masks = [rng.random((n, t)) < q for _ in range(J0)]
    covered = np.logical_or.reduce(batch_masks)
    support = SupportSet(~covered)
    signs = np.where(rng.random((n, t)) < 0.5, -1.0, 1.0)
    e = np.where(support.mask, signs, 0.0)
    return CertificateInstance(ts, support, [SupportSet(m) for m in batch_masks], e, q, delta)


def certify_instance(inst: CertificateInstance, lam: float, eps: float = 0.2, tol: float = 1e-12):
    """Build ``W = W_L + W_S`` for ``inst`` and verify it.

    Returns ``(report, w_l, w_s)``; ``w_s`` is ``None`` if the Neumann
    construction was refused.
    """
    gl = golfing_wl(inst.ts, inst.batches, inst.q)
    try:
        ws = neumann_ws(inst.ts, inst.support, inst.e, lam, tol=tol).w_s
    except CertificateError:
        ws = None
    w = gl.w_l + (ws if ws is not None else 0.0)
    report = verify_certificate(inst.ts, inst.support, inst.e, w, lam, inst.delta, eps=eps)
    return report, gl.w_l, ws


def dense_operator(ts: TangentSpace, s: SupportSet) -> np.ndarray:
    """Materialize ``P_Phi P_Omega P_Phi`` as an (NT x NT) matrix; oracle use only."""
    n, t = ts.shape
    if n * t > 40 * 40:
        raise ValueError("dense materialization is limited to N*T <= 1600")
    cols = []
    for k in range(n * t):
        basis = np.zeros(n * t)
        basis[k] = 1.0
        cols.append(proj_phi(ts, proj_omega(s, proj_phi(ts, basis.reshape(n, t)))).ravel())
    return np.column_stack(cols)
