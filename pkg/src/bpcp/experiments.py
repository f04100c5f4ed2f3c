"""Monte-Carlo harness for the simulation tables and the bound monitors."""

from __future__ import annotations

import csv
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import certificate as cert
from .device import NoiseModel, delta_schedule, split
from .linalg_core import as_matrix
from .solver import SolverConfig, default_lambda, solve_bpcp

logger = logging.getLogger(__name__)

GRID_NOISES = ("gaussian", "cauchy")


def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode())


def stream(seed: int, *key) -> np.random.Generator:
    """Philox generator for the stream named by ``(seed, *key)``.

    Stream derivation goes through ``SeedSequence`` spawn keys, so every
    ``(cell, replication)`` pair gets an independent, order-free stream.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(_key_int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(int(seed))


def gen_low_rank(n: int, t: int, r: int, seed) -> np.ndarray:
    """Product of independent N(0,1) factors of shapes (n, r) and (r, t)."""
    if not 1 <= r <= min(n, t):
        raise ValueError(f"rank {r} must lie in [1, min(n, t)]")
    rng = _as_rng(seed)
    return rng.standard_normal((n, r)) @ rng.standard_normal((r, t))


def gen_noise(n: int, t: int, kind: str, seed, scale: float = 1.0) -> np.ndarray:
    """i.i.d. noise; Cauchy entries are ``tan(pi * (U - 1/2))`` for uniform U."""
    rng = _as_rng(seed)
    if kind == "gaussian":
        z = rng.standard_normal((n, t))
    elif kind == "cauchy":
        z = np.tan(np.pi * (rng.random((n, t)) - 0.5))
    else:
        raise ValueError(f"noise kind must be 'gaussian' or 'cauchy', got {kind!r}")
    return scale * z


@dataclass(frozen=True)
class ExperimentSpec:
    sizes: list[tuple[int, int]]
    ranks: list[int]
    noises: list[str] = field(default_factory=lambda: list(GRID_NOISES))
    lambda_scale: float = 0.7
    replications: int = 10
    seed: int = 42
    max_iters: int = 200000
    svd_mode: str = "truncated"

    def __post_init__(self):
        for n, t in self.sizes:
            if n < 2 or t < 2:
                raise ValueError(f"sizes must be at least 2, got {(n, t)}")
            for r in self.ranks:
                if not 1 <= r <= min(n, t):
                    raise ValueError(f"rank {r} invalid for size {(n, t)}")
        for kind in self.noises:
            if kind not in GRID_NOISES:
                raise ValueError(f"unknown noise {kind!r}")
        if self.replications < 1:
            raise ValueError("replications must be positive")

    def cells(self):
        for n, t in self.sizes:
            for r in self.ranks:
                for kind in self.noises:
                    yield n, t, r, kind


@dataclass(frozen=True)
class ReplicationRecord:
    n: int
    t: int
    r: int
    noise: str
    rep: int
    mse_per_entry: float
    rel_error: float
    l0_fro2: float
    iterations: int
    converged: bool
    seconds: float


@dataclass(frozen=True)
class CellSummary:
    n: int
    t: int
    r: int
    noise: str
    mse_mean: float
    mse_stderr: float
    rel_mean: float
    rel_stderr: float
    reps: int
    nonconverged: int
    mean_iterations: float

    @property
    def flagged(self) -> bool:
        return self.nonconverged > 0.1 * self.reps


@dataclass
class ExperimentResult:
    cells: dict[tuple[int, int, int, str], CellSummary]
    records: list[ReplicationRecord]


def instance(n: int, t: int, r: int, kind: str, rep: int, seed: int = 42):
    """The ``(L0, Z0)`` pair for one replication of one cell.

    ``L0`` is keyed by ``(n, t, r, rep)`` and ``Z0`` by ``(n, t, kind, rep)``,
    so cells that differ only in noise share ``L0`` and cells that differ
    only in rank share ``Z0``.
    """
    l0 = gen_low_rank(n, t, r, stream(seed, "low_rank", n, t, r, rep))
    z0 = gen_noise(n, t, kind, stream(seed, "noise", n, t, kind, rep))
    return l0, z0


def run_replication(spec: ExperimentSpec, cell, rep: int) -> ReplicationRecord:
    n, t, r, kind = cell
    l0, z0 = instance(n, t, r, kind, rep, spec.seed)
    config = SolverConfig(
        lam=default_lambda(n, t, spec.lambda_scale), max_iters=spec.max_iters, svd_mode=spec.svd_mode
    )
    start = time.perf_counter()
    res = solve_bpcp(l0 + z0, config)
    elapsed = time.perf_counter() - start
    err2 = float(np.sum((res.l_hat - l0) ** 2))
    l0_fro2 = float(np.sum(l0**2))
    return ReplicationRecord(
        n, t, r, kind, rep, err2 / (n * t), err2 / l0_fro2, l0_fro2, res.iterations, res.converged, elapsed
    )


def _run_job(args):
    return run_replication(*args)


def _mean_stderr(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return float(arr.mean()), math.nan
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def summarize(records) -> dict[tuple[int, int, int, str], CellSummary]:
    groups: dict[tuple, list[ReplicationRecord]] = {}
    for rec in records:
        groups.setdefault((rec.n, rec.t, rec.r, rec.noise), []).append(rec)
    cells = {}
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3])):
        recs = sorted(groups[key], key=lambda x: x.rep)
        mse_mean, mse_se = _mean_stderr([x.mse_per_entry for x in recs])
        rel_mean, rel_se = _mean_stderr([x.rel_error for x in recs])
        cells[key] = CellSummary(
            *key,
            mse_mean=mse_mean,
            mse_stderr=mse_se,
            rel_mean=rel_mean,
            rel_stderr=rel_se,
            reps=len(recs),
            nonconverged=sum(not x.converged for x in recs),
            mean_iterations=float(np.mean([x.iterations for x in recs])),
        )
    return cells


def run_grid(spec: ExperimentSpec, workers: int = 1, progress=None) -> ExperimentResult:
    """Solve every (cell, replication) pair and aggregate mean and standard error.

    Non-converged replications are kept and counted; a cell is flagged when
    more than 10% of its replications hit the iteration cap.
    """
    jobs = [(spec, cell, rep) for cell in spec.cells() for rep in range(spec.replications)]
    records: list[ReplicationRecord] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_run_job, jobs):
                records.append(rec)
                if progress:
                    progress(rec)
    else:
        for job in jobs:
            rec = _run_job(job)
            records.append(rec)
            if progress:
                progress(rec)
    records.sort(key=lambda x: (x.n, x.t, x.r, x.noise, x.rep))
    cells = summarize(records)
    for cell in cells.values():
        if cell.flagged:
            logger.warning("cell %s: %d/%d replications did not converge", cell, cell.nonconverged, cell.reps)
    return ExperimentResult(cells, records)


TABLE_COLUMNS = ("n", "t", "r", "noise", "metric", "mean", "stderr", "reps", "nonconverged")


def write_tables(result: ExperimentResult, mse_path, rel_path) -> None:
    """Write the per-entry MSE table and the relative-error table as CSV."""
    for path, metric in ((mse_path, "mse_per_entry"), (rel_path, "rel_error")):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TABLE_COLUMNS)
            for c in result.cells.values():
                mean, se = (c.mse_mean, c.mse_stderr) if metric == "mse_per_entry" else (c.rel_mean, c.rel_stderr)
                writer.writerow([c.n, c.t, c.r, c.noise, metric, f"{mean:.17g}", f"{se:.17g}", c.reps, c.nonconverged])


def write_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(ReplicationRecord.__dataclass_fields__))
        writer.writeheader()
        for rec in records:
            writer.writerow(asdict(rec))


@dataclass(frozen=True)
class MonitorReport:
    delta: float
    lam: float
    composed_norm: float  # measured ||P_Omega P_Phi||
    cone_lhs: float  # (1/lam) ||P_Phi_perp H||_* + ||P_Omega_perp H||_1
    cone_rhs: float  # 8 ||D0||_1
    separation_lhs: float  # ||P_Phi H - P_Omega H||_F^2
    separation_rhs: float  # (delta / 4) (||P_Phi H||_F^2 + ||P_Omega H||_F^2)
    separation_rhs_measured: float  # (1 - ||P_Omega P_Phi||) (...), the bound implied by the measured norm
    mse_per_entry: float
    alpha: float  # ||L0||_inf
    implied_mu: float
    error_scale: float  # max(alpha, mu^(8/3) r^2) * delta
    rank: int

    @property
    def cone_ratio(self) -> float:
        return self.cone_lhs / self.cone_rhs if self.cone_rhs > 0 else (0.0 if self.cone_lhs == 0 else math.inf)

    @property
    def separation_ratio(self) -> float:
        """``lhs / rhs`` for the delta/4 form; at least 1 when it holds."""
        return self.separation_lhs / self.separation_rhs if self.separation_rhs > 0 else math.inf

    @property
    def separation_measured_ok(self) -> bool:
        return self.separation_lhs >= self.separation_rhs_measured * (1.0 - 1e-9) - 1e-12

    @property
    def error_ratio(self) -> float:
        return self.mse_per_entry / self.error_scale


def bound_monitors(l0, z0, l_hat, delta: float, lam: float, ts: cert.TangentSpace, s: cert.SupportSet) -> MonitorReport:
    """Evaluate the error-bound inequalities for ``H = l_hat - l0``.

    ``s`` must be the support of the large part of ``z0`` at this ``delta``,
    so ``D0 = P_Omega_perp z0``.
    """
    l0 = as_matrix(l0, "l0")
    z0 = as_matrix(z0, "z0")
    h = as_matrix(l_hat, "l_hat") - l0
    n, t = h.shape
    d0 = cert.proj_omega_perp(s, z0)

    perp_phi = cert.proj_phi_perp(ts, h)
    nuclear = float(np.sum(np.linalg.svd(perp_phi, compute_uv=False)))
    cone_lhs = nuclear / lam + float(np.sum(np.abs(cert.proj_omega_perp(s, h))))
    cone_rhs = 8.0 * float(np.sum(np.abs(d0)))

    ph = cert.proj_phi(ts, h)
    oh = cert.proj_omega(s, h)
    energy = float(np.sum(ph**2) + np.sum(oh**2))
    rho = cert.op_norm_composed(ts, s).value
    implied_mu, _ = cert.incoherence(ts)
    alpha = float(np.max(np.abs(l0)))
    r = ts.rank
    return MonitorReport(
        delta=delta,
        lam=lam,
        composed_norm=rho,
        cone_lhs=cone_lhs,
        cone_rhs=cone_rhs,
        separation_lhs=float(np.sum((ph - oh) ** 2)),
        separation_rhs=delta / 4.0 * energy,
        separation_rhs_measured=(1.0 - rho) * energy,
        mse_per_entry=float(np.sum(h**2)) / (n * t),
        alpha=alpha,
        implied_mu=implied_mu,
        error_scale=max(alpha, implied_mu ** (8.0 / 3.0) * r**2) * delta,
        rank=r,
    )


def monitor_delta(n: int, mu: float, r: int, c: float | None = None) -> float:
    """delta from the schedule; by default the largest ``c <= 1`` with delta <= 0.5."""
    if c is None:
        c = min(1.0, 0.5 * n ** (1.0 / 3.0) / (mu * r))
    return delta_schedule(n, mu, r, c)


def monitor_run(n: int, r: int, kind: str, seed: int, lambda_scale: float = 0.7, c: float | None = None,
                max_iters: int = 200000) -> MonitorReport:
    """Generate one instance, solve it, split its noise and evaluate the monitors."""
    l0, z0 = instance(n, n, r, kind, seed, seed=7)
    lam = default_lambda(n, n, lambda_scale)
    res = solve_bpcp(l0 + z0, SolverConfig(lam=lam, max_iters=max_iters, svd_mode="truncated"))
    ts = cert.TangentSpace.from_matrix(l0, r)
    mu, _ = cert.incoherence(ts)
    delta = monitor_delta(n, mu, r, c)
    model = NoiseModel.gaussian() if kind == "gaussian" else NoiseModel.cauchy()
    sp = split(z0, model, delta)
    support = cert.SupportSet(sp.mask == 0)
    return bound_monitors(l0, z0, res.l_hat, delta, lam, ts, support)


MONITOR_COLUMNS = (
    "seed", "delta", "lam", "composed_norm", "cone_lhs", "cone_rhs", "cone_ratio", "separation_lhs", "separation_rhs",
    "separation_ratio", "separation_rhs_measured", "separation_measured_ok", "mse_per_entry", "alpha", "implied_mu",
    "error_scale", "error_ratio",
)


def write_monitors(reports, path, seeds=None) -> None:
    seeds = range(len(reports)) if seeds is None else seeds
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MONITOR_COLUMNS)
        for seed, m in zip(seeds, reports):
            writer.writerow([seed] + [getattr(m, col) for col in MONITOR_COLUMNS[1:]])
