"""Quantile-band split of an error matrix into small and large parts.

Given a noise model and a probability ``delta``, the thresholds
``gamma_lo < 0 < gamma_hi`` leave mass ``(1 - delta) / 2`` in each tail.
Entries strictly inside the band form ``D0 = M * Z0``, the rest form
``S0 = Z0 - D0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .linalg_core import as_matrix

NOISE_KINDS = ("gaussian", "cauchy", "empirical")


@dataclass(frozen=True)
class NoiseModel:
    """Homogeneous entry distribution.

    ``scale`` is the standard deviation for ``gaussian`` and the scale for
    ``cauchy``; both have location 0. ``sample`` holds the observations for
    ``empirical``.
    """

    kind: str
    scale: float = 1.0
    sample: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "empirical":
            if self.sample is None or np.size(self.sample) == 0:
                raise ValueError("empirical model needs a non-empty sample")
        elif not self.scale > 0:
            raise ValueError("scale must be positive")

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "NoiseModel":
        return cls("gaussian", scale=sigma)

    @classmethod
    def cauchy(cls, scale: float = 1.0) -> "NoiseModel":
        return cls("cauchy", scale=scale)

    @classmethod
    def empirical(cls, sample) -> "NoiseModel":
        return cls("empirical", sample=np.asarray(sample, dtype=np.float64).ravel())

    def quantile(self, p):
        p = np.asarray(p, dtype=np.float64)
        if np.any((p <= 0) | (p >= 1)):
            raise ValueError("quantile probabilities must lie in (0, 1)")
        if self.kind == "gaussian":
            return self.scale * stats.norm.ppf(p)
        if self.kind == "cauchy":
            return self.scale * np.tan(np.pi * (p - 0.5))
        # type-7: linear interpolation between order statistics
        return np.quantile(self.sample, p, method="linear")


@dataclass(frozen=True)
class BernoulliSplit:
    d0: np.ndarray
    s0: np.ndarray
    mask: np.ndarray
    gamma_lo: float
    gamma_hi: float
    delta: float


@dataclass(frozen=True)
class DeviceReport:
    max_abs_d0: float
    max_ratio: float  # max|D0| / delta
    l1_d0: float
    l1_ratio: float  # ||D0||_1 / (N T delta^2)
    mask_fraction: float
    holder_bound: float  # (max|D0| / delta) * (mask_fraction / delta)
    sign_counts: tuple[int, int, int]  # zeros, +1, -1 of sign(S0)
    sign_expected: tuple[float, float, float]
    chi_square: float
    chi_square_pvalue: float


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def thresholds(model: NoiseModel, delta: float) -> tuple[float, float]:
    """Return ``(gamma_lo, gamma_hi)`` with tail masses ``(1 - delta) / 2`` each."""
    _check_delta(delta)
    if model.kind == "empirical" and model.sample.size < 100.0 / delta:
        raise ValueError(
            f"empirical sample of {model.sample.size} entries is too small for delta={delta} "
            f"(need at least {math.ceil(100.0 / delta)})"
        )
    tail = (1.0 - delta) / 2.0
    lo, hi = model.quantile([tail, 1.0 - tail])
    return float(lo), float(hi)


def split(z0, model: NoiseModel, delta: float) -> BernoulliSplit:
    """Split ``z0`` at the model's band; entries on a threshold go to ``S0``."""
    z0 = as_matrix(z0, "z0")
    lo, hi = thresholds(model, delta)
    inside = (z0 > lo) & (z0 < hi)
    d0 = np.where(inside, z0, 0.0)
    s0 = np.where(inside, 0.0, z0)
    return BernoulliSplit(d0=d0, s0=s0, mask=inside.astype(np.float64), gamma_lo=lo, gamma_hi=hi, delta=delta)


def delta_schedule(n: int, mu: float, r: int, c: float = 1.0) -> float:
    """``c * mu * r / n**(1/3)``; values outside (0, 1) are rejected, not clamped."""
    value = c * mu * r / n ** (1.0 / 3.0)
    if not 0.0 < value < 1.0:
        raise ValueError(f"delta schedule gives {value:.4g}, outside (0, 1)")
    return value


def diagnostics(sp: BernoulliSplit, delta: float | None = None) -> DeviceReport:
    delta = sp.delta if delta is None else delta
    nt = sp.d0.size
    max_abs = float(np.max(np.abs(sp.d0)))
    l1 = float(np.sum(np.abs(sp.d0)))
    frac = float(np.mean(sp.mask))

    signs = np.sign(sp.s0)
    counts = (int(np.sum(signs == 0)), int(np.sum(signs > 0)), int(np.sum(signs < 0)))
    probs = (delta, (1.0 - delta) / 2.0, (1.0 - delta) / 2.0)
    chi2, pvalue = stats.chisquare(counts, f_exp=[p * nt for p in probs])

    return DeviceReport(
        max_abs_d0=max_abs,
        max_ratio=max_abs / delta,
        l1_d0=l1,
        l1_ratio=l1 / (nt * delta**2),
        mask_fraction=frac,
        holder_bound=(max_abs / delta) * (frac / delta),
        sign_counts=counts,
        sign_expected=probs,
        chi_square=float(chi2),
        chi_square_pvalue=float(pvalue),
    )
