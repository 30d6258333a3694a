"""Poisson rectangular pulse (PRP) model of daily water demand.

Daily demand is a compound Poisson sum: ``e ~ Poisson(event_rate)`` usage
events, each drawing an ``Exponential(duration_rate)`` volume.  The law has
an atom ``exp(-event_rate)`` at zero and a continuous part on ``d > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import DiscreteNoise

_SCALED_SWITCH = 30.0
_TERM_RTOL = 1e-16


@dataclass(frozen=True)
class PRPParams:
    """Event rate (events/day) and volume rate (1/L) of the PRP model.

    ``event_rate == 0`` is accepted as the degenerate no-demand model.
    """

    event_rate: float
    duration_rate: float

    def __post_init__(self):
        if not (self.event_rate >= 0 and math.isfinite(self.event_rate)):
            raise ValueError(f"event_rate must be finite and >= 0, got {self.event_rate!r}")
        if not (self.duration_rate > 0 and math.isfinite(self.duration_rate)):
            raise ValueError(f"duration_rate must be finite and > 0, got {self.duration_rate!r}")


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample(params: PRPParams, rng=None, size=None, chunk: int = 100_000):
    """Draw daily demands by summing exponential volumes over Poisson events.

    Args:
        params: Model parameters.
        rng: ``numpy.random.Generator`` or an integer seed.
        size: Number of draws; ``None`` returns a single float.
    """
    rng = _rng(rng)
    n = 1 if size is None else int(size)
    out = np.empty(n)
    scale = 1.0 / params.duration_rate
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        events = rng.poisson(params.event_rate, stop - start)
        total = int(events.sum())
        volumes = rng.exponential(scale, total)
        d = np.zeros(stop - start)
        has = events > 0
        if total:
            offsets = np.concatenate(([0], np.cumsum(events)[:-1]))
            d[has] = np.add.reduceat(volumes, offsets[has])
        out[start:stop] = d
    return float(out[0]) if size is None else out


def bessel_i1(z):
    """Modified Bessel function of the first kind, order one, for z >= 0."""
    return _i1_series(z, scaled=False)


def bessel_i1e(z):
    """Exponentially scaled ``exp(-z) * I1(z)`` for z >= 0."""
    return _i1_series(z, scaled=True)


def _i1_series(z, scaled: bool):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("I1 series implemented for z >= 0 only")
    flat = z.ravel()
    out = np.empty_like(flat)
    small = flat <= _SCALED_SWITCH
    if np.any(small):
        zs = flat[small]
        out[small] = _i1_ascending(zs) * (np.exp(-zs) if scaled else 1.0)
    if np.any(~small):
        zl = flat[~small]
        log_i1e = _log_i1e_large(zl)
        out[~small] = np.exp(log_i1e if scaled else log_i1e + zl)
    return out.reshape(z.shape) if z.ndim else float(out[0])


def _i1_ascending(z):
    """sum_j (z/2)^(2j+1) / (j! (j+1)!) with term-ratio truncation."""
    half = z / 2.0
    q = half * half
    term = half.copy()
    total = term.copy()
    j = 0
    while True:
        j += 1
        term = term * q / (j * (j + 1))
        total += term
        if np.all(term <= _TERM_RTOL * total):
            return total


def _log_i1e_large(z):
    """log(exp(-z) I1(z)) from the ascending series summed around its peak.

    Terms are walked outward from the largest one with the ratio recurrence,
    so nothing overflows even when I1(z) itself would.
    """
    half = z / 2.0
    q = half * half
    # the largest term sits where (j+1)(j+2) crosses q
    peak = np.floor((np.sqrt(1.0 + 4.0 * q) - 3.0) / 2.0) + 1.0
    peak = np.maximum(peak, 0.0)
    log_peak = (2 * peak + 1) * np.log(half) - gammaln(peak + 1) - gammaln(peak + 2)
    total = np.ones_like(z)
    term = np.ones_like(z)
    j = peak.copy()
    active = np.ones(z.shape, bool)
    while np.any(active):
        j = j + 1
        term = np.where(active, term * q / (j * (j + 1)), 0.0)
        total += term
        active &= term > _TERM_RTOL * total
    term = np.ones_like(z)
    j = peak.copy()
    active = j > 0
    while np.any(active):
        term = np.where(active, term * (j * (j + 1)) / q, 0.0)
        total += term
        j = j - 1
        active &= (j > 0) & (term > _TERM_RTOL * total)
    return log_peak + np.log(total) - z


def _log_i1e(z):
    small = z <= _SCALED_SWITCH
    out = np.empty_like(z)
    out[small] = np.log(_i1_ascending(z[small])) - z[small]
    out[~small] = _log_i1e_large(z[~small])
    return out


def _positive(d, name):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"{name} is defined for d > 0; the zero atom is atom_mass")
    return d


def logpdf_continuous(params: PRPParams, d):
    """Log of the continuous-part density on d > 0 (Bessel form)."""
    d = _positive(d, "logpdf_continuous")
    lam, mu = params.event_rate, params.duration_rate
    if lam == 0:
        out = np.full(d.shape, -np.inf)
        return out if out.ndim else float(out)
    lm = lam * mu
    flat = d.ravel()
    z = 2.0 * np.sqrt(lm * flat)
    # -lam - mu d + z = -(sqrt(lam) - sqrt(mu d))^2, so nothing overflows
    expo = -((math.sqrt(lam) - np.sqrt(mu * flat)) ** 2)
    out = (expo + _log_i1e(z) + 0.5 * np.log(lm / flat)).reshape(d.shape)
    return out if out.ndim else float(out)


def pdf_continuous(params: PRPParams, d):
    """Density of the continuous part on d > 0 (Bessel form).

    Integrates to ``1 - atom_mass(params)`` over (0, inf).
    """
    return np.exp(logpdf_continuous(params, d))


def logpdf_series(params: PRPParams, d):
    """Log-density of the continuous part from its Poisson-mixture series.

    ``sum_{k>=1} (lam mu)^k d^(k-1) exp(-lam - mu d) / (k! (k-1)!)``, each
    term taken in log space relative to the largest one and summed until
    terms fall below 1e-16 of the running total.
    """
    d = _positive(d, "logpdf_series")
    lam, mu = params.event_rate, params.duration_rate
    if lam == 0:
        out = np.full(d.shape, -np.inf)
        return out if out.ndim else float(out)
    out = np.array([_log_series_point(lam, mu, dn) for dn in d.ravel()]).reshape(d.shape)
    return out if out.ndim else float(out)


def pdf_series(params: PRPParams, d):
    return np.exp(logpdf_series(params, d))


def _log_series_point(lam, mu, d):
    log_lm, log_d = math.log(lam * mu), math.log(d)

    def log_term(k):
        return (k * log_lm + (k - 1) * log_d - lam - mu * d
                - math.lgamma(k + 1) - math.lgamma(k))

    # terms peak near k ~ sqrt(lam mu d); walk both ways from there
    k0 = max(1, int(round(math.sqrt(lam * mu * d))))
    ref = log_term(k0)
    total = 1.0
    k = k0
    while True:
        k += 1
        rel = math.exp(log_term(k) - ref)
        total += rel
        if rel < _TERM_RTOL * total:
            break
    k = k0
    while k > 1:
        k -= 1
        rel = math.exp(log_term(k) - ref)
        total += rel
        if rel < _TERM_RTOL * total:
            break
    return ref + math.log(total)


def atom_mass(params: PRPParams) -> float:
    """Probability of exactly zero demand."""
    return math.exp(-params.event_rate)


def moments(params: PRPParams) -> tuple[float, float]:
    """Mean (L) and variance (L^2) of daily demand."""
    lam, mu = params.event_rate, params.duration_rate
    return lam / mu, 2.0 * lam / mu**2


def discretize(params: PRPParams, n_atoms: int = 500, seed=0) -> DiscreteNoise:
    """Equal-weight empirical atoms from ``n_atoms`` seeded draws.

    Draws are sorted; coincident values (in practice only zeros) are merged
    with their weights summed.
    """
    if n_atoms < 2:
        raise ValueError("n_atoms must be >= 2")
    draws = np.sort(sample(params, np.random.default_rng(seed), n_atoms))
    values, counts = np.unique(draws, return_counts=True)
    return DiscreteNoise(values, counts / n_atoms)
