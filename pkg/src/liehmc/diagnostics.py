"""Post-processing: effective sample size, energy-error scaling, oracles.

Acceptance thresholds live in the test suite; nothing here decides pass or
fail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .flows import GeodesicKind, PhaseState, hamiltonian
from .integrators import OMELYAN_LAMBDA, IntegratorScheme, integrate
from .lie_core import make_geometry, random_element
from .potentials import gauge_potential

EXACT_TOL = 1e-12


def autocorrelation(x):
    """Normalized autocorrelation of a 1-d series via FFT."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n] / n
    return acov / acov[0]


def ess(series, return_flag=False):
    """Effective sample size, Geyer's initial positive sequence estimator.

    Pair sums ``rho_{2k} + rho_{2k+1}`` are accumulated while positive and
    ``tau = -1 + 2 sum``. A constant series has no defined autocorrelation;
    its ESS is reported as its length and flagged degenerate.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 100:
        raise ValueError("ESS needs a series of length >= 100")
    if np.ptp(x) == 0 or not np.isfinite(x).all():
        return (float(n), True) if return_flag else float(n)
    rho = autocorrelation(x)
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    stop = np.argmax(pairs <= 0) if np.any(pairs <= 0) else len(pairs)
    tau = max(-1.0 + 2.0 * pairs[:stop].sum(), 1.0 / n)
    value = float(min(n / tau, n * np.log10(n)))
    return (value, False) if return_flag else value


def mc_standard_error(series):
    x = np.asarray(series, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(ess(x)))


@dataclass(frozen=True)
class ScalingFit:
    step_sizes: np.ndarray
    errors: np.ndarray
    slope: Optional[float]
    intercept: Optional[float]
    r2: Optional[float]
    exact: bool = False

    def as_dict(self):
        return {
            "step_sizes": [float(h) for h in self.step_sizes],
            "errors": [float(e) for e in self.errors],
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "exact": self.exact,
        }


def fit_scaling(step_sizes, errors):
    """Unweighted least-squares slope of ``log error`` against ``log h``."""
    h = np.asarray(step_sizes, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(h) < 3:
        raise ValueError("a scaling fit needs at least 3 step sizes")
    if h.max() / h.min() < 4:
        raise ValueError("step sizes must span at least a factor of 4")
    if np.all(e <= EXACT_TOL):
        return ScalingFit(h, e, None, None, None, exact=True)
    x, y = np.log(h), np.log(np.maximum(e, np.finfo(float).tiny))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid ** 2).sum() / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(h, e, float(slope), float(intercept), float(r2))


@dataclass(frozen=True, eq=False)
class Benchmark:
    """Fixed set of phase-space starting points for integrator comparisons."""

    geom: object
    potential: object
    kind: object
    total_time: float = 1.0
    n_trajectories: int = 100
    seed: int = 0

    def starts(self):
        rng = np.random.default_rng(self.seed)
        chol = self.geom.metric.chol
        out = []
        for _ in range(self.n_trajectories):
            q = random_element(self.geom.spec, rng)
            v = np.linalg.solve(chol.T, rng.standard_normal(self.geom.dim))
            out.append(PhaseState(q, v))
        return out


def so3_gauge_benchmark(beta=1.0, seed=0, potential=None, n_trajectories=100):
    """``SO(3)``, trace metric, ``V = beta tr(U q)`` with a fixed random ``U``."""
    geom = make_geometry("SO", 3)
    if potential is None:
        U = np.random.default_rng(seed).standard_normal((3, 3))
        potential = gauge_potential(U, beta)
    return Benchmark(geom, potential, GeodesicKind.biinvariant(geom),
                     n_trajectories=n_trajectories, seed=seed)


def energy_errors(benchmark, scheme):
    out = []
    for s in benchmark.starts():
        end = integrate(s, scheme, benchmark.potential, benchmark.geom, benchmark.kind)
        out.append(hamiltonian(end, benchmark.potential, benchmark.geom)
                   - hamiltonian(s, benchmark.potential, benchmark.geom))
    return np.array(out)


def energy_error_scan(benchmark, kind, step_sizes, lam=None):
    """Mean ``|dH|`` per step size at fixed trajectory length, with a log-log fit.

    ``dH`` is measured per trajectory (start against end), the quantity the
    Metropolis test sees.
    """
    lam = OMELYAN_LAMBDA if lam is None else lam
    errors = []
    for h in step_sizes:
        n_steps = max(1, int(round(benchmark.total_time / h)))
        scheme = IntegratorScheme(kind, float(h), n_steps, lam)
        errors.append(float(np.abs(energy_errors(benchmark, scheme)).mean()))
    return fit_scaling(step_sizes, errors)


def vmf_mean_resultant_length(n, kappa):
    """``E[mu . x]`` for the von Mises-Fisher law on ``S^{n-1}``.

    ``I_{n/2}(kappa) / I_{n/2-1}(kappa)``; on ``S^2`` this is
    ``coth(kappa) - 1/kappa``.
    """
    if kappa == 0:
        return 0.0
    return float(special.ive(n / 2, kappa) / special.ive(n / 2 - 1, kappa))


def vmf_s2_cosine_cdf(t, kappa):
    """CDF of ``mu . x`` on ``S^2``; the density is ``∝ exp(kappa t)`` on ``[-1, 1]``."""
    t = np.asarray(t, dtype=float)
    if kappa == 0:
        return np.clip((t + 1) / 2, 0, 1)
    return np.clip(np.expm1(kappa * (t + 1)) / np.expm1(2 * kappa), 0, 1)


def vmf_s2_cosine_sample(kappa, size, rng):
    """Inverse-CDF draws of ``mu . x`` on ``S^2``."""
    u = rng.random(size)
    if kappa == 0:
        return 2 * u - 1
    return -1 + np.log1p(u * np.expm1(2 * kappa)) / kappa
