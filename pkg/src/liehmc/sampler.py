"""Hamiltonian Monte Carlo on a matrix Lie group.

The target is ``pi(q) ∝ exp(-V(q))`` with respect to Haar measure. The
symplectic volume on ``G x g`` is Haar measure times Lebesgue measure on the
velocity coefficients, and every integrator here is a composition of exact
Hamiltonian flows, so the Metropolis ratio is the plain ``exp(-dH)`` with no
Jacobian correction.

Each transition fully refreshes ``v ~ N(0, g^{-1})``, i.e. density
``∝ exp(-v^T g v / 2)``. In horizontal mode (sampling on ``G/K``) the draw
is restricted to ``p`` and the chain tracks how far ``v`` leaks into ``k``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diagnostics import ess
from .expmap import CayleySingularityError, RetractionError
from .flows import PhaseState, hamiltonian
from .integrators import IntegrationError, IntegratorScheme, integrate
from .lie_core import ReductiveSplit, group_membership, random_element
from .potentials import left_derivative_covector


class KInvarianceError(ValueError):
    """Potential is not invariant under the right action of ``K``."""


@dataclass(frozen=True)
class HmcConfig:
    scheme: IntegratorScheme
    n_samples: int
    burn_in: int = 0
    seed: int = 0
    thinning: int = 1
    horizontal: Optional[ReductiveSplit] = None
    chain: int = 0
    dh_guard: float = 50.0

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def chain_rng(seed, chain=0):
    """Independent, reproducible stream for chain ``chain`` of run ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chain,))))


def refresh_momentum(rng, metric, split=None):
    """Draw ``v`` with density ``∝ exp(-v^T g v / 2)``.

    ``v = L^{-T} z`` with ``g = L L^T``. With a split, ``z`` lives on ``p``
    only and the factor is that of ``g`` restricted to ``p``, so the
    ``k``-components are exactly zero.
    """
    if split is None:
        z = rng.standard_normal(metric.g.shape[0])
        return np.linalg.solve(metric.chol.T, z)
    p = split.p_indices
    g_pp = metric.g[np.ix_(p, p)]
    z = rng.standard_normal(len(p))
    v = np.zeros(metric.g.shape[0])
    v[p] = np.linalg.solve(np.linalg.cholesky(g_pp).T, z)
    return v


def noether_current(v, split, metric):
    """``<v, .>`` restricted to ``k``: the ``k``-components of ``g v``."""
    return (metric.g @ v)[split.k_indices]


def check_k_invariance(potential, geom, split, rng, n_points=20, tol=1e-10):
    """Raise ``KInvarianceError`` unless ``e_j(V)`` vanishes on ``k`` at random points."""
    worst = 0.0
    for _ in range(n_points):
        q = random_element(geom.spec, rng)
        d = left_derivative_covector(potential, geom, q)
        scale = max(1.0, float(np.abs(d).max()))
        worst = max(worst, float(np.abs(d[split.k_indices]).max(initial=0.0)) / scale)
    if worst > tol:
        raise KInvarianceError(
            f"potential {potential.label!r} has k-derivatives up to {worst:.3g}")
    return worst


@dataclass(frozen=True)
class Transition:
    """Outcome of one HMC transition; ``q`` is the state after accept/reject."""

    q: np.ndarray
    h_before: float
    h_after: float
    accepted: bool
    blowup: bool
    leakage: float
    defect: float

    @property
    def delta_h(self):
        return self.h_after - self.h_before


def hmc_transition(q, potential, geom, kind, config, rng):
    v = refresh_momentum(rng, geom.metric, config.horizontal)
    start = PhaseState(q, v)
    h0 = hamiltonian(start, potential, geom)
    leak = [0.0]
    monitor = None
    if config.horizontal is not None:
        split = config.horizontal
        leak[0] = split.leakage(v)

        def monitor(i, s):
            leak[0] = max(leak[0], split.leakage(s.v))

    blowup = False
    try:
        end = integrate(start, config.scheme, potential, geom, kind, monitor=monitor)
        h1 = hamiltonian(end, potential, geom)
    except (IntegrationError, FloatingPointError, CayleySingularityError,
            RetractionError, np.linalg.LinAlgError):
        end, h1 = None, float("nan")
    dh = h1 - h0
    if not np.isfinite(dh) or abs(dh) > config.dh_guard:
        blowup = True
    u = rng.random()
    accepted = (not blowup) and (dh <= 0 or u < np.exp(-dh))
    q_new = end.q if accepted else q
    _, defect = group_membership(geom.spec, q_new)
    return Transition(q_new, h0, h1, bool(accepted), blowup, leak[0], defect)


class ChainRunner:
    """Streaming HMC chain.

    ``samples()`` yields ``(index, transition)`` for each retained sample:
    ``burn_in`` transitions are discarded first, then every ``thinning``-th
    transition is emitted. ``stats`` accumulates over all post-burn-in
    transitions. In horizontal mode the K-invariance gate runs at
    construction.
    """

    def __init__(self, q0, potential, geom, kind, config):
        q0 = np.asarray(q0, dtype=float)
        ok, defect = group_membership(geom.spec, q0)
        if not ok:
            raise ValueError(f"initial point is not in the group (defect {defect:.3g})")
        self.q = q0
        self.potential, self.geom, self.kind, self.config = potential, geom, kind, config
        self.rng = chain_rng(config.seed, config.chain)
        if config.horizontal is not None:
            gate_rng = chain_rng(config.seed, 2 ** 31 + config.chain)
            check_k_invariance(potential, geom, config.horizontal, gate_rng)
        self.stats = ChainStats()

    def samples(self):
        cfg = self.config
        for _ in range(cfg.burn_in):
            self.q = hmc_transition(self.q, self.potential, self.geom, self.kind, cfg, self.rng).q
        for i in range(cfg.n_samples):
            for _ in range(cfg.thinning):
                tr = hmc_transition(self.q, self.potential, self.geom, self.kind, cfg, self.rng)
                self.stats.add(tr)
                self.q = tr.q
            yield i, tr


@dataclass
class ChainStats:
    """Running statistics over post-burn-in transitions."""

    n: int = 0
    n_accepted: int = 0
    n_blowup: int = 0
    delta_h: list = field(default_factory=list)
    max_leakage: float = 0.0
    max_defect: float = 0.0

    def add(self, tr):
        self.n += 1
        self.n_accepted += tr.accepted
        self.n_blowup += tr.blowup
        if np.isfinite(tr.delta_h):
            self.delta_h.append(tr.delta_h)
        self.max_leakage = max(self.max_leakage, tr.leakage)
        self.max_defect = max(self.max_defect, tr.defect)

    @property
    def acceptance_rate(self):
        return self.n_accepted / self.n if self.n else 0.0

    def summary(self):
        dh = np.asarray(self.delta_h)
        out = {
            "transitions": self.n,
            "acceptance_rate": self.acceptance_rate,
            "blowups": self.n_blowup,
            "max_vertical_leakage": self.max_leakage,
            "max_membership_defect": self.max_defect,
        }
        if dh.size:
            out.update({
                "delta_h_mean": float(dh.mean()),
                "delta_h_abs_mean": float(np.abs(dh).mean()),
                "delta_h_abs_max": float(np.abs(dh).max()),
                "expected_acceptance": float(np.exp(np.minimum(0.0, -dh)).mean()),
            })
        return out


@dataclass(frozen=True, eq=False)
class ChainRecord:
    qs: np.ndarray
    h_before: np.ndarray
    h_after: np.ndarray
    accepted: np.ndarray
    summary: dict

    @property
    def acceptance_rate(self):
        return self.summary["acceptance_rate"]

    @property
    def delta_h(self):
        return self.h_after - self.h_before

    def trace(self):
        return np.trace(self.qs, axis1=1, axis2=2)

    def checksum(self):
        h = hashlib.sha256()
        for arr in (self.qs, self.h_before, self.h_after, self.accepted):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def hmc_chain(q0, potential, geom, kind, config):
    """Run one chain and collect every retained sample."""
    runner = ChainRunner(q0, potential, geom, kind, config)
    qs, hb, ha, acc = [], [], [], []
    for _, tr in runner.samples():
        qs.append(tr.q)
        hb.append(tr.h_before)
        ha.append(tr.h_after)
        acc.append(tr.accepted)
    summary = runner.stats.summary()
    qs = np.array(qs)
    tr_series = np.trace(qs, axis1=1, axis2=2)
    if len(tr_series) >= 100:
        summary["ess_trace"] = ess(tr_series)
    return ChainRecord(qs, np.array(hb), np.array(ha), np.array(acc, dtype=bool), summary)
