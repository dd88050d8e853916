"""Sampling on homogeneous spaces ``G/K`` through mechanics on ``G``.

``K = SO(n-k)`` sits in the leading ``(n-k) x (n-k)`` block of ``SO(n)``,
so a point of ``SO(n)/SO(n-k)`` is represented by the trailing ``k``
columns of ``q`` (a unit vector for the sphere, an orthonormal ``n x k``
frame for the Stiefel manifold). The horizontal space ``p`` is the
trace-form orthogonal complement of ``k``.

With a right-``K``-invariant potential and ``v(0)`` in ``p`` the Noether
current vanishes for all time, so no projection is needed inside the
integrator; :func:`constrained_system_check` measures the leakage instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expmap import mexp
from .flows import GeodesicKind, PhaseState, geodesic_flow
from .lie_core import Family, Geometry, ReductiveSplit, check_split, make_geometry
from .sampler import HmcConfig, hmc_chain


@dataclass(frozen=True, eq=False)
class QuotientSpec:
    geom: Geometry
    pattern: str  # "sphere" or "stiefel"
    k: int
    split: ReductiveSplit

    @property
    def n(self):
        return self.geom.n

    def representative(self, q):
        q = np.asarray(q)
        cols = q[..., :, self.n - self.k:]
        if self.pattern == "sphere":
            return cols[..., 0]
        return cols

    def flat_representative(self, q):
        """Sphere: the unit vector. Stiefel: the frame flattened column-major."""
        rep = self.representative(q)
        if self.pattern == "sphere":
            return rep
        return np.swapaxes(rep, -1, -2).reshape(rep.shape[:-2] + (-1,))

    def embed_k(self, k_mat):
        """Embed an ``(n-k) x (n-k)`` matrix of ``K`` into ``SO(n)``."""
        out = np.eye(self.n)
        m = self.n - self.k
        out[:m, :m] = k_mat
        return out


def _stiefel_split(geom, k):
    n = geom.n
    m = n - k
    # colex ordering: so(m) generators are exactly the first m(m-1)/2
    return ReductiveSplit.from_indices(geom.dim, range(m * (m - 1) // 2))


def sphere(n, metric="trace"):
    """``S^{n-1} = SO(n)/SO(n-1)``."""
    return _quotient(n, 1, "sphere", metric)


def stiefel(n, k, metric="trace"):
    """``V_k(R^n) = SO(n)/SO(n-k)``."""
    if not 1 <= k < n:
        raise ValueError("Stiefel needs 1 <= k < n")
    return _quotient(n, k, "stiefel", metric)


def _quotient(n, k, pattern, metric):
    geom = make_geometry(Family.SO, n, metric)
    split = _stiefel_split(geom, k)
    check_split(split, geom.metric, geom.consts)
    return QuotientSpec(geom, pattern, k, split)


def naturally_reductive_defect(quot, rng, n_checks=50):
    """Max of ``|<[u,v]_p, w> - <u, [v,w]_p>|`` over random ``u, v, w`` in ``p``."""
    g = quot.geom
    P = quot.split.P_p
    worst = 0.0
    for _ in range(n_checks):
        u, v, w = (P @ x for x in rng.standard_normal((3, g.dim)))
        lhs = (P @ g.ad(u, v)) @ g.metric.g @ w
        rhs = u @ g.metric.g @ (P @ g.ad(v, w))
        worst = max(worst, abs(lhs - rhs))
    return float(worst)


def horizontal_project(v, split):
    """``P_p v``."""
    return split.P_p @ v


def constrained_system_check(trajectory, split, geom, kind, t):
    """Report how well a trajectory respects the horizontal constraint.

    ``trajectory`` is a sequence of phase states produced under a
    K-invariant potential with ``v(0)`` in ``p``. Returns the maximum
    vertical leakage ``||P_k v||`` and, for the geodesic of duration ``t``
    started at each state's horizontal part, the maximum deviation from the
    one-parameter subgroup ``q e^{t v}``.
    """
    leak = 0.0
    dev = 0.0
    for s in trajectory:
        leak = max(leak, split.leakage(s.v))
        vp = horizontal_project(s.v, split)
        moved = geodesic_flow(PhaseState(s.q, vp), t, geom, kind)
        dev = max(dev, float(np.abs(moved.q - s.q @ mexp(t * geom.to_matrix(vp))).max()))
    return {"max_vertical_leakage": leak, "max_subgroup_deviation": dev}


def sample_quotient(quot, potential, scheme, n_samples, burn_in=0, seed=0,
                    thinning=1, chain=0, q0=None, kind=None):
    """HMC in horizontal mode; returns ``(representatives, ChainRecord)``."""
    kind = GeodesicKind.biinvariant(quot.geom) if kind is None else kind
    config = HmcConfig(scheme, n_samples, burn_in, seed, thinning,
                       horizontal=quot.split, chain=chain)
    q0 = np.eye(quot.n) if q0 is None else q0
    record = hmc_chain(q0, potential, quot.geom, kind, config)
    return quot.representative(record.qs), record
