"""Exact sub-flows of ``H = V + T`` on the left-trivialized phase space.

States are pairs ``(q, v)``: ``q`` an ``n x n`` group matrix and ``v`` the
body-frame velocity as coefficients in the generator basis. The potential
flow only shifts ``v``; the kinetic (geodesic) flow solves the Euler-Arnold
equation ``v' = ad*_v v`` together with the reconstruction ``q' = q V``.
Closed forms are provided for bi-invariant metrics and for the trace form
on matrix groups split into symmetric + antisymmetric parts; a numerical
Euler-Arnold integrator serves as an oracle for anything else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expmap import SCALING_SQUARING, ExpMethod, mexp
from .lie_core import matrix_split
from .potentials import left_derivative


@dataclass(frozen=True, eq=False)
class PhaseState:
    q: np.ndarray
    v: np.ndarray

    def flip(self):
        return PhaseState(self.q, -self.v)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v)))


class GeodesicKindError(ValueError):
    """The metric lacks the symmetry a closed-form geodesic relies on."""


@dataclass(frozen=True)
class GeodesicKind:
    """Which kinetic flow to use. Build through the checked constructors."""

    kind: str
    substeps: int = 0
    method: ExpMethod = SCALING_SQUARING

    @property
    def exact(self):
        return self.kind != "numeric"

    @classmethod
    def biinvariant(cls, geom, method=SCALING_SQUARING, n_checks=20, seed=0):
        """Require ``ad* = -ad`` (checked on random pairs)."""
        rng = np.random.default_rng(seed)
        for _ in range(n_checks):
            u, w = rng.standard_normal((2, geom.dim))
            lhs, rhs = geom.ad_star(u, w), -geom.ad(u, w)
            if np.abs(lhs - rhs).max() > 1e-10 * (1 + np.abs(rhs).max()):
                raise GeodesicKindError("metric is not ad-invariant (ad* != -ad)")
        return cls("biinvariant", method=method)

    @classmethod
    def reductive_matrix(cls, geom, method=SCALING_SQUARING, n_checks=20, seed=0):
        """Require ``ad*_S A = [S, A]`` for ``S`` symmetric, ``A`` antisymmetric.

        Together with ``ad_k``-invariance this is what reduces Euler-Arnold
        to ``v' = -2 [v_k, v_p]``; that reduced form is checked as well.
        """
        split = matrix_split(geom.spec)
        eye = np.eye(geom.dim)
        for i in split.p_indices:
            for j in split.k_indices:
                if np.abs(geom.ad_star(eye[i], eye[j]) - geom.ad(eye[i], eye[j])).max() > 1e-10:
                    raise GeodesicKindError("ad*_S A != [S, A] for this metric")
        rng = np.random.default_rng(seed)
        for _ in range(n_checks):
            v = rng.standard_normal(geom.dim)
            vk, vp = split.P_k @ v, split.P_p @ v
            if np.abs(euler_arnold_rhs(v, geom) + 2 * geom.ad(vk, vp)).max() > 1e-9:
                raise GeodesicKindError("Euler-Arnold does not reduce to -2[v_k, v_p]")
        return cls("reductive_matrix", method=method)

    @classmethod
    def numeric(cls, substeps, method=SCALING_SQUARING):
        if substeps < 1:
            raise ValueError("numeric geodesic needs substeps >= 1")
        return cls("numeric", substeps=int(substeps), method=method)


def default_geodesic_kind(geom, method=SCALING_SQUARING):
    """Bi-invariant when possible, else the reductive matrix flow."""
    try:
        return GeodesicKind.biinvariant(geom, method)
    except GeodesicKindError:
        return GeodesicKind.reductive_matrix(geom, method)


def potential_flow(state, t, potential, geom):
    """``q`` fixed, ``v <- v - t g^{jk} e_j(V)(q) xi_k``; exact for any ``t``."""
    if t == 0 or potential.is_constant:
        return state
    return PhaseState(state.q, state.v - t * left_derivative(potential, geom, state.q))


def geodesic_flow_biinvariant(state, t, geom, method=SCALING_SQUARING):
    """``(q e^{t v}, v)``: geodesics are one-parameter subgroups."""
    if t == 0:
        return state
    return PhaseState(state.q @ mexp(t * geom.to_matrix(state.v), method), state.v)


def geodesic_flow_reductive_matrix(state, t, geom, method=SCALING_SQUARING):
    """Closed-form trace-form geodesic on ``GLplus(n)`` / ``SL(n)``.

    With ``V = V_p + V_k`` (symmetric + antisymmetric),
    ``q(t) = q e^{t V^T} e^{2 t V_k}`` and
    ``V(t) = V_k + e^{-2 t V_k} V_p e^{2 t V_k}``.
    """
    if t == 0:
        return state
    V = geom.to_matrix(state.v)
    Vk = 0.5 * (V - V.T)
    Vp = 0.5 * (V + V.T)
    E = mexp(2 * t * Vk, method)  # orthogonal, so e^{-2tV_k} = E^T
    q = state.q @ mexp(t * V.T, method) @ E
    v = geom.to_coeffs(Vk + E.T @ Vp @ E)
    return PhaseState(q, v)


def euler_arnold_rhs(v, geom):
    """``v' = ad*_v v``."""
    return geom.ad_star(v, v)


def _hermite(v0, f0, v1, f1, h, theta):
    t2, t3 = theta * theta, theta ** 3
    return ((2 * t3 - 3 * t2 + 1) * v0 + (t3 - 2 * t2 + theta) * h * f0
            + (-2 * t3 + 3 * t2) * v1 + (t3 - t2) * h * f1)


_GAUSS = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)


def geodesic_flow_numeric(state, t, substeps, geom, method=SCALING_SQUARING,
                          reconstruction="magnus4", return_drift=False):
    """Numerically integrate Euler-Arnold plus reconstruction.

    ``v`` is advanced by classical RK4. Within each substep the velocity is
    interpolated by the cubic Hermite interpolant of the RK4 endpoints and
    ``q`` is updated by a right-multiplied exponential, so it stays on the
    group. ``reconstruction="magnus4"`` uses the two-point Gauss Magnus
    update (fourth order overall); ``"midpoint"`` uses ``exp(h V(t+h/2))``
    (second order in ``q``).

    With ``return_drift`` the kinetic-energy change ``|T(t) - T(0)|`` is
    returned as well.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if reconstruction not in ("magnus4", "midpoint"):
        raise ValueError(f"unknown reconstruction {reconstruction!r}")
    h = t / substeps
    q, v = np.array(state.q, dtype=float), np.array(state.v, dtype=float)
    f = euler_arnold_rhs(v, geom)
    for _ in range(substeps):
        k1 = f
        k2 = euler_arnold_rhs(v + 0.5 * h * k1, geom)
        k3 = euler_arnold_rhs(v + 0.5 * h * k2, geom)
        k4 = euler_arnold_rhs(v + h * k3, geom)
        v1 = v + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        f1 = euler_arnold_rhs(v1, geom)
        if reconstruction == "magnus4":
            A1 = geom.to_matrix(_hermite(v, f, v1, f1, h, _GAUSS[0]))
            A2 = geom.to_matrix(_hermite(v, f, v1, f1, h, _GAUSS[1]))
            omega = 0.5 * h * (A1 + A2) + (np.sqrt(3) / 12) * h * h * (A1 @ A2 - A2 @ A1)
        else:
            omega = h * geom.to_matrix(_hermite(v, f, v1, f1, h, 0.5))
        q = q @ mexp(omega, method)
        v, f = v1, f1
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(q))):
            raise FloatingPointError("numeric geodesic flow produced non-finite values")
    out = PhaseState(q, v)
    if return_drift:
        return out, abs(geom.kinetic(v) - geom.kinetic(state.v))
    return out


def geodesic_flow(state, t, geom, kind):
    """Dispatch to the kinetic flow selected by ``kind``."""
    if kind.kind == "biinvariant":
        return geodesic_flow_biinvariant(state, t, geom, kind.method)
    if kind.kind == "reductive_matrix":
        return geodesic_flow_reductive_matrix(state, t, geom, kind.method)
    return geodesic_flow_numeric(state, t, kind.substeps, geom, kind.method)


def hamiltonian(state, potential, geom):
    return potential.eval(state.q) + geom.kinetic(state.v)
