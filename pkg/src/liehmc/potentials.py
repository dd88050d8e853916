"""Potentials on matrix groups and their left-translated derivatives.

A potential is specified through an extension ``W`` to ambient ``n x n``
matrices together with its matrix gradient ``dW = dW/dx``. The derivative of
``V`` along the left-invariant field ``e_j`` is then

    e_j(V)(q) = tr(dW(q)^T q xi_j)

which serves every group without charts. Potential callables must be
reentrant: chains may evaluate the same instance concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .expmap import mexp

_FD_EPS = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class Potential:
    """Potential ``V(q) = W(q)`` with matrix gradient ``dW``.

    ``hess_contract(q, D)`` returns the directional derivative of ``dW`` at
    ``q`` along the matrix ``D``; when absent, second frame derivatives fall
    back to central differences.
    """

    eval: Callable[[np.ndarray], float]
    dW: Callable[[np.ndarray], np.ndarray]
    hess_contract: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    label: str = "potential"
    is_constant: bool = False

    def __call__(self, q):
        return self.eval(q)


def constant_potential(value=0.0):
    value = float(value)
    return Potential(
        eval=lambda q: value,
        dW=lambda q: np.zeros_like(q),
        hess_contract=lambda q, D: np.zeros_like(q),
        label="zero" if value == 0.0 else f"constant({value})",
        is_constant=True,
    )


def gauge_potential(U, beta=1.0):
    """``V(q) = beta * tr(U q)``, the real lattice-gauge plaquette form."""
    U = np.array(U, dtype=float)
    beta = float(beta)
    grad = beta * U.T

    return Potential(
        eval=lambda q: beta * float(np.einsum("ab,ba->", U, q)),
        dW=lambda q: grad,
        hess_contract=lambda q, D: np.zeros_like(grad),
        label="gauge",
    )


def quadratic_trace_potential(U, beta=1.0):
    """``V(q) = beta/2 * tr(U q)^2``; a potential with a nonzero Hessian."""
    U = np.array(U, dtype=float)
    beta = float(beta)

    def tr_uq(q):
        return float(np.einsum("ab,ba->", U, q))

    return Potential(
        eval=lambda q: 0.5 * beta * tr_uq(q) ** 2,
        dW=lambda q: beta * tr_uq(q) * U.T,
        hess_contract=lambda q, D: beta * tr_uq(D) * U.T,
        label="quadratic_trace",
    )


def stiefel_fisher_lift(n, F):
    """Matrix-Fisher potential on ``V_k(R^n)`` lifted to ``SO(n)``.

    ``V(q) = -tr(F^T q[:, n-k:])``: it depends on ``q`` only through its
    trailing ``k`` columns, so it is invariant under right multiplication by
    ``SO(n-k)`` embedded in the leading block.
    """
    F = np.array(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != n or F.shape[1] >= n:
        raise ValueError(f"F must be n x k with k < n, got {F.shape}")
    k = F.shape[1]
    grad = np.zeros((n, n))
    grad[:, n - k:] = -F

    return Potential(
        eval=lambda q: -float(np.sum(F * q[:, n - k:])),
        dW=lambda q: grad,
        hess_contract=lambda q, D: np.zeros_like(grad),
        label="fisher",
    )


def vmf_sphere_lift(n, mu, kappa):
    """von Mises-Fisher density on ``S^{n-1}`` lifted to ``SO(n)``.

    The sphere point represented by ``q`` is its last column ``q e_n``;
    ``V(q) = -kappa * mu . (q e_n)``.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (n,) or abs(np.linalg.norm(mu) - 1.0) > 1e-12:
        raise ValueError("mu must be a unit vector of length n")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    pot = stiefel_fisher_lift(n, kappa * mu)
    return Potential(pot.eval, pot.dW, pot.hess_contract, label="vmf",
                     is_constant=(kappa == 0))


def check_gradient(potential, q, rng, n_dirs=5):
    """Compare ``dW`` against central differences of ``eval``.

    Returns the worst relative discrepancy over ``n_dirs`` random entries.
    """
    q = np.asarray(q, dtype=float)
    grad = potential.dW(q)
    scale = max(1.0, float(np.abs(grad).max()))
    worst = 0.0
    for _ in range(n_dirs):
        a, b = rng.integers(q.shape[0], size=2)
        eps = _FD_EPS * (1.0 + abs(q[a, b]))
        qp, qm = q.copy(), q.copy()
        qp[a, b] += eps
        qm[a, b] -= eps
        fd = (potential.eval(qp) - potential.eval(qm)) / (2 * eps)
        worst = max(worst, abs(fd - grad[a, b]) / scale)
    return worst


def left_derivative_covector(potential, geom, q):
    """``e_j(V)(q)`` for every generator ``j``."""
    if potential.is_constant:
        return np.zeros(geom.dim)
    A = potential.dW(q).T @ q
    # tr(A xi_j) for all j
    return np.einsum("ba,jab->j", A, geom.spec.generators)


def left_derivative(potential, geom, q):
    """Raised force ``f^i = g^{ij} e_j(V)(q)``; potential flow moves ``v`` by ``-t f``."""
    return geom.metric.g_inv @ left_derivative_covector(potential, geom, q)


def second_left_derivatives(potential, geom, q, eps=None, use_hessian=True):
    """Matrix ``E[j, s] = e_j(e_s(V))(q)``.

    Uses ``hess_contract`` when available:
    ``e_j e_s V = tr(H[q xi_j]^T q xi_s) + tr(dW^T q xi_j xi_s)``.
    Otherwise central differences of ``e_s(V)`` along ``q exp(+-eps xi_j)``.
    """
    gens = geom.spec.generators
    d = geom.dim
    if potential.is_constant:
        return np.zeros((d, d))
    if use_hessian and potential.hess_contract is not None:
        dW = potential.dW(q)
        qxi = np.einsum("ab,jbc->jac", q, gens)
        out = np.empty((d, d))
        for j in range(d):
            H = potential.hess_contract(q, qxi[j])
            out[j] = np.einsum("ab,sab->s", H, qxi)
        out += np.einsum("ab,jac,scb->js", dW, qxi, gens)
        return out
    if eps is None:
        eps = _FD_EPS * (1.0 + np.linalg.norm(q))
    out = np.empty((d, d))
    for j in range(d):
        plus = left_derivative_covector(potential, geom, q @ mexp(eps * gens[j]))
        minus = left_derivative_covector(potential, geom, q @ mexp(-eps * gens[j]))
        out[j] = (plus - minus) / (2 * eps)
    return out


def second_left_derivative(potential, geom, q, j, s):
    return float(second_left_derivatives(potential, geom, q)[j, s])


def force_gradient_field(potential, geom, q):
    """Coefficients of the Hamiltonian field of ``{V, {V, T}}``.

    ``X^k = -2 g^{jk} g^{ls} e_l(V) e_j e_s(V)``; vertical (a pure
    ``v``-shift) and a function of ``q`` only.
    """
    if potential.is_constant:
        return np.zeros(geom.dim)
    f = left_derivative(potential, geom, q)
    E = second_left_derivatives(potential, geom, q)
    return -2.0 * geom.metric.g_inv @ (E @ f)
