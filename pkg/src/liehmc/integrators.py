"""Palindromic compositions of the exact sub-flows.

Stages are listed in the order they are applied to the state (right to left
in the ``exp(a X_T) exp(b X_V) ...`` notation). All schemes are symmetric,
hence reversible under momentum flip, and volume preserving because every
stage is the exact flow of a Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expmap import retract
from .flows import GeodesicKind, PhaseState, geodesic_flow, potential_flow
from .potentials import force_gradient_field, left_derivative

OMELYAN_LAMBDA = 0.1931833


class IntegrationError(FloatingPointError):
    """A trajectory produced non-finite values."""


@dataclass(frozen=True)
class IntegratorScheme:
    kind: str = "leapfrog"
    step_size: float = 0.1
    n_steps: int = 10
    lam: float = OMELYAN_LAMBDA
    retract_every: int = 0

    def __post_init__(self):
        if self.kind not in ("leapfrog", "omelyan", "force_gradient"):
            raise ValueError(f"unknown integrator {self.kind!r}")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")
        if self.n_steps < 0:
            raise ValueError("number of steps must be nonnegative")
        if self.kind == "omelyan" and not 0 < self.lam < 0.5:
            raise ValueError("Omelyan lambda must lie in (0, 1/2)")
        if self.retract_every < 0:
            raise ValueError("retract_every must be >= 0")

    def stages(self):
        """``[(field, fraction of h), ...]`` with field in ``{"T", "V", "V+FG"}``."""
        if self.kind == "leapfrog":
            return [("V", 0.5), ("T", 1.0), ("V", 0.5)]
        if self.kind == "omelyan":
            lam = self.lam
            return [("T", lam), ("V", 0.5), ("T", 1 - 2 * lam), ("V", 0.5), ("T", lam)]
        return [("V", 1 / 6), ("T", 0.5), ("V+FG", 2 / 3), ("T", 0.5), ("V", 1 / 6)]


def _check(state):
    if not state.is_finite():
        raise IntegrationError("non-finite state during integration")
    return state


def _require_exact(kind):
    if not isinstance(kind, GeodesicKind) or not kind.exact:
        raise ValueError("integrators need a closed-form geodesic kind")


def leapfrog_step(state, h, potential, geom, kind):
    """Half kick, full geodesic drift, half kick."""
    _require_exact(kind)
    state = potential_flow(state, 0.5 * h, potential, geom)
    state = _check(geodesic_flow(state, h, geom, kind))
    return _check(potential_flow(state, 0.5 * h, potential, geom))


def omelyan_step(state, h, potential, geom, kind, lam=OMELYAN_LAMBDA):
    _require_exact(kind)
    state = geodesic_flow(state, lam * h, geom, kind)
    state = potential_flow(state, 0.5 * h, potential, geom)
    state = _check(geodesic_flow(state, (1 - 2 * lam) * h, geom, kind))
    state = potential_flow(state, 0.5 * h, potential, geom)
    return _check(geodesic_flow(state, lam * h, geom, kind))


def force_gradient_shift(state, h, potential, geom):
    """Middle stage: flow of ``(2h/3) V - (h^3/72) {V, {V, T}}``.

    This is the kick with the modified force ``F + (h^2/48) grad |F|^2``;
    the minus sign is what cancels the third-order error terms. Both fields
    are vertical and depend on ``q`` only, so they commute and their joint
    flow is a single velocity shift.
    """
    if potential.is_constant:
        return state
    q = state.q
    shift = -(2 * h / 3) * left_derivative(potential, geom, q)
    shift = shift - (h ** 3 / 72) * force_gradient_field(potential, geom, q)
    return PhaseState(q, state.v + shift)


def force_gradient_step(state, h, potential, geom, kind):
    _require_exact(kind)
    state = potential_flow(state, h / 6, potential, geom)
    state = _check(geodesic_flow(state, 0.5 * h, geom, kind))
    state = force_gradient_shift(state, h, potential, geom)
    state = _check(geodesic_flow(state, 0.5 * h, geom, kind))
    return _check(potential_flow(state, h / 6, potential, geom))


def step(state, scheme, potential, geom, kind, h=None):
    h = scheme.step_size if h is None else h
    if scheme.kind == "leapfrog":
        return leapfrog_step(state, h, potential, geom, kind)
    if scheme.kind == "omelyan":
        return omelyan_step(state, h, potential, geom, kind, scheme.lam)
    return force_gradient_step(state, h, potential, geom, kind)


def integrate(state, scheme, potential, geom, kind, monitor=None, n_steps=None):
    """Apply ``n_steps`` steps (default ``scheme.n_steps``).

    ``monitor(i, state)`` is called after every step. When
    ``scheme.retract_every`` is ``k > 0``, ``q`` is projected back onto the
    group after every ``k``-th step; this breaks exact reversibility and is
    off by default.
    """
    n_steps = scheme.n_steps if n_steps is None else n_steps
    for i in range(n_steps):
        state = step(state, scheme, potential, geom, kind)
        if scheme.retract_every and (i + 1) % scheme.retract_every == 0:
            state = PhaseState(retract(geom.spec, state.q), state.v)
        if monitor is not None:
            monitor(i, state)
    return state


def reverse_check(state, scheme, potential, geom, kind):
    """Integrate, flip momentum, integrate back, flip; max entrywise defect."""
    if scheme.n_steps == 0:
        return 0.0
    out = integrate(state, scheme, potential, geom, kind)
    back = integrate(out.flip(), scheme, potential, geom, kind).flip()
    return float(max(np.abs(back.q - state.q).max(), np.abs(back.v - state.v).max()))
