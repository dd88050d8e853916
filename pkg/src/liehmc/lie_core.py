"""Matrix Lie algebras: bases, structure constants, metrics and ad / ad*.

Everything downstream works with algebra elements as coefficient vectors
``v`` in a fixed generator basis ``xi_i``; the matrix of ``v`` is
``sum_i v[i] * xi_i``.

Basis conventions
-----------------
* ``SO(n)``: ``B_ab = E_ba - E_ab`` for ``a < b`` (the generator rotating
  ``e_a`` towards ``e_b``), ordered colexicographically, i.e. by ``b`` then
  ``a``. With this ordering the ``so(m)`` generators for every leading
  ``m x m`` block come first, and on ``so(3)`` one gets
  ``[xi_0, xi_1] = xi_2`` and cyclic.
* ``SL(n)`` / ``GLplus(n)``: symmetric generators first (diagonal ones,
  then ``E_ab + E_ba`` colex), antisymmetric ``B_ab`` last. For ``SL(n)`` the
  diagonal generators are ``E_aa - E_(a+1)(a+1)``.

Index layout of the structure-constant arrays: ``c_upper[k, i, j]`` is
``c^k_{ij}`` with ``[xi_i, xi_j] = c^k_{ij} xi_k``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg


class Family(str, enum.Enum):
    SO = "SO"
    SL = "SL"
    GLPLUS = "GLplus"


class MetricFlavor(str, enum.Enum):
    TRACE = "trace"
    NEG_KILLING = "neg_killing"
    CUSTOM = "custom"


class InvalidBasisError(ValueError):
    """Generators are linearly dependent or outside the algebra."""


class MetricError(ValueError):
    """Metric matrix is not symmetric positive definite."""


def _colex_pairs(n):
    return [(a, b) for b in range(n) for a in range(b)]


def _unit(n, a, b):
    m = np.zeros((n, n))
    m[a, b] = 1.0
    return m


@dataclass(frozen=True, eq=False)
class LieGroupSpec:
    family: Family
    n: int
    generators: np.ndarray  # (dim, n, n)
    membership_tol: float = 1e-8
    n_sym: int = 0  # leading symmetric generators (the matrix-group p block)

    @property
    def dim(self):
        return self.generators.shape[0]

    def to_matrix(self, v):
        return np.tensordot(v, self.generators, axes=1)

    def to_coeffs(self, X):
        """Coefficients of an algebra matrix in the generator basis."""
        return self._coeff_map @ np.reshape(X, -1)

    @cached_property
    def gram(self):
        # Frobenius Gram matrix tr(xi_i^T xi_j); metric independent.
        return np.einsum("iab,jab->ij", self.generators, self.generators)

    @cached_property
    def _coeff_map(self):
        flat = self.generators.reshape(self.dim, -1)
        return np.linalg.solve(self.gram, flat)


def expected_dim(family, n):
    family = Family(family)
    if family is Family.SO:
        return n * (n - 1) // 2
    if family is Family.SL:
        return n * n - 1
    return n * n


def build_group(family, n, membership_tol=1e-8):
    """Canonical generator basis for ``SO(n)``, ``SL(n)`` or ``GLplus(n)``."""
    family = Family(family)
    if int(n) != n or n < 2:
        raise ValueError(f"matrix size must be an integer >= 2, got {n!r}")
    n = int(n)
    antisym = [_unit(n, b, a) - _unit(n, a, b) for a, b in _colex_pairs(n)]
    if family is Family.SO:
        gens, n_sym = antisym, 0
    else:
        if family is Family.GLPLUS:
            diag = [_unit(n, a, a) for a in range(n)]
        else:
            diag = [_unit(n, a, a) - _unit(n, a + 1, a + 1) for a in range(n - 1)]
        offdiag = [_unit(n, a, b) + _unit(n, b, a) for a, b in _colex_pairs(n)]
        gens = diag + offdiag + antisym
        n_sym = len(diag) + len(offdiag)
    spec = LieGroupSpec(family, n, np.array(gens), membership_tol, n_sym)
    validate_spec(spec)
    return spec


def validate_spec(spec):
    gens = spec.generators
    if spec.dim != expected_dim(spec.family, spec.n):
        raise InvalidBasisError(
            f"{spec.family.value}({spec.n}) needs {expected_dim(spec.family, spec.n)} "
            f"generators, got {spec.dim}")
    if spec.family is Family.SO:
        bad = np.abs(gens + gens.transpose(0, 2, 1)).max()
        if bad > 1e-12:
            raise InvalidBasisError("SO(n) generators must be antisymmetric")
    elif spec.family is Family.SL:
        bad = np.abs(np.trace(gens, axis1=1, axis2=2)).max()
        if bad > 1e-12:
            raise InvalidBasisError("SL(n) generators must be traceless")
    s = np.linalg.svd(spec.gram, compute_uv=False)
    if s.min() <= 1e-12 * s.max():
        raise InvalidBasisError("generators are linearly dependent")


@dataclass(frozen=True, eq=False)
class MetricData:
    g: np.ndarray
    g_inv: np.ndarray
    chol: np.ndarray
    flavor: MetricFlavor


def make_metric(spec, flavor="trace", matrix=None):
    """Left-invariant metric ``g_ij = <xi_i, xi_j>`` on the algebra.

    ``trace`` is ``tr(xi_i^T xi_j)``; ``neg_killing`` is ``-B(xi_i, xi_j)``
    and only positive definite on compact algebras; ``custom`` takes an
    explicit SPD ``matrix`` in the generator basis.
    """
    flavor = MetricFlavor(flavor)
    if flavor is MetricFlavor.TRACE:
        g = spec.gram
    elif flavor is MetricFlavor.NEG_KILLING:
        C = _upper_constants(spec)
        g = -np.einsum("kia,ajk->ij", C, C)
    else:
        if matrix is None:
            raise MetricError("custom metric requires an explicit matrix")
        g = np.asarray(matrix, dtype=float)
        if g.shape != (spec.dim, spec.dim):
            raise MetricError(f"metric must be {spec.dim}x{spec.dim}, got {g.shape}")
    if not np.allclose(g, g.T, rtol=0, atol=1e-12 * max(1.0, np.abs(g).max())):
        raise MetricError("metric matrix is not symmetric")
    g = 0.5 * (g + g.T)
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise MetricError(f"{flavor.value} metric is not positive definite") from None
    eye = np.eye(spec.dim)
    g_inv = np.linalg.solve(g, eye)
    g_inv = 0.5 * (g_inv + g_inv.T)
    return MetricData(g, g_inv, chol, flavor)


def _upper_constants(spec):
    gens = spec.generators
    comm = np.einsum("iab,jbc->ijac", gens, gens)
    comm = comm - comm.transpose(1, 0, 2, 3)
    rhs = np.einsum("kab,ijab->kij", gens, comm)
    d = spec.dim
    c = np.linalg.solve(spec.gram, rhs.reshape(d, d * d)).reshape(d, d, d)
    c[np.abs(c) < 1e-15] = 0.0
    return c


@dataclass(frozen=True, eq=False)
class StructureConstants:
    c_upper: np.ndarray  # [k, i, j] = c^k_{ij}
    c_lower: np.ndarray  # [r, j, k] = c_{rjk} = g_rl c^l_{jk}
    c_mixed: np.ndarray  # [r, l, k] = c_r^{lk} = g^{ik} g^{lj} c_{rji}


def structure_constants(spec, metric):
    if metric.g.shape != (spec.dim, spec.dim):
        raise ValueError("metric dimension does not match the group")
    c_up = _upper_constants(spec)
    c_low = np.einsum("rl,ljk->rjk", metric.g, c_up)
    c_mix = np.einsum("ik,lj,rji->rlk", metric.g_inv, metric.g_inv, c_low)
    return StructureConstants(c_up, c_low, c_mix)


@dataclass(frozen=True, eq=False)
class ReductiveSplit:
    """Orthogonal decomposition ``g = k + p`` in coefficient space."""

    k_indices: np.ndarray
    p_indices: np.ndarray
    P_k: np.ndarray = field(repr=False)
    P_p: np.ndarray = field(repr=False)

    @classmethod
    def from_indices(cls, dim, k_indices):
        k = np.array(sorted(int(i) for i in k_indices), dtype=int)
        p = np.array([i for i in range(dim) if i not in set(k)], dtype=int)
        P_k = np.zeros((dim, dim))
        P_k[k, k] = 1.0
        return cls(k, p, P_k, np.eye(dim) - P_k)

    def vertical(self, v):
        return v[..., self.k_indices]

    def leakage(self, v):
        """``||P_k v||``, the size of the vertical component."""
        return float(np.linalg.norm(v[self.k_indices]))


def check_split(split, metric, consts, atol=1e-10):
    """Verify orthogonality and ``[k, p] subset p``; raises ``ValueError``."""
    k, p = split.k_indices, split.p_indices
    if np.abs(metric.g[np.ix_(k, p)]).max(initial=0.0) > atol:
        raise ValueError("p is not the metric orthogonal complement of k")
    # components of [xi_i, xi_j] (i in k, j in p) along k must vanish
    bad = np.abs(consts.c_upper[np.ix_(k, k, p)]).max(initial=0.0)
    if bad > atol:
        raise ValueError(f"split is not reductive, [k,p] has k-part {bad:.3g}")


def matrix_split(spec):
    """Symmetric / antisymmetric split ``p + so(n)`` of a matrix algebra."""
    return ReductiveSplit.from_indices(spec.dim, range(spec.n_sym, spec.dim))


def ad(u, w, consts):
    """``(ad_u w)^k = c^k_{ij} u^i w^j``."""
    u, w = np.asarray(u, float), np.asarray(w, float)
    d = consts.c_upper.shape[0]
    if u.shape[-1] != d or w.shape[-1] != d:
        raise ValueError(f"expected coefficient vectors of length {d}")
    return np.einsum("kij,i,j->k", consts.c_upper, u, w)


def ad_matrix(u, consts):
    """Matrix of ``ad_u`` acting on coefficient vectors."""
    return np.einsum("kij,i->kj", consts.c_upper, u)


def ad_star(u, w, metric, consts):
    """Metric adjoint of ``ad``: ``<ad*_u w, z> = <w, ad_u z>``.

    Solves ``g x = M`` with ``M_k = c_{aik} w^a u^i``.
    """
    u, w = np.asarray(u, float), np.asarray(w, float)
    d = metric.g.shape[0]
    if u.shape[-1] != d or w.shape[-1] != d:
        raise ValueError(f"expected coefficient vectors of length {d}")
    M = np.einsum("aik,a,i->k", consts.c_lower, w, u)
    return metric.g_inv @ M


def killing_form(u, w, consts):
    return float(np.trace(ad_matrix(u, consts) @ ad_matrix(w, consts)))


def inner(u, w, metric):
    return float(u @ metric.g @ w)


def group_membership(spec, q):
    """Return ``(is_member, defect)`` for a matrix ``q``.

    For ``SO(n)`` the defect is ``max(||q^T q - I||_max, |det q - 1|)`` so an
    orthogonal matrix with determinant -1 is not mistaken for a rotation.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (spec.n, spec.n):
        return False, float("inf")
    if not np.all(np.isfinite(q)):
        return False, float("inf")
    det = np.linalg.det(q)
    if spec.family is Family.SO:
        defect = max(np.abs(q.T @ q - np.eye(spec.n)).max(), abs(det - 1.0))
    elif spec.family is Family.SL:
        defect = abs(det - 1.0)
    else:
        defect = -min(det, 0.0)
    defect = float(defect)
    return defect <= spec.membership_tol, defect


@dataclass(frozen=True, eq=False)
class Geometry:
    """A group, a metric on its algebra, and the derived constants.

    This is the context object threaded through flows, potentials and
    integrators.
    """

    spec: LieGroupSpec
    metric: MetricData
    consts: StructureConstants

    @property
    def dim(self):
        return self.spec.dim

    @property
    def n(self):
        return self.spec.n

    def to_matrix(self, v):
        return self.spec.to_matrix(v)

    def to_coeffs(self, X):
        return self.spec.to_coeffs(X)

    def kinetic(self, v):
        return 0.5 * float(v @ self.metric.g @ v)

    def ad(self, u, w):
        return ad(u, w, self.consts)

    def ad_star(self, u, w):
        return ad_star(u, w, self.metric, self.consts)


def make_geometry(family, n, metric="trace", metric_matrix=None, membership_tol=1e-8):
    spec = build_group(family, n, membership_tol=membership_tol)
    m = make_metric(spec, metric, metric_matrix)
    return Geometry(spec, m, structure_constants(spec, m))


def random_element(spec, rng, scale=0.5):
    """Random group element: Haar for ``SO(n)``, ``exp`` of a Gaussian algebra element otherwise."""
    n = spec.n
    if spec.family is Family.SO:
        z = rng.standard_normal((n, n))
        qm, r = np.linalg.qr(z)
        qm = qm * np.sign(np.diag(r))
        if np.linalg.det(qm) < 0:
            qm[:, 0] = -qm[:, 0]
        return qm
    return scipy.linalg.expm(scale * spec.to_matrix(rng.standard_normal(spec.dim)))
