"""Truncated holomorphic bases, Gram matrices and Bergman kernels.

The weighted inner product of two basis monomials e_i, e_j under density
exp(-phi) is G_ij = sum_k w_k exp(-phi(x_k, t)) e_i(x_k) conj(e_j(x_k)).
With A = G^-1 the kernel is

    K(z, w) = sum_ij e_i(z) conj(A)_ij conj(e_j(w)) = dot(A e(z), conj(e(w))),

independent of any orthonormalization of the span.  On the diagonal this
agrees with the extremal characterization

    K(z, z) = sup { |f(z)|^2 : ||f|| = 1, f in span },

which is exposed as a second computation path for cross-checking.

Gram matrices are factorized by Hermitian eigendecomposition; eigenvalues
below 1e-12 times the largest are clipped to that floor and the clipping is
flagged, since quadrature noise makes high-degree Grams numerically
singular.  Factorizations are immutable after construction and safe to
share across threads.
"""

from dataclasses import dataclass
from functools import cached_property
from math import comb
import numpy as np

from .expr import eval_many

__all__ = [
    "MonomialBasis",
    "GramMatrix",
    "KernelEvaluator",
    "DegenerateGramError",
    "InfeasibleConstraintsError",
    "monomial_basis",
    "basis_from_indices",
    "compute_gram",
    "kernel_eval",
    "kernel_diag",
    "kernel_diag_many",
    "reproducing_check",
    "min_norm_element",
    "default_d_max",
]

EIGENVALUE_FLOOR_RATIO = 1e-12


class DegenerateGramError(RuntimeError):
    pass


class InfeasibleConstraintsError(RuntimeError):
    pass


def default_d_max(n):
    # keeps Gram assembly at sub-second sizes for the shipped experiments
    return 20 if n == 1 else 8


@dataclass(frozen=True)
class MonomialBasis:
    n: int
    multi_indices: tuple  # tuple of exponent tuples, graded-lex sorted
    label: str

    @property
    def size(self):
        return len(self.multi_indices)

    def vandermonde(self, points):
        """Evaluate all basis monomials at the given points: (N, size)."""
        pts = np.asarray(points, dtype=complex).reshape(-1, self.n)
        if self.size == 0:
            return np.zeros((pts.shape[0], 0), dtype=complex)
        alphas = np.asarray(self.multi_indices)
        max_deg = int(alphas.max(initial=0))
        powers = np.empty((pts.shape[0], self.n, max_deg + 1), dtype=complex)
        powers[:, :, 0] = 1.0
        for d in range(1, max_deg + 1):
            powers[:, :, d] = powers[:, :, d - 1] * pts
        out = np.ones((pts.shape[0], self.size), dtype=complex)
        for c in range(self.n):
            out *= powers[:, c, alphas[:, c]]
        return out

    def eval_derivative_row(self, point, order):
        """Row of d^order e_j evaluated at point, for derivative functionals."""
        pt = np.asarray(point, dtype=complex).reshape(self.n)
        order = tuple(order)
        row = np.zeros(self.size, dtype=complex)
        for j, alpha in enumerate(self.multi_indices):
            coeff = 1.0
            val = 1.0 + 0j
            ok = True
            for c in range(self.n):
                a, d = alpha[c], order[c]
                if d > a:
                    ok = False
                    break
                for r in range(d):
                    coeff *= a - r
                val *= pt[c] ** (a - d)
            if ok:
                row[j] = coeff * val
        return row


def monomial_basis(n, d_max):
    """All monomials of total degree <= d_max in n variables, graded lex."""
    if n < 1 or d_max < 0:
        raise ValueError("need n >= 1 and d_max >= 0")

    def gen(prefix, remaining, vars_left):
        if vars_left == 1:
            for d in range(remaining + 1):
                yield prefix + (d,)
            return
        for d in range(remaining + 1):
            yield from gen(prefix + (d,), remaining - d, vars_left - 1)

    indices = sorted(gen((), d_max, n), key=lambda a: (sum(a), tuple(-x for x in a)))
    basis = MonomialBasis(n, tuple(indices), f"monomials(n={n},d_max={d_max})")
    assert basis.size == comb(n + d_max, n)
    return basis


def basis_from_indices(n, indices, label="custom"):
    return MonomialBasis(n, tuple(tuple(a) for a in indices), label)


@dataclass(frozen=True)
class GramMatrix:
    matrix: np.ndarray  # Hermitian (B, B)
    basis_label: str
    floored: bool
    condition_estimate: float
    eigenvalues: np.ndarray  # after flooring, ascending
    eigenvectors: np.ndarray

    @cached_property
    def inverse(self):
        if self.matrix.shape[0] == 0:
            return self.matrix
        U, lam = self.eigenvectors, self.eigenvalues
        return (U / lam) @ U.conj().T

    def norm2(self, coeffs):
        """Squared norm of f = sum c_i e_i under the stored inner product."""
        c = np.asarray(coeffs, dtype=complex)
        return float(np.real(c @ self.matrix @ c.conj()))


def _finish_gram(G, basis_label):
    B = G.shape[0]
    if B == 0:
        empty = np.zeros((0, 0), dtype=complex)
        return GramMatrix(empty, basis_label, False, 1.0, np.zeros(0), empty)
    G = 0.5 * (G + G.conj().T)
    eigvals, eigvecs = np.linalg.eigh(G)
    lam_max = float(eigvals[-1])
    if not np.isfinite(lam_max) or lam_max <= 0.0:
        raise DegenerateGramError("all Gram eigenvalues vanish: degenerate space")
    floor = EIGENVALUE_FLOOR_RATIO * lam_max
    floored = bool(eigvals[0] < floor)
    eigvals = np.maximum(eigvals, floor)
    cond = lam_max / float(eigvals[0])
    return GramMatrix(G, basis_label, floored, cond, eigvals, eigvecs)


def compute_gram(basis, rule, weight=None, t=(), extra_density=None):
    """Weighted Gram matrix of the basis over the quadrature rule.

    weight is a WeightExpr phi(z, t); the density is exp(-phi(x, t)) times
    the optional extra_density(nodes) factor.  Nodes with a non-finite
    density (poles of the weight) are dropped.
    """
    wh = np.array(rule.weights, dtype=float)
    if weight is not None:
        phi = eval_many(weight, rule.nodes, np.asarray(t, dtype=complex))
        with np.errstate(over="ignore"):
            wh = wh * np.exp(-phi)
    if extra_density is not None:
        wh = wh * np.asarray(extra_density(rule.nodes), dtype=float)
    good = np.isfinite(wh)
    if not np.all(good):
        wh = np.where(good, wh, 0.0)
    V = basis.vandermonde(rule.nodes)
    G = V.T @ (wh[:, None] * V.conj())
    return _finish_gram(G, basis.label)


def gram_from_density(basis, rule, density_values, basis_label=None):
    """Gram from an explicit per-node density vector (used by iterations)."""
    wh = rule.weights * np.asarray(density_values, dtype=float)
    good = np.isfinite(wh) & (wh <= 1e300)
    dropped = int(wh.size - np.count_nonzero(good))
    wh = np.where(good, wh, 0.0)
    V = basis.vandermonde(rule.nodes)
    G = V.T @ (wh[:, None] * V.conj())
    return _finish_gram(G, basis_label or basis.label), dropped


def kernel_eval(basis, gram, z, w):
    """K(z, w); Hermitian-symmetric: K(z, w) = conj(K(w, z))."""
    ez = basis.vandermonde(np.asarray(z, dtype=complex).reshape(1, -1))[0]
    ew = basis.vandermonde(np.asarray(w, dtype=complex).reshape(1, -1))[0]
    return complex(np.dot(gram.inverse @ ez, ew.conj()))


def kernel_diag(basis, gram, z, method="solve"):
    """K(z, z) >= 0.

    method="solve" uses the factorized Gram; method="rayleigh" evaluates
    the extremal quotient |f(z)|^2 / ||f||^2 at the maximizing coefficient
    vector.  The two must agree to rounding.
    """
    ez = basis.vandermonde(np.asarray(z, dtype=complex).reshape(1, -1))[0]
    if basis.size == 0:
        return 0.0
    if method == "solve":
        val = np.real(np.dot(gram.inverse @ ez, ez.conj()))
        return float(max(val, 0.0))
    if method == "rayleigh":
        c = gram.inverse @ ez.conj()
        num = abs(np.dot(c, ez)) ** 2
        den = gram.norm2(c)
        if den == 0.0:
            return 0.0
        return float(num / den)
    raise ValueError(f"unknown method '{method}'")


def kernel_diag_many(basis, gram, points):
    """Vectorized K(z, z) over rows of points."""
    pts = np.asarray(points, dtype=complex).reshape(-1, basis.n)
    if basis.size == 0:
        return np.zeros(pts.shape[0])
    V = basis.vandermonde(pts)
    vals = np.einsum("ij,nj,ni->n", gram.inverse, V, V.conj()).real
    return np.maximum(vals, 0.0)


class KernelEvaluator:
    """Convenience bundle of a basis and a factorized Gram."""

    def __init__(self, basis, gram):
        self.basis = basis
        self.gram = gram

    def eval(self, z, w):
        return kernel_eval(self.basis, self.gram, z, w)

    def diag(self, z):
        return kernel_diag(self.basis, self.gram, z)

    def diag_many(self, points):
        return kernel_diag_many(self.basis, self.gram, points)


def reproducing_check(basis, gram, rule, weight, t, coeffs, z):
    """|integral of K(z, .) f exp(-phi) dV - f(z)| for f in the span."""
    from .quadrature import tree_sum

    c = np.asarray(coeffs, dtype=complex)
    zv = np.asarray(z, dtype=complex).reshape(1, -1)
    V = basis.vandermonde(rule.nodes)
    f_vals = V @ c
    f_at_z = complex(basis.vandermonde(zv)[0] @ c)
    ez = basis.vandermonde(zv)[0]
    k_vals = np.conj(V @ np.conj(gram.inverse @ ez))
    wh = np.array(rule.weights, dtype=float)
    if weight is not None:
        phi = eval_many(weight, rule.nodes, np.asarray(t, dtype=complex))
        with np.errstate(over="ignore"):
            wh = wh * np.exp(-phi)
    integral = tree_sum(wh * k_vals * f_vals)
    return float(abs(integral - f_at_z))


def _constraint_row(basis, functional):
    kind = functional[0]
    if kind == "eval":
        return basis.vandermonde(np.asarray(functional[1], dtype=complex).reshape(1, -1))[0]
    if kind == "deriv":
        return basis.eval_derivative_row(functional[1], functional[2])
    raise ValueError(f"unknown constraint functional '{kind}'")


def min_norm_element(basis, gram, constraints):
    """Coefficients of the norm-minimal element meeting linear constraints.

    constraints: list of (functional, target) with functional either
    ("eval", point) or ("deriv", point, order).  Minimizes c^H conj(G) c,
    the squared norm of f = sum c_i e_i, subject to A c = b, via the normal
    equations on the constraint subspace.
    """
    B = basis.size
    if not constraints:
        return np.zeros(B, dtype=complex)
    A = np.stack([_constraint_row(basis, fn) for fn, _ in constraints])
    b = np.asarray([target for _, target in constraints], dtype=complex)
    M = gram.inverse.T  # inverse of conj(G)
    S = A @ M @ A.conj().T
    S = 0.5 * (S + S.conj().T)
    eigvals = np.linalg.eigvalsh(S)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], 1e-300):
        raise InfeasibleConstraintsError(
            "constraint system is rank-deficient or infeasible"
        )
    lam = np.linalg.solve(S, b)
    c = M @ A.conj().T @ lam
    residual = np.max(np.abs(A @ c - b)) if b.size else 0.0
    if residual > 1e-8 * (1.0 + np.max(np.abs(b))):
        raise InfeasibleConstraintsError(
            f"constraints not met after solve (residual {residual:.3e})"
        )
    return c
