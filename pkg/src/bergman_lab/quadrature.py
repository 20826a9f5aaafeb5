"""Numerical integration over bounded domains {rho < 0} in C^n.

Three node layouts are supported:

  tensor-gauss  Gauss-Legendre points per real axis of the bounding box,
                restricted by the domain indicator.  Boundary-induced error
                is O(1/order) for non-box domains.
  quasi-mc      Halton points with a seeded Cranley-Patterson shift and
                equal weights volume/N.
  polar         product of per-coordinate (radius, angle) rules for disks,
                annuli and polydisks; the boundary is represented exactly
                and polynomial integrands integrate to machine precision.

Sums are always reduced with a fixed pairwise tree so results do not
depend on evaluation order or thread count.
"""

from dataclasses import dataclass
import numpy as np

from .expr import Var, Const, Sub, Abs2, Max, WeightExpr, eval_many

__all__ = [
    "Domain",
    "QuadratureRule",
    "EmptyDomainError",
    "QuadratureError",
    "build_rule",
    "integrate",
    "tree_sum",
]


class EmptyDomainError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


def tree_sum(values):
    """Deterministic pairwise (binary tree) reduction of a 1-D array."""
    v = np.asarray(values)
    if v.size == 0:
        return v.dtype.type(0)
    while v.size > 1:
        if v.size % 2:
            head = v[:-1]
            v = np.concatenate([head[0::2] + head[1::2], v[-1:]])
        else:
            v = v[0::2] + v[1::2]
    return v[0]


def _disk_expr(coord, center, radius):
    # abs2(z_i - c) - r^2 < 0 ; supported for real centers, which is all the
    # configuration surface allows
    zi = Var("z", coord)
    inner = Sub(zi, Const(center.real)) if center.real != 0.0 else zi
    return Sub(Abs2(inner), Const(radius * radius))


@dataclass(frozen=True)
class Domain:
    """Bounded integration domain {rho < 0} in C^n.

    radial, when present, lists one (center, r_inner, r_outer) factor per
    coordinate and enables exact polar product rules.  Membership testing
    uses the radial data when available, else the defining function.
    """

    n: int
    defining_fn: object  # WeightExpr or None
    bounding_box: tuple  # ((re_lo, re_hi), (im_lo, im_hi)) per coordinate
    radial: tuple = None  # ((center, r_in, r_out), ...) or None

    @classmethod
    def disk(cls, radius, center=0j):
        return cls.annulus(0.0, radius, center)

    @classmethod
    def annulus(cls, r_inner, r_outer, center=0j):
        center = complex(center)
        if not (0.0 <= r_inner < r_outer):
            raise ValueError("need 0 <= r_inner < r_outer")
        box = (
            (center.real - r_outer, center.real + r_outer),
            (center.imag - r_outer, center.imag + r_outer),
        )
        expr = None
        if center.imag == 0.0:
            rho = _disk_expr(1, center, r_outer)
            if r_inner > 0.0:
                rho = Max((rho, Sub(Const(r_inner * r_inner), Abs2(Var("z", 1)))))
            expr = WeightExpr(rho)
        return cls(1, expr, (box,), ((center, r_inner, r_outer),))

    @classmethod
    def polydisk(cls, radii, centers=None):
        radii = tuple(float(r) for r in radii)
        n = len(radii)
        centers = tuple(complex(c) for c in (centers or (0j,) * n))
        box = tuple(
            ((c.real - r, c.real + r), (c.imag - r, c.imag + r))
            for c, r in zip(centers, radii)
        )
        expr = None
        if all(c.imag == 0.0 for c in centers):
            parts = tuple(
                _disk_expr(i + 1, centers[i], radii[i]) for i in range(n)
            )
            expr = WeightExpr(parts[0] if n == 1 else Max(parts))
        return cls(n, expr, box, tuple((c, 0.0, r) for c, r in zip(centers, radii)))

    @classmethod
    def implicit(cls, n, defining_fn, bounding_box):
        return cls(n, defining_fn, tuple(tuple(map(tuple, bounding_box))), None)

    @property
    def is_t_dependent(self):
        return self.defining_fn is not None and self.defining_fn.n_t > 0

    def contains(self, points, t=()):
        pts = np.asarray(points, dtype=complex).reshape(-1, self.n)
        if self.radial is not None:
            mask = np.ones(pts.shape[0], dtype=bool)
            for i, (c, r_in, r_out) in enumerate(self.radial):
                d = np.abs(pts[:, i] - c)
                mask &= (d < r_out) & (d >= r_in)
            return mask
        if self.defining_fn is None:
            raise ValueError("domain has neither radial data nor a defining function")
        rho = eval_many(self.defining_fn, pts, np.asarray(t, dtype=complex))
        return rho < 0

    def box_volume(self):
        vol = 1.0
        for (a, b), (c, d) in self.bounding_box:
            vol *= (b - a) * (d - c)
        return vol

    def check_box_covers(self, t=(), n_boundary=64):
        """Sample the bounding-box boundary; raise if {rho<0} leaks out."""
        if self.defining_fn is None:
            return
        rng = np.random.default_rng(12345)
        dims = 2 * self.n
        samples = rng.random((n_boundary, dims))
        face = rng.integers(0, dims, size=n_boundary)
        side = rng.integers(0, 2, size=n_boundary)
        flat_box = [iv for pair in self.bounding_box for iv in pair]
        coords = np.empty((n_boundary, dims))
        for d in range(dims):
            lo, hi = flat_box[d]
            coords[:, d] = lo + samples[:, d] * (hi - lo)
        for i in range(n_boundary):
            lo, hi = flat_box[face[i]]
            coords[i, face[i]] = lo if side[i] == 0 else hi
        pts = coords[:, 0::2] + 1j * coords[:, 1::2]
        rho = eval_many(self.defining_fn, pts, np.asarray(t, dtype=complex))
        if np.any(rho < -1e-9):
            raise ValueError("domain {rho<0} is not contained in the bounding box")


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray  # (N, n) complex
    weights: np.ndarray  # (N,) positive
    scheme: str
    estimated_error: float

    @property
    def volume(self):
        return float(tree_sum(self.weights))


_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _halton(n_points, dim):
    out = np.empty((n_points, dim))
    idx = np.arange(1, n_points + 1)
    for d in range(dim):
        base = _PRIMES[d]
        x = np.zeros(n_points)
        denom = 1.0
        i = idx.copy()
        while i.max() > 0:
            denom *= base
            x += (i % base) / denom
            i //= base
        out[:, d] = x
    return out


def _axis_nodes(order, interval):
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = interval
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _tensor_rule(domain, order, t):
    dims = 2 * domain.n
    if order**dims > 5_000_000:
        raise ValueError("tensor-gauss order too large for this dimension")
    axes = []
    for (re_iv, im_iv) in domain.bounding_box:
        axes.append(_axis_nodes(order, re_iv))
        axes.append(_axis_nodes(order, im_iv))
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.ones(coords.shape[0])
    for wg in wgrids:
        weights *= wg.ravel()
    nodes = coords[:, 0::2] + 1j * coords[:, 1::2]
    mask = domain.contains(nodes, t)
    return nodes[mask], weights[mask]


def _polar_axis(center, r_in, r_out, order):
    n_theta = max(8, 2 * order)
    r, wr = _axis_nodes(order, (r_in, r_out))
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    ww = np.outer(wr * r, np.full(n_theta, 2.0 * np.pi / n_theta))
    nodes = center + rr * np.exp(1j * tt)
    return nodes.ravel(), ww.ravel()


def build_rule(domain, scheme, order_or_samples, seed=0, t=()):
    """Construct a quadrature rule for the domain.

    scheme: "tensor-gauss" | "quasi-mc" | "polar".  order_or_samples is the
    per-axis order (tensor-gauss), the sample count (quasi-mc), or the
    radial order (polar; the angular count is twice that).  Deterministic
    for fixed arguments and seed.
    """
    if order_or_samples < 1:
        raise ValueError("order_or_samples must be >= 1")
    domain.check_box_covers(t)

    if scheme == "tensor-gauss":
        nodes, weights = _tensor_rule(domain, order_or_samples, t)
        if nodes.shape[0] == 0:
            raise EmptyDomainError("no quadrature nodes satisfy rho < 0")
        vol = float(tree_sum(weights))
        half_order = max(1, order_or_samples // 2)
        hn, hw = _tensor_rule(domain, half_order, t)
        vol_half = float(tree_sum(hw)) if hn.shape[0] else 0.0
        err = abs(vol - vol_half) + 1e-12 * abs(vol)
        return QuadratureRule(nodes, weights, scheme, err)

    if scheme == "quasi-mc":
        n = int(order_or_samples)
        dims = 2 * domain.n
        rng = np.random.default_rng(seed)
        shift = rng.random(dims)
        u = (_halton(n, dims) + shift) % 1.0
        flat_box = [iv for pair in domain.bounding_box for iv in pair]
        coords = np.empty_like(u)
        for d in range(dims):
            lo, hi = flat_box[d]
            coords[:, d] = lo + u[:, d] * (hi - lo)
        pts = coords[:, 0::2] + 1j * coords[:, 1::2]
        mask = domain.contains(pts, t)
        nodes = pts[mask]
        if nodes.shape[0] == 0:
            raise EmptyDomainError("no quasi-MC points satisfy rho < 0")
        box_vol = domain.box_volume()
        weights = np.full(nodes.shape[0], box_vol / n)
        vol = box_vol * nodes.shape[0] / n
        kept_half = int(np.count_nonzero(mask[: n // 2]))
        vol_half = box_vol * kept_half / max(1, n // 2)
        err = abs(vol - vol_half) + box_vol / n
        return QuadratureRule(nodes, weights, scheme, err)

    if scheme == "polar":
        if domain.radial is None:
            raise ValueError("polar rule requires a disk/annulus/polydisk domain")
        per_axis = [
            _polar_axis(c, r_in, r_out, order_or_samples)
            for (c, r_in, r_out) in domain.radial
        ]
        nodes = per_axis[0][0][:, None]
        weights = per_axis[0][1]
        for axis_nodes, axis_w in per_axis[1:]:
            nodes = np.concatenate(
                [
                    np.repeat(nodes, axis_nodes.size, axis=0),
                    np.tile(axis_nodes, nodes.shape[0])[:, None],
                ],
                axis=1,
            )
            weights = np.outer(weights, axis_w).ravel()
        vol = float(tree_sum(weights))
        return QuadratureRule(nodes, weights, "polar", 1e-12 * abs(vol))

    raise ValueError(f"unknown quadrature scheme '{scheme}'")


def integrate(rule, f):
    """Sum w_i * f(x_i) with the deterministic pairwise reduction.

    f is applied to the full (N, n) node array and must return N values;
    a non-finite value at any node raises QuadratureError.
    """
    values = np.asarray(f(rule.nodes))
    if values.shape != (rule.nodes.shape[0],):
        raise ValueError("integrand must return one value per node")
    finite = (
        np.isfinite(values)
        if not np.iscomplexobj(values)
        else np.isfinite(values.real) & np.isfinite(values.imag)
    )
    if not np.all(finite):
        bad = int(np.argmin(finite))
        raise QuadratureError(
            f"non-finite integrand value at node {bad}: {rule.nodes[bad]}"
        )
    return complex(tree_sum(rule.weights * values))
