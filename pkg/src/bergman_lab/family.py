"""Kernel families over a parameter: positivity of log K, the thickening
rescaling limit, and curvature of the direct-image metric.

A FamilySpec fixes a fiber domain in C^n, a weight phi(z, t) and a basis
truncation; KernelField lazily caches one factorized Gram per parameter
value and evaluates K(z, w, t) anywhere in the family.  The verifiers in
this module sample the Levi form of log K(z, t), compare the rescaled
kernel of an epsilon-thickened neighbourhood against the fiber kernel, and
differentiate the direct-image Gram in t to obtain its curvature form.

All checks run on bounded-domain and Gaussian-weight model fibers; compact
fibers are out of scope and every report carries a note saying so.
"""

from dataclasses import dataclass, field as dc_field
import numpy as np

from .bergman import (
    KernelEvaluator,
    compute_gram,
    default_d_max,
    monomial_basis,
    _finish_gram,
)
from .psh import PshReport, lattice_points, sample_levi_field
from .quadrature import build_rule
from .expr import eval_many
from .weights import check_psh_sample

__all__ = [
    "FamilySpec",
    "KernelField",
    "ConvergenceReport",
    "CurvatureReport",
    "FlooredStencilError",
    "kernel_field",
    "levi_psh_verify",
    "thickened_rescaling",
    "direct_image_gram",
    "nakano_curvature",
    "probe_grid",
    "SCOPE_NOTE",
]

SCOPE_NOTE = (
    "verified on bounded-domain / Gaussian-weight model fibers, not compact fibers"
)


class FlooredStencilError(RuntimeError):
    """A finite-difference stencil hit a floored Gram; derivative invalid."""


@dataclass
class FamilySpec:
    n: int
    k: int
    weight: object  # WeightExpr phi(z, t)
    domain: object  # Domain for the fiber (may reference t)
    d_max: int = None
    t_grid: tuple = ((0j,),)
    quad_scheme: str = None
    quad_order: int = None
    seed: int = 0

    def __post_init__(self):
        if self.d_max is None:
            self.d_max = default_d_max(self.n)
        self.t_grid = tuple(tuple(complex(c) for c in np.atleast_1d(t)) for t in self.t_grid)
        if self.quad_scheme is None:
            self.quad_scheme = "polar" if self.domain.radial is not None else "tensor-gauss"
        if self.quad_order is None:
            self.quad_order = max(32, self.d_max + 4)

    def z_box(self, margin=0.15):
        out = []
        for (re_lo, re_hi), (im_lo, im_hi) in self.domain.bounding_box:
            dr = margin * (re_hi - re_lo)
            di = margin * (im_hi - im_lo)
            out.append(((re_lo + dr, re_hi - dr), (im_lo + di, im_hi - di)))
        return tuple(out)

    def t_box(self, pad=0.25):
        grid = np.asarray(self.t_grid, dtype=complex)
        out = []
        for j in range(self.k):
            re = grid[:, j].real
            im = grid[:, j].imag
            out.append(
                (
                    (re.min() - pad, re.max() + pad),
                    (im.min() - pad, im.max() + pad),
                )
            )
        return tuple(out)


class KernelField:
    """Per-parameter cache of factorized Grams with kernel evaluation.

    The cache admits concurrent reads; insertion happens under the GIL and
    recomputation is idempotent, so sharing a field between threads is safe.
    """

    def __init__(self, spec, weight_check_grid=3):
        self.spec = spec
        self.basis = monomial_basis(spec.n, spec.d_max)
        self._grams = {}
        self._rules = {}
        self._static_rule = None
        if not spec.domain.is_t_dependent:
            self._static_rule = build_rule(
                spec.domain, spec.quad_scheme, spec.quad_order, seed=spec.seed
            )
        self.weight_report = self._check_weight(weight_check_grid)

    def _check_weight(self, grid):
        expr = self.spec.weight
        if expr is None or (expr.n_z == 0 and expr.n_t == 0):
            return None
        box = tuple(self.spec.z_box()[: expr.n_z]) + tuple(self.spec.t_box()[: expr.n_t])
        return check_psh_sample(expr, box, grid=grid, tol=1e-4, seed=self.spec.seed)

    @property
    def vacuous(self):
        return self.weight_report is not None and self.weight_report.verdict == "fail"

    def rule(self, t):
        if self._static_rule is not None:
            return self._static_rule
        key = tuple(complex(c) for c in t)
        if key not in self._rules:
            self._rules[key] = build_rule(
                self.spec.domain,
                self.spec.quad_scheme,
                self.spec.quad_order,
                seed=self.spec.seed,
                t=key,
            )
        return self._rules[key]

    def gram(self, t):
        key = tuple(complex(c) for c in np.atleast_1d(np.asarray(t, dtype=complex)))
        if key not in self._grams:
            self._grams[key] = compute_gram(
                self.basis, self.rule(key), self.spec.weight, t=key
            )
        return self._grams[key]

    def evaluator(self, t):
        return KernelEvaluator(self.basis, self.gram(t))

    def diag(self, z, t):
        return self.evaluator(t).diag(z)

    def diag_many(self, points, t):
        return self.evaluator(t).diag_many(points)

    def kernel(self, z, w, t):
        return self.evaluator(t).eval(z, w)


def kernel_field(spec):
    """Build the kernel field of a family; Grams are cached lazily per t."""
    return KernelField(spec)


def probe_grid(z_box, t_box=(), per_axis=5):
    return lattice_points(tuple(z_box) + tuple(t_box), per_axis)


def levi_psh_verify(
    field,
    probes,
    directions=8,
    fd_step=1e-3,
    tol=1e-4,
    seed=0,
    circle_points=16,
):
    """Sample the Levi form of log K(z, t) over joint (z, t) probes.

    field: a KernelField, or any callable taking a complex vector of length
    n + k and returning a positive value (a control field, for instance).
    Probes must be interior; stencil points falling outside the fiber show
    up as skipped probes.  If the family's weight failed its own positivity
    precheck the verdict is downgraded to "vacuous".
    """
    if isinstance(field, KernelField):
        n = field.spec.n

        def f(p):
            val = field.diag(p[:n], p[n:])
            return np.log(val) if val > 0 else -np.inf

        vacuous = field.vacuous
    else:
        raw = field

        def f(p):
            val = raw(p)
            return np.log(val) if val > 0 else -np.inf

        vacuous = False

    report = sample_levi_field(
        f,
        probes,
        fd_step=fd_step,
        tol=tol,
        seed=seed,
        directions=directions,
        circle_points=circle_points,
        note=SCOPE_NOTE,
    )
    if vacuous:
        report.verdict = "vacuous"
    return report


@dataclass
class ConvergenceReport:
    epsilons: list
    values: list  # pi eps^2 K_thickened at the probe
    limit_value: float
    fitted_rate: float
    verdict: str
    errors: list = dc_field(default_factory=list)


def _thickened_kernel_value(spec, rule, fiber_basis, t0, eps, probe, d_t, t_order):
    """Bergman kernel of the thickened set {(z, t') : |t' - t0| < eps} at
    ((probe, t0)), with weight phi(z, t').

    The section space is the product truncation {z^a * s^b} with
    s = (t' - t0)/eps; the Gram is assembled by contracting per-t'-node
    fiber Grams against the s-monomial outer products, which keeps the
    node count additive rather than multiplicative.
    """
    from .quadrature import Domain

    t_rule = build_rule(Domain.disk(eps, center=t0), "polar", t_order)
    V = fiber_basis.vandermonde(rule.nodes)
    B_f = fiber_basis.size
    B_t = d_t + 1
    G = np.zeros((B_t * B_f, B_t * B_f), dtype=complex)
    for t_node, t_w in zip(t_rule.nodes[:, 0], t_rule.weights):
        phi = eval_many(spec.weight, rule.nodes, np.array([t_node]))
        with np.errstate(over="ignore"):
            wh = rule.weights * np.exp(-phi)
        wh = np.where(np.isfinite(wh), wh, 0.0)
        M = V.T @ (wh[:, None] * V.conj())
        s = (t_node - t0) / eps
        spow = s ** np.arange(B_t)
        G += t_w * np.kron(np.outer(spow, spow.conj()), M)
    gram = _finish_gram(G, f"thickened(d_t={d_t})x{fiber_basis.label}")
    e_f = fiber_basis.vandermonde(np.asarray(probe, dtype=complex).reshape(1, -1))[0]
    e_x = np.zeros(B_t * B_f, dtype=complex)
    e_x[:B_f] = e_f  # s = 0 at the probe: only the b_t = 0 block survives
    return float(np.real(np.dot(gram.inverse @ e_x, e_x.conj())))


def thickened_rescaling(spec, t0, epsilons, probe, d_t=6, t_order=8, tol=1e-2):
    """Compare pi*eps^2 times the thickened kernel against the fiber kernel.

    For each eps the (n+1)-dimensional kernel of the thickened neighbourhood
    is evaluated at (probe, t0) and rescaled by pi*eps^2; the report passes
    iff the relative errors against K(probe, probe, t0) are non-increasing
    and the final one is <= tol.
    """
    if spec.k != 1:
        raise ValueError("thickened rescaling needs a one-parameter family")
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ValueError("empty epsilon list")
    if spec.domain.is_t_dependent:
        raise ValueError("thickened rescaling requires a t-independent fiber domain")
    t0 = complex(t0)

    rule = build_rule(spec.domain, spec.quad_scheme, spec.quad_order, seed=spec.seed)
    fiber_basis = monomial_basis(spec.n, spec.d_max)
    fiber_gram = compute_gram(fiber_basis, rule, spec.weight, t=(t0,))
    limit = KernelEvaluator(fiber_basis, fiber_gram).diag(probe)

    values = []
    for eps in epsilons:
        k_thick = _thickened_kernel_value(
            spec, rule, fiber_basis, t0, eps, probe, d_t, t_order
        )
        values.append(np.pi * eps * eps * k_thick)

    scale = max(abs(limit), 1e-300)
    errors = [abs(v - limit) / scale for v in values]

    resolved = [(e, err) for e, err in zip(epsilons, errors) if err > 1e-14]
    if len(resolved) >= 2:
        xs = np.log([e for e, _ in resolved])
        ys = np.log([err for _, err in resolved])
        fitted_rate = float(np.polyfit(xs, ys, 1)[0])
    else:
        fitted_rate = float("nan")

    floor = 1e-12
    decreasing = all(
        errors[i + 1] <= errors[i] or (errors[i] < floor and errors[i + 1] < floor)
        for i in range(len(errors) - 1)
    )
    verdict = "pass" if (errors[-1] <= tol and decreasing) else "fail"
    return ConvergenceReport(
        epsilons=epsilons,
        values=values,
        limit_value=limit,
        fitted_rate=fitted_rate,
        verdict=verdict,
        errors=errors,
    )


def direct_image_gram(spec, t, frame=None):
    """Gram of the fixed monomial frame of the direct image at parameter t."""
    frame = frame or monomial_basis(spec.n, spec.d_max)
    t_key = tuple(complex(c) for c in np.atleast_1d(np.asarray(t, dtype=complex)))
    rule = build_rule(
        spec.domain, spec.quad_scheme, spec.quad_order, seed=spec.seed, t=t_key
    )
    return compute_gram(frame, rule, spec.weight, t=t_key)


@dataclass
class CurvatureReport:
    t_point: complex
    curvature_matrix: np.ndarray
    min_eigenvalue: float
    eigenvalues: np.ndarray
    verdict: str
    note: str = SCOPE_NOTE


def nakano_curvature(spec, t, fd_step=1e-2, frame=None, tol=1e-4):
    """Curvature form of the direct-image metric G(t) in the fixed frame.

    Theta(t) = -G^{-1/2} (dbar d G - dbar G G^{-1} d G) G^{-1/2}, the sign
    fixed so that the Gaussian family with weight (1+|t|^2)|z|^2 comes out
    positive.  Entries of G are differentiated by Richardson-extrapolated
    central differences with steps fd_step and fd_step/2 (the 9-point
    stencil t, t +- h, t +- h/2, t +- ih, t +- ih/2).  Over a
    one-dimensional base this is the full Nakano form.
    """
    if spec.k != 1:
        raise ValueError("curvature differentiation needs a one-parameter family")
    t = complex(t)
    frame = frame or monomial_basis(spec.n, spec.d_max)
    h = float(fd_step)

    if spec.domain.is_t_dependent:
        raise ValueError("nakano_curvature requires a t-independent fiber domain")
    rule = build_rule(spec.domain, spec.quad_scheme, spec.quad_order, seed=spec.seed)

    def gram_at(tv):
        g = compute_gram(frame, rule, spec.weight, t=(tv,))
        if g.floored:
            raise FlooredStencilError(
                f"Gram floored at stencil point t={tv}; curvature derivative invalid"
            )
        return g

    G0g = gram_at(t)
    G0 = G0g.matrix

    def derivs(step):
        gxp = gram_at(t + step).matrix
        gxm = gram_at(t - step).matrix
        gyp = gram_at(t + 1j * step).matrix
        gym = gram_at(t - 1j * step).matrix
        dx = (gxp - gxm) / (2.0 * step)
        dy = (gyp - gym) / (2.0 * step)
        lap = (gxp + gxm + gyp + gym - 4.0 * G0) / (step * step)
        return dx, dy, lap

    dx1, dy1, lap1 = derivs(h)
    dx2, dy2, lap2 = derivs(h / 2.0)
    dx = (4.0 * dx2 - dx1) / 3.0
    dy = (4.0 * dy2 - dy1) / 3.0
    lap = (4.0 * lap2 - lap1) / 3.0

    d_t = 0.5 * (dx - 1j * dy)
    d_tbar = 0.5 * (dx + 1j * dy)
    mixed = 0.25 * lap

    S = mixed - d_tbar @ G0g.inverse @ d_t
    S = 0.5 * (S + S.conj().T)

    U, lam = G0g.eigenvectors, G0g.eigenvalues
    G_inv_half = (U / np.sqrt(lam)) @ U.conj().T
    theta = -(G_inv_half @ S @ G_inv_half)
    theta = 0.5 * (theta + theta.conj().T)
    eigs = np.linalg.eigvalsh(theta)
    min_eig = float(eigs[0])
    verdict = "pass" if min_eig >= -tol else "fail"
    return CurvatureReport(
        t_point=t,
        curvature_matrix=theta,
        min_eigenvalue=min_eig,
        eigenvalues=eigs,
        verdict=verdict,
    )
