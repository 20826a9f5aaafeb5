"""Sampled plurisubharmonicity verification.

Given a real scalar field f on C^m, this module samples the Levi form
(the complex Hessian d d-bar f) by central finite differences and runs
sub-mean-value circle tests along random complex lines.  It backs the
weight-expression checker, the log-kernel verifiers of kernel families,
and the pseudonorm-potential field checker.

At each probe the full m x m Levi matrix is assembled from coordinate-pair
second differences and eigensolved.  The minimal eigenvalue can be polluted
by O(1/h) noise when the stencil straddles a kink (max-type weights are
merely continuous there), so the eigendirection is re-sampled with a
directional four-point difference, which for any plurisubharmonic field is
bounded below by -O(h^2).  The reported minimum is the smallest validated
directional value over coordinate axes, random directions and the
eigensolver's candidate direction.
"""

from dataclasses import dataclass, field
import numpy as np

__all__ = ["PshReport", "sample_levi_field", "lattice_points"]


@dataclass
class PshReport:
    min_levi_eigenvalue: float
    worst_point: tuple
    sub_mean_violations: int
    grid_size: int
    fd_step: float
    verdict: str
    skipped_points: int = 0
    note: str = ""
    per_point: list = field(default_factory=list, repr=False)


def lattice_points(box, per_axis):
    """Interior midpoint lattice for a box in C^m.

    box: sequence of ((re_lo, re_hi), (im_lo, im_hi)) per complex coordinate.
    Returns a (per_axis^(2m), m) complex array.
    """
    if per_axis < 2:
        raise ValueError("grid must have at least 2 points per axis")
    axes = []
    for (re_lo, re_hi), (im_lo, im_hi) in box:
        if not (re_hi > re_lo and im_hi > im_lo):
            raise ValueError("degenerate box")
        axes.append(re_lo + (np.arange(per_axis) + 0.5) * (re_hi - re_lo) / per_axis)
        axes.append(im_lo + (np.arange(per_axis) + 0.5) * (im_hi - im_lo) / per_axis)
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([m.ravel() for m in mesh], axis=1)
    m = len(box)
    return flat[:, 0::2] + 1j * flat[:, 1::2] if m > 0 else flat.reshape(-1, 0)


def _random_directions(m, count, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, m)) + 1j * rng.standard_normal((count, m))
    return v / np.linalg.norm(v, axis=1)[:, None]


def sample_levi_field(
    f,
    points,
    fd_step=1e-3,
    tol=1e-4,
    seed=0,
    directions=8,
    circle_points=16,
    circle_radius=None,
    note="",
    collect_per_point=False,
):
    """Sample the Levi form of f at the given probe points.

    f: callable taking a complex vector of length m and returning a float
       (-inf or nan marks a pole; contaminated probes are skipped).
    points: (P, m) complex array of probes.

    Verdict is "pass" iff the minimal validated directional Levi value is
    >= -tol and no circle sub-mean-value test fails.  Deterministic for a
    fixed seed: the random directions are drawn once per call.
    """
    pts = np.asarray(points, dtype=complex)
    if pts.ndim == 1:
        pts = pts[:, None]
    n_points, m = pts.shape
    h = float(fd_step)
    r = circle_radius if circle_radius is not None else 5.0 * h
    dirs = _random_directions(m, directions, seed)
    thetas = np.exp(2j * np.pi * np.arange(circle_points) / circle_points)

    def feval(p):
        v = f(p)
        return v if np.isfinite(v) else None

    def dir_levi(p, f0, v):
        vals = [feval(p + s * v) for s in (h, -h, 1j * h, -1j * h)]
        if any(x is None for x in vals):
            return None
        return (sum(vals) - 4.0 * f0) / (4.0 * h * h)

    min_val = np.inf
    worst = None
    violations = 0
    skipped = 0
    per_point = []

    for p in pts:
        f0 = feval(p)
        if f0 is None:
            skipped += 1
            continue

        # real Hessian over (x_1..x_m, y_1..y_m)
        steps = np.zeros((2 * m, m), dtype=complex)
        for a in range(m):
            steps[a, a] = 1.0
            steps[m + a, a] = 1j
        H = np.zeros((2 * m, 2 * m))
        ok = True
        plus = [None] * (2 * m)
        minus = [None] * (2 * m)
        for u in range(2 * m):
            plus[u] = feval(p + h * steps[u])
            minus[u] = feval(p - h * steps[u])
            if plus[u] is None or minus[u] is None:
                ok = False
                break
            H[u, u] = (plus[u] + minus[u] - 2.0 * f0) / (h * h)
        if ok:
            for u in range(2 * m):
                for v in range(u + 1, 2 * m):
                    fpp = feval(p + h * (steps[u] + steps[v]))
                    fpm = feval(p + h * (steps[u] - steps[v]))
                    fmp = feval(p - h * (steps[u] - steps[v]))
                    fmm = feval(p - h * (steps[u] + steps[v]))
                    if None in (fpp, fpm, fmp, fmm):
                        ok = False
                        break
                    H[u, v] = H[v, u] = (fpp - fpm - fmp + fmm) / (4.0 * h * h)
                if not ok:
                    break
        if not ok:
            skipped += 1
            continue

        # Levi matrix L[a,b] = d^2 f / dw_a dwbar_b from the real Hessian
        A = H[:m, :m]
        B = H[m:, m:]
        C = H[:m, m:]
        L = 0.25 * (A + B + 1j * (C - C.T))
        L = 0.5 * (L + L.conj().T)
        eigvals, eigvecs = np.linalg.eigh(L)

        candidates = list(np.diag(L).real)  # axis values are directional samples
        v_min = eigvecs[:, 0]
        checked = dir_levi(p, f0, v_min)
        if checked is not None:
            candidates.append(checked)
        for v in dirs:
            d = dir_levi(p, f0, v)
            if d is not None:
                candidates.append(d)
        point_min = min(candidates)
        if point_min < min_val:
            min_val = point_min
            worst = tuple(p)

        # sub-mean-value circle tests, normalized to Levi units by r^2/4
        point_violations = 0
        for v in dirs:
            circle = [feval(p + r * th * v) for th in thetas]
            if any(x is None for x in circle):
                continue
            normalized = (np.mean(circle) - f0) / (r * r / 4.0)
            if normalized < -tol:
                point_violations += 1
        violations += point_violations
        if collect_per_point:
            per_point.append((tuple(p), point_min, point_violations))

    if worst is None:
        min_val = np.nan
    verdict = "pass" if (not np.isnan(min_val) and min_val >= -tol and violations == 0) else "fail"
    return PshReport(
        min_levi_eigenvalue=float(min_val),
        worst_point=worst if worst is not None else (),
        sub_mean_violations=violations,
        grid_size=n_points,
        fd_step=h,
        verdict=verdict,
        skipped_points=skipped,
        note=note,
        per_point=per_point,
    )
