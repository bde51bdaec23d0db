"""Beta-numbers and parametric L2 approximation over quasiboxes.

The beta-number of a graph piece in a ball is the scale-normalized L2
distance to its best vertical plane; the infimum over planes is solved
in closed form by total least squares (smallest eigenvector of the
centered second-moment matrix of the projected samples).  Parametric
counterparts fit vertical affine, slice-affine and vertical function
classes over quasiboxes Q_w(g, r) by weighted least squares on a
measure-preserving chart grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import core
from .fields import BoxField
from .graphs import IntrinsicGraph, rng_stream, v0_coords

__all__ = [
    "VerticalPlane",
    "QuasiBox",
    "BetaEstimate",
    "AffineFit",
    "SliceAffineFit",
    "AffineOnPw",
    "dist_to_vertical_plane",
    "beta_number",
    "best_affine_fit",
    "best_slice_affine_fit",
    "best_vertical_fit",
    "beta_vs_parametric",
    "switch_affine",
    "saff_compare",
    "BoxQuasiball",
    "lip_of_best_fit",
    "unit_ball_volume",
]


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class VerticalPlane:
    """pi-preimage of the affine hyperplane {<u, normal> = offset}."""

    normal: np.ndarray  # unit vector in R^(2n)
    offset: float

    def __post_init__(self):
        nu = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(nu)
        if norm < 1e-12:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "normal", nu / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def to_json_dict(self) -> dict:
        return {"normal": self.normal.tolist(), "offset": self.offset}


def dist_to_vertical_plane(p, L: VerticalPlane):
    """Gauge distance from p to the vertical plane L.

    Vertical planes contain the center, so the z-gap to the foot point
    can always be annulled; the distance collapses to the horizontal
    affine functional |<pi(p), normal> - offset|.
    """
    return np.abs(core.project_pi(p) @ L.normal - L.offset)


def _transverse_direction(P: core.VerticalSubspaceBasis) -> np.ndarray:
    """Unit horizontal vector of V_0 orthogonal to the C part of P."""
    n = P.n
    rows = [np.zeros(2 * n)]
    rows[0][2 * n - 1] = 1.0  # stay inside {y_n = 0}
    for h in P.horizontal:
        rows.append(h)
    _, _, vt = np.linalg.svd(np.stack(rows), full_matrices=True)
    nu = vt[-1]
    # fix the sign for reproducibility
    lead = np.flatnonzero(np.abs(nu) > 1e-12)[0]
    return nu * np.sign(nu[lead])


@dataclass(frozen=True)
class QuasiBox:
    """Q_w(g, r) = Pi_w(g delta_r(R_w)), with exact membership tests."""

    w: np.ndarray
    center: np.ndarray  # point of H_n
    radius: float

    def __post_init__(self):
        w = core.horizontal_direction(self.w)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        P = core.plane_p_w(w)
        object.__setattr__(self, "_P", P)
        object.__setattr__(self, "_nu", _transverse_direction(P))
        object.__setattr__(self, "_base", core.project_along(w, self.center))

    _P: core.VerticalSubspaceBasis = dc_field(init=False, repr=False)
    _nu: np.ndarray = dc_field(init=False, repr=False)
    _base: np.ndarray = dc_field(init=False, repr=False)

    @property
    def n(self) -> int:
        return core.group_index(self.w)

    @property
    def base_point(self) -> np.ndarray:
        """Pi_w(center), the V_0 anchor of the box."""
        return self._base

    def volume(self) -> float:
        n = self.n
        mu_rw = 4.0 * unit_ball_volume(2 * n - 2)
        return mu_rw * self.radius ** (2 * n + 1)

    def chart_point(self, s, p, t) -> np.ndarray:
        """Map R_w coordinates (|s|,|t|<=1, |p|<=1) into the box."""
        n = self.n
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        p = np.asarray(p, dtype=float).reshape(s.shape + (max(2 * n - 2, 0),))
        horiz = s[..., None] * self._nu + np.einsum(
            "...k,kc->...c", p, self._P.horizontal
        )
        x = core.lift_pi(self.radius * horiz, self.radius**2 * t)
        moved = core.group_mul(self.center, x)
        return core.group_mul(moved, core.dilate(-core.yn(self.center), self.w))

    def coords(self, q):
        """R_w coordinates of V_0 points, normalized by the radius."""
        q = np.asarray(q, dtype=float)
        x = core.group_mul(
            core.group_mul(core.group_inv(self.center), q),
            core.dilate(core.yn(self.center), self.w),
        )
        u = core.project_pi(x)
        s = (u @ self._nu) / self.radius
        p = (u @ self._P.horizontal.T) / self.radius
        t = core.zpart(x) / self.radius**2
        return s, p, t

    def quasinorm(self, q):
        """max(|s|, |p|, sqrt|t|): membership in Q(g, c r) iff <= c."""
        s, p, t = self.coords(q)
        pnorm = np.linalg.norm(p, axis=-1) if p.shape[-1] else np.zeros_like(s)
        return np.maximum(np.maximum(np.abs(s), pnorm), np.sqrt(np.abs(t)))

    def contains(self, q, tol: float = 1e-12):
        return self.quasinorm(q) <= 1.0 + tol

    def uniform_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples of the box (the chart preserves Lebesgue measure)."""
        n = self.n
        s = rng.uniform(-1.0, 1.0, size=count)
        t = rng.uniform(-1.0, 1.0, size=count)
        d = 2 * n - 2
        if d == 0:
            p = np.zeros((count, 0))
        else:
            p = np.empty((count, d))
            todo = np.arange(count)
            while todo.size:
                cand = rng.uniform(-1.0, 1.0, size=(todo.size, d))
                ok = (cand**2).sum(axis=1) <= 1.0
                p[todo[ok]] = cand[ok]
                todo = todo[~ok]
        return self.chart_point(s, p, t)


def _chart_nodes(Q: QuasiBox, P: core.VerticalSubspaceBasis, nodes_per_axis: int):
    """Uniform slice-aligned node grid covering Q, with a constant weight.

    Nodes form a tensor grid in the linear chart (sigma, a_1..a_(2n-2),
    tau) -> base * lift(sigma nu_P + a C_P, tau): sigma moves
    transversally to P, fixed-sigma layers lie in single P-cosets, and
    the chart preserves Lebesgue measure.  The pullback of Q to the
    chart is an affine image of ball x interval x interval, so the
    coordinate ranges needed to cover Q are closed-form norms.
    """
    nu_P = _transverse_direction(P)
    k = nodes_per_axis
    r = Q.radius
    alpha = float(core.yn(Q.center))
    nu_Q = Q._nu
    C_Q = Q._P.horizontal  # rows: orthonormal basis of C_w of the box
    pw = core.project_pi(Q.w)

    def horizontal_extent(direction):
        # max |<pi(rel), direction>| = r (|<nu_Q, dir>| + max_p |<p C_Q, dir>|)
        return r * (abs(nu_Q @ direction) + np.linalg.norm(C_Q @ direction))

    extents = [horizontal_extent(nu_P)]
    extents += [horizontal_extent(c) for c in P.horizontal]
    omega_nu = core.symplectic_form(pw, nu_Q)
    omega_c = (
        np.array([core.symplectic_form(pw, c) for c in C_Q])
        if len(C_Q)
        else np.zeros(0)
    )
    extents.append(
        r**2 + abs(alpha) * r * (abs(omega_nu) + np.linalg.norm(omega_c))
    )
    pad = 1.0 + 1e-9
    # cell-midpoint grid: the Riemann sum then matches the box volume
    axes = [
        np.linspace(-m * pad + m * pad / k, m * pad - m * pad / k, k)
        for m in extents
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=-1)
    sigma = coords[:, 0]
    avec = coords[:, 1:-1]
    tau = coords[:, -1]
    horiz = sigma[:, None] * nu_P + avec @ P.horizontal
    e = core.lift_pi(horiz, tau)
    pts = core.group_mul(Q.base_point, e)
    inside = Q.contains(pts)
    slice_ids = np.repeat(np.arange(k), len(coords) // k)[inside]
    cell = float(np.prod([2.0 * m * pad / k for m in extents]))
    return pts[inside], slice_ids, cell


def _eval_field(f, pts):
    """Evaluate a field given as BoxField over V_0 coords or a callable."""
    coords = v0_coords(pts)
    if isinstance(f, BoxField):
        inside = f.contains(coords)
        vals = np.full(len(coords), np.nan)
        if inside.any():
            vals[inside] = f(coords[inside])
        return vals, inside
    vals = np.asarray(f(coords), dtype=float)
    return vals, np.isfinite(vals)


def _affine_design(pts):
    """Columns of vertical affine functions: x_1..x_n, y_1..y_(n-1), 1."""
    n = core.group_index(pts)
    horiz = core.project_pi(pts)
    cols = np.concatenate([horiz[:, : 2 * n - 1], np.ones((len(pts), 1))], axis=1)
    return cols


@dataclass(frozen=True)
class AffineFit:
    coef: np.ndarray  # (2n-1,) horizontal coefficients
    const: float
    residual: float  # weighted L2 norm of f - fit over the box
    rank_deficient: bool
    nodes_used: int

    def __call__(self, pts):
        return _affine_design(np.asarray(pts)) @ np.append(self.coef, self.const)


def _weighted_lstsq(design, vals, weight):
    scale = math.sqrt(weight)
    sol, _, rank, _ = np.linalg.lstsq(scale * design, scale * vals, rcond=None)
    resid_sq = weight * float(((vals - design @ sol) ** 2).sum())
    return sol, resid_sq, rank


def best_affine_fit(f, Q: QuasiBox, nodes_per_axis: int = 10) -> AffineFit:
    """Weighted least squares over chart nodes of Q against vertical affines."""
    P = core.plane_p_w(Q.w)
    pts, _, cell = _chart_nodes(Q, P, nodes_per_axis)
    vals, ok = _eval_field(f, pts)
    pts, vals = pts[ok], vals[ok]
    n = Q.n
    if len(pts) < 2 * n + 1:
        raise ValueError("quasibox meets the domain in too few nodes")
    design = _affine_design(pts)
    sol, resid_sq, rank = _weighted_lstsq(design, vals, cell)
    return AffineFit(
        coef=sol[:-1],
        const=float(sol[-1]),
        residual=math.sqrt(resid_sq),
        rank_deficient=rank < design.shape[1],
        nodes_used=len(pts),
    )


@dataclass(frozen=True)
class SliceAffineFit:
    residual: float
    slice_count: int
    constant_slices: int  # slices with too few nodes, fitted by their mean
    nodes_used: int


def best_slice_affine_fit(
    f, Q: QuasiBox, P: core.VerticalSubspaceBasis | None = None, nodes_per_axis: int = 10
) -> SliceAffineFit:
    """Independent vertical-affine fit on every P-coset slice of Q."""
    if P is None:
        P = core.plane_p_w(Q.w)
    pts, slice_ids, cell = _chart_nodes(Q, P, nodes_per_axis)
    vals, ok = _eval_field(f, pts)
    pts, vals, slice_ids = pts[ok], vals[ok], slice_ids[ok]
    if len(pts) == 0:
        raise ValueError("quasibox does not meet the domain")
    total_sq = 0.0
    constant = 0
    count = 0
    for sid in np.unique(slice_ids):
        sel = slice_ids == sid
        sub_pts, sub_vals = pts[sel], vals[sel]
        count += 1
        if len(sub_pts) < P.dim:
            constant += 1
            mean = sub_vals.mean()
            total_sq += cell * float(((sub_vals - mean) ** 2).sum())
            continue
        design = _affine_design(sub_pts)
        _, resid_sq, _ = _weighted_lstsq(design, sub_vals, cell)
        total_sq += resid_sq
    return SliceAffineFit(math.sqrt(total_sq), count, constant, len(pts))


def best_vertical_fit(f, Q: QuasiBox, nodes_per_axis: int = 10) -> float:
    """Residual against the class of functions constant on Z-cosets."""
    P = core.plane_p_w(Q.w)
    pts, slice_ids, cell = _chart_nodes(Q, P, nodes_per_axis)
    vals, ok = _eval_field(f, pts)
    pts, vals, slice_ids = pts[ok], vals[ok], slice_ids[ok]
    # group nodes by their horizontal position (vertical lines)
    horiz = np.round(core.project_pi(pts) / (1e-9 * max(Q.radius, 1.0)))
    keys = np.unique(horiz, axis=0, return_inverse=True)[1]
    total_sq = 0.0
    for key in np.unique(keys):
        sub = vals[keys == key]
        total_sq += cell * float(((sub - sub.mean()) ** 2).sum())
    return math.sqrt(total_sq)


@dataclass(frozen=True)
class BetaEstimate:
    value: float
    best_plane: VerticalPlane
    sample_count: int
    stderr: float

    def to_json_dict(self, x=None, r=None) -> dict:
        doc = {
            "beta": self.value,
            "stderr": self.stderr,
            "plane": self.best_plane.to_json_dict(),
            "samples": self.sample_count,
        }
        if x is not None:
            doc["x"] = np.asarray(x).tolist()
        if r is not None:
            doc["r"] = float(r)
        return doc


def beta_number(
    G: IntrinsicGraph,
    x,
    r: float,
    samples: int = 2000,
    seed: int = 0,
    pullback_factor: float = 1.5,
    min_accepted: int = 64,
    max_proposal_factor: int = 400,
) -> BetaEstimate:
    """Monte Carlo beta-number of the graph in the gauge ball B(x, r).

    Draws `samples` points of the graph inside the ball by rejection
    over the measure-preserving pullback chart of Q_w(x, K r) (the
    Lebesgue surrogate of the intrinsic surface measure) and solves the
    plane infimum exactly by total least squares.  K starts at
    `pullback_factor` and is enlarged whenever an accepted sample lands
    near the chart boundary, so the chart provably covers the ball.
    """
    x = np.asarray(x, dtype=float)
    if r <= 0:
        raise ValueError("radius must be positive")
    n = G.n
    K = pullback_factor
    for _ in range(8):
        stats = _beta_rejection_pass(
            G, x, r, K, samples, seed, max_proposal_factor
        )
        if stats is not None:
            break
        K *= 1.5
    else:
        raise ValueError("pullback chart refuses to cover the ball")
    pts, n_acc, n_prop, vol = stats
    if n_acc < min_accepted:
        raise ValueError(
            f"too few in-ball samples ({n_acc} < {min_accepted}); "
            "check margins against the graph domain"
        )
    measure = vol * n_acc / n_prop

    horiz = core.project_pi(pts)
    mean = horiz.mean(axis=0)
    centered = horiz - mean
    moment = centered.T @ centered / n_acc
    evals, evecs = np.linalg.eigh(moment)
    degenerate = evals[0] <= 1e-24 * max(evals[-1], 1e-300)
    normal = evecs[:, 0]
    plane = VerticalPlane(normal, float(normal @ mean))
    if degenerate:
        return BetaEstimate(0.0, plane, n_acc, 0.0)

    d_sq = (dist_to_vertical_plane(pts, plane) / r) ** 2
    # per-proposal estimator: accepted carry d^2, rejected carry 0
    mean_q = d_sq.sum() / n_prop
    var_q = (d_sq**2).sum() / n_prop - mean_q**2
    const = vol / r ** (2 * n + 1)
    beta_sq = const * mean_q
    se_beta_sq = const * math.sqrt(max(var_q, 0.0) / n_prop)
    value = math.sqrt(max(beta_sq, 0.0))
    if value > math.sqrt(max(se_beta_sq, 1e-300)):
        stderr = se_beta_sq / (2.0 * value)
    else:
        stderr = math.sqrt(se_beta_sq)
    return BetaEstimate(value, plane, n_acc, stderr)


def graph_ball_measure(
    G: IntrinsicGraph, x, r: float, samples: int = 2000, seed: int = 0,
    pullback_factor: float = 1.5,
) -> float:
    """Surrogate surface measure of B(x, r) on the graph (Lebesgue pushforward)."""
    x = np.asarray(x, dtype=float)
    K = pullback_factor
    for _ in range(8):
        stats = _beta_rejection_pass(G, x, r, K, samples, seed, 400)
        if stats is not None:
            break
        K *= 1.5
    else:
        raise ValueError("pullback chart refuses to cover the ball")
    _, n_acc, n_prop, vol = stats
    return vol * n_acc / n_prop


def _beta_rejection_pass(G, x, r, K, samples, seed, max_proposal_factor):
    """One rejection run; None when the chart boundary is hit."""
    n = G.n
    Q = QuasiBox(G.w, x, K * r)
    rng = rng_stream(seed, 0xBE7A, int(K * 1024))
    batch = max(4 * samples, 4096)
    kept = []
    n_acc = 0
    n_prop = 0
    while n_acc < samples and n_prop < max_proposal_factor * samples:
        proposals = Q.uniform_points(batch, rng)
        n_prop += batch
        coords = v0_coords(proposals)
        in_domain = G.field.contains(coords)
        if not in_domain.any():
            continue
        lifts = G.psi(coords[in_domain])
        inball = core.gauge_dist(lifts, x) <= r
        if not inball.any():
            continue
        accepted = lifts[inball]
        if np.max(Q.quasinorm(proposals[in_domain][inball])) > 0.98:
            return None
        kept.append(accepted)
        n_acc += len(accepted)
    pts = np.concatenate(kept) if kept else np.zeros((0, 2 * n + 1))
    return pts, n_acc, n_prop, Q.volume()


@dataclass(frozen=True)
class BetaParametricReport:
    beta: float
    beta_stderr: float
    parametric: float
    ratio: float
    flagged: bool


def beta_vs_parametric(
    G: IntrinsicGraph,
    x,
    r: float,
    c: float = 2.0,
    samples: int = 2000,
    seed: int = 0,
    nodes_per_axis: int = 10,
) -> BetaParametricReport:
    """Ratio of the set beta-number to its parametric majorant.

    The majorant is r^-(2n+3)/2 times the best-affine residual of the
    parametrizing function over Q_w(x, c r).
    """
    est = beta_number(G, x, r, samples=samples, seed=seed)
    n = G.n
    fit = best_affine_fit(G.field, QuasiBox(G.w, np.asarray(x, float), c * r), nodes_per_axis)
    param = r ** (-(2 * n + 3) / 2) * fit.residual
    # beta on an exactly representable set is float noise, not MC noise
    noise = max(3.0 * est.stderr, 1e-10)
    if param <= 1e-12:
        ratio = 0.0 if est.value <= noise else math.inf
        return BetaParametricReport(est.value, est.stderr, param, ratio, est.value > noise)
    return BetaParametricReport(est.value, est.stderr, param, est.value / param, False)


@dataclass(frozen=True)
class AffineOnPw:
    """Vertical affine function on a coset plane: p -> <a, pi(p)> + b."""

    a: np.ndarray  # (2n,)
    b: float

    def __call__(self, pts):
        return core.project_pi(np.asarray(pts)) @ self.a + self.b

    def lip(self, P: core.VerticalSubspaceBasis) -> float:
        """Lipschitz constant of the restriction to P (gauge metric)."""
        comps = P.horizontal @ self.a
        return float(np.linalg.norm(comps))


@dataclass(frozen=True)
class SwitchAffineResult:
    T_prime: AffineOnPw
    max_defect: float  # worst gauge distance between the two graph copies
    max_coord_defect: float  # worst coordinate-wise distance
    lip_before: float
    lip_after: float


def switch_affine(
    T: AffineOnPw,
    w,
    w_prime,
    grid: int = 6,
    verify_extent: float = 1.0,
    exact: bool = False,
) -> SwitchAffineResult:
    """Rewrite the plane graph of T over (P_w, w) as a graph over w'.

    Requires [w, w'] = 0 and ||w - w'|| Lip(T) < 1/2; then the shear
    M(p) = p delta_T(p)(w - w') is invertible on P_w and
    T' = T o M^-1 parametrizes the same plane with Lip(T') < 2 Lip(T).

    With ``exact=True`` the pointwise verification runs over exact
    rationals (float inputs are dyadic, so this is lossless); the two
    graph copies then agree identically and the reported defects are 0.
    """
    w = core.horizontal_direction(w)
    w_prime = core.horizontal_direction(w_prime)
    if abs(core.zpart(core.commutator(w, w_prime))) > 1e-12:
        raise ValueError("directions must commute")
    P = core.plane_p_w(w)
    sigma = core.project_pi(w) - core.project_pi(w_prime)
    lip_T = T.lip(P)
    if np.linalg.norm(sigma) * lip_T >= 0.5:
        raise ValueError("||w - w'|| Lip(T) must be below 1/2")
    # a-component along sigma controls the shear m(q) = q + (aq + b) sigma
    dot = float(T.a @ sigma)
    if abs(1.0 + dot) < 1e-12:
        raise ValueError("shear map is not invertible")
    T_prime = AffineOnPw(T.a / (1.0 + dot), T.b / (1.0 + dot))

    # pointwise verification on a P_w grid
    coefs = np.linspace(-verify_extent, verify_extent, grid)
    mesh = np.meshgrid(*([coefs] * P.dim), indexing="ij")
    weights = np.stack([m.ravel() for m in mesh], axis=-1)
    p = weights @ P.vectors
    if exact:
        from fractions import Fraction

        p = core.as_exact(p)
        w_x = core.as_exact(w)
        w2_x = core.as_exact(w_prime)
        a_x = core.as_exact(T.a)
        b_x = Fraction(T.b)
        dot_x = (core.as_exact(sigma) * a_x).sum()
        t_vals = core.project_pi(p) @ a_x + b_x
        g1 = core.group_mul(p, core.dilate(t_vals, w_x))
        q = core.group_mul(g1, core.dilate(-core.yn(g1), w2_x))
        t2_vals = (core.project_pi(q) @ a_x + b_x) / (1 + dot_x)
        g2 = core.group_mul(q, core.dilate(t2_vals, w2_x))
        diff = np.abs(g1 - g2)
        coord_defect = float(max(diff.ravel()))
        rel = core.group_mul(core.group_inv(g1), g2)
        gauge_defect = float(core.gauge_norm(core.as_float(rel)).max())
    else:
        g1 = core.group_mul(p, core.dilate(T(p), w))
        q = core.project_along(w_prime, g1)
        g2 = core.group_mul(q, core.dilate(T_prime(q), w_prime))
        coord_defect = float(np.abs(g1 - g2).max())
        gauge_defect = float(core.gauge_dist(g1, g2).max())
    return SwitchAffineResult(
        T_prime, gauge_defect, coord_defect, lip_T, T_prime.lip(P)
    )


@dataclass(frozen=True)
class SaffCompareReport:
    left: float  # slice-affine deficit of f' on Q_w'(x, r)
    right: float  # slice-affine deficit of f on Q_w(x, c r)
    ratio: float
    left_fill: float  # fraction of chart nodes backed by the f' domain


def saff_compare(
    G: IntrinsicGraph,
    w_prime,
    x,
    r: float,
    c: float = 2.0,
    nodes_per_axis: int = 8,
    min_fill: float = 0.6,
    reparametrized: IntrinsicGraph | None = None,
) -> SaffCompareReport:
    """Two-sided slice-affine comparison across parametrizations.

    Both minima run over SAff_{P_w}: the left on Q_{w'}(x, r) for the
    reparametrized function, the right on Q_w(x, c r) for the original.
    """
    from .graphs import reparametrize

    x = np.asarray(x, dtype=float)
    P = core.plane_p_w(G.w)
    Q_left = QuasiBox(core.horizontal_direction(w_prime), x, r)
    if reparametrized is not None:
        G2 = reparametrized
    else:
        # only the part of the graph over Q_w'(x, r) is needed
        n = G.n
        base = Q_left.base_point
        base_coords = v0_coords(base)
        pw2 = core.project_pi(Q_left.w)
        alpha = abs(float(core.yn(x)))
        omega_nu = abs(core.symplectic_form(pw2, Q_left._nu))
        omega_c = np.linalg.norm(
            [core.symplectic_form(pw2, cvec) for cvec in Q_left._P.horizontal]
        )
        z_extent = r**2 + alpha * r * (omega_nu + omega_c)
        z_extent += 0.5 * np.linalg.norm(core.project_pi(base)) * r * math.sqrt(2)
        half = np.append(
            np.full(2 * n - 1, 1.3 * r * math.sqrt(2)), 1.3 * z_extent
        )
        lo = np.maximum(base_coords - half, G.field.lo)
        hi = np.minimum(base_coords + half, G.field.hi)
        G2 = reparametrize(G, w_prime, box=(lo, hi), resolution=12)
    pts, _, _ = _chart_nodes(Q_left, P, nodes_per_axis)
    _, ok = _eval_field(G2.field, pts)
    fill = float(ok.mean()) if len(ok) else 0.0
    if fill < min_fill:
        raise ValueError(
            f"reparametrized domain covers only {fill:.0%} of Q_w'(x, r)"
        )
    left = best_slice_affine_fit(G2.field, Q_left, P, nodes_per_axis).residual
    right = best_slice_affine_fit(
        G.field, QuasiBox(G.w, x, c * r), P, nodes_per_axis
    ).residual
    ratio = left / right if right > 1e-14 else (0.0 if left <= 1e-10 else math.inf)
    return SaffCompareReport(left, right, ratio, fill)


@dataclass(frozen=True)
class BoxQuasiball:
    """Coordinate box around a center: a concrete gauge quasiball.

    halfwidths has 2n horizontal entries and one z entry; the inner
    radius is min(horizontal halfwidths, 2 sqrt(z halfwidth)) and the
    outer radius is the gauge of the corner.
    """

    center: np.ndarray
    halfwidths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "halfwidths", np.asarray(self.halfwidths, dtype=float))
        if np.any(self.halfwidths <= 0):
            raise ValueError("halfwidths must be positive")

    @property
    def inner_radius(self) -> float:
        h = self.halfwidths
        return float(min(h[:-1].min(), 2.0 * math.sqrt(h[-1])))

    @property
    def outer_radius(self) -> float:
        return float(core.gauge_norm(self.halfwidths))

    @property
    def mu(self) -> float:
        return self.outer_radius / self.inner_radius

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        offs = rng.uniform(-self.halfwidths, self.halfwidths, size=(count, len(self.halfwidths)))
        return core.group_mul(self.center, offs)


def lip_of_best_fit(f, U: BoxQuasiball, samples: int = 4000, seed: int = 0) -> float:
    """Ratio Lip(best affine fit) / Lip(f) sampled on a quasiball.

    The fit minimizes the L2 error over uniform samples of U against
    affine functions of H_n; its Lipschitz constant in the gauge metric
    is the Euclidean norm of the horizontal coefficient vector.
    """
    rng = rng_stream(seed, 0x11B)
    pts = U.sample(samples, rng)
    vals = np.asarray(f(pts), dtype=float)
    n = core.group_index(pts)
    design = np.concatenate([core.project_pi(pts), np.ones((len(pts), 1))], axis=1)
    sol, *_ = np.linalg.lstsq(design, vals, rcond=None)
    lip_fit = float(np.linalg.norm(sol[: 2 * n]))
    half = len(pts) // 2
    dist = core.gauge_dist(pts[:half], pts[half : 2 * half])
    keep = dist > 1e-9
    diffs = np.abs(vals[:half][keep] - vals[half : 2 * half][keep])
    lip_f = float((diffs / dist[keep]).max()) if keep.any() else 0.0
    if lip_f < 1e-14:
        return 0.0
    return lip_fit / lip_f
