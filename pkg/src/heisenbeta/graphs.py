"""Intrinsic Lipschitz graphs over V_0 and a library of test families.

A graph is a direction w (horizontal, y_n(w) = 1) together with a scalar
field f on a box of V_0; the graph set is ``{v w^f(v)}``.  V_0-points are
handled in flat coordinates ``(x_1..x_n, y_1..y_(n-1), z)``; the missing
y_n coordinate is identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container, core
from .fields import BoxField, OutsideDomainError

__all__ = [
    "v0_embed",
    "v0_coords",
    "default_lambda_prime",
    "IntrinsicGraph",
    "ConeCheck",
    "GraphFamilySpec",
    "graph_point",
    "check_cone_condition",
    "reparametrize",
    "slice_lipschitz_bound",
    "slice_lipschitz_limit",
    "make_family",
    "dilate_graph",
    "rng_stream",
    "save_graph",
    "load_graph",
]


def v0_embed(coords, n: int):
    """Lift V_0 coordinates (..., 2n) to points of H_n with y_n = 0."""
    coords = np.asarray(coords, dtype=float)
    if coords.shape[-1] != 2 * n:
        raise ValueError(f"expected {2 * n} V_0 coordinates")
    out = np.zeros(coords.shape[:-1] + (2 * n + 1,))
    out[..., : 2 * n - 1] = coords[..., : 2 * n - 1]
    out[..., 2 * n] = coords[..., 2 * n - 1]
    return out


def v0_coords(p, tol: float = 1e-9):
    """Drop the y_n coordinate of points that lie in V_0."""
    p = np.asarray(p, dtype=float)
    n = core.group_index(p)
    if np.any(np.abs(p[..., 2 * n - 1]) > tol * np.maximum(1.0, core.gauge_norm(p))):
        raise ValueError("point does not lie in V_0")
    return np.concatenate([p[..., : 2 * n - 1], p[..., 2 * n :]], axis=-1)


def default_lambda_prime(lam: float) -> float:
    """Cone parameter inside ((1+lam)/2, 1)."""
    return (1.0 + lam) / 2.0 + 0.1 * (1.0 - lam)


def rng_stream(seed: int, *ids: int) -> np.random.Generator:
    """Counter-based generator keyed on (seed, ids): deterministic, splittable."""
    mix = 0xCBF29CE484222325
    for i in ids:
        mix = ((mix ^ (i & 0xFFFFFFFFFFFFFFFF)) * 0x100000001B3) % (1 << 64)
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, mix], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class IntrinsicGraph:
    """Intrinsic graph data: direction, parametrizing field, cone parameters."""

    w: np.ndarray
    field: BoxField
    lam: float
    lam_prime: float

    def __post_init__(self):
        w = core.horizontal_direction(self.w)
        object.__setattr__(self, "w", w)
        if not 0.0 < self.lam < self.lam_prime < 1.0:
            raise ValueError("need 0 < lambda < lambda' < 1")
        if not bool(core.cone_contains(self.lam_prime, w)):
            raise ValueError("direction w must lie in the lambda' cone")
        if self.field.dim != 2 * self.n:
            raise ValueError("field dimension must be 2n")

    @property
    def n(self) -> int:
        return core.group_index(self.w)

    def f(self, coords):
        return self.field(coords)

    def psi(self, coords):
        """Graph map: coords of V_0 -> point v w^f(v) of the graph."""
        coords = np.asarray(coords, dtype=float)
        v = v0_embed(coords, self.n)
        return core.group_mul(v, core.dilate(self.field(coords), self.w))


def graph_point(G: IntrinsicGraph, v):
    """Graph point over v, which may be V_0 coordinates or a V_0 point."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] == 2 * G.n + 1:
        v = v0_coords(v)
    return G.psi(v)


@dataclass(frozen=True)
class ConeCheck:
    passed: bool
    worst_ratio: float
    threshold: float
    pairs: int


def check_cone_condition(
    G: IntrinsicGraph, trials: int = 10_000, seed: int = 0, slack: float = 1.0
) -> ConeCheck:
    """Sampled cone condition: worst |y_n(h)| / ||h|| over graph-point pairs.

    h runs over Psi(u)^-1 Psi(v) for random pairs in the domain; an
    intrinsic lambda-Lipschitz graph keeps every ratio at most lambda.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    fld = G.field
    if np.allclose(fld.hi, fld.lo):
        raise ValueError("degenerate domain")
    rng = rng_stream(seed, 0x0C0E)
    u = rng.uniform(fld.lo, fld.hi, size=(trials, fld.dim))
    v = rng.uniform(fld.lo, fld.hi, size=(trials, fld.dim))
    h = core.group_mul(core.group_inv(G.psi(u)), G.psi(v))
    norms = core.gauge_norm(h)
    keep = norms > 1e-12
    ratios = np.abs(core.yn(h[keep])) / norms[keep]
    worst = float(ratios.max()) if ratios.size else 0.0
    threshold = G.lam * slack
    return ConeCheck(worst <= threshold, worst, threshold, int(keep.sum()))


def reparametrize(
    G: IntrinsicGraph,
    w_prime,
    box: tuple | None = None,
    resolution=None,
    bisection_steps: int = 60,
) -> IntrinsicGraph:
    """Rewrite the same graph set as an intrinsic graph in direction w'.

    For each grid node v' the value f'(v') is the unique t with
    v' (w')^t on the graph; it is found by bisection of
    ``t - f(Pi_w(v' (w')^t))``, whose sign at ``t`` beyond the range of f
    is forced.  Nodes whose coset exits the sampled domain are cropped
    from the output box.  `box`/`resolution` choose the output grid
    (defaults: the input grid).
    """
    w_prime = core.horizontal_direction(w_prime)
    if not bool(core.cone_contains(G.lam_prime, w_prime)):
        raise ValueError("w' must lie in the lambda' cone")
    fld = G.field
    if box is None:
        target = fld
    else:
        lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
        res = resolution or fld.values.shape
        if np.isscalar(res):
            res = (int(res),) * fld.dim
        target = BoxField(lo, hi, np.zeros(tuple(res)))
    nodes = target.nodes()
    pts = v0_embed(nodes, G.n)
    span = float(fld.values.max() - fld.values.min())
    pad = 0.05 * span + 1e-3
    t_lo = np.full(len(nodes), fld.values.min() - pad)
    t_hi = np.full(len(nodes), fld.values.max() + pad)

    def residual(t):
        moved = core.group_mul(pts, core.dilate(t, w_prime))
        proj = core.project_along(G.w, moved)
        coords = v0_coords(proj)
        ok = fld.contains(coords)
        out = np.full(len(nodes), np.nan)
        if ok.any():
            out[ok] = t[ok] - fld(coords[ok])
        return out

    r_lo = residual(t_lo)
    r_hi = residual(t_hi)
    valid = np.isfinite(r_lo) & np.isfinite(r_hi) & (r_lo <= 0.0) & (r_hi >= 0.0)
    for _ in range(bisection_steps):
        mid = 0.5 * (t_lo + t_hi)
        r_mid = residual(mid)
        good = np.isfinite(r_mid)
        valid &= good
        neg = good & (r_mid < 0.0)
        t_lo = np.where(neg, mid, t_lo)
        t_hi = np.where(good & ~neg, mid, t_hi)
    roots = (0.5 * (t_lo + t_hi)).reshape(target.values.shape)
    mask = valid.reshape(target.values.shape)
    if not mask.any():
        raise OutsideDomainError("reparametrization left the sampled domain everywhere")
    new_field = BoxField(target.lo, target.hi, np.where(mask, roots, 0.0))
    if not mask.all():
        new_field = new_field.crop_to_valid(mask)
    return IntrinsicGraph(w_prime, new_field, G.lam, G.lam_prime)


def slice_lipschitz_limit(lam: float, lam_prime: float) -> float:
    """Lipschitz constant of f on P_w cosets forced by the cone condition."""
    return lam * lam_prime / (lam_prime - lam)


def slice_lipschitz_bound(
    G: IntrinsicGraph, g_coords, trials: int = 2000, seed: int = 0
) -> float:
    """Max sampled difference quotient of f along the coset g P_w."""
    P = core.plane_p_w(G.w)
    n = G.n
    g_pt = v0_embed(np.asarray(g_coords, dtype=float), n)
    rng = rng_stream(seed, 0x51)
    half = (G.field.hi - G.field.lo) / 2.0
    scale = float(half[: 2 * n - 1].min())
    k = P.dim  # coefficients on (C_w basis..., Z)
    coef = rng.uniform(-1.0, 1.0, size=(trials, k))
    coef[:, :-1] *= scale
    coef[:, -1] *= scale**2
    offsets = np.einsum("tk,kc->tc", coef, P.vectors)
    pts = core.group_mul(g_pt, offsets)
    coords = v0_coords(pts)
    inside = G.field.contains(coords)
    coords = coords[inside]
    if len(coords) < 2:
        raise ValueError("slice does not meet the sampled domain")
    pts = v0_embed(coords, n)
    vals = G.field(coords)
    m = len(coords) // 2
    a, b = pts[:m], pts[m : 2 * m]
    dist = core.gauge_dist(a, b)
    keep = dist > 1e-9
    quot = np.abs(vals[:m][keep] - vals[m : 2 * m][keep]) / dist[keep]
    return float(quot.max()) if quot.size else 0.0


@dataclass(frozen=True)
class GraphFamilySpec:
    """Recipe for a reproducible test graph.

    feature_scale controls where the family has geometric structure:
    the bump width, or the correlation length of the random field.
    Default: 0.45 of the box halfwidth.
    """

    family: str  # vertical-plane | smooth-bump | random-lipschitz
    n: int
    lam: float
    seed: int
    resolution: int
    box_halfwidth: float = 4.0
    lam_prime: float | None = None
    feature_scale: float | None = None
    z_aspect: float = 1.0  # z halfwidth = z_aspect * box_halfwidth^2

    def __post_init__(self):
        if self.family not in ("vertical-plane", "smooth-bump", "random-lipschitz"):
            raise ValueError(f"unknown family {self.family!r}")
        r = self.resolution
        if r < 8 or (r & (r - 1)) != 0:
            raise ValueError("resolution must be a power of two >= 8")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must be in (0,1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.feature_scale is not None and self.feature_scale <= 0:
            raise ValueError("feature_scale must be positive")
        if self.z_aspect <= 0:
            raise ValueError("z_aspect must be positive")


def _box_for(spec: GraphFamilySpec):
    n, B = spec.n, spec.box_halfwidth
    lo = np.array([-B] * (2 * n - 1) + [-spec.z_aspect * B * B])
    hi = -lo
    return lo, hi


def _scaled_graph(spec: GraphFamilySpec, base_values: np.ndarray, scale: float):
    lo, hi = _box_for(spec)
    lam_prime = spec.lam_prime or default_lambda_prime(spec.lam)
    w = core.basis_vector("Y", spec.n, spec.n)
    return IntrinsicGraph(w, BoxField(lo, hi, scale * base_values), spec.lam, lam_prime)


def _fit_amplitude(spec: GraphFamilySpec, base_values: np.ndarray) -> IntrinsicGraph:
    """Bisect the amplitude so the sampled cone ratio lands just under lambda."""
    target_lo, target_hi = 0.85 * spec.lam, 0.96 * spec.lam
    check_seed = spec.seed ^ 0x5CA1E
    trials = 4000

    def worst(scale):
        g = _scaled_graph(spec, base_values, scale)
        return check_cone_condition(g, trials=trials, seed=check_seed).worst_ratio

    lo, hi = 0.0, 1.0
    steps = 0
    while worst(hi) < target_lo:
        hi *= 2.0
        steps += 1
        if steps > 60:
            raise RuntimeError("amplitude rescaling failed to converge (expansion)")
    scale = hi
    for _ in range(60):
        r = worst(scale)
        if target_lo <= r <= target_hi:
            break
        if r > target_hi:
            hi = scale
        else:
            lo = scale
        scale = 0.5 * (lo + hi)
    else:
        raise RuntimeError("amplitude rescaling failed to converge in 60 steps")
    graph = _scaled_graph(spec, base_values, scale)
    # safety margin against fresh sample draws
    for _ in range(20):
        probe = check_cone_condition(graph, trials=20_000, seed=check_seed ^ 0xF00D)
        if probe.worst_ratio <= 0.98 * spec.lam:
            return graph
        scale *= 0.9
        graph = _scaled_graph(spec, base_values, scale)
    raise RuntimeError("amplitude rescaling failed to stabilize")


def make_family(spec: GraphFamilySpec) -> IntrinsicGraph:
    """Build a deterministic test graph of the requested family."""
    n = spec.n
    lo, hi = _box_for(spec)
    res = [spec.resolution] * (2 * n)
    axes = [np.linspace(lo[i], hi[i], res[i]) for i in range(2 * n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=-1)
    rng = rng_stream(spec.seed, 0xFA)

    feature = spec.feature_scale or 0.45 * spec.box_halfwidth
    if spec.family == "vertical-plane":
        slope = rng.standard_normal(2 * n - 1)
        gamma = 0.1 * spec.box_halfwidth * rng.standard_normal()
        base = coords[:, : 2 * n - 1] @ slope + gamma
    elif spec.family == "smooth-bump":
        rho = core.gauge_norm(v0_embed(coords, n))
        base = np.sign(rng.standard_normal() + 1e-9) * np.exp(-((rho / feature) ** 2))
    else:  # random-lipschitz
        coarse_res = int(np.clip(spec.box_halfwidth / feature * 2, 4, spec.resolution))
        coarse = BoxField(
            lo, hi, rng.standard_normal(size=(coarse_res,) * (2 * n))
        )
        base = coarse(coords)
    base = base.reshape(res)
    return _fit_amplitude(spec, base)


def dilate_graph(G: IntrinsicGraph, t: float) -> IntrinsicGraph:
    """Image of the graph under delta_t; box and values scale covariantly."""
    if t <= 0:
        raise ValueError("dilation factor must be positive")
    n = G.n
    factors = np.array([t] * (2 * n - 1) + [t * t])
    return IntrinsicGraph(G.w, G.field.scaled(t, factors), G.lam, G.lam_prime)


def save_graph(path, G: IntrinsicGraph, form: str = "binary") -> None:
    header = {
        "kind": "graph",
        "n": G.n,
        "w": G.w.tolist(),
        "lambda": G.lam,
        "lambda_prime": G.lam_prime,
        "lo": G.field.lo.tolist(),
        "hi": G.field.hi.tolist(),
        "shape": list(G.field.values.shape),
    }
    writer = container.write_binary if form == "binary" else container.write_json
    writer(path, header, G.field.values)


def load_graph(path, form: str = "binary") -> IntrinsicGraph:
    reader = container.read_binary if form == "binary" else container.read_json
    header, values = reader(path)
    if header.get("kind") != "graph":
        raise ValueError(f"{path}: container holds {header.get('kind')!r}, not a graph")
    field = BoxField(np.array(header["lo"]), np.array(header["hi"]), values)
    return IntrinsicGraph(
        np.array(header["w"]), field, header["lambda"], header["lambda_prime"]
    )
