"""Experiment harness: Carleson sums of beta-numbers, theta slices, calibration.

The Carleson experiment discretizes the multiscale integral of beta^2
over a ball exactly the way the dyadic reduction does: maximal nets at
scales R 2^-k, one beta-evaluation per net point per scale, Voronoi cell
measures from a surrogate sample pool, and a log-scale weight ln 2 per
dyadic level.  Everything is driven by counter-based RNG streams keyed
on (seed, scale, center), so reports are bitwise reproducible.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import core
from .beta import QuasiBox, beta_number, _beta_rejection_pass
from .graphs import (
    GraphFamilySpec,
    IntrinsicGraph,
    check_cone_condition,
    make_family,
    rng_stream,
    v0_coords,
)

__all__ = [
    "RunConfig",
    "CarlesonReport",
    "ThetaReport",
    "CalibrationResult",
    "calibrate_c",
    "run_carleson",
    "run_theta_slices",
    "farthest_point_net",
]

CONFIG_KEYS = {
    "n": int,
    "family": str,
    "lambda": float,
    "resolution": int,
    "box_halfwidth": float,
    "radius_max": float,
    "scales": int,
    "centers": int,
    "samples": int,
    "seed": int,
    "empirical_c": float,
    "output": str,
    "csv": str,
}


@dataclass(frozen=True)
class RunConfig:
    family: GraphFamilySpec
    radius_max: float = 1.0
    num_scales: int = 5
    centers_per_scale: int = 40
    samples_per_beta: int = 2000
    seed: int = 0
    empirical_c: float | None = None
    output_path: str | None = None

    def __post_init__(self):
        if self.num_scales < 3:
            raise ValueError("need at least 3 scales")
        if self.radius_max <= 0:
            raise ValueError("radius_max must be positive")
        if self.family.n < 1:
            raise ValueError("group index must be >= 1")

    @property
    def n(self) -> int:
        return self.family.n

    def to_flat_dict(self) -> dict:
        doc = {
            "n": self.family.n,
            "family": self.family.family,
            "lambda": self.family.lam,
            "resolution": self.family.resolution,
            "box_halfwidth": self.family.box_halfwidth,
            "radius_max": self.radius_max,
            "scales": self.num_scales,
            "centers": self.centers_per_scale,
            "samples": self.samples_per_beta,
            "seed": self.seed,
        }
        if self.empirical_c is not None:
            doc["empirical_c"] = self.empirical_c
        if self.output_path is not None:
            doc["output"] = self.output_path
        return doc

    @staticmethod
    def from_flat_dict(doc: dict) -> "RunConfig":
        unknown = set(doc) - set(CONFIG_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        fam = GraphFamilySpec(
            family=doc.get("family", "smooth-bump"),
            n=int(doc.get("n", 2)),
            lam=float(doc.get("lambda", 0.4)),
            seed=int(doc.get("seed", 0)),
            resolution=int(doc.get("resolution", 16)),
            box_halfwidth=float(
                doc.get("box_halfwidth", 8.0 * float(doc.get("radius_max", 1.0)))
            ),
        )
        return RunConfig(
            family=fam,
            radius_max=float(doc.get("radius_max", 1.0)),
            num_scales=int(doc.get("scales", 5)),
            centers_per_scale=int(doc.get("centers", 40)),
            samples_per_beta=int(doc.get("samples", 2000)),
            seed=int(doc.get("seed", 0)),
            empirical_c=(
                float(doc["empirical_c"]) if "empirical_c" in doc else None
            ),
            output_path=doc.get("output"),
        )


def farthest_point_net(points: np.ndarray, epsilon: float, start: int = 0):
    """Greedy farthest-first maximal epsilon-net over a sample pool.

    Returns indices into `points`; every pool point lies within epsilon
    of some chosen point, and chosen points are epsilon-separated.
    """
    m = len(points)
    chosen = [start]
    dist = core.gauge_dist(points, points[start])
    while True:
        idx = int(np.argmax(dist))
        if dist[idx] < epsilon or len(chosen) >= m:
            break
        chosen.append(idx)
        dist = np.minimum(dist, core.gauge_dist(points, points[idx]))
    return np.array(chosen, dtype=int)


@dataclass(frozen=True)
class CalibrationResult:
    c: float
    per_radius: dict  # radius -> max c over sampled centers
    pairs: int

    def to_json_dict(self) -> dict:
        return {
            "c": self.c,
            "per_radius": {str(k): v for k, v in self.per_radius.items()},
            "pairs": self.pairs,
        }


def calibrate_c(
    G: IntrinsicGraph,
    radii=(0.25, 1.0, 4.0),
    centers: int = 6,
    samples: int = 1500,
    seed: int = 0,
    c_max: float = 64.0,
) -> CalibrationResult:
    """Smallest c making both quasibox inclusions hold on sampled (g, r).

    Outer inclusion: the largest quasibox coordinate over lifted in-ball
    samples.  Inner inclusion: bisection over the shrink factor rho such
    that all chart nodes of Q_w(g, rho r) lift into B(g, r).
    """
    n = G.n
    fld = G.field
    per_radius: dict = {}
    pairs = 0
    for r in radii:
        worst = 1.0
        for ci in range(centers):
            rng = rng_stream(seed, 0xCA1, int(r * 4096), ci)
            v = rng.uniform(fld.lo / 4.0, fld.hi / 4.0)
            x = G.psi(v)
            pairs += 1
            # outer: samples of B(x, r) on the graph, mapped through Pi_w
            stats = None
            K = 1.5
            for _ in range(8):
                stats = _beta_rejection_pass(G, x, r, K, samples, seed + ci, 400)
                if stats is not None:
                    break
                K *= 1.5
            if stats is None or stats[1] < 32:
                raise ValueError(
                    f"cannot sample B(x,{r}) on the graph; enlarge the domain"
                )
            pts = stats[0]
            Q_unit = QuasiBox(G.w, x, r)
            proj = core.project_along(G.w, pts)
            c_outer = float(Q_unit.quasinorm(proj).max())

            # inner: largest rho <= 1 whose chart nodes all lift into the ball
            d = 2 * n - 2
            grid = np.linspace(-1.0, 1.0, 4)
            s_axis, t_axis = np.meshgrid(grid, grid, indexing="ij")
            s_axis, t_axis = s_axis.ravel(), t_axis.ravel()
            if d:
                raw = rng_stream(seed, 0x1AD, ci).standard_normal((len(s_axis), d))
                sphere = raw / np.linalg.norm(raw, axis=1, keepdims=True)
                pdirs = np.concatenate([sphere, 0.5 * sphere, np.zeros_like(sphere)])
            else:
                pdirs = np.zeros((3 * len(s_axis), 0))
            s_all = np.tile(s_axis, 3)
            t_all = np.tile(t_axis, 3)

            def nodes_lift_inside(rho: float) -> bool:
                Q = QuasiBox(G.w, x, rho * r)
                q = Q.chart_point(s_all, pdirs, t_all)
                coords = v0_coords(q)
                if not fld.contains(coords).all():
                    return False
                lifts = G.psi(coords)
                return bool((core.gauge_dist(lifts, x) <= r).all())

            lo_rho, hi_rho = 0.0, 1.0
            if nodes_lift_inside(1.0):
                rho_star = 1.0
            else:
                for _ in range(40):
                    mid = 0.5 * (lo_rho + hi_rho)
                    if nodes_lift_inside(mid):
                        lo_rho = mid
                    else:
                        hi_rho = mid
                rho_star = max(lo_rho, 1e-6)
            worst = max(worst, c_outer, 1.0 / rho_star)
        per_radius[float(r)] = worst
    c = max(per_radius.values())
    if c > c_max:
        raise ValueError(
            f"calibrated c = {c:.2f} exceeds {c_max}: cone condition or "
            "metric slack problem"
        )
    return CalibrationResult(c, per_radius, pairs)


@dataclass(frozen=True)
class CarlesonReport:
    per_scale: list  # (k, r_k, contribution to I(R_max))
    I_R: dict  # R -> I(R)
    I_R_stderr: dict  # R -> Monte Carlo standard error of I(R)
    exponent_fit: float
    exponent_stderr: float
    ratio_envelope: float
    total_measure: float
    empirical_c: float
    config: dict
    warnings: list

    def to_json_dict(self) -> dict:
        return {
            "per_scale": [
                {"k": k, "r": r, "contribution": c} for (k, r, c) in self.per_scale
            ],
            "I_R": {str(k): v for k, v in self.I_R.items()},
            "I_R_stderr": {str(k): v for k, v in self.I_R_stderr.items()},
            "exponent_fit": self.exponent_fit,
            "exponent_stderr": self.exponent_stderr,
            "ratio_envelope": self.ratio_envelope,
            "total_measure": self.total_measure,
            "empirical_c": self.empirical_c,
            "config": self.config,
            "warnings": self.warnings,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("k,r,contribution\n")
            for k, r, c in self.per_scale:
                fh.write(f"{k},{r!r},{c!r}\n")


def _surrogate_pool(G, x0, R, count, seed):
    """Sample pool of graph points in B(x0, R) plus the total measure."""
    K = 1.5
    for _ in range(8):
        stats = _beta_rejection_pass(G, x0, R, K, count, seed, 400)
        if stats is not None and stats[1] >= count:
            break
        if stats is None:
            K *= 1.5
            continue
        break
    else:
        raise ValueError("cannot build the surrogate pool")
    pts, n_acc, n_prop, vol = stats
    return pts[:count], vol * n_acc / n_prop


def run_carleson(cfg: RunConfig) -> CarlesonReport:
    """Multiscale Carleson sum of beta^2 over a ball of the graph."""
    G = make_family(cfg.family)
    cone = check_cone_condition(G, trials=4000, seed=cfg.seed ^ 0xC0)
    if not cone.passed:
        raise ValueError("family graph failed its cone check")
    n = cfg.n
    notes = []
    if cfg.empirical_c is not None:
        c_emp = cfg.empirical_c
    else:
        cal = calibrate_c(
            G,
            radii=(cfg.radius_max / 2, cfg.radius_max),
            centers=4,
            samples=800,
            seed=cfg.seed ^ 0xCAFE,
        )
        c_emp = cal.c
    R = cfg.radius_max
    x0 = G.psi(np.zeros(2 * n))
    pool, total_measure = _surrogate_pool(
        G, x0, R, max(2048, 8 * cfg.centers_per_scale), cfg.seed ^ 0x900
    )
    pool_dist = core.gauge_dist(pool, x0)

    fld = G.field
    per_scale = []
    # per scale: (r_k, owner array over the pool, per-center beta values)
    scale_data = []
    for k in range(cfg.num_scales):
        r_k = R * 2.0**-k
        net_idx = farthest_point_net(pool, r_k, start=int(np.argmin(pool_dist)))
        # erode: keep centers whose pullback stays c r_k inside the box
        margin = np.append(
            np.full(2 * n - 1, c_emp * r_k), (c_emp * r_k) ** 2
        )
        coords = v0_coords(core.project_along(G.w, pool[net_idx]))
        ok = np.all(
            (coords >= fld.lo + margin) & (coords <= fld.hi - margin), axis=1
        )
        kept = net_idx[ok]
        if len(kept) == 0:
            warnings.warn(f"scale {k}: no centers after margin erosion")
            notes.append(f"scale {k} dropped: no centers after margin erosion")
            continue
        if len(kept) > cfg.centers_per_scale:
            kept = kept[: cfg.centers_per_scale]
        centers = pool[kept]
        owner = np.argmin(
            np.stack([core.gauge_dist(pool, c) for c in centers]), axis=0
        )
        betas = np.empty(len(kept))
        beta_ses = np.empty(len(kept))
        for i in range(len(kept)):
            est = beta_number(
                G,
                centers[i],
                r_k,
                samples=cfg.samples_per_beta,
                seed=_mix_seed(cfg.seed, k, i),
            )
            betas[i] = est.value
            beta_ses[i] = est.stderr
        counts = np.bincount(owner, minlength=len(kept))
        cell_measure = total_measure * counts / len(pool)
        contrib = float((betas**2 * cell_measure).sum() * math.log(2.0))
        per_scale.append((k, r_k, contrib))
        scale_data.append((k, r_k, centers, betas, beta_ses))

    I_R = {}
    I_R_err = {}
    for R_eval in (R / 4.0, R / 2.0, R):
        if R_eval == R:
            pool_R, measure_R = pool, total_measure
        else:
            pool_R, measure_R = _surrogate_pool(
                G, x0, R_eval, 2048, _mix_seed(cfg.seed, 0x11, int(R / R_eval))
            )
        total = 0.0
        var = 0.0
        for k, r_k, centers, betas, beta_ses in scale_data:
            if r_k > R_eval * (1 + 1e-12):
                continue
            owner_R = np.argmin(
                np.stack([core.gauge_dist(pool_R, c) for c in centers]), axis=0
            )
            counts = np.bincount(owner_R, minlength=len(betas))
            cell_measure = measure_R * counts / len(pool_R)
            total += float((betas**2 * cell_measure).sum() * math.log(2.0))
            var += float(
                ((2.0 * betas * beta_ses * cell_measure * math.log(2.0)) ** 2).sum()
            )
        I_R[R_eval] = total
        I_R_err[R_eval] = math.sqrt(var)

    logs = sorted((math.log(RE), math.log(max(val, 1e-300))) for RE, val in I_R.items())
    xs = np.array([a for a, _ in logs])
    ys = np.array([b for _, b in logs])
    A = np.stack([xs, np.ones_like(xs)], axis=1)
    sol, *_ = np.linalg.lstsq(A, ys, rcond=None)
    slope = float(sol[0])
    resid = ys - A @ sol
    dof = max(len(xs) - 2, 1)
    stderr = float(
        math.sqrt((resid**2).sum() / dof / ((xs - xs.mean()) ** 2).sum())
    )
    envelope = max(val / RE ** (2 * n + 1) for RE, val in I_R.items())
    return CarlesonReport(
        per_scale=per_scale,
        I_R=I_R,
        I_R_stderr=I_R_err,
        exponent_fit=slope,
        exponent_stderr=stderr,
        ratio_envelope=envelope,
        total_measure=total_measure,
        empirical_c=c_emp,
        config=cfg.to_flat_dict(),
        warnings=notes,
    )


def _mix_seed(seed, k, i):
    return (seed * 1_000_003 + k * 7919 + i * 104729) % (1 << 62)


@dataclass(frozen=True)
class ThetaReport:
    per_slice: list  # (offset, integral, bound, ratio)
    max_ratio: float
    scale_count: int
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "per_slice": [
                {"offset": o, "integral": i, "bound": b, "ratio": rt}
                for (o, i, b, rt) in self.per_slice
            ],
            "max_ratio": self.max_ratio,
            "scale_count": self.scale_count,
            "config": self.config,
        }


def _slice_embed(u_offset: float, xi: np.ndarray, n: int) -> np.ndarray:
    """Map H_(n-1) coordinates into the x_n = u coset of P inside V_0."""
    m = n - 1
    count = xi.shape[0]
    pts = np.zeros((count, 2 * n + 1))
    pts[:, :m] = xi[:, :m]  # X_1..X_(n-1)
    pts[:, n : n + m] = xi[:, m : 2 * m]  # Y_1..Y_(n-1)
    pts[:, -1] = xi[:, -1]  # Z
    shift = np.zeros(2 * n + 1)
    shift[n - 1] = u_offset  # X_n offset picks the coset
    return core.group_mul(shift, pts)


def _gauge_ball_samples_hm(m: int, rho: float, count: int, rng) -> np.ndarray:
    """Uniform samples of the gauge ball of radius rho in H_m coordinates."""
    out = np.empty((count, 2 * m + 1))
    todo = np.arange(count)
    while todo.size:
        cand = np.empty((todo.size, 2 * m + 1))
        cand[:, : 2 * m] = rng.uniform(-rho, rho, size=(todo.size, 2 * m))
        cand[:, -1] = rng.uniform(-(rho**2) / 4.0, rho**2 / 4.0, size=todo.size)
        ok = core.gauge_norm(cand) <= rho
        out[todo[ok]] = cand[ok]
        todo = todo[~ok]
    return out


def run_theta_slices(
    cfg: RunConfig,
    slice_count: int = 10,
    scale_count: int = 6,
    x_samples: int = 32,
    fit_samples: int = 256,
    slice_radius: float | None = None,
) -> ThetaReport:
    """Dorronsoro-type check on P_w coset slices of the graph.

    Each slice is a copy of H_(n-1); the double integral of the affine
    approximation functional over scales and positions is compared to
    Lip^2 R^(2m+2) per slice.
    """
    G = make_family(cfg.family)
    n = cfg.n
    if n < 2:
        raise ValueError("theta slices need n >= 2")
    m = n - 1
    fld = G.field
    half = float(fld.hi[0])
    R_s = slice_radius if slice_radius is not None else half / 6.0
    if R_s * 3.0 > half:
        raise ValueError("slice radius too large for the sampled domain")
    rng_off = rng_stream(cfg.seed, 0x71E7)
    offsets = rng_off.uniform(-half / 2.0, half / 2.0, size=slice_count)

    per_slice = []
    for si, u in enumerate(offsets):
        def F(xi):
            pts = _slice_embed(u, xi, n)
            return fld(v0_coords(pts))

        # sampled Lipschitz constant of the slice function
        rng = rng_stream(cfg.seed, 0x71E8, si)
        pairs = _gauge_ball_samples_hm(m, 2.0 * R_s, 2048, rng)
        halfc = len(pairs) // 2
        d = core.gauge_dist(pairs[:halfc], pairs[halfc : 2 * halfc])
        keep = d > 1e-9
        vals = F(pairs)
        lip = float(
            (np.abs(vals[:halfc][keep] - vals[halfc : 2 * halfc][keep]) / d[keep]).max()
        )

        integral = 0.0
        xs = _gauge_ball_samples_hm(m, R_s, x_samples, rng)
        ball_vol_R = _UNIT_BALL_VOL[m] * R_s ** (2 * m + 2)
        for k in range(scale_count):
            rho = R_s * 2.0**-k
            theta_sum = 0.0
            for xj in xs:
                theta_sum += _theta_affine(F, xj, rho, m, fit_samples, rng)
            integral += math.log(2.0) * ball_vol_R / len(xs) * theta_sum
        bound = max(lip, 1e-12) ** 2 * R_s ** (2 * m + 2)
        per_slice.append((float(u), integral, bound, integral / bound))
    max_ratio = max(rt for *_, rt in per_slice)
    return ThetaReport(per_slice, max_ratio, scale_count, cfg.to_flat_dict())


class _UnitBallVolumes:
    """Gauge unit-ball volumes of H_m, computed once by quadrature."""

    def __init__(self):
        self._cache = {}

    def __getitem__(self, m: int) -> float:
        if m not in self._cache:
            rng = np.random.Generator(np.random.Philox(key=np.uint64(0xB011)))
            count = 200_000
            cand = np.empty((count, 2 * m + 1))
            cand[:, : 2 * m] = rng.uniform(-1, 1, size=(count, 2 * m))
            cand[:, -1] = rng.uniform(-0.25, 0.25, size=count)
            frac = float((core.gauge_norm(cand) <= 1.0).mean())
            self._cache[m] = 2 ** (2 * m) * 0.5 * frac
        return self._cache[m]


_UNIT_BALL_VOL = _UnitBallVolumes()


def _theta_affine(F, center, rho, m, fit_samples, rng):
    """rho^-(2m+4) inf_Aff ||F - g||^2 over the gauge ball at center."""
    offs = _gauge_ball_samples_hm(m, rho, fit_samples, rng)
    pts = core.group_mul(center, offs)
    vals = F(pts)
    design = np.concatenate([pts[:, : 2 * m], np.ones((len(pts), 1))], axis=1)
    sol, *_ = np.linalg.lstsq(design, vals, rcond=None)
    resid_sq = float(((vals - design @ sol) ** 2).mean())
    ball_vol = _UNIT_BALL_VOL[m] * rho ** (2 * m + 2)
    return rho ** (-2 * m - 4) * resid_sq * ball_vol
