"""Haar tensor wavelets on [-1,1]^d and the slice-projection identities.

On a dyadic grid of 2^J cells per axis (midpoint convention) the Haar
system through level J is a complete orthogonal basis of grid functions,
so every identity below holds to float precision with no truncation
term.  The support decomposition splits a function by the set of axes
its wavelet factors genuinely depend on; the projection identities
relate the affine deficit to the per-axis slice-affine deficits with the
exact constants d-1, d-2 and d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import container, core

__all__ = [
    "haar_1d",
    "haar_matrix",
    "haar_norms_sq",
    "GridFunction",
    "HaarCoeffs",
    "SupportDecomposition",
    "analyze",
    "synthesize",
    "decompose_by_support",
    "project_affine",
    "project_slice_affine",
    "IdentityReport",
    "verify_identities",
    "SlicingReduction",
    "slicing_vertical_reduce",
    "save_gridfn",
    "load_gridfn",
]


def _index_to_level(idx: int) -> int:
    """Packed basis index -> level j (idx 0 is the constant)."""
    return 0 if idx == 0 else idx.bit_length()


def haar_1d(j: int, k: int):
    """The 1-d Haar step function with level j and translation k.

    Level 0 is the constant 1; for j > 0 the function is -1 then +1 on
    the two halves of an interval of width 2^(2-j), and 0 elsewhere.
    """
    if j < 0 or not 0 <= k < max(1, 2 ** (j - 1)):
        raise ValueError(f"invalid Haar index (j={j}, k={k})")
    if j == 0:
        return lambda t: np.ones_like(np.asarray(t, dtype=float))
    w = 2.0 ** (-j + 1)
    a = 2 * k * w - 1.0
    m = a + w
    b = a + 2 * w

    def psi(t):
        t = np.asarray(t, dtype=float)
        return np.where(
            (t >= a) & (t < m), -1.0, np.where((t >= m) & (t < b), 1.0, 0.0)
        )

    return psi


def _midpoints(J: int) -> np.ndarray:
    cells = 2**J
    return -1.0 + (np.arange(cells) + 0.5) * (2.0 / cells)


def haar_matrix(J: int) -> np.ndarray:
    """Rows: the 2^J Haar functions through level J at cell midpoints."""
    cells = 2**J
    t = _midpoints(J)
    H = np.empty((cells, cells))
    H[0] = 1.0
    for idx in range(1, cells):
        j = _index_to_level(idx)
        k = idx - 2 ** (j - 1)
        H[idx] = haar_1d(j, k)(t)
    return H


def haar_norms_sq(J: int) -> np.ndarray:
    """Squared L2([-1,1]) norms per packed index (2 at level 0, 2^(2-j) after)."""
    out = np.empty(2**J)
    for idx in range(2**J):
        j = _index_to_level(idx)
        out[idx] = 2.0 if j == 0 else 2.0 ** (-j + 2)
    return out


@dataclass(frozen=True)
class GridFunction:
    d: int
    J: int
    values: np.ndarray  # shape (2^J,) * d, cell midpoints of [-1,1]^d

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.d < 1 or self.J < 1:
            raise ValueError("need d >= 1 and J >= 1")
        if v.shape != (2**self.J,) * self.d:
            raise ValueError(f"values must have shape {(2**self.J,) * self.d}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")

    @property
    def cell_volume(self) -> float:
        return (2.0 / 2**self.J) ** self.d

    def norm_sq(self) -> float:
        return float((self.values**2).sum()) * self.cell_volume

    def inner(self, other: "GridFunction") -> float:
        return float((self.values * other.values).sum()) * self.cell_volume

    @staticmethod
    def from_callable(fn, d: int, J: int) -> "GridFunction":
        t = _midpoints(J)
        mesh = np.meshgrid(*([t] * d), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = np.asarray(fn(pts), dtype=float).reshape((2**J,) * d)
        return GridFunction(d, J, vals)

    @staticmethod
    def random(d: int, J: int, rng: np.random.Generator) -> "GridFunction":
        return GridFunction(d, J, rng.standard_normal((2**J,) * d))


def _apply_axis(arr: np.ndarray, M: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(arr, axis, 0)
    out = np.tensordot(M, moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class HaarCoeffs:
    """Tensor Haar coefficients in packed index order per axis."""

    d: int
    J: int
    coeffs: np.ndarray

    def __getitem__(self, jk) -> float:
        j, k = jk
        idx = tuple(
            0 if ji == 0 else 2 ** (ji - 1) + ki for ji, ki in zip(j, k)
        )
        for ji, ki in zip(j, k):
            if ji < 0 or ji > self.J or not 0 <= ki < max(1, 2 ** (ji - 1)):
                raise ValueError(f"invalid index (j={j}, k={k})")
        return float(self.coeffs[idx])

    def basis_norm_sq(self) -> np.ndarray:
        """||Psi_(j,k)||^2 for every packed coefficient position."""
        n1 = haar_norms_sq(self.J)
        out = np.ones((2**self.J,) * self.d)
        for ax in range(self.d):
            shape = [1] * self.d
            shape[ax] = -1
            out = out * n1.reshape(shape)
        return out

    def support_count(self) -> np.ndarray:
        """|supp(j)| for every packed coefficient position."""
        active = (np.arange(2**self.J) >= 1).astype(int)
        out = np.zeros((2**self.J,) * self.d, dtype=int)
        for ax in range(self.d):
            shape = [1] * self.d
            shape[ax] = -1
            out = out + active.reshape(shape)
        return out


def analyze(g: GridFunction) -> HaarCoeffs:
    """Haar coefficients c = <g, Psi> / <Psi, Psi>, exact on the grid."""
    H = haar_matrix(g.J)
    cellwidth = 2.0 / 2**g.J
    A = (H * cellwidth) / haar_norms_sq(g.J)[:, None]
    c = g.values
    for ax in range(g.d):
        c = _apply_axis(c, A, ax)
    return HaarCoeffs(g.d, g.J, c)


def synthesize(c: HaarCoeffs) -> GridFunction:
    """Evaluate the coefficient sum back onto the midpoint grid."""
    H = haar_matrix(c.J)
    v = c.coeffs
    for ax in range(c.d):
        v = _apply_axis(v, H.T, ax)
    return GridFunction(c.d, c.J, v)


@dataclass(frozen=True)
class SupportDecomposition:
    f_S: dict  # frozenset of axes -> GridFunction
    g: list  # g[i] collects the |S| = i parts

    def total(self) -> GridFunction:
        d = self.g[0].d
        J = self.g[0].J
        acc = np.zeros_like(self.g[0].values)
        for part in self.g:
            acc = acc + part.values
        return GridFunction(d, J, acc)


def level_parts(c: HaarCoeffs, upto: int) -> list:
    """g_0..g_upto without materializing every subset part."""
    count = c.support_count()
    return [
        synthesize(HaarCoeffs(c.d, c.J, np.where(count == i, c.coeffs, 0.0)))
        for i in range(upto + 1)
    ]


def decompose_by_support(c: HaarCoeffs) -> SupportDecomposition:
    """Split by the exact set of axes each tensor factor depends on."""
    d, J = c.d, c.J
    active = np.arange(2**J) >= 1
    axis_masks = []
    for ax in range(d):
        shape = [1] * d
        shape[ax] = -1
        axis_masks.append(active.reshape(shape))
    f_S = {}
    g_parts = [np.zeros((2**J,) * d) for _ in range(d + 1)]
    for size in range(d + 1):
        for S in combinations(range(d), size):
            mask = np.ones((2**J,) * d, dtype=bool)
            for ax in range(d):
                mask = mask & (axis_masks[ax] if ax in S else ~axis_masks[ax])
            part = synthesize(HaarCoeffs(d, J, np.where(mask, c.coeffs, 0.0)))
            f_S[frozenset(S)] = part
            g_parts[size] = g_parts[size] + part.values
    g = [GridFunction(d, J, v) for v in g_parts]
    return SupportDecomposition(f_S, g)


def _coordinate_grid(g: GridFunction, axis: int) -> np.ndarray:
    t = _midpoints(g.J)
    shape = [1] * g.d
    shape[axis] = -1
    return np.broadcast_to(t.reshape(shape), g.values.shape)


def project_affine(g: GridFunction) -> GridFunction:
    """Orthogonal projection onto span{1, t_1, ..., t_d}.

    The coordinate functions are mean-zero and mutually orthogonal on
    the symmetric midpoint grid, so the projection is a sum of d+1
    closed-form components.
    """
    v = g.values
    out = np.full_like(v, v.mean())
    for ax in range(g.d):
        T = _coordinate_grid(g, ax)
        out = out + (v * T).sum() / (T**2).sum() * T
    return GridFunction(g.d, g.J, out)


def project_slice_affine(g: GridFunction, axis: int) -> GridFunction:
    """Orthogonal projection onto functions affine on each {t_axis = c} slice."""
    if not 0 <= axis < g.d:
        raise ValueError(f"axis {axis} out of range for d={g.d}")
    v = g.values
    others = tuple(i for i in range(g.d) if i != axis)
    out = np.broadcast_to(v.mean(axis=others, keepdims=True), v.shape).copy()
    for ax in others:
        T = _coordinate_grid(g, ax)
        num = (v * T).sum(axis=others, keepdims=True)
        den = (T**2).sum(axis=others, keepdims=True)
        out = out + num / den * T
    return GridFunction(g.d, g.J, out)


def _deficit_sq(g: GridFunction, proj: GridFunction) -> float:
    return GridFunction(g.d, g.J, g.values - proj.values).norm_sq()


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    lhs: float
    rhs: float
    kind: str  # "equal" | "sandwich-low" | "sandwich-high"
    rel_err: float
    passed: bool


@dataclass(frozen=True)
class IdentityReport:
    checks: list
    passed: bool

    def worst(self) -> float:
        return max((c.rel_err for c in self.checks if c.kind == "equal"), default=0.0)


def verify_identities(g: GridFunction, rtol: float = 1e-9) -> IdentityReport:
    """All the projection identities relating affine and slice deficits.

    Checks, with exact constants: the affine-deficit split across
    support levels; its slice-affine analogue per axis; the (d-1)
    identity for the level-1 part; the (d-2)/d sandwich for the level-2
    part; and the assembled global sandwich.  d >= 3 required.
    """
    d = g.d
    if d < 3:
        raise ValueError("identities need d >= 3")
    g0, g1, g2 = level_parts(analyze(g), 2)
    tail_sq = GridFunction(
        d, g.J, g.values - g0.values - g1.values - g2.values
    ).norm_sq()
    scale = max(g.norm_sq(), 1e-300)
    atol = 1e-12 * scale

    def approx(name, lhs, rhs):
        err = abs(lhs - rhs) / max(abs(lhs), abs(rhs), atol)
        ok = abs(lhs - rhs) <= rtol * max(abs(lhs), abs(rhs)) + atol
        return IdentityCheck(name, lhs, rhs, "equal", err, ok)

    def lower(name, lhs, rhs):
        ok = lhs <= rhs * (1 + rtol) + atol
        return IdentityCheck(name, lhs, rhs, "sandwich-low", 0.0, ok)

    checks = []
    aff_deficit = _deficit_sq(g, project_affine(g))
    g1_aff = _deficit_sq(g1, project_affine(g1))
    g2_sq = g2.norm_sq()
    checks.append(
        approx("affine-deficit-split", aff_deficit, g1_aff + g2_sq + tail_sq)
    )

    slice_deficits = []
    g1_slice = []
    g2_slice = []
    for ax in range(d):
        dg = _deficit_sq(g, project_slice_affine(g, ax))
        d1 = _deficit_sq(g1, project_slice_affine(g1, ax))
        d2 = _deficit_sq(g2, project_slice_affine(g2, ax))
        slice_deficits.append(dg)
        g1_slice.append(d1)
        g2_slice.append(d2)
        checks.append(approx(f"slice-deficit-split-axis{ax}", dg, d1 + d2 + tail_sq))

    checks.append(
        approx("level1-exact-factor", sum(g1_slice), (d - 1) * g1_aff)
    )
    checks.append(lower("level2-lower", (d - 2) * g2_sq, sum(g2_slice)))
    checks.append(lower("level2-upper", sum(g2_slice), d * g2_sq))
    checks.append(lower("global-lower", (d - 2) * aff_deficit, sum(slice_deficits)))
    checks.append(lower("global-upper", sum(slice_deficits), d * aff_deficit))
    return IdentityReport(checks, all(c.passed for c in checks))


@dataclass(frozen=True)
class SlicingReduction:
    lhs: float  # affine deficit of the pullback on the unit-scale cube
    rhs: float  # sum of slice-affine deficits on the enlarged cube
    ratio: float
    condition: float  # condition number of the plane-normal matrix
    skipped: bool


def _a0_coords(u: np.ndarray) -> np.ndarray:
    """Drop the y_n column of horizontal vectors: coordinates of A_0."""
    n = (np.shape(u)[-1]) // 2
    return np.delete(u, 2 * n - 1, axis=-1)


def slicing_vertical_reduce(
    f,
    planes: list,
    Q,
    c_out: float = 2.0,
    J: int = 4,
    cond_limit: float = 1e6,
) -> SlicingReduction:
    """Compare affine and slice-affine deficits of a vertical field.

    The 2n-1 vertical hyperplanes (in general position: their horizontal
    normals span A_0) are straightened to coordinate planes by the
    linear map M whose rows are the unit normals; the field is pulled
    back to a rectangle grid, where the cube identities bound the affine
    deficit on the unit box by the slice-affine deficits on the c_out
    enlargement.
    """
    n = Q.n
    d = 2 * n - 1
    if len(planes) != d:
        raise ValueError(f"need exactly {d} hyperplanes")
    normals = []
    for P in planes:
        if np.max(np.abs(P.horizontal[:, 2 * n - 1])) > 1e-12:
            raise ValueError("slicing hyperplanes must lie inside V_0")
        H = _a0_coords(P.horizontal)
        _, sv, vt = np.linalg.svd(H, full_matrices=True)
        if sv.size and sv[-1] < 1e-10:
            raise ValueError("plane basis is degenerate")
        normals.append(vt[-1])
    M = np.stack(normals)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] < 1e-12:
        raise ValueError("planes are not in general position")
    condition = float(sv[0] / sv[-1])
    if condition > cond_limit:
        return SlicingReduction(math.nan, math.nan, math.nan, condition, True)
    Minv = np.linalg.inv(M)

    nu = _a0_coords(Q._nu)
    C = _a0_coords(Q._P.horizontal)
    center = _a0_coords(core.project_pi(Q.base_point))
    halfwidths = np.array(
        [Q.radius * (abs(nu @ m) + np.linalg.norm(C @ m)) for m in M]
    )

    def pullback(scale: float) -> GridFunction:
        def h(cube_pts):
            return f(cube_pts * (scale * halfwidths) @ Minv.T + center)

        return GridFunction.from_callable(h, d, J)

    h_small = pullback(1.0)
    h_big = pullback(c_out)
    # physical cell volumes differ by the box scalings
    vol_small = float(np.prod(halfwidths))
    vol_big = float(np.prod(c_out * halfwidths))
    lhs = math.sqrt(_deficit_sq(h_small, project_affine(h_small)) * vol_small)
    rhs = 0.0
    for ax in range(d):
        rhs += math.sqrt(
            _deficit_sq(h_big, project_slice_affine(h_big, ax)) * vol_big
        )
    ratio = lhs / rhs if rhs > 1e-14 else (0.0 if lhs <= 1e-10 else math.inf)
    return SlicingReduction(lhs, rhs, ratio, condition, False)


def save_gridfn(path, g: GridFunction, form: str = "binary", box=None) -> None:
    header = {
        "kind": "gridfn",
        "d": g.d,
        "J": g.J,
        "lo": ([-1.0] * g.d if box is None else list(np.asarray(box[0], float))),
        "hi": ([1.0] * g.d if box is None else list(np.asarray(box[1], float))),
        "shape": list(g.values.shape),
    }
    writer = container.write_binary if form == "binary" else container.write_json
    writer(path, header, g.values)


def load_gridfn(path, form: str = "binary") -> GridFunction:
    reader = container.read_binary if form == "binary" else container.read_json
    header, values = reader(path)
    if header.get("kind") != "gridfn":
        raise ValueError(f"{path}: container holds {header.get('kind')!r}")
    return GridFunction(int(header["d"]), int(header["J"]), values)
