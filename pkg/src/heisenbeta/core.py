"""Heisenberg group arithmetic and metric-proxy geometry.

Points of H_n live in R^(2n+1) and are stored as flat numpy arrays with
layout ``(x_1..x_n, y_1..y_n, z)``.  Every operation broadcasts over
leading axes, so a batch of points is just an array of shape
``(..., 2n+1)``.  The group index n is always inferred from the last
axis.  Passing object arrays of ``fractions.Fraction`` runs the group
operations in exact rational arithmetic; see :func:`as_exact`.

The Carnot-Caratheodory metric has no closed form, so distances use the
Koranyi/Cygan gauge ``((|x|^2+|y|^2)^2 + 16 z^2)^(1/4)``, which is a
genuine left-invariant, dilation-homogeneous metric bi-Lipschitz to CC.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "hpoint",
    "group_index",
    "xpart",
    "ypart",
    "zpart",
    "yn",
    "identity",
    "basis_vector",
    "as_exact",
    "as_float",
    "symplectic_form",
    "group_mul",
    "group_inv",
    "commutator",
    "dilate",
    "gauge_norm",
    "gauge_dist",
    "cone_contains",
    "project_pi",
    "lift_pi",
    "project_along",
    "horizontal_direction",
    "symplectic_complement",
    "VerticalSubspaceBasis",
    "plane_p_w",
]

PIVOT_TOL = 1e-10


def hpoint(x, y, z):
    """Pack (x, y, z) with x, y length-n vectors and z scalar into a point."""
    x = np.atleast_1d(np.asarray(x))
    y = np.atleast_1d(np.asarray(y))
    z = np.atleast_1d(np.asarray(z))
    if x.shape != y.shape:
        raise ValueError(f"x and y must have equal length, got {x.shape} vs {y.shape}")
    if x.ndim != 1 or x.size < 1 or z.size != 1:
        raise ValueError("coordinates must be 1-d vectors plus a scalar z")
    dt = np.result_type(x, y, z)
    p = np.concatenate([x.astype(dt), y.astype(dt), z.astype(dt)])
    if p.dtype.kind == "f" and not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite entries")
    return p


def group_index(p) -> int:
    """n such that p lives in H_n; the last axis must have length 2n+1."""
    m = np.shape(p)[-1]
    if m < 3 or m % 2 == 0:
        raise ValueError(f"last axis length {m} is not 2n+1")
    return (m - 1) // 2


def xpart(p):
    n = group_index(p)
    return np.asarray(p)[..., :n]


def ypart(p):
    n = group_index(p)
    return np.asarray(p)[..., n : 2 * n]


def zpart(p):
    return np.asarray(p)[..., -1]


def yn(p):
    """The y_n coordinate (height along the graph direction)."""
    n = group_index(p)
    return np.asarray(p)[..., 2 * n - 1]


def identity(n: int, dtype=float):
    return np.zeros(2 * n + 1, dtype=dtype)


def basis_vector(name: str, i: int, n: int):
    """Coordinate vector X_i, Y_i or Z (i is 1-based, as in X_1..X_n)."""
    p = identity(n)
    if name == "X":
        p[i - 1] = 1.0
    elif name == "Y":
        p[n + i - 1] = 1.0
    elif name == "Z":
        p[-1] = 1.0
    else:
        raise ValueError(f"unknown basis vector {name!r}")
    return p


def as_exact(p):
    """Copy a point into an object array of Fractions for exact arithmetic."""
    flat = np.asarray(p)
    out = np.empty(flat.shape, dtype=object)
    it = np.nditer(flat, flags=["multi_index", "refs_ok"])
    for v in it:
        out[it.multi_index] = Fraction(v.item())
    return out


def as_float(p):
    return np.asarray(p, dtype=float)


def symplectic_form(u, v):
    """Omega((x,y),(x',y')) = sum x_i y'_i - x'_i y_i on R^(2n)."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape[-1] != v.shape[-1] or u.shape[-1] % 2 != 0:
        raise ValueError("symplectic form needs equal even-dimensional vectors")
    n = u.shape[-1] // 2
    ux, uy = u[..., :n], u[..., n:]
    vx, vy = v[..., :n], v[..., n:]
    return (ux * vy).sum(axis=-1) - (vx * uy).sum(axis=-1)


def _check_same_group(a, b):
    if np.shape(a)[-1] != np.shape(b)[-1]:
        raise ValueError(
            f"dimension mismatch: {np.shape(a)[-1]} vs {np.shape(b)[-1]}"
        )


def group_mul(a, b):
    """Group product (x,y,z)(x',y',z') = (x+x', y+y', z+z'+Omega/2)."""
    _check_same_group(a, b)
    a = np.asarray(a)
    b = np.asarray(b)
    n = group_index(a)
    omega = symplectic_form(a[..., : 2 * n], b[..., : 2 * n])
    out_shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.empty(out_shape, dtype=np.result_type(a, b))
    out[..., : 2 * n] = a[..., : 2 * n] + b[..., : 2 * n]
    out[..., -1] = a[..., -1] + b[..., -1] + omega / 2
    return out


def group_inv(a):
    """Inverse is coordinate negation; exact because Omega(v,v)=0."""
    return -np.asarray(a)


def commutator(a, b):
    """[a,b] = a b a^-1 b^-1; lands in the center with z = Omega(pi a, pi b)."""
    _check_same_group(a, b)
    return group_mul(group_mul(a, b), group_mul(group_inv(a), group_inv(b)))


def dilate(t, p):
    """delta_t(x,y,z) = (tx, ty, t^2 z); broadcasts over a batch of t."""
    p = np.asarray(p)
    n = group_index(p)
    t = np.asarray(t)
    out_shape = np.broadcast_shapes(t.shape + (1,), p.shape)
    out = np.empty(out_shape, dtype=np.result_type(t, p))
    out[..., : 2 * n] = t[..., None] * p[..., : 2 * n]
    out[..., -1] = t**2 * p[..., -1]
    return out


def gauge_norm(p):
    """Koranyi gauge ((|x|^2+|y|^2)^2 + 16 z^2)^(1/4)."""
    p = np.asarray(p, dtype=float)
    n = group_index(p)
    horiz_sq = (p[..., : 2 * n] ** 2).sum(axis=-1)
    return (horiz_sq**2 + 16.0 * p[..., -1] ** 2) ** 0.25


def gauge_dist(a, b):
    """Left-invariant distance gauge_norm(a^-1 b)."""
    return gauge_norm(group_mul(group_inv(a), b))


def cone_contains(lam: float, p) -> np.ndarray | bool:
    """Open double cone test: lam * gauge_norm(p) < |y_n(p)|."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"cone parameter must be in (0,1), got {lam}")
    return lam * gauge_norm(p) < np.abs(yn(p))


def project_pi(p):
    """pi(x,y,z) = (x,y), a homomorphism onto R^(2n)."""
    p = np.asarray(p)
    n = group_index(p)
    return p[..., : 2 * n]


def lift_pi(u, z=0.0):
    """Inverse section of pi: attach a z coordinate to a horizontal vector."""
    u = np.asarray(u)
    z = np.broadcast_to(np.asarray(z, dtype=u.dtype), u.shape[:-1])
    return np.concatenate([u, z[..., None]], axis=-1)


def horizontal_direction(w):
    """Validate a graph direction: z(w) = 0 and y_n(w) = 1 exactly."""
    w = np.asarray(w, dtype=float)
    if zpart(w) != 0.0:
        raise ValueError("direction must be horizontal (z = 0)")
    if yn(w) != 1.0:
        raise ValueError("direction must have y_n = 1")
    return w


def project_along(w, h):
    """Pi_w(h) = h w^(-y_n(h)), the projection to V_0 along cosets of <w>."""
    h = np.asarray(h)
    return group_mul(h, dilate(-yn(h), np.asarray(w)))


def symplectic_complement(S):
    """Orthonormal basis of {v : Omega(v, s) = 0 for all s in S}.

    S is a (k, 2n) array of linearly independent horizontal vectors; the
    result spans the (2n-k)-dimensional Omega-complement.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    k, m = S.shape
    if m % 2 != 0:
        raise ValueError("vectors must live in R^(2n)")
    n = m // 2
    # Omega(v, s) = <v, J s> with J(x,y) = (y, -x).
    J_S = np.concatenate([S[:, n:], -S[:, :n]], axis=1)
    u, sv, vt = np.linalg.svd(J_S, full_matrices=True)
    rank = int((sv > PIVOT_TOL * max(1.0, sv[0] if sv.size else 1.0)).sum())
    if rank < k:
        raise ValueError("input vectors are linearly dependent")
    return vt[rank:]


@dataclass(frozen=True)
class VerticalSubspaceBasis:
    """Ordered basis of a vertical subgroup; the center Z is always last.

    All non-Z vectors are horizontal and stay independent after pi.
    """

    vectors: np.ndarray  # (k, 2n+1)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        object.__setattr__(self, "vectors", v)
        n = group_index(v)
        horiz = v[:-1]
        if not np.allclose(horiz[:, -1], 0.0):
            raise ValueError("non-center basis vectors must be horizontal")
        if not np.allclose(v[-1], basis_vector("Z", 1, n)):
            raise ValueError("last basis vector must be Z")
        if horiz.shape[0]:
            sv = np.linalg.svd(horiz[:, : 2 * n], compute_uv=False)
            if sv[-1] <= PIVOT_TOL:
                raise ValueError("projected basis vectors are dependent")

    @property
    def n(self) -> int:
        return group_index(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def horizontal(self) -> np.ndarray:
        """The pi-images of the non-center basis vectors, shape (k-1, 2n)."""
        return self.vectors[:-1, :-1]


def plane_p_w(w) -> VerticalSubspaceBasis:
    """Basis of P_w = V_0 intersect w^Omega-bar = C_w + <Z>.

    The horizontal part C_w is the set of u with y_n(u) = 0 and
    Omega(u, pi(w)) = 0; the returned basis is orthonormal on C_w with Z
    appended.
    """
    w = horizontal_direction(w)
    n = group_index(w)
    pw = project_pi(w)
    e_yn = np.zeros(2 * n)
    e_yn[2 * n - 1] = 1.0
    jw = np.concatenate([pw[n:], -pw[:n]])  # Omega(u, pi w) = <u, jw>
    constraints = np.stack([e_yn, jw])
    u, sv, vt = np.linalg.svd(constraints, full_matrices=True)
    rank = int((sv > PIVOT_TOL).sum())
    c_w = vt[rank:].copy()
    c_w[:, 2 * n - 1] = 0.0  # C_w lies in {y_n = 0} by definition; enforce exactly
    vectors = [lift_pi(c) for c in c_w]
    vectors.append(basis_vector("Z", 1, n))
    return VerticalSubspaceBasis(np.stack(vectors))
