"""Scalar fields on tensor grids over boxes, with multilinear interpolation.

A :class:`BoxField` stores node values on a rectangular grid (nodes
include the box endpoints) and evaluates anywhere inside the box by
multilinear interpolation.  This is the common representation for graph
parametrizing functions on V_0 and for vertical fields on A_0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BoxField", "OutsideDomainError"]


class OutsideDomainError(ValueError):
    """Raised when a field is evaluated outside its box."""


@dataclass(frozen=True)
class BoxField:
    lo: np.ndarray  # (m,)
    hi: np.ndarray  # (m,)
    values: np.ndarray  # (res_1, ..., res_m) node values

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "values", values)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d of equal length")
        if values.ndim != lo.size:
            raise ValueError("values rank must equal box dimension")
        if any(r < 2 for r in values.shape):
            raise ValueError("need at least 2 nodes per axis")
        if not np.all(hi > lo):
            raise ValueError("box must have positive extent")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def resolution(self) -> tuple[int, ...]:
        return self.values.shape

    def axes(self) -> list[np.ndarray]:
        """Node coordinates along each axis."""
        return [
            np.linspace(self.lo[i], self.hi[i], self.values.shape[i])
            for i in range(self.dim)
        ]

    def nodes(self) -> np.ndarray:
        """All grid nodes as an (N, m) array in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, pts, margin: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        lo = self.lo + margin * (self.hi - self.lo)
        hi = self.hi - margin * (self.hi - self.lo)
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def __call__(self, pts) -> np.ndarray:
        """Multilinear interpolation at pts of shape (..., m)."""
        pts = np.asarray(pts, dtype=float)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"points must have {self.dim} coordinates")
        eps = 1e-12 * np.maximum(1.0, np.abs(self.hi - self.lo))
        if np.any(pts < self.lo - eps) or np.any(pts > self.hi + eps):
            raise OutsideDomainError("evaluation point outside field box")
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, self.dim)
        res = np.array(self.values.shape)
        # fractional index per axis, clamped so the upper cell edge is valid
        t = (flat - self.lo) / (self.hi - self.lo) * (res - 1)
        t = np.clip(t, 0.0, res - 1)
        i0 = np.minimum(t.astype(int), res - 2)
        frac = t - i0
        out = np.zeros(flat.shape[0])
        for corner in range(1 << self.dim):
            offs = np.array([(corner >> k) & 1 for k in range(self.dim)])
            idx = i0 + offs
            weight = np.prod(np.where(offs, frac, 1.0 - frac), axis=1)
            out += weight * self.values[tuple(idx.T)]
        return out.reshape(shape)

    def scaled(self, value_factor: float, axis_factors) -> "BoxField":
        """New field on the stretched box with rescaled values."""
        axis_factors = np.asarray(axis_factors, dtype=float)
        return BoxField(
            self.lo * axis_factors, self.hi * axis_factors, self.values * value_factor
        )

    def crop_to_valid(self, valid: np.ndarray) -> "BoxField":
        """Largest axis-aligned node sub-box avoiding the invalid mask.

        Greedily trims the boundary slice with the most invalid nodes
        until none remain; node positions are preserved.
        """
        if valid.shape != self.values.shape:
            raise ValueError("mask shape mismatch")
        slices = [slice(0, r) for r in self.values.shape]
        bad = ~valid
        while True:
            sub = bad[tuple(slices)]
            if not sub.any():
                break
            idx = np.argwhere(sub)
            # prefer the face layer holding the most invalid nodes; when all
            # faces are clean (interior island), walk toward the nearest one
            best = None
            for ax in range(self.dim):
                s = slices[ax]
                size = s.stop - s.start
                if size <= 2:
                    continue
                d_lo = int(idx[:, ax].min())
                d_hi = int((size - 1) - idx[:, ax].max())
                gain_lo = int((idx[:, ax] == 0).sum())
                gain_hi = int((idx[:, ax] == size - 1).sum())
                for gain, dist, trial in (
                    (gain_lo, d_lo, slice(s.start + 1, s.stop)),
                    (gain_hi, d_hi, slice(s.start, s.stop - 1)),
                ):
                    score = (-gain, dist)
                    if best is None or score < best[0]:
                        best = (score, ax, trial)
            if best is None:
                raise ValueError("cannot crop to a valid sub-box")
            _, ax, trial = best
            slices[ax] = trial
        axes = self.axes()
        lo = np.array([axes[i][slices[i].start] for i in range(self.dim)])
        hi = np.array([axes[i][slices[i].stop - 1] for i in range(self.dim)])
        return BoxField(lo, hi, self.values[tuple(slices)])

    @staticmethod
    def from_callable(fn, lo, hi, resolution) -> "BoxField":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.isscalar(resolution):
            resolution = [int(resolution)] * lo.size
        axes = [np.linspace(lo[i], hi[i], resolution[i]) for i in range(lo.size)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = np.asarray(fn(pts), dtype=float).reshape([len(a) for a in axes])
        return BoxField(lo, hi, vals)
