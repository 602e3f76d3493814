"""Affine model fitting and binary-mask warping.

The motion model is x -> A x + t with a full 2x2 matrix A. fit_affine_lsq
minimizes the sum of squared correspondence residuals via the normal
equations; ransac_affine robustifies it against tracking outliers; warp_mask
resamples a label image through the inverse transform (nearest neighbour,
labels are categorical).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DegenerateGeometry, EstimationFailed

_MIN_DET = 1e-8
_MIN_SAMPLE_AREA = 1.0  # px^2, degenerate-sample rejection threshold


@dataclass(frozen=True)
class Affine2D:
    A: np.ndarray  # (2, 2)
    t: np.ndarray  # (2,)

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=np.float64).reshape(2, 2))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(2))
        if not (np.isfinite(self.A).all() and np.isfinite(self.t).all()):
            raise ValueError("affine parameters must be finite")

    @staticmethod
    def identity() -> "Affine2D":
        return Affine2D(np.eye(2), np.zeros(2))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.A))

    @property
    def invertible(self) -> bool:
        return abs(self.det) > _MIN_DET

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.A.T + self.t

    def inverse(self) -> "Affine2D":
        if not self.invertible:
            raise DegenerateGeometry(f"affine not invertible (det={self.det:.3e})")
        Ai = np.linalg.inv(self.A)
        return Affine2D(Ai, -Ai @ self.t)

    def compose(self, first: "Affine2D") -> "Affine2D":
        """Transform equal to applying `first`, then self."""
        return Affine2D(self.A @ first.A, self.A @ first.t + self.t)

    def params(self) -> tuple[float, ...]:
        return (
            float(self.A[0, 0]), float(self.A[0, 1]),
            float(self.A[1, 0]), float(self.A[1, 1]),
            float(self.t[0]), float(self.t[1]),
        )


class Correspondences(NamedTuple):
    src: np.ndarray  # (N, 2) keyframe points
    dst: np.ndarray  # (N, 2) current-frame points

    @staticmethod
    def of(src, dst) -> "Correspondences":
        src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
        dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
        if src.shape != dst.shape:
            raise ValueError(f"src {src.shape} and dst {dst.shape} differ")
        if not (np.isfinite(src).all() and np.isfinite(dst).all()):
            raise ValueError("correspondences must be finite")
        return Correspondences(src, dst)

    def __len__(self) -> int:
        return self.src.shape[0]


@dataclass(frozen=True)
class RansacParams:
    inlier_threshold: float = 3.0
    max_iters: int = 500
    confidence: float = 0.99
    min_inliers: int | None = None  # None -> max(10, 10% of pairs)
    seed: int = 0

    def validate(self) -> "RansacParams":
        if self.inlier_threshold <= 0:
            raise ConfigError(
                f"ransac.inlier_threshold must be > 0, got {self.inlier_threshold}"
            )
        if self.max_iters < 1:
            raise ConfigError(f"ransac.max_iters must be >= 1, got {self.max_iters}")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError(
                f"ransac.confidence must be in (0, 1), got {self.confidence}"
            )
        if self.min_inliers is not None and self.min_inliers < 3:
            raise ConfigError(
                f"ransac.min_inliers must be >= 3, got {self.min_inliers}"
            )
        return self

    def effective_min_inliers(self, n_pairs: int) -> int:
        if self.min_inliers is not None:
            return self.min_inliers
        return max(10, int(round(0.1 * n_pairs)))


def fit_affine_lsq(c: Correspondences, subset: Sequence[int] | None = None) -> Affine2D:
    """Least-squares affine over the given index subset (all pairs if None).

    Solves the two independent 3-unknown normal equation systems, one per
    output coordinate.
    """
    src, dst = c.src, c.dst
    if subset is not None:
        idx = np.asarray(subset, dtype=np.intp)
        src, dst = src[idx], dst[idx]
    n = src.shape[0]
    if n < 3:
        raise DegenerateGeometry(f"affine fit needs >= 3 points, got {n}")
    X = np.column_stack([src, np.ones(n)])
    # collinearity check in a scale-independent way
    sv = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise DegenerateGeometry("source points are (near-)collinear")
    G = X.T @ X
    rhs = X.T @ dst  # (3, 2)
    try:
        sol = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError as e:
        raise DegenerateGeometry(f"singular normal equations: {e}") from e
    A = sol[:2].T
    t = sol[2]
    return Affine2D(A, t)


def _fit_exact3(src: np.ndarray, dst: np.ndarray) -> Affine2D | None:
    """Exact affine through 3 pairs; None if the triangle is too flat."""
    X = np.column_stack([src, np.ones(3)])
    area2 = abs(np.linalg.det(X))  # twice the triangle area
    if area2 < 2.0 * _MIN_SAMPLE_AREA:
        return None
    sol = np.linalg.solve(X, dst)
    return Affine2D(sol[:2].T, sol[2])


def ransac_affine(
    c: Correspondences,
    params: RansacParams = RansacParams(),
    rng: np.random.Generator | None = None,
) -> tuple[Affine2D, np.ndarray]:
    """RANSAC affine estimate; returns (model, boolean inlier mask).

    Raises EstimationFailed when fewer than 3 pairs exist or the best
    consensus stays below params.min_inliers.
    """
    params.validate()
    n = len(c)
    if n < 3:
        raise EstimationFailed(f"need >= 3 correspondences, got {n}")
    if rng is None:
        rng = np.random.default_rng(params.seed)

    min_inliers = params.effective_min_inliers(n)
    thr2 = params.inlier_threshold ** 2
    best_mask: np.ndarray | None = None
    best_count = 0
    iter_bound = params.max_iters
    i = 0
    while i < min(iter_bound, params.max_iters):
        i += 1
        idx = rng.choice(n, size=3, replace=False)
        model = _fit_exact3(c.src[idx], c.dst[idx])
        if model is None:
            continue  # degenerate sample, redraw
        resid = c.dst - model.apply(c.src)
        mask = np.einsum("ij,ij->i", resid, resid) <= thr2
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            # adaptive bound from the current inlier ratio
            w = count / n
            denom = np.log1p(-min(w ** 3, 1.0 - 1e-12))
            if denom < 0:
                needed = int(np.ceil(np.log(1.0 - params.confidence) / denom))
                iter_bound = min(iter_bound, max(needed, 1))

    if best_mask is None or best_count < min_inliers:
        raise EstimationFailed(
            f"consensus {best_count} below minimum {min_inliers} ({n} pairs)"
        )
    try:
        model = fit_affine_lsq(c, np.nonzero(best_mask)[0])
    except DegenerateGeometry as e:
        raise EstimationFailed(f"consensus refit degenerate: {e}") from e
    return model, best_mask


def warp_mask(mask: np.ndarray, T: Affine2D) -> np.ndarray:
    """Warp a binary mask by T using inverse nearest-neighbour mapping.

    Output pixel (x, y) takes the source label at round(T^-1 (x, y));
    inverse lookups outside the mask are background.
    """
    mask = np.asarray(mask, dtype=bool)
    inv = T.inverse()  # raises DegenerateGeometry when not invertible
    h, w = mask.shape
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)[:, None]
    ix = np.rint(inv.A[0, 0] * xs + (inv.A[0, 1] * ys + inv.t[0])).astype(np.intp)
    iy = np.rint(inv.A[1, 0] * xs + (inv.A[1, 1] * ys + inv.t[1])).astype(np.intp)
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    np.clip(ix, 0, w - 1, out=ix)
    np.clip(iy, 0, h - 1, out=iy)
    return mask[iy, ix] & inside
