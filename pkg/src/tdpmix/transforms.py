"""Black-box transformation families.

A family maps (item, parameter vector rho) -> item, with the identity at
rho = 0. Families expose:

* ``apply(item, rho)``  -- the forward transform.
* ``align(item, rho)``  -- the exact functional inverse map, i.e. the item
  y with apply(y, rho) ~ item. This is what the samplers use to recover
  canonical items.
* ``invert(rho)``       -- a parameter-vector read-back of the inverse
  transform. Exact for rotations and affine image warps; a least-squares
  projection back onto the family for curve warps.
* ``random_params(magnitude, rng)`` -- zero-mean Gaussian draws scaled by
  the per-dimension hints, used for synthetic data generation.

Scale hints are per-dimension magnitudes that calibrate optimizer steps,
proposal widths and the transform prior. A hint of exactly 0 freezes that
dimension at 0 (used by the no-amplitude curve variant).
"""

import numpy as np
from scipy.interpolate import BSpline

__all__ = [
    "TransformFamily",
    "Rotation2D",
    "AffineImage",
    "CurveWarp",
    "IdentityFamily",
    "make_family",
    "FAMILY_NAMES",
]


class TransformFamily:
    """Base interface; subclasses fill in name, dim, hints and the maps."""

    name = "abstract"
    dim = 0

    def __init__(self, hints):
        self.hints = np.asarray(hints, dtype=float)
        if self.hints.shape != (self.dim,):
            raise ValueError("hints length must equal family dim")

    def _check_rho(self, rho):
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (self.dim,):
            raise ValueError(
                f"parameter vector has shape {rho.shape}, expected ({self.dim},)"
            )
        return rho

    def apply(self, item, rho):
        raise NotImplementedError

    def align(self, item, rho):
        raise NotImplementedError

    def invert(self, rho):
        raise NotImplementedError

    def valid_params(self, rho):
        """Whether rho is inside the family's admissible region."""
        return True

    def random_params(self, magnitude, rng):
        """Zero-mean Gaussian draw with per-dimension std magnitude * hint."""
        if magnitude < 0 or magnitude > 1:
            raise ValueError("magnitude must lie in [0, 1]")
        if magnitude == 0 or self.dim == 0:
            return np.zeros(self.dim)
        mag = float(magnitude)
        while True:
            for _ in range(1000):
                rho = rng.normal(0.0, mag * self.hints)
                if self.valid_params(rho):
                    return rho
            mag /= 2.0


class Rotation2D(TransformFamily):
    """Rotation of a 2D point around the origin; rho = (angle,) in radians."""

    name = "rotation2d"
    dim = 1

    def __init__(self, hints=(np.pi / 4,)):
        super().__init__(hints)

    @staticmethod
    def _rotate(p, angle):
        c, s = np.cos(angle), np.sin(angle)
        x, y = p
        return np.array([c * x - s * y, s * x + c * y])

    def apply(self, item, rho):
        rho = self._check_rho(rho)
        p = np.asarray(item, dtype=float)
        if p.shape != (2,):
            raise ValueError("rotation2d items are 2-vectors")
        return self._rotate(p, rho[0])

    def align(self, item, rho):
        rho = self._check_rho(rho)
        p = np.asarray(item, dtype=float)
        if p.shape != (2,):
            raise ValueError("rotation2d items are 2-vectors")
        return self._rotate(p, -rho[0])

    def invert(self, rho):
        return -self._check_rho(rho)


class AffineImage(TransformFamily):
    """Seven-parameter affine image transform.

    rho = (tx, ty, theta, log sx, log sy, hx, hy); the forward map is
    translate o rotate o shear o scale, anchored at the image center.
    Items are flat row-major arrays of shape (height * width,). Warping is
    inverse-mapping with bilinear interpolation; out-of-bounds pixels are
    filled with 0.
    """

    name = "affine7"
    dim = 7

    SCALE_FLOOR = 1e-6

    def __init__(self, height, width, hints=None):
        self.height = int(height)
        self.width = int(width)
        if hints is None:
            hints = (
                0.1 * self.width,
                0.1 * self.height,
                np.pi / 8,
                0.15,
                0.15,
                0.15,
                0.15,
            )
        super().__init__(hints)
        cx = (self.width - 1) / 2.0
        cy = (self.height - 1) / 2.0
        self._center = (cx, cy)
        ys, xs = np.mgrid[0 : self.height, 0 : self.width]
        self._grid = np.stack(
            [xs.ravel().astype(float), ys.ravel().astype(float), np.ones(xs.size)]
        )

    def matrix(self, rho):
        """Homogeneous 3x3 matrix of the forward transform."""
        rho = self._check_rho(rho)
        tx, ty, theta, lsx, lsy, hx, hy = rho
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        shear = np.array([[1.0, hx, 0.0], [hy, 1.0, 0.0], [0.0, 0.0, 1.0]])
        scale = np.diag([np.exp(lsx), np.exp(lsy), 1.0])
        trans = np.eye(3)
        trans[0, 2] = tx
        trans[1, 2] = ty
        cx, cy = self._center
        to_c = np.eye(3)
        to_c[0, 2] = cx
        to_c[1, 2] = cy
        from_c = np.eye(3)
        from_c[0, 2] = -cx
        from_c[1, 2] = -cy
        return to_c @ trans @ rot @ shear @ scale @ from_c

    def _sample(self, item, src_map):
        """Bilinear gather: output pixel p takes item at src_map @ p."""
        img = np.asarray(item, dtype=float)
        if img.shape != (self.height * self.width,):
            raise ValueError("item length does not match image shape")
        src = src_map @ self._grid
        sx, sy = src[0], src[1]
        x0 = np.floor(sx)
        y0 = np.floor(sy)
        fx = sx - x0
        fy = sy - y0
        x0 = x0.astype(np.intp)
        y0 = y0.astype(np.intp)
        h, w = self.height, self.width

        def gather(yy, xx):
            ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
            idx = np.where(ok, yy * w + xx, 0)
            return np.where(ok, img[idx], 0.0)

        v00 = gather(y0, x0)
        v01 = gather(y0, x0 + 1)
        v10 = gather(y0 + 1, x0)
        v11 = gather(y0 + 1, x0 + 1)
        top = v00 + fx * (v01 - v00)
        bot = v10 + fx * (v11 - v10)
        return top + fy * (bot - top)

    def apply(self, item, rho):
        return self._sample(item, np.linalg.inv(self.matrix(rho)))

    def align(self, item, rho):
        return self._sample(item, self.matrix(rho))

    def invert(self, rho):
        """Decompose the inverted matrix back into the 7 parameters.

        The linear part of the inverse is factored as rotation x upper
        triangular (QR with positive diagonal), which fits the fixed
        composition order with hy = 0, so matrix(invert(rho)) equals the
        matrix inverse to floating-point precision.
        """
        rho = self._check_rho(rho)
        if np.exp(rho[3]) < self.SCALE_FLOOR or np.exp(rho[4]) < self.SCALE_FLOOR:
            raise ValueError("scale underflow while inverting transform")
        m_inv = np.linalg.inv(self.matrix(rho))
        cx, cy = self._center
        to_c = np.eye(3)
        to_c[0, 2] = cx
        to_c[1, 2] = cy
        from_c = np.eye(3)
        from_c[0, 2] = -cx
        from_c[1, 2] = -cy
        core = from_c @ m_inv @ to_c
        lin = core[:2, :2]
        if np.linalg.det(lin) <= 0:
            raise ValueError("transform is not invertible within the family")
        q, r = np.linalg.qr(lin)
        sign = np.sign(np.diag(r))
        sign[sign == 0] = 1.0
        q = q * sign
        r = sign[:, None] * r
        sx, sy = r[0, 0], r[1, 1]
        if sx < self.SCALE_FLOOR or sy < self.SCALE_FLOOR:
            raise ValueError("scale underflow while inverting transform")
        theta = np.arctan2(q[1, 0], q[0, 0])
        hx = r[0, 1] / sy
        return np.array(
            [core[0, 2], core[1, 2], theta, np.log(sx), np.log(sy), hx, 0.0]
        )


def _bspline_design(u, n_basis=8, degree=3):
    """Dense design matrix of clamped, evenly spaced B-spline bases on [0,1]."""
    n_interior = n_basis - degree - 1
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    knots = np.concatenate(
        [np.zeros(degree + 1), interior, np.ones(degree + 1)]
    )
    design = BSpline.design_matrix(u, knots, degree, extrapolate=False)
    return np.asarray(design.todense())


class CurveWarp(TransformFamily):
    """Fourteen-parameter warp for 1D curves sampled on a uniform grid.

    rho = (c1..c4, d1..d8, s, t). With u in [0, 1],

        w(u) = u + sum_k c_k sin(k pi u)
        A(u) = exp(s + sum_k d_k B_k(u))
        out(u) = A(u) * x(w(u)) + t

    where B_k are 8 evenly spaced clamped cubic B-spline bases on [0, 1].
    w fixes the endpoints and is strictly increasing whenever
    sum_k k pi |c_k| < 1, which is enforced. Curves are resampled linearly
    at the warped abscissae. ``freeze_amplitude`` zeroes the hints of the
    eight nonlinear amplitude dimensions, pinning them at 0.
    """

    name = "curve14"
    dim = 14

    N_WARP = 4
    N_AMP = 8

    def __init__(self, length, hints=None, freeze_amplitude=False):
        self.length = int(length)
        if self.length < 4:
            raise ValueError("curves must have at least 4 samples")
        if hints is None:
            hints = np.concatenate(
                [np.full(self.N_WARP, 0.05), np.full(self.N_AMP, 0.25), [0.2, 0.25]]
            )
        hints = np.asarray(hints, dtype=float).copy()
        if freeze_amplitude:
            hints[self.N_WARP : self.N_WARP + self.N_AMP] = 0.0
            self.name = "curve13-noamp"
        super().__init__(hints)
        self.u = np.linspace(0.0, 1.0, self.length)
        k = np.arange(1, self.N_WARP + 1)
        self._sin = np.sin(np.pi * np.outer(self.u, k))
        self._sin_pinv = np.linalg.pinv(self._sin)
        self._basis = _bspline_design(self.u, self.N_AMP)
        self._basis_pinv = np.linalg.pinv(self._basis)
        self._k_pi = np.pi * k

    def _split(self, rho):
        c = rho[: self.N_WARP]
        d = rho[self.N_WARP : self.N_WARP + self.N_AMP]
        return c, d, rho[-2], rho[-1]

    def valid_params(self, rho):
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (self.dim,):
            return False
        if not np.all(np.isfinite(rho)):
            return False
        return float(np.dot(self._k_pi, np.abs(rho[: self.N_WARP]))) < 0.99

    def _check_valid(self, rho):
        rho = self._check_rho(rho)
        if float(np.dot(self._k_pi, np.abs(rho[: self.N_WARP]))) >= 1.0:
            raise ValueError("time warp is not monotone for these parameters")
        return rho

    def _check_item(self, item):
        x = np.asarray(item, dtype=float)
        if x.shape != (self.length,):
            raise ValueError("curve length does not match family")
        return x

    def apply(self, item, rho):
        rho = self._check_valid(rho)
        x = self._check_item(item)
        c, d, s, t = self._split(rho)
        w = self.u + self._sin @ c
        xs = np.interp(w, self.u, x)
        amp = np.exp(s + self._basis @ d)
        return amp * xs + t

    def align(self, item, rho):
        """Exact inverse map: undo amplitude and translation, then unwarp."""
        rho = self._check_valid(rho)
        y = self._check_item(item)
        c, d, s, t = self._split(rho)
        w = self.u + self._sin @ c
        w_inv = np.interp(self.u, w, self.u)
        ys = np.interp(w_inv, self.u, y)
        log_amp = self._basis @ d
        amp_at = np.exp(s + np.interp(w_inv, self.u, log_amp))
        return (ys - t) / amp_at

    def invert(self, rho):
        """Least-squares read-back of the inverse onto the family.

        The inverted time warp and negated log-amplitude field are
        projected onto the sinusoid / B-spline bases; exact when rho = 0
        and accurate for moderate warps.
        """
        rho = self._check_valid(rho)
        c, d, s, t = self._split(rho)
        w = self.u + self._sin @ c
        w_inv = np.interp(self.u, w, self.u)
        c_inv = self._sin_pinv @ (w_inv - self.u)
        log_amp = self._basis @ d
        log_amp_at = np.interp(w_inv, self.u, log_amp)
        d_inv = self._basis_pinv @ (-log_amp_at)
        inv_amp = np.exp(-s - log_amp_at)
        t_inv = -t * float(np.mean(inv_amp))
        return np.concatenate([c_inv, d_inv, [-s, t_inv]])


class IdentityFamily(TransformFamily):
    """Zero-parameter family; items pass through unchanged."""

    name = "identity"
    dim = 0

    def __init__(self):
        super().__init__(np.zeros(0))

    def apply(self, item, rho):
        self._check_rho(rho)
        return np.asarray(item, dtype=float)

    def align(self, item, rho):
        self._check_rho(rho)
        return np.asarray(item, dtype=float)

    def invert(self, rho):
        return self._check_rho(rho)


FAMILY_NAMES = ("rotation2d", "affine7", "curve14", "curve13-noamp", "identity")


def make_family(name, image_shape=None, curve_length=None, hints=None):
    """Construct a family by its registry name.

    ``image_shape`` (height, width) is required for affine7 and
    ``curve_length`` for the curve families.
    """
    if name == "rotation2d":
        return Rotation2D() if hints is None else Rotation2D(hints)
    if name == "affine7":
        if image_shape is None:
            raise ValueError("affine7 requires image_shape=(height, width)")
        return AffineImage(image_shape[0], image_shape[1], hints)
    if name == "curve14":
        if curve_length is None:
            raise ValueError("curve14 requires curve_length")
        return CurveWarp(curve_length, hints)
    if name == "curve13-noamp":
        if curve_length is None:
            raise ValueError("curve13-noamp requires curve_length")
        return CurveWarp(curve_length, hints, freeze_amplitude=True)
    if name == "identity":
        return IdentityFamily()
    raise ValueError(f"unknown transform family: {name!r}")
