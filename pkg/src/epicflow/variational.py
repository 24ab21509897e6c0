"""One-level variational refinement of an initial flow field.

The energy combines a color-constancy and a gradient-constancy data term
(each normalized per channel and penalized jointly by the robust
function psi(s2) = sqrt(s2 + eps^2)) with an edge-weighted flow-gradient
smoothness term. Minimization runs a fixed number of outer fixed-point
iterations: warp the second image with the current flow, freeze the
robust weights, assemble the linearized system for a flow increment,
and solve it with sequential SOR sweeps in raster order. No pyramid is
involved; the initializer carries all large-displacement information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .edges import central_gradient, smoothness_weights
from .model import FlowField, Image, NumericalBlowupError


@dataclass
class VarParams:
    """Solver constants.

    fp_iters: outer fixed-point iterations (0 leaves the init unchanged;
    small-displacement datasets benefit from ~25).
    sor_iters / sor_omega: inner linear-solver sweeps and relaxation.
    kappa: edge sensitivity of the smoothness weight.
    delta / gamma: color and gradient data-term weights.
    eps_psi: robust-penalty epsilon; zeta: normalization epsilon.
    """

    fp_iters: int = 5
    sor_iters: int = 30
    sor_omega: float = 1.6
    kappa: float = 5.0
    delta: float = 1.0
    gamma: float = 0.7
    eps_psi: float = 1e-3
    zeta: float = 0.1

    def __post_init__(self):
        if self.fp_iters < 0:
            raise ValueError("fp_iters must be nonnegative")
        if self.sor_iters < 1:
            raise ValueError("sor_iters must be at least 1")
        if not 0.0 < self.sor_omega < 2.0:
            raise ValueError("sor_omega must lie in (0, 2)")
        for name in ("kappa", "delta", "gamma", "eps_psi", "zeta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _psi(s2, eps):
    return np.sqrt(s2 + eps * eps)


def _psi_deriv(s2, eps):
    return 0.5 / np.sqrt(s2 + eps * eps)


# ---------------------------------------------------------------------------
# Bicubic warping (Keys kernel, a = -1/2): interpolates samples exactly
# at integer coordinates, replicate padding at the border.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _cubic_weights(t, buf):
    a = -0.5
    s = t + 1.0
    buf[0] = a * s * s * s - 5.0 * a * s * s + 8.0 * a * s - 4.0 * a
    buf[1] = (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    s = 1.0 - t
    buf[2] = (a + 2.0) * s * s * s - (a + 3.0) * s * s + 1.0
    s = 2.0 - t
    buf[3] = a * s * s * s - 5.0 * a * s * s + 8.0 * a * s - 4.0 * a


@njit(cache=True)
def _warp_stack(fields, cx, cy):
    """Sample a (F, H, W) stack at coordinates (cx, cy), bicubic, clamped."""
    nf, h, w = fields.shape
    out = np.empty((nf, cy.shape[0], cy.shape[1]))
    wx = np.empty(4)
    wy = np.empty(4)
    ix = np.empty(4, dtype=np.int64)
    iy = np.empty(4, dtype=np.int64)
    for i in range(cy.shape[0]):
        for j in range(cy.shape[1]):
            x = cx[i, j]
            y = cy[i, j]
            x0 = int(np.floor(x))
            y0 = int(np.floor(y))
            _cubic_weights(x - x0, wx)
            _cubic_weights(y - y0, wy)
            for k in range(4):
                xx = x0 - 1 + k
                if xx < 0:
                    xx = 0
                elif xx > w - 1:
                    xx = w - 1
                ix[k] = xx
                yy = y0 - 1 + k
                if yy < 0:
                    yy = 0
                elif yy > h - 1:
                    yy = h - 1
                iy[k] = yy
            for f in range(nf):
                acc = 0.0
                for dy in range(4):
                    row = 0.0
                    for dx in range(4):
                        row += wx[dx] * fields[f, iy[dy], ix[dx]]
                    acc += wy[dy] * row
                out[f, i, j] = acc
    return out


@njit(cache=True)
def _sor_sweeps(du, dv, a11, a12, a22, r1, r2, wr, wd, sw, iters, omega):
    """Coupled point-SOR on the increment system, raster order.

    wr/wd are half-edge smoothness weights to the right/down neighbor,
    sw their per-pixel sum. r1/r2 already include the smoothness residual
    of the current flow.
    """
    h, w = du.shape
    for _ in range(iters):
        for y in range(h):
            for x in range(w):
                su = 0.0
                sv = 0.0
                if x > 0:
                    wgt = wr[y, x - 1]
                    su += wgt * du[y, x - 1]
                    sv += wgt * dv[y, x - 1]
                if x + 1 < w:
                    wgt = wr[y, x]
                    su += wgt * du[y, x + 1]
                    sv += wgt * dv[y, x + 1]
                if y > 0:
                    wgt = wd[y - 1, x]
                    su += wgt * du[y - 1, x]
                    sv += wgt * dv[y - 1, x]
                if y + 1 < h:
                    wgt = wd[y, x]
                    su += wgt * du[y + 1, x]
                    sv += wgt * dv[y + 1, x]
                diag_u = a11[y, x] + sw[y, x]
                if diag_u > 0.0:
                    unew = (r1[y, x] + su - a12[y, x] * dv[y, x]) / diag_u
                    du[y, x] += omega * (unew - du[y, x])
                diag_v = a22[y, x] + sw[y, x]
                if diag_v > 0.0:
                    vnew = (r2[y, x] + sv - a12[y, x] * du[y, x]) / diag_v
                    dv[y, x] += omega * (vnew - dv[y, x])


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def warp_image(image2: Image, flow: FlowField):
    """Bicubic backward warp of image2 along the flow.

    Returns (Image, oob) where oob flags pixels whose sample position
    x + w(x) falls outside the image domain; their samples come from
    clamped coordinates and should be ignored by data terms.
    """
    if image2.data.shape[:2] != flow.vectors.shape[:2]:
        raise ValueError("image and flow dimensions disagree")
    h, w = flow.vectors.shape[:2]
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    cx = xs + flow.vectors[:, :, 0]
    cy = ys + flow.vectors[:, :, 1]
    oob = (cx < 0) | (cx > w - 1) | (cy < 0) | (cy > h - 1)
    stack = np.ascontiguousarray(np.moveaxis(image2.data, 2, 0))
    warped = _warp_stack(stack, cx, cy)
    return Image(np.moveaxis(warped, 0, 2)), oob


def _image_derivatives(data):
    """First and second central-difference derivatives per channel.

    Returns a (C, 6, H, W) array ordered [I, Ix, Iy, Ixx, Ixy, Iyy].
    """
    channels = data.shape[2]
    h, w = data.shape[:2]
    out = np.empty((channels, 6, h, w))
    for c in range(channels):
        f = data[:, :, c]
        fx, fy = central_gradient(f)
        fxx, fxy = central_gradient(fx)
        fyy = central_gradient(fy)[1]
        out[c, 0] = f
        out[c, 1] = fx
        out[c, 2] = fy
        out[c, 3] = fxx
        out[c, 4] = fxy
        out[c, 5] = fyy
    return out


def _normalizations(derivs, zeta):
    """Per-channel data-term normalizations from image-1 derivatives."""
    z2 = zeta * zeta
    theta0 = 1.0 / (derivs[:, 1] ** 2 + derivs[:, 2] ** 2 + z2)
    theta_x = 1.0 / (derivs[:, 3] ** 2 + derivs[:, 4] ** 2 + z2)
    theta_y = 1.0 / (derivs[:, 4] ** 2 + derivs[:, 5] ** 2 + z2)
    return theta0, theta_x, theta_y


def _forward_sq_grad(u, v):
    """|grad u|^2 + |grad v|^2 with forward differences, zero past the border."""
    s2 = np.zeros_like(u)
    s2[:, :-1] += (u[:, 1:] - u[:, :-1]) ** 2 + (v[:, 1:] - v[:, :-1]) ** 2
    s2[:-1, :] += (u[1:, :] - u[:-1, :]) ** 2 + (v[1:, :] - v[:-1, :]) ** 2
    return s2


def _data_term_args(i1_derivs, warped, theta0, theta_x, theta_y, delta, gamma):
    """Robust-penalty arguments of the two data terms, per pixel."""
    iz = warped[:, 0] - i1_derivs[:, 0]
    ixz = warped[:, 1] - i1_derivs[:, 1]
    iyz = warped[:, 2] - i1_derivs[:, 2]
    arg_color = delta * (theta0 * iz ** 2).sum(axis=0)
    arg_grad = gamma * (theta_x * ixz ** 2 + theta_y * iyz ** 2).sum(axis=0)
    return arg_color, arg_grad


def _warp_all(i2_derivs, u, v, xs, ys):
    cx = xs + u
    cy = ys + v
    h, w = u.shape
    oob = (cx < 0) | (cx > w - 1) | (cy < 0) | (cy > h - 1)
    channels = i2_derivs.shape[0]
    flat = i2_derivs.reshape(channels * 6, h, w)
    warped = _warp_stack(np.ascontiguousarray(flat), cx, cy)
    return warped.reshape(channels, 6, h, w), oob


def energy(image1: Image, image2: Image, flow: FlowField, params: VarParams, alpha) -> float:
    """Robust variational energy of a candidate flow.

    `alpha` is a SmoothnessWeights instance (or bare array). Data terms
    are zeroed at out-of-bounds pixels; the smoothness term always
    applies.
    """
    if image1.data.shape != image2.data.shape:
        raise ValueError("image dimensions disagree")
    if image1.data.shape[:2] != flow.vectors.shape[:2]:
        raise ValueError("flow dimensions disagree")
    alpha_values = alpha.values if hasattr(alpha, "values") else np.asarray(alpha, dtype=np.float64)
    u = flow.vectors[:, :, 0]
    v = flow.vectors[:, :, 1]
    h, w = u.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    i1_derivs = _image_derivatives(image1.data)
    i2_derivs = _image_derivatives(image2.data)
    theta0, theta_x, theta_y = _normalizations(i1_derivs, params.zeta)
    warped, oob = _warp_all(i2_derivs, u, v, xs, ys)
    arg_color, arg_grad = _data_term_args(i1_derivs, warped, theta0, theta_x, theta_y,
                                          params.delta, params.gamma)
    data = _psi(arg_color, params.eps_psi) + _psi(arg_grad, params.eps_psi)
    data = np.where(oob, 0.0, data)
    smooth = alpha_values * _psi(_forward_sq_grad(u, v), params.eps_psi)
    return float(data.sum() + smooth.sum())


def refine(image1: Image, image2: Image, init_flow: FlowField, params: VarParams) -> FlowField:
    """Fixed-point refinement of `init_flow`.

    Each outer iteration warps image 2 (and its derivatives) with the
    current flow, freezes the robust weights, assembles the linearized
    increment system, runs `sor_iters` SOR sweeps, and applies the
    increment. fp_iters = 0 returns the init unchanged.

    Raises NumericalBlowupError if the flow stops being finite.
    """
    if image1.data.shape != image2.data.shape:
        raise ValueError("image dimensions disagree")
    if image1.data.shape[:2] != init_flow.vectors.shape[:2]:
        raise ValueError("flow dimensions disagree")
    h, w = init_flow.vectors.shape[:2]
    u = init_flow.vectors[:, :, 0].copy()
    v = init_flow.vectors[:, :, 1].copy()
    if params.fp_iters == 0:
        return FlowField(np.stack([u, v], axis=2))

    alpha = smoothness_weights(image1, params.kappa).values
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    i1_derivs = _image_derivatives(image1.data)
    i2_derivs = _image_derivatives(image2.data)
    theta0, theta_x, theta_y = _normalizations(i1_derivs, params.zeta)
    delta, gamma, eps = params.delta, params.gamma, params.eps_psi

    for _ in range(params.fp_iters):
        warped, oob = _warp_all(i2_derivs, u, v, xs, ys)
        iz = warped[:, 0] - i1_derivs[:, 0]
        ixz = warped[:, 1] - i1_derivs[:, 1]
        iyz = warped[:, 2] - i1_derivs[:, 2]
        wx = warped[:, 1]
        wy = warped[:, 2]
        wxx = warped[:, 3]
        wxy = warped[:, 4]
        wyy = warped[:, 5]

        arg_color = delta * (theta0 * iz ** 2).sum(axis=0)
        arg_grad = gamma * (theta_x * ixz ** 2 + theta_y * iyz ** 2).sum(axis=0)
        psi_c = np.where(oob, 0.0, delta * _psi_deriv(arg_color, eps))
        psi_g = np.where(oob, 0.0, gamma * _psi_deriv(arg_grad, eps))

        a11 = psi_c * (theta0 * wx * wx).sum(axis=0) \
            + psi_g * (theta_x * wxx * wxx + theta_y * wxy * wxy).sum(axis=0)
        a12 = psi_c * (theta0 * wx * wy).sum(axis=0) \
            + psi_g * (theta_x * wxx * wxy + theta_y * wxy * wyy).sum(axis=0)
        a22 = psi_c * (theta0 * wy * wy).sum(axis=0) \
            + psi_g * (theta_x * wxy * wxy + theta_y * wyy * wyy).sum(axis=0)
        b1 = -(psi_c * (theta0 * iz * wx).sum(axis=0)
               + psi_g * (theta_x * ixz * wxx + theta_y * iyz * wxy).sum(axis=0))
        b2 = -(psi_c * (theta0 * iz * wy).sum(axis=0)
               + psi_g * (theta_x * ixz * wxy + theta_y * iyz * wyy).sum(axis=0))

        g = alpha * _psi_deriv(_forward_sq_grad(u, v), eps)
        wr = 0.5 * (g[:, :-1] + g[:, 1:])
        wd = 0.5 * (g[:-1, :] + g[1:, :])
        sw = np.zeros_like(g)
        sw[:, :-1] += wr
        sw[:, 1:] += wr
        sw[:-1, :] += wd
        sw[1:, :] += wd
        ru = np.zeros_like(u)
        rv = np.zeros_like(v)
        ru[:, :-1] += wr * (u[:, 1:] - u[:, :-1])
        ru[:, 1:] += wr * (u[:, :-1] - u[:, 1:])
        ru[:-1, :] += wd * (u[1:, :] - u[:-1, :])
        ru[1:, :] += wd * (u[:-1, :] - u[1:, :])
        rv[:, :-1] += wr * (v[:, 1:] - v[:, :-1])
        rv[:, 1:] += wr * (v[:, :-1] - v[:, 1:])
        rv[:-1, :] += wd * (v[1:, :] - v[:-1, :])
        rv[1:, :] += wd * (v[:-1, :] - v[1:, :])

        du = np.zeros_like(u)
        dv = np.zeros_like(v)
        _sor_sweeps(du, dv, a11, a12, a22, b1 + ru, b2 + rv, wr, wd, sw,
                    params.sor_iters, params.sor_omega)
        u += du
        v += dv
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise NumericalBlowupError(
                "refinement produced non-finite flow; check solver parameters"
            )
    return FlowField(np.stack([u, v], axis=2))
