"""Differentiable novel-view rendering of multi-shell panoramas.

Conventions frozen here:

- Every shell pixel with positive alpha becomes one point at its own
  stored depth (radius = D, height = h * D), splat onto the target with a
  2x2 bilinear footprint; depth conflicts inside a layer are resolved by
  soft z-buffering, then the per-layer maps are over-composited strictly
  by shell index, outermost first. Per-pixel depth never reorders layers.
- The soft z-buffer's inverse depth is 1/(camera z) for perspective
  targets and 1/(radial distance from the target axis) for panorama
  targets.
- Panorama-target columns wrap at the azimuth seam; rows do not wrap.
- Bilinear footprints, the per-pixel inverse-depth maximum, and the set
  of contributing points are constants of a forward pass; reported
  gradients are exact for that frozen discretization.
- The returned image is un-premultiplied RGBA in [0, 1].
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CalibrationError
from .geometry import Extrinsics, Intrinsics, PanoMapping
from .mdp import Mdp


@dataclass(frozen=True)
class SoftZConfig:
    """Soft z-buffer sharpness and the denominator floor."""

    tau: float = 50.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive and finite")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be positive and finite")


@dataclass(frozen=True)
class TargetCamera:
    """Where to render: a perspective camera or a panorama grid, posed in
    the rig-centered world frame (pose maps world points into the target
    frame)."""

    mode: str
    pose: Extrinsics
    intrinsics: Intrinsics | None = None
    mapping: PanoMapping | None = None

    def __post_init__(self):
        if self.mode == "perspective":
            if not isinstance(self.intrinsics, Intrinsics):
                raise CalibrationError("perspective target needs intrinsics")
        elif self.mode == "panorama":
            if not isinstance(self.mapping, PanoMapping):
                raise CalibrationError("panorama target needs a pano mapping")
        else:
            raise CalibrationError(f"unknown target mode {self.mode!r}")
        if not isinstance(self.pose, Extrinsics):
            raise CalibrationError("target pose must be an Extrinsics")

    @classmethod
    def perspective(cls, intrinsics: Intrinsics, pose: Extrinsics) -> "TargetCamera":
        return cls(mode="perspective", pose=pose, intrinsics=intrinsics)

    @classmethod
    def panorama(cls, mapping: PanoMapping, pose: Extrinsics) -> "TargetCamera":
        return cls(mode="panorama", pose=pose, mapping=mapping)

    @property
    def width(self) -> int:
        return self.intrinsics.width if self.mode == "perspective" else self.mapping.width

    @property
    def height(self) -> int:
        return self.intrinsics.height if self.mode == "perspective" else self.mapping.height


@dataclass(frozen=True)
class RenderResult:
    """Un-premultiplied RGBA image plus status flags."""

    image: np.ndarray
    ordering_warning: bool


@dataclass(frozen=True)
class MdpGradients:
    """Gradients w.r.t. every layer's color, depth, and alpha maps."""

    colors: np.ndarray  # (M, H, W, 3)
    depths: np.ndarray  # (M, H, W)
    alphas: np.ndarray  # (M, H, W)


def soft_z_resolve(contributions, zcfg: SoftZConfig):
    """Merge (color, alpha, inverse depth, weight) contributions at one
    pixel: exponential depth weighting sharpened by tau, shifted by the
    max inverse depth so nothing overflows, denominator floored by
    epsilon. Empty input resolves to fully transparent black."""
    if len(contributions) == 0:
        return np.zeros(3), 0.0
    colors = np.array([np.asarray(c, dtype=np.float64) for c, _, _, _ in contributions])
    alphas = np.array([float(a) for _, a, _, _ in contributions])
    ds = np.array([float(d) for _, _, d, _ in contributions])
    ws = np.array([float(w) for _, _, _, w in contributions])
    if np.any(ws < 0):
        raise ValueError("splat weights must be non-negative")
    e = np.exp((ds - ds.max()) * zcfg.tau)
    den = max(float((ws * e).sum()), zcfg.epsilon)
    color = (ws * e) @ colors / den
    alpha = float((ws * e * alphas).sum() / den)
    return color, alpha


# ---------------------------------------------------------------------------
# forward plan
# ---------------------------------------------------------------------------


@dataclass
class _LayerPlan:
    """Frozen discretization of one layer's splat: which shell pixels
    contribute, where their footprints land, and the linear-in-depth
    coefficients that turn a stored depth into target inverse depth."""

    idx: np.ndarray        # (N,) flat shell-pixel indices with alpha > 0
    corners: np.ndarray    # (4, N) flat target-pixel indices
    weights: np.ndarray    # (4, N) bilinear corner weights
    live: np.ndarray       # (4, N) corner contributes (in bounds, w > 0)
    lin: np.ndarray        # (2 or 4, N) coefficients mapping D -> depth measure
    dmax: np.ndarray       # (P,) frozen per-target-pixel max inverse depth


@dataclass
class _RenderPlan:
    mode: str
    shape: tuple
    layers: list = field(default_factory=list)


def _measure_and_pixels(target: TargetCamera, points: np.ndarray, dirs: np.ndarray):
    """Project points; return (u, v, d, valid, lin) where d is the soft
    z-buffer inverse depth and lin holds the coefficients making the
    depth measure an explicit function of the stored depth D (points =
    dirs * D)."""
    pose = target.pose
    cam = points @ pose.rotation.T + pose.translation
    rdirs = dirs @ pose.rotation.T
    if target.mode == "perspective":
        intr = target.intrinsics
        z = cam[:, 2]
        valid = z > 1e-12
        zs = np.where(valid, z, 1.0)
        u = intr.fx * cam[:, 0] / zs + intr.cx
        v = intr.fy * cam[:, 1] / zs + intr.cy
        d = np.where(valid, 1.0 / zs, 0.0)
        lin = np.stack([rdirs[:, 2], np.full(len(z), pose.translation[2])])
        return u, v, d, valid, lin
    mapping = target.mapping
    rho = np.hypot(cam[:, 0], cam[:, 1])
    valid = rho > 1e-12
    rs = np.where(valid, rho, 1.0)
    h = cam[:, 2] / rs
    # relative slack keeps points sitting exactly on the vertical FOV
    # boundary (the panorama's own edge rows) from dropping to float fuzz
    valid &= np.abs(h) <= mapping.v_fov_slope * (1.0 + 1e-9)
    u = mapping.col_of_phi(np.arctan2(cam[:, 1], cam[:, 0]))
    v = mapping.row_of_h(np.where(valid, h, 0.0))
    d = np.where(valid, 1.0 / rs, 0.0)
    lin = np.stack([
        rdirs[:, 0], np.full(len(rho), pose.translation[0]),
        rdirs[:, 1], np.full(len(rho), pose.translation[1]),
    ])
    return u, v, d, valid, lin


def _footprint(u, v, width, height, wrap: bool):
    """2x2 bilinear corners: flat indices, weights, and liveness."""
    c0 = np.floor(u).astype(np.int64)
    r0 = np.floor(v).astype(np.int64)
    fu = u - c0
    fv = v - r0
    cols = np.stack([c0, c0 + 1, c0, c0 + 1])
    rows = np.stack([r0, r0, r0 + 1, r0 + 1])
    weights = np.stack([(1 - fu) * (1 - fv), fu * (1 - fv),
                        (1 - fu) * fv, fu * fv])
    if wrap:
        col_ok = np.ones(cols.shape, dtype=bool)
        cols = cols % width
    else:
        col_ok = (cols >= 0) & (cols < width)
        cols = np.clip(cols, 0, width - 1)
    row_ok = (rows >= 0) & (rows < height)
    rows = np.clip(rows, 0, height - 1)
    live = col_ok & row_ok & (weights > 0)
    return rows * width + cols, weights, live


def _depth_measure(lin: np.ndarray, depth: np.ndarray, mode: str):
    """Inverse depth of each point as a function of its stored depth."""
    if mode == "perspective":
        z = lin[0] * depth + lin[1]
        return 1.0 / np.maximum(z, 1e-12)
    x = lin[0] * depth + lin[1]
    y = lin[2] * depth + lin[3]
    return 1.0 / np.maximum(np.hypot(x, y), 1e-12)


def _build_plan(mdp: Mdp, target: TargetCamera, zcfg: SoftZConfig) -> _RenderPlan:
    height, width = target.height, target.width
    plan = _RenderPlan(mode=target.mode, shape=(height, width))
    phis = mdp.mapping.phi_centers()
    hs = mdp.mapping.h_centers()
    dir_grid = np.stack([
        np.broadcast_to(np.cos(phis), (mdp.height, mdp.width)),
        np.broadcast_to(np.sin(phis), (mdp.height, mdp.width)),
        np.broadcast_to(hs[:, None], (mdp.height, mdp.width)),
    ], axis=-1).reshape(-1, 3)
    for layer in mdp.layers:
        idx = np.flatnonzero(layer.alpha.ravel() > 0)
        depth = layer.depth.ravel()[idx].astype(np.float64)
        dirs = dir_grid[idx]
        u, v, d, valid, lin = _measure_and_pixels(
            target, dirs * depth[:, None], dirs)
        idx, u, v, lin = idx[valid], u[valid], v[valid], lin[:, valid]
        d = d[valid]
        corners, weights, live = _footprint(
            u, v, width, height, wrap=target.mode == "panorama")
        dmax = np.full(height * width, -np.inf)
        if len(idx):
            for k in range(4):
                lk = live[k]
                np.maximum.at(dmax, corners[k][lk], d[lk])
        plan.layers.append(_LayerPlan(idx=idx, corners=corners,
                                      weights=weights, live=live,
                                      lin=lin, dmax=dmax))
    return plan


def _layer_maps(plan: _RenderPlan, mdp: Mdp, zcfg: SoftZConfig):
    """Per-layer soft-z-resolved maps plus the raw sums backward needs."""
    pixels = plan.shape[0] * plan.shape[1]
    out = []
    for lp, layer in zip(plan.layers, mdp.layers):
        color = layer.color.reshape(-1, 3)[lp.idx].astype(np.float64)
        alpha = layer.alpha.ravel()[lp.idx].astype(np.float64)
        depth = layer.depth.ravel()[lp.idx].astype(np.float64)
        d = _depth_measure(lp.lin, depth, plan.mode)
        den = np.zeros(pixels)
        num_c = np.zeros((pixels, 3))
        num_a = np.zeros(pixels)
        contribs = []
        for k in range(4):
            lk = lp.live[k]
            pix = lp.corners[k][lk]
            g = lp.weights[k][lk] * np.exp((d[lk] - lp.dmax[pix]) * zcfg.tau)
            np.add.at(den, pix, g)
            np.add.at(num_c, pix, g[:, None] * color[lk])
            np.add.at(num_a, pix, g * alpha[lk])
            contribs.append((lk, pix, g))
        safe = np.maximum(den, zcfg.epsilon)
        out.append({
            "cbar": num_c / safe[:, None],
            "abar": num_a / safe,
            "den": den, "num_c": num_c, "num_a": num_a,
            "d": d, "color": color, "alpha": alpha, "depth": depth,
            "contribs": contribs,
        })
    return out


def _composite(maps, shape):
    """Back-to-front over; returns the final premultiplied color, alpha,
    and the running prefixes backward needs (before each layer)."""
    pixels = shape[0] * shape[1]
    pre = np.zeros((pixels, 3))
    acc = np.zeros(pixels)
    prefixes = []
    for m in reversed(range(len(maps))):
        prefixes.append((pre, acc))
        abar = maps[m]["abar"]
        pre = abar[:, None] * maps[m]["cbar"] + (1.0 - abar)[:, None] * pre
        acc = abar + (1.0 - abar) * acc
    return pre, acc, prefixes


def _finish_image(pre, acc, shape):
    covered = acc > 0
    color = np.where(covered[:, None], pre / np.maximum(acc, 1e-300)[:, None], 0.0)
    img = np.concatenate([color, acc[:, None]], axis=1)
    return np.clip(img, 0.0, 1.0).reshape(shape[0], shape[1], 4)


def _ordering_warning(mdp: Mdp, target: TargetCamera) -> bool:
    center = target.pose.center
    radius = float(np.hypot(center[0], center[1]))
    for m, layer in enumerate(mdp.layers):
        if np.any(layer.alpha > 0):
            return radius >= mdp.partition.bounds(m)[0]
    return False


def render(mdp: Mdp, target: TargetCamera, zcfg: SoftZConfig | None = None) -> RenderResult:
    """Splat every shell onto the target and over-composite, outermost
    shell first. A target centered outside the innermost occupied shell
    flags ``ordering_warning`` and renders anyway."""
    zcfg = zcfg if zcfg is not None else SoftZConfig()
    plan = _build_plan(mdp, target, zcfg)
    maps = _layer_maps(plan, mdp, zcfg)
    pre, acc, _ = _composite(maps, plan.shape)
    return RenderResult(image=_finish_image(pre, acc, plan.shape),
                        ordering_warning=_ordering_warning(mdp, target))


def _render_frozen(mdp: Mdp, plan: _RenderPlan, zcfg: SoftZConfig) -> np.ndarray:
    """Forward pass reusing a frozen plan (footprints, d_max, point
    selection); the function whose exact gradient render_backward
    reports."""
    maps = _layer_maps(plan, mdp, zcfg)
    pre, acc, _ = _composite(maps, plan.shape)
    return _finish_image(pre, acc, plan.shape)


def render_backward(mdp: Mdp, target: TargetCamera, zcfg: SoftZConfig,
                    output_grad: np.ndarray) -> MdpGradients:
    """Exact gradients of render's RGBA output (weighted by
    ``output_grad``) w.r.t. every layer color, depth, and alpha, under
    the frozen forward discretization."""
    zcfg = zcfg if zcfg is not None else SoftZConfig()
    plan = _build_plan(mdp, target, zcfg)
    maps = _layer_maps(plan, mdp, zcfg)
    pre, acc, prefixes = _composite(maps, plan.shape)
    pixels = plan.shape[0] * plan.shape[1]
    g = np.asarray(output_grad, dtype=np.float64).reshape(pixels, 4)
    shells = len(mdp.layers)

    # through the un-premultiply; the [0,1] clip is an identity here
    # because convex blends of in-range inputs stay in range
    covered = acc > 0
    inv_a = np.where(covered, 1.0 / np.maximum(acc, 1e-300), 0.0)
    d_pre = g[:, :3] * inv_a[:, None]
    d_acc = g[:, 3] - (g[:, :3] * pre).sum(axis=1) * inv_a ** 2

    grad_c = np.zeros((shells, mdp.height * mdp.width, 3))
    grad_d = np.zeros((shells, mdp.height * mdp.width))
    grad_a = np.zeros((shells, mdp.height * mdp.width))
    # reverse the composite, innermost shell (applied last) first
    for m in range(shells):
        pre_before, acc_before = prefixes[shells - 1 - m]
        mp = maps[m]
        abar, cbar = mp["abar"], mp["cbar"]
        d_abar = (d_pre * (cbar - pre_before)).sum(axis=1)
        d_abar += d_acc * (1.0 - acc_before)
        d_cbar = d_pre * abar[:, None]
        d_pre = d_pre * (1.0 - abar)[:, None]
        d_acc = d_acc * (1.0 - abar)

        den = mp["den"]
        safe = np.maximum(den, zcfg.epsilon)
        d_num_c = d_cbar / safe[:, None]
        d_num_a = d_abar / safe
        d_den = -((mp["num_c"] * d_cbar).sum(axis=1) + mp["num_a"] * d_abar) / safe ** 2
        d_den[den <= zcfg.epsilon] = 0.0

        lp = plan.layers[m]
        dd_point = np.zeros(len(lp.idx))
        for lk, pix, gk in mp["contribs"]:
            gc = gk[:, None] * d_num_c[pix]
            np.add.at(grad_c[m], lp.idx[lk], gc)
            np.add.at(grad_a[m], lp.idx[lk], gk * d_num_a[pix])
            dd = zcfg.tau * gk * (
                (mp["color"][lk] * d_num_c[pix]).sum(axis=1)
                + mp["alpha"][lk] * d_num_a[pix] + d_den[pix])
            np.add.at(dd_point, np.flatnonzero(lk), dd)
        # d -> stored depth through the projection geometry
        d = mp["d"]
        if plan.mode == "perspective":
            dD = -lp.lin[0] * d ** 2
        else:
            x = lp.lin[0] * mp["depth"] + lp.lin[1]
            y = lp.lin[2] * mp["depth"] + lp.lin[3]
            dD = -(x * lp.lin[0] + y * lp.lin[2]) * d ** 3
        np.add.at(grad_d[m], lp.idx, dd_point * dD)

    hw = (shells, mdp.height, mdp.width)
    return MdpGradients(colors=grad_c.reshape(*hw, 3),
                        depths=grad_d.reshape(hw),
                        alphas=grad_a.reshape(hw))


def render_sequence(mdp: Mdp, targets, zcfg: SoftZConfig | None = None):
    """Render each target in order; returns (results, seconds per frame)."""
    results = []
    seconds = []
    for target in targets:
        start = time.perf_counter()
        results.append(render(mdp, target, zcfg))
        seconds.append(time.perf_counter() - start)
    return results, seconds
