"""Synthetic scenes with an exact ray-cast reference renderer, image
quality metrics, and the layer-count / translation sweep harness.

The ray caster shoots one deterministic ray per pixel (no antialiasing),
nearest analytic hit wins, so reference images are exact and every
resampling error measured downstream belongs to the pipeline under test.
Depth maps hold camera z for perspective targets, radial distance for
panorama targets, and 0 where no surface is hit. A mirror patch reflects
a ray once into the non-mirror primitives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .exceptions import SceneFormatError
from .geometry import (
    CameraRig,
    Extrinsics,
    Intrinsics,
    PanoMapping,
    make_ring_rig,
    rotation_looking,
)
from .mdp import ShellPartition, blend_mdps, build_view_mdp
from .psv_mpi import PhotoconsistencyEstimator, build_psv, estimate_mpi
from .renderer import SoftZConfig, TargetCamera, render

PSNR_CAP = 99.0
SCENE_FILE_FORMAT = "mdpano-scene"
SCENE_FILE_VERSION = 1


# ---------------------------------------------------------------------------
# textures and primitives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Texture:
    """Procedural surface color as a function of (u, v) in [0, 1]^2.

    kinds: solid (color_a), checker (color_a/color_b cells), gradient
    (color_a to color_b along v), noise (seeded value noise mixing color_a
    toward color_b independently per channel, u wraps). ``scale`` is the
    cell count across the unit uv square.
    """

    kind: str = "solid"
    color_a: tuple = (0.5, 0.5, 0.5)
    color_b: tuple = (0.1, 0.1, 0.1)
    scale: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("solid", "checker", "gradient", "noise"):
            raise ValueError(f"unknown texture kind {self.kind!r}")
        for c in (self.color_a, self.color_b):
            arr = np.asarray(c, dtype=np.float64)
            if arr.shape != (3,) or arr.min() < 0 or arr.max() > 1:
                raise ValueError("texture colors must be RGB triples in [0, 1]")
        if self.scale <= 0:
            raise ValueError("texture scale must be positive")
        object.__setattr__(self, "color_a", tuple(float(x) for x in self.color_a))
        object.__setattr__(self, "color_b", tuple(float(x) for x in self.color_b))

    def sample(self, u, v):
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        a = np.asarray(self.color_a)
        b = np.asarray(self.color_b)
        if self.kind == "solid":
            return np.broadcast_to(a, u.shape + (3,)).copy()
        if self.kind == "checker":
            parity = (np.floor(u * self.scale) + np.floor(v * self.scale)) % 2
            return np.where(parity[..., None] == 0, a, b)
        if self.kind == "gradient":
            t = np.clip(v, 0.0, 1.0)[..., None]
            return a * (1 - t) + b * t
        # value noise: bilinear over a seeded lattice, wrapping in u so
        # cylinder seams stay continuous; lattice values mix a toward b
        n = max(2, int(round(self.scale)))
        mix = np.random.default_rng(self.seed).uniform(0.05, 0.95, (n + 1, n, 3))
        grid = a + mix * (b - a)
        x = (u % 1.0) * n
        y = np.clip(v, 0.0, 1.0) * n
        x0 = np.floor(x).astype(int) % n
        y0 = np.clip(np.floor(y).astype(int), 0, n - 1)
        fx = (x - np.floor(x))[..., None]
        fy = (y - y0)[..., None]
        x1 = (x0 + 1) % n
        top = grid[y0, x0] * (1 - fx) + grid[y0, x1] * fx
        bot = grid[y0 + 1, x0] * (1 - fx) + grid[y0 + 1, x1] * fx
        return top * (1 - fy) + bot * fy


@dataclass(frozen=True)
class Cylinder:
    """Open cylinder around the world z axis."""

    radius: float
    zmin: float
    zmax: float
    texture: Texture

    def __post_init__(self):
        if self.radius <= 0 or not self.zmax > self.zmin:
            raise ValueError("cylinder needs radius > 0 and zmax > zmin")


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    texture: Texture

    def __post_init__(self):
        if self.radius <= 0 or len(self.center) != 3:
            raise ValueError("sphere needs a 3-vector center and radius > 0")
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by opposite corners."""

    lo: tuple
    hi: tuple
    texture: Texture

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(hi > lo):
            raise ValueError("box needs 3-vector corners with hi > lo")
        object.__setattr__(self, "lo", tuple(map(float, lo)))
        object.__setattr__(self, "hi", tuple(map(float, hi)))


@dataclass(frozen=True)
class Mirror:
    """Perfect planar mirror patch on an axis-aligned plane.

    ``axis`` names the plane normal (0, 1, or 2), ``value`` the plane
    coordinate; ``lo``/``hi`` bound the patch in the two remaining axes,
    in ascending axis order.
    """

    axis: int
    value: float
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError("mirror axis must be 0, 1, or 2")
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != (2,) or hi.shape != (2,) or not np.all(hi > lo):
            raise ValueError("mirror needs 2-vector patch bounds with hi > lo")
        object.__setattr__(self, "lo", tuple(map(float, lo)))
        object.__setattr__(self, "hi", tuple(map(float, hi)))


@dataclass(frozen=True)
class SyntheticScene:
    """Primitives plus a background color; empty scenes are legal and
    render to pure background."""

    primitives: tuple = ()
    background: tuple = (0.5, 0.5, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        bg = np.asarray(self.background, dtype=np.float64)
        if bg.shape != (3,) or bg.min() < 0 or bg.max() > 1:
            raise ValueError("background must be an RGB triple in [0, 1]")
        object.__setattr__(self, "background", tuple(map(float, bg)))
        for p in self.primitives:
            if not isinstance(p, (Cylinder, Sphere, Box, Mirror)):
                raise ValueError(f"unsupported primitive {type(p).__name__}")


# ---------------------------------------------------------------------------
# ray casting
# ---------------------------------------------------------------------------

_MISS = np.inf


def _rays(target: TargetCamera):
    """Ray origin and per-pixel world directions; the ray parameter t is
    camera z for perspective targets and radial distance for panoramas."""
    pose = target.pose
    if target.mode == "perspective":
        intr = target.intrinsics
        xs, ys = np.meshgrid(np.arange(intr.width, dtype=np.float64),
                             np.arange(intr.height, dtype=np.float64))
        d_cam = np.stack([(xs - intr.cx) / intr.fx,
                          (ys - intr.cy) / intr.fy,
                          np.ones_like(xs)], axis=-1)
        return pose.center, d_cam @ pose.rotation
    mapping = target.mapping
    phis = mapping.phi_centers()
    hs = mapping.h_centers()
    P, Hh = np.meshgrid(phis, hs)
    d_t = np.stack([np.cos(P), np.sin(P), Hh], axis=-1)
    return pose.center, d_t @ pose.rotation


def _hit_cylinder(prim: Cylinder, o, d):
    a = d[..., 0] ** 2 + d[..., 1] ** 2
    b = 2.0 * (o[0] * d[..., 0] + o[1] * d[..., 1])
    c = o[0] ** 2 + o[1] ** 2 - prim.radius ** 2
    disc = b * b - 4.0 * a * c
    ok = (disc >= 0.0) & (a > 0.0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    best = np.full(d.shape[:2], _MISS)
    hit_z = np.zeros(d.shape[:2])
    for root in ((-b - sq) / np.where(a > 0, 2 * a, 1.0),
                 (-b + sq) / np.where(a > 0, 2 * a, 1.0)):
        z = o[2] + root * d[..., 2]
        good = ok & (root > 1e-9) & (z >= prim.zmin) & (z <= prim.zmax) & (root < best)
        best = np.where(good, root, best)
        hit_z = np.where(good, z, hit_z)
    phi = np.arctan2(o[1] + best * d[..., 1], o[0] + best * d[..., 0])
    u = (phi + np.pi) / (2.0 * np.pi)
    v = (hit_z - prim.zmin) / (prim.zmax - prim.zmin)
    return best, u, v


def _hit_sphere(prim: Sphere, o, d):
    ctr = np.asarray(prim.center)
    oc = o - ctr
    a = (d * d).sum(axis=-1)
    b = 2.0 * (d @ oc)
    c = oc @ oc - prim.radius ** 2
    disc = b * b - 4.0 * a * c
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    best = np.full(d.shape[:2], _MISS)
    for root in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)):
        good = ok & (root > 1e-9) & (root < best)
        best = np.where(good, root, best)
    p = o + best[..., None] * d
    rel = p - ctr
    u = (np.arctan2(rel[..., 1], rel[..., 0]) + np.pi) / (2.0 * np.pi)
    v = np.arccos(np.clip(rel[..., 2] / prim.radius, -1.0, 1.0)) / np.pi
    return best, u, v


def _hit_box(prim: Box, o, d):
    lo = np.asarray(prim.lo)
    hi = np.asarray(prim.hi)
    safe = np.where(np.abs(d) > 1e-300, d, 1e-300)
    t1 = (lo - o) / safe
    t2 = (hi - o) / safe
    tn = np.minimum(t1, t2).max(axis=-1)
    tf = np.maximum(t1, t2).min(axis=-1)
    t = np.where(tn > 1e-9, tn, tf)
    good = (tn <= tf) & (t > 1e-9)
    best = np.where(good, t, _MISS)
    p = o + best[..., None] * d
    # face = the axis whose slab bounds the entry point
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    face = np.where((tn > 1e-9)[..., None],
                    near == tn[..., None], far == tf[..., None])
    axis = np.argmax(face, axis=-1)
    span = hi - lo
    frac = (p - lo) / span
    others = np.array([[1, 2], [0, 2], [0, 1]])
    u = np.take_along_axis(frac, others[axis][..., 0][..., None], -1)[..., 0]
    v = np.take_along_axis(frac, others[axis][..., 1][..., None], -1)[..., 0]
    return best, u, v


def _hit_mirror(prim: Mirror, o, d):
    dk = d[..., prim.axis]
    safe = np.where(np.abs(dk) > 1e-300, dk, 1e-300)
    t = (prim.value - o[prim.axis]) / safe
    p = o + t[..., None] * d
    rest = [i for i in range(3) if i != prim.axis]
    inside = ((p[..., rest[0]] >= prim.lo[0]) & (p[..., rest[0]] <= prim.hi[0])
              & (p[..., rest[1]] >= prim.lo[1]) & (p[..., rest[1]] <= prim.hi[1]))
    good = (np.abs(dk) > 1e-12) & (t > 1e-9) & inside
    return np.where(good, t, _MISS)


def _nearest_solid(scene: SyntheticScene, o, d):
    """Closest non-mirror hit: (t, rgb) with background color at misses."""
    shape = d.shape[:2]
    best = np.full(shape, _MISS)
    rgb = np.broadcast_to(np.asarray(scene.background), shape + (3,)).copy()
    for prim in scene.primitives:
        if isinstance(prim, Mirror):
            continue
        if isinstance(prim, Cylinder):
            t, u, v = _hit_cylinder(prim, o, d)
        elif isinstance(prim, Sphere):
            t, u, v = _hit_sphere(prim, o, d)
        else:
            t, u, v = _hit_box(prim, o, d)
        closer = t < best
        if closer.any():
            best = np.where(closer, t, best)
            u = np.where(closer, u, 0.0)
            v = np.where(closer, v, 0.0)
            rgb[closer] = prim.texture.sample(u, v)[closer]
    return best, rgb


def raycast_render(scene: SyntheticScene, target: TargetCamera):
    """Reference render: (rgb, depth), one exact ray per pixel.

    Mirror patches reflect the ray once into the non-mirror primitives;
    their depth is the full unfolded path, which is where the virtual
    image lives.
    """
    o, d = _rays(target)
    best, rgb = _nearest_solid(scene, o, d)

    mirror_t = np.full(d.shape[:2], _MISS)
    mirror_axis = np.full(d.shape[:2], -1)
    for prim in scene.primitives:
        if isinstance(prim, Mirror):
            t = _hit_mirror(prim, o, d)
            closer = t < mirror_t
            mirror_t = np.where(closer, t, mirror_t)
            mirror_axis = np.where(closer, prim.axis, mirror_axis)

    bounce = mirror_t < best
    if bounce.any():
        t_m = mirror_t[bounce][..., None]
        d_b = d[bounce]
        p = o + t_m * d_b
        axes = mirror_axis[bounce]
        d_r = d_b.copy()
        d_r[np.arange(len(axes)), axes] *= -1.0
        # reflected rays have per-pixel origins, so trace them as a batch
        t2 = np.full(len(axes), _MISS)
        rgb2 = np.broadcast_to(np.asarray(scene.background),
                               (len(axes), 3)).copy()
        for prim in scene.primitives:
            if isinstance(prim, Mirror):
                continue
            po = p + 1e-9 * d_r
            if isinstance(prim, Cylinder):
                t, u, v = _hit_cylinder_points(prim, po, d_r)
            elif isinstance(prim, Sphere):
                t, u, v = _hit_sphere_points(prim, po, d_r)
            else:
                t, u, v = _hit_box_points(prim, po, d_r)
            closer = t < t2
            if closer.any():
                t2 = np.where(closer, t, t2)
                u = np.where(closer, u, 0.0)
                v = np.where(closer, v, 0.0)
                rgb2[closer] = prim.texture.sample(u, v)[closer]
        depth_b = np.where(np.isfinite(t2), mirror_t[bounce] + t2, 0.0)
        color_b = np.where(np.isfinite(t2)[..., None], rgb2,
                           np.asarray(scene.background))
        rgb[bounce] = color_b
        best[bounce] = np.where(np.isfinite(t2), depth_b, _MISS)

    depth = np.where(np.isfinite(best), best, 0.0)
    return rgb, depth


def _hit_cylinder_points(prim, o, d):
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2.0 * (o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1])
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - prim.radius ** 2
    disc = b * b - 4.0 * a * c
    ok = (disc >= 0.0) & (a > 0.0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    best = np.full(len(a), _MISS)
    hit_z = np.zeros(len(a))
    for root in ((-b - sq) / np.where(a > 0, 2 * a, 1.0),
                 (-b + sq) / np.where(a > 0, 2 * a, 1.0)):
        z = o[:, 2] + root * d[:, 2]
        good = ok & (root > 1e-9) & (z >= prim.zmin) & (z <= prim.zmax) & (root < best)
        best = np.where(good, root, best)
        hit_z = np.where(good, z, hit_z)
    phi = np.arctan2(o[:, 1] + best * d[:, 1], o[:, 0] + best * d[:, 0])
    u = (phi + np.pi) / (2.0 * np.pi)
    v = (hit_z - prim.zmin) / (prim.zmax - prim.zmin)
    return best, u, v


def _hit_sphere_points(prim, o, d):
    ctr = np.asarray(prim.center)
    oc = o - ctr
    a = (d * d).sum(axis=-1)
    b = 2.0 * (d * oc).sum(axis=-1)
    c = (oc * oc).sum(axis=-1) - prim.radius ** 2
    disc = b * b - 4.0 * a * c
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    best = np.full(len(a), _MISS)
    for root in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)):
        good = ok & (root > 1e-9) & (root < best)
        best = np.where(good, root, best)
    p = o + best[:, None] * d
    rel = p - ctr
    u = (np.arctan2(rel[:, 1], rel[:, 0]) + np.pi) / (2.0 * np.pi)
    v = np.arccos(np.clip(rel[:, 2] / prim.radius, -1.0, 1.0)) / np.pi
    return best, u, v


def _hit_box_points(prim, o, d):
    lo = np.asarray(prim.lo)
    hi = np.asarray(prim.hi)
    safe = np.where(np.abs(d) > 1e-300, d, 1e-300)
    t1 = (lo - o) / safe
    t2 = (hi - o) / safe
    tn = np.minimum(t1, t2).max(axis=-1)
    tf = np.maximum(t1, t2).min(axis=-1)
    t = np.where(tn > 1e-9, tn, tf)
    good = (tn <= tf) & (t > 1e-9)
    best = np.where(good, t, _MISS)
    p = o + best[:, None] * d
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    face = np.where((tn > 1e-9)[:, None], near == tn[:, None], far == tf[:, None])
    axis = np.argmax(face, axis=-1)
    frac = (p - lo) / (hi - lo)
    others = np.array([[1, 2], [0, 2], [0, 1]])
    u = frac[np.arange(len(axis)), others[axis][:, 0]]
    v = frac[np.arange(len(axis)), others[axis][:, 1]]
    return best, u, v


def render_rig_views(scene: SyntheticScene, rig: CameraRig):
    """Reference image per rig camera, the pipeline's synthetic input."""
    images = []
    for intr, extr in rig.cameras:
        rgb, _ = raycast_render(scene, TargetCamera.perspective(intr, extr))
        images.append(rgb)
    return images

# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    """Image quality triple: peak signal-to-noise (dB, capped), structural
    similarity, and mean absolute error in linear color."""

    psnr: float
    ssim: float
    l1: float


def _gaussian_window(size=11, sigma=1.5):
    half = size // 2
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable valid-mode correlation with a 1d window, rows then cols."""
    from numpy.lib.stride_tricks import sliding_window_view

    t = sliding_window_view(img, len(g), axis=1) @ g
    return sliding_window_view(t, len(g), axis=0) @ g


def _ssim_channel(a, b, k1=0.01, k2=0.03):
    g = _gaussian_window()
    c1, c2 = k1 ** 2, k2 ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(score.mean())


def compute_metrics(rendered, ground_truth) -> MetricsReport:
    """PSNR (10*log10(1/MSE), capped at 99 dB for identical images), SSIM
    (11x11 Gaussian window, valid region, channels averaged), and L1."""
    a = np.asarray(rendered, dtype=np.float64)
    b = np.asarray(ground_truth, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if a.shape[0] < 11 or a.shape[1] < 11:
        raise ValueError("images must be at least 11x11 for the SSIM window")
    mse = float(np.mean((a - b) ** 2))
    psnr = PSNR_CAP if mse == 0.0 else min(10.0 * math.log10(1.0 / mse), PSNR_CAP)
    ssim = float(np.mean([_ssim_channel(a[..., c], b[..., c])
                          for c in range(a.shape[2])]))
    l1 = float(np.mean(np.abs(a - b)))
    return MetricsReport(psnr=psnr, ssim=ssim, l1=l1)


def mean_report(reports) -> MetricsReport:
    """Aggregate as the arithmetic mean of per-frame metrics."""
    if not reports:
        raise ValueError("cannot aggregate zero reports")
    return MetricsReport(
        psnr=float(np.mean([r.psnr for r in reports])),
        ssim=float(np.mean([r.ssim for r in reports])),
        l1=float(np.mean([r.l1 for r in reports])),
    )


# ---------------------------------------------------------------------------
# experiment harness
# ---------------------------------------------------------------------------


def _estimate_view_mpis(rig, images, config: PipelineConfig):
    """Per-view plane-sweep MPIs; the expensive stage every shell count
    shares, so sweeps compute it once."""
    estimator = PhotoconsistencyEstimator(sigma0=config.sigma0,
                                          alpha_min=config.alpha_min)
    mpis = []
    for v in range(len(rig.cameras)):
        psv = build_psv(rig, images, v, config.near, config.far,
                        config.mpi_layers, config.neighbors)
        mpis.append(estimate_mpi(psv, estimator))
    return mpis


def _assemble(rig, mpis, config: PipelineConfig, shells: int):
    mapping = PanoMapping(width=config.pano_width, height=config.pano_height,
                          v_fov_slope=config.v_fov_slope)
    partition = ShellPartition(rho_min=config.effective_rho_min,
                               rho_max=config.effective_rho_max,
                               count=shells, mode=config.partition_mode)
    views = (build_view_mdp(mpi, rig.cameras[v], rig.rig_center, mapping,
                            partition, config.alpha_cull)
             for v, mpi in enumerate(mpis))
    return blend_mdps(views)


def _over_background(image_rgba, background):
    """Composite the rendered RGBA onto the scene background so uncovered
    pixels compare against what the reference shows there."""
    a = image_rgba[..., 3:4]
    return image_rgba[..., :3] * a + np.asarray(background) * (1.0 - a)


def _evaluate(mdp, targets, truths, background, zcfg):
    reports = []
    for target, truth in zip(targets, truths):
        out = render(mdp, target, zcfg).image
        reports.append(compute_metrics(_over_background(out, background), truth))
    return reports


def layer_sweep_experiment(scene: SyntheticScene, rig: CameraRig, m_values,
                           targets, config: PipelineConfig):
    """Reconstruction quality versus shell count: one table row per M,
    metrics averaged over the target poses."""
    if not m_values or not targets:
        raise ValueError("need at least one shell count and one target")
    images = render_rig_views(scene, rig)
    mpis = _estimate_view_mpis(rig, images, config)
    truths = [raycast_render(scene, t)[0] for t in targets]
    zcfg = SoftZConfig(tau=config.tau, epsilon=config.epsilon)
    rows = []
    for m in m_values:
        mdp = _assemble(rig, mpis, config, int(m))
        agg = mean_report(_evaluate(mdp, targets, truths, scene.background, zcfg))
        rows.append({"layers": int(m), "psnr": agg.psnr, "ssim": agg.ssim,
                     "l1": agg.l1})
    return rows


def displaced_target(base: TargetCamera, magnitude: float) -> TargetCamera:
    """Same orientation and camera model, center moved to ``magnitude``
    meters along the base center's direction from the rig origin."""
    center = base.pose.center
    norm = float(np.linalg.norm(center))
    if norm < 1e-12:
        if magnitude != 0.0:
            raise ValueError("base target sits at the origin, direction undefined")
        return base
    new_center = center / norm * magnitude
    R = base.pose.rotation
    pose = Extrinsics(rotation=R, translation=-R @ new_center)
    if base.mode == "perspective":
        return TargetCamera.perspective(base.intrinsics, pose)
    return TargetCamera.panorama(base.mapping, pose)


def disparity_sweep_experiment(scene: SyntheticScene, rig: CameraRig,
                               translation_magnitudes, base_targets,
                               config: PipelineConfig):
    """Rendering quality versus how far the target moves from the rig
    center; the panorama is built once at the configured shell count."""
    if not translation_magnitudes or not base_targets:
        raise ValueError("need at least one magnitude and one target")
    images = render_rig_views(scene, rig)
    mpis = _estimate_view_mpis(rig, images, config)
    mdp = _assemble(rig, mpis, config, config.shells)
    zcfg = SoftZConfig(tau=config.tau, epsilon=config.epsilon)
    rows = []
    for s in translation_magnitudes:
        targets = [displaced_target(t, float(s)) for t in base_targets]
        truths = [raycast_render(scene, t)[0] for t in targets]
        agg = mean_report(_evaluate(mdp, targets, truths, scene.background, zcfg))
        rows.append({"translation": float(s), "psnr": agg.psnr,
                     "ssim": agg.ssim, "l1": agg.l1})
    return rows


def format_table(rows) -> str:
    """Tab-separated table with a header row, floats at 6 digits."""
    if not rows:
        return ""
    cols = list(rows[0].keys())
    lines = ["\t".join(cols)]
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def save_table(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"format": "mdpano-table", "version": 1, "rows": rows}, f,
                  indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# scene files and stock scenes
# ---------------------------------------------------------------------------


def _texture_doc(tex: Texture) -> dict:
    return {"kind": tex.kind, "color_a": list(tex.color_a),
            "color_b": list(tex.color_b), "scale": tex.scale, "seed": tex.seed}


def _texture_from(doc) -> Texture:
    return Texture(kind=doc["kind"], color_a=tuple(doc["color_a"]),
                   color_b=tuple(doc["color_b"]), scale=float(doc["scale"]),
                   seed=int(doc["seed"]))


def scene_to_file(scene: SyntheticScene, path) -> None:
    prims = []
    for p in scene.primitives:
        if isinstance(p, Cylinder):
            prims.append({"kind": "cylinder", "radius": p.radius,
                          "zmin": p.zmin, "zmax": p.zmax,
                          "texture": _texture_doc(p.texture)})
        elif isinstance(p, Sphere):
            prims.append({"kind": "sphere", "center": list(p.center),
                          "radius": p.radius,
                          "texture": _texture_doc(p.texture)})
        elif isinstance(p, Box):
            prims.append({"kind": "box", "lo": list(p.lo), "hi": list(p.hi),
                          "texture": _texture_doc(p.texture)})
        else:
            prims.append({"kind": "mirror", "axis": p.axis, "value": p.value,
                          "lo": list(p.lo), "hi": list(p.hi)})
    doc = {"format": SCENE_FILE_FORMAT, "version": SCENE_FILE_VERSION,
           "background": list(scene.background), "primitives": prims}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def scene_from_file(path) -> SyntheticScene:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise SceneFormatError(f"cannot read scene {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"scene {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != SCENE_FILE_FORMAT:
        raise SceneFormatError(f"{path} is not a scene file")
    if doc.get("version") != SCENE_FILE_VERSION:
        raise SceneFormatError(
            f"unsupported scene version {doc.get('version')!r}")
    prims = []
    try:
        for p in doc["primitives"]:
            kind = p["kind"]
            if kind == "cylinder":
                prims.append(Cylinder(radius=float(p["radius"]),
                                      zmin=float(p["zmin"]),
                                      zmax=float(p["zmax"]),
                                      texture=_texture_from(p["texture"])))
            elif kind == "sphere":
                prims.append(Sphere(center=tuple(p["center"]),
                                    radius=float(p["radius"]),
                                    texture=_texture_from(p["texture"])))
            elif kind == "box":
                prims.append(Box(lo=tuple(p["lo"]), hi=tuple(p["hi"]),
                                 texture=_texture_from(p["texture"])))
            elif kind == "mirror":
                prims.append(Mirror(axis=int(p["axis"]),
                                    value=float(p["value"]),
                                    lo=tuple(p["lo"]), hi=tuple(p["hi"])))
            else:
                raise SceneFormatError(f"unknown primitive kind {kind!r}")
        return SyntheticScene(primitives=prims,
                              background=tuple(doc["background"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"malformed scene {path}: {exc}") from exc


def standard_scene() -> SyntheticScene:
    """Stock evaluation scene: an enclosing textured far wall plus a ring of
    small boxes and spheres whose radii spread continuously over the mid
    range, so every view mixes several depths and extra shells keep paying
    off. Deterministic by construction (no RNG): slot k sits at azimuth
    k*15 deg and gets a radius from a full-period shuffle of the range."""
    palette = [
        ("checker", (0.85, 0.30, 0.20), (0.95, 0.85, 0.60), 6.0),
        ("noise", (0.20, 0.40, 0.80), (0.90, 0.90, 0.95), 10.0),
        ("gradient", (0.25, 0.70, 0.35), (0.95, 0.95, 0.90), 8.0),
        ("checker", (0.20, 0.35, 0.80), (0.90, 0.90, 0.95), 8.0),
        ("noise", (0.80, 0.70, 0.25), (0.30, 0.20, 0.15), 9.0),
        ("gradient", (0.60, 0.25, 0.70), (0.95, 0.80, 0.55), 7.0),
    ]
    prims: list = [Cylinder(radius=6.2, zmin=-2.8, zmax=2.8,
                            texture=Texture(kind="noise", scale=20, seed=11))]
    for k in range(24):
        theta = k * (2.0 * math.pi / 24.0)
        rho = 2.4 + 3.2 * ((7 * k) % 24) / 23.0
        kind, ca, cb, tscale = palette[k % len(palette)]
        tex = Texture(kind=kind, color_a=ca, color_b=cb, scale=tscale, seed=k)
        zc = 0.15 * math.sin(3.0 * theta)
        if k % 11 == 5:
            prims.append(Sphere(center=(rho * math.cos(theta),
                                        rho * math.sin(theta), zc),
                                radius=0.45, texture=tex))
            continue
        half_r, half_t = 0.2, min(0.5, 0.154 * rho)
        hx = abs(math.cos(theta)) * half_r + abs(math.sin(theta)) * half_t
        hy = abs(math.sin(theta)) * half_r + abs(math.cos(theta)) * half_t
        hz = 0.24 * rho
        cx, cy = rho * math.cos(theta), rho * math.sin(theta)
        prims.append(Box(lo=(cx - hx, cy - hy, zc - hz),
                         hi=(cx + hx, cy + hy, zc + hz), texture=tex))
    return SyntheticScene(primitives=tuple(prims))


def mirror_scene() -> SyntheticScene:
    """Mirror demonstration: a marker sphere reflected by a wall patch, so
    the reflection parallaxes like a surface behind the wall."""
    return SyntheticScene(primitives=(
        Mirror(axis=0, value=3.0, lo=(-1.6, -1.2), hi=(1.6, 1.2)),
        Sphere(center=(1.0, 0.8, 0.0), radius=0.4,
               texture=Texture(kind="solid", color_a=(0.95, 0.1, 0.1))),
        Cylinder(radius=7.0, zmin=-3.0, zmax=3.0,
                 texture=Texture(kind="noise", scale=16, seed=3,
                                 color_a=(0.1, 0.25, 0.35),
                                 color_b=(0.55, 0.8, 0.9))),
    ), background=(0.15, 0.15, 0.15))


def standard_rig() -> CameraRig:
    """Stock capture rig for the benchmark sweeps: 16 outward cameras on a
    0.5 m ring, 100 deg horizontal FOV, 256x128 sensors."""
    return make_ring_rig(k=16, ring_radius=0.5, hfov_deg=100.0,
                         width=256, height=128)


def standard_eval_config() -> PipelineConfig:
    """Stock pipeline configuration for the benchmark sweeps.

    The depth range brackets the standard scene (surfaces 2.2 .. 6.2),
    shells partition inverse radius, and the panorama keeps the default
    2560x640 grid so 640x320 evaluation views sample slightly coarser
    than the stored panorama."""
    return PipelineConfig(near=1.6, far=9.0, mpi_layers=24, neighbors=4,
                          shells=5, partition_mode="inverse",
                          pano_width=2560, pano_height=640,
                          v_fov_slope=0.45, sigma0=0.05)


def standard_eval_targets(count: int = 12, offset: float = 0.35,
                          width: int = 640, height: int = 320,
                          focal: float = 360.0) -> list:
    """Evaluation cameras: ``count`` poses spread over azimuth, each offset
    from the rig center perpendicular to its gaze (so translation sweeps
    move them laterally).

    The focal length must keep the target's angular pixel pitch at or
    below the panorama's: point splats cover ~1 source pixel, so a target
    that samples finer than the panorama leaves inter-splat holes. The
    defaults (640x320 at focal 360 against a 2560-wide panorama) sample at
    0.88x the panorama density."""
    intr = Intrinsics(fx=focal, fy=focal, cx=(width - 1) / 2.0,
                      cy=(height - 1) / 2.0, width=width, height=height)
    targets = []
    for j in range(count):
        theta = j * (2.0 * math.pi / count)
        center = np.array([-offset * math.sin(theta),
                           offset * math.cos(theta), 0.0])
        rot = rotation_looking(theta, 0.0).T
        pose = Extrinsics(rotation=rot, translation=-rot @ center)
        targets.append(TargetCamera.perspective(intr, pose))
    return targets
