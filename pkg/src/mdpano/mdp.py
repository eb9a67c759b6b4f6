"""Concentric cylindrical shell panoramas.

An MPI is lifted to a cylindrical point cloud around the rig center, the
points are binned into radial shells, each bin collapses to one RGBD-alpha
panorama layer, and per-view layer stacks blend into a single global stack.

Conventions: shell index increases with radius (shell 0 is innermost);
compositing runs in premultiplied alpha and stored layers are
un-premultiplied; within a panorama pixel, points sort back to front by
their source MPI layer index (higher index = nearer), ties broken by
arrival order.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .exceptions import IncompatibleMdpError
from .geometry import (
    CameraRig,
    Extrinsics,
    Intrinsics,
    PanoMapping,
    unproject_pixels,
    world_to_cylindrical,
)
from .psv_mpi import Mpi, MpiEstimator, PhotoconsistencyEstimator, build_psv, estimate_mpi

__all__ = [
    "ShellPartition",
    "MdpLayer",
    "Mdp",
    "CylPointCloud",
    "MdpView",
    "mpi_to_cyl_points",
    "bin_points",
    "collapse_bin",
    "BlendAccumulator",
    "blend_mdps",
    "build_view_mdp",
    "build_global_mdp",
    "build_rgbd_panorama",
]


# ---------------------------------------------------------------------------
# shell partition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShellPartition:
    """Radial partition of [rho_min, rho_max] into ``count`` shells.

    ``mode`` places the boundaries equidistantly in radius ("radius") or in
    inverse radius ("inverse"). Radii outside the range clamp to the first
    or last shell.
    """

    rho_min: float
    rho_max: float
    count: int
    mode: str = "radius"
    boundaries: np.ndarray = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if not (self.rho_min > 0 and self.rho_max > self.rho_min):
            raise ValueError("need rho_max > rho_min > 0")
        if self.count < 1:
            raise ValueError("need at least one shell")
        if self.mode == "radius":
            b = np.linspace(self.rho_min, self.rho_max, self.count + 1)
        elif self.mode == "inverse":
            b = 1.0 / np.linspace(1.0 / self.rho_min, 1.0 / self.rho_max,
                                  self.count + 1)
        else:
            raise ValueError(f"unknown partition mode {self.mode!r}")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.boundaries[:-1] + self.boundaries[1:])

    def bounds(self, m: int) -> tuple:
        return float(self.boundaries[m]), float(self.boundaries[m + 1])

    def bin_of(self, rho) -> np.ndarray:
        """Shell index per radius; half-open bins [b_m, b_m+1), clamped."""
        rho = np.asarray(rho, dtype=np.float64)
        idx = np.searchsorted(self.boundaries, rho, side="right") - 1
        return np.clip(idx, 0, self.count - 1)


# ---------------------------------------------------------------------------
# layer containers
# ---------------------------------------------------------------------------

def _check_plane(name, arr, shape):
    a = np.asarray(arr)
    if a.shape != shape:
        raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
    if not np.issubdtype(a.dtype, np.floating):
        raise ValueError(f"{name} must be floating point")
    return a


@dataclass(frozen=True)
class MdpLayer:
    """One shell's panorama: color in [0,1], depth = radius in meters,
    opacity alpha in [0,1]. Depth is zero by convention wherever alpha is."""

    color: np.ndarray
    depth: np.ndarray
    alpha: np.ndarray
    shell: int = 0

    def __post_init__(self):
        if self.color.ndim != 3 or self.color.shape[2] != 3:
            raise ValueError("color must be (H, W, 3)")
        h, w = self.color.shape[:2]
        _check_plane("color", self.color, (h, w, 3))
        _check_plane("depth", self.depth, (h, w))
        _check_plane("alpha", self.alpha, (h, w))
        if self.alpha.size:
            if self.alpha.min() < 0 or self.alpha.max() > 1:
                raise ValueError("alpha must lie in [0, 1]")
            if self.color.min() < 0 or self.color.max() > 1:
                raise ValueError("color must lie in [0, 1]")
            if not np.all(np.isfinite(self.depth)) or self.depth.min() < 0:
                raise ValueError("depth must be finite and non-negative")
            if np.any(self.depth[self.alpha == 0] != 0):
                raise ValueError("depth must be zero wherever alpha is zero")


@dataclass(frozen=True)
class Mdp:
    """Stack of shell layers ordered by increasing radius, plus the
    panorama mapping and shell partition that define its geometry."""

    layers: tuple
    mapping: PanoMapping
    partition: ShellPartition

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) != self.partition.count:
            raise ValueError(
                f"{len(self.layers)} layers for a "
                f"{self.partition.count}-shell partition"
            )
        shape = (self.mapping.height, self.mapping.width)
        tol = 1e-5 * max(1.0, self.partition.rho_max)
        for m, layer in enumerate(self.layers):
            if not isinstance(layer, MdpLayer) or layer.shell != m:
                raise ValueError(f"layer {m} missing or mislabeled")
            if layer.alpha.shape != shape:
                raise ValueError(
                    f"layer {m} is {layer.alpha.shape}, mapping wants {shape}"
                )
            lo, hi = self.partition.bounds(m)
            live = layer.alpha > 0
            if np.any(live):
                d = layer.depth[live]
                if d.min() < lo - tol or d.max() > hi + tol:
                    raise ValueError(
                        f"layer {m} depth escapes shell range [{lo}, {hi}]"
                    )

    @property
    def shell_count(self) -> int:
        return len(self.layers)

    @property
    def width(self) -> int:
        return self.mapping.width

    @property
    def height(self) -> int:
        return self.mapping.height


@dataclass(frozen=True)
class CylPointCloud:
    """Flat arrays of cylindrical points with color, opacity, source view,
    per-point view weight, and source MPI layer index (for depth order)."""

    rho: np.ndarray
    phi: np.ndarray
    z: np.ndarray
    color: np.ndarray
    alpha: np.ndarray
    view: np.ndarray
    weight: np.ndarray
    layer: np.ndarray

    def __post_init__(self):
        n = self.rho.shape[0]
        for name in ("phi", "z", "alpha", "weight", "view", "layer"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        if self.color.shape != (n, 3):
            raise ValueError(f"color must have shape ({n}, 3)")
        if n:
            if self.alpha.min() < 0 or self.alpha.max() > 1:
                raise ValueError("alpha must lie in [0, 1]")
            if self.weight.min() < 0 or self.weight.max() > 1:
                raise ValueError("weight must lie in [0, 1]")

    def __len__(self) -> int:
        return self.rho.shape[0]

    def select(self, mask) -> "CylPointCloud":
        return CylPointCloud(
            rho=self.rho[mask], phi=self.phi[mask], z=self.z[mask],
            color=self.color[mask], alpha=self.alpha[mask],
            view=self.view[mask], weight=self.weight[mask],
            layer=self.layer[mask],
        )


@dataclass(frozen=True)
class MdpView:
    """One view's shell stack before blending: per-shell color, depth,
    alpha, and blend-weight maps, stacked (shells, H, W[, 3])."""

    view: int
    colors: np.ndarray
    depths: np.ndarray
    alphas: np.ndarray
    weights: np.ndarray
    mapping: PanoMapping
    partition: ShellPartition

    def __post_init__(self):
        m = self.partition.count
        shape = (m, self.mapping.height, self.mapping.width)
        for name in ("depths", "alphas", "weights"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
        if self.colors.shape != shape + (3,):
            raise ValueError(f"colors must have shape {shape + (3,)}")


# ---------------------------------------------------------------------------
# MPI -> cylindrical point cloud
# ---------------------------------------------------------------------------

def mpi_to_cyl_points(mpi: Mpi, cam: tuple, rig_center: Extrinsics,
                      alpha_cull: float = 1e-4) -> CylPointCloud:
    """Lift every MPI pixel with alpha above ``alpha_cull`` to a cylindrical
    point around the rig center.

    The per-point weight is the cosine of the angle between the pixel's
    camera ray and the optical axis. Points are emitted layer-major in
    raster order, so position encodes arrival for depth-order ties.
    """
    intr, extr = cam
    if not isinstance(intr, Intrinsics) or not isinstance(extr, Extrinsics):
        raise TypeError("cam must be an (Intrinsics, Extrinsics) pair")
    h, w = intr.height, intr.width
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    a = (xs - intr.cx) / intr.fx
    b = (ys - intr.cy) / intr.fy
    axis_cos = 1.0 / np.sqrt(1.0 + a * a + b * b)

    parts = {k: [] for k in ("rho", "phi", "z", "color", "alpha", "view",
                             "weight", "layer")}
    for l in range(mpi.layer_count):
        mask = mpi.alphas[l] > alpha_cull
        count = int(mask.sum())
        if count == 0:
            continue
        world = unproject_pixels(xs[mask], ys[mask], 1.0 / mpi.depths[l],
                                 intr, extr, rig_center)
        rho, phi, z = world_to_cylindrical(world)
        parts["rho"].append(rho)
        parts["phi"].append(phi)
        parts["z"].append(z)
        parts["color"].append(mpi.colors[l][mask].astype(np.float64))
        parts["alpha"].append(mpi.alphas[l][mask].astype(np.float64))
        parts["view"].append(np.full(count, mpi.view, np.int32))
        parts["weight"].append(axis_cos[mask])
        parts["layer"].append(np.full(count, l, np.int32))

    if not parts["rho"]:
        return CylPointCloud(
            rho=np.zeros(0), phi=np.zeros(0), z=np.zeros(0),
            color=np.zeros((0, 3)), alpha=np.zeros(0),
            view=np.zeros(0, np.int32), weight=np.zeros(0),
            layer=np.zeros(0, np.int32),
        )
    return CylPointCloud(**{k: np.concatenate(v) for k, v in parts.items()})


def bin_points(cloud: CylPointCloud, partition: ShellPartition) -> list:
    """Split a cloud into per-shell clouds; order within a bin is kept."""
    bins = partition.bin_of(cloud.rho)
    return [cloud.select(bins == m) for m in range(partition.count)]


# ---------------------------------------------------------------------------
# collapse
# ---------------------------------------------------------------------------

def _collapse_maps(cloud: CylPointCloud, mapping: PanoMapping, bounds):
    """Composite a bin's points per panorama pixel, back to front.

    Returns float64 (color, depth, alpha, weight) maps; color, depth, and
    weight are normalized by the final alpha, depth then clamps to
    ``bounds`` when given. Empty pixels stay all-zero.
    """
    h, w = mapping.height, mapping.width
    color = np.zeros((h * w, 3))
    depth = np.zeros(h * w)
    alpha = np.zeros(h * w)
    weight = np.zeros(h * w)
    if len(cloud):
        ci, ri, valid = mapping.nearest_pixels(cloud.rho, cloud.phi, cloud.z)
        sel = valid & (cloud.alpha > 0)
        flat = (ri[sel].astype(np.int64) * w + ci[sel])
        lay = np.asarray(cloud.layer)[sel]
        arrival = np.arange(flat.size)
        # per pixel: nearest (highest layer, latest arrival) first
        order = np.lexsort((-arrival, -lay, flat))
        f = flat[order]
        a_s = cloud.alpha[sel][order]
        c_s = cloud.color[sel][order]
        d_s = cloud.rho[sel][order]
        w_s = cloud.weight[sel][order]

        if f.size:
            starts = np.flatnonzero(np.r_[True, f[1:] != f[:-1]])
            counts = np.diff(np.r_[starts, f.size])
            ranks = np.arange(f.size) - np.repeat(starts, counts)
            trans = np.ones(h * w)
            for r in range(int(counts.max())):
                m = ranks == r
                pix = f[m]
                t = trans[pix]
                ta = t * a_s[m]
                color[pix] += ta[:, None] * c_s[m]
                depth[pix] += ta * d_s[m]
                weight[pix] += ta * w_s[m]
                alpha[pix] += ta
                trans[pix] = t * (1.0 - a_s[m])

    live = alpha > 0
    color[live] /= alpha[live, None]
    depth[live] /= alpha[live]
    weight[live] /= alpha[live]
    np.clip(alpha, 0.0, 1.0, out=alpha)
    np.clip(color, 0.0, 1.0, out=color)
    if bounds is not None:
        depth[live] = np.clip(depth[live], bounds[0], bounds[1])
    return (color.reshape(h, w, 3), depth.reshape(h, w),
            alpha.reshape(h, w), weight.reshape(h, w))


def collapse_bin(bin_points: CylPointCloud, mpi_depth_order=None,
                 mapping: PanoMapping = None, *, shell: int = 0,
                 bounds=None) -> MdpLayer:
    """Collapse one bin's points to a single panorama layer.

    ``mpi_depth_order`` gives each point's source MPI layer index for
    back-to-front sorting; by default the cloud's own layer field is used.
    """
    cloud = bin_points
    if mpi_depth_order is not None:
        order = np.asarray(mpi_depth_order)
        if order.shape != (len(cloud),):
            raise ValueError("mpi_depth_order must have one entry per point")
        cloud = dataclasses.replace(cloud, layer=order.astype(np.int32))
    color, depth, alpha, _ = _collapse_maps(cloud, mapping, bounds)
    return MdpLayer(color=color, depth=depth, alpha=alpha, shell=shell)


# ---------------------------------------------------------------------------
# blending
# ---------------------------------------------------------------------------

class BlendAccumulator:
    """Streaming weight*alpha blend of per-view shell stacks.

    Folds views one at a time in the order given, so peak memory is one
    view plus the running sums, and the result depends only on the fold
    order (bit-identical for any worker count when callers feed views in
    fixed view order).
    """

    def __init__(self) -> None:
        self._first: MdpView | None = None
        self._den = None
        self._num_c = None
        self._num_d = None
        self._num_a = None

    def add(self, view: MdpView) -> None:
        if self._first is None:
            self._first = view
            self._den = np.zeros(view.alphas.shape)
            self._num_c = np.zeros(view.colors.shape)
            self._num_d = np.zeros(view.depths.shape)
            self._num_a = np.zeros(view.alphas.shape)
        else:
            if view.mapping != self._first.mapping:
                raise IncompatibleMdpError("views disagree on panorama mapping")
            if view.partition != self._first.partition:
                raise IncompatibleMdpError("views disagree on shell partition")
        wa = view.weights * view.alphas
        self._den += wa
        self._num_c += wa[..., None] * view.colors
        self._num_d += wa * view.depths
        self._num_a += wa * view.alphas

    def finish(self) -> Mdp:
        if self._first is None:
            raise IncompatibleMdpError("nothing to blend")
        return _finish_blend(self._first, self._den, self._num_c,
                             self._num_d, self._num_a)


def blend_mdps(per_view) -> Mdp:
    """Blend per-view shell stacks into one global MDP.

    Per shell and pixel, channels combine as weight*alpha weighted averages
    over the views (alpha itself included, so alpha_out =
    sum(w a^2)/sum(w a)); pixels with zero denominator stay empty. The
    result is cast to float32. ``per_view`` may be any iterable; it is
    consumed one view at a time.
    """
    acc = BlendAccumulator()
    for v in per_view:
        acc.add(v)
    return acc.finish()


def _finish_blend(first: MdpView, den, num_c, num_d, num_a) -> Mdp:
    live = den > 0
    safe = np.where(live, den, 1.0)
    color = np.where(live[..., None], num_c / safe[..., None], 0.0)
    depth = np.where(live, num_d / safe, 0.0)
    alpha = np.where(live, num_a / safe, 0.0)

    color32 = np.clip(color, 0.0, 1.0).astype(np.float32)
    depth32 = depth.astype(np.float32)
    alpha32 = np.clip(alpha, 0.0, 1.0).astype(np.float32)
    # float32 rounding must not break the alpha-zero / depth-zero pact
    dead = alpha32 == 0
    color32[dead] = 0.0
    depth32[dead] = 0.0

    part = first.partition
    layers = []
    for m in range(part.count):
        lo, hi = part.bounds(m)
        d = depth32[m]
        d = np.where(dead[m], 0.0, np.clip(d, lo, hi)).astype(np.float32)
        layers.append(MdpLayer(color=color32[m], depth=d, alpha=alpha32[m],
                               shell=m))
    return Mdp(layers=tuple(layers), mapping=first.mapping, partition=part)


# ---------------------------------------------------------------------------
# per-view and global builds
# ---------------------------------------------------------------------------

def build_view_mdp(mpi: Mpi, cam: tuple, rig_center: Extrinsics,
                   mapping: PanoMapping, partition: ShellPartition,
                   alpha_cull: float = 1e-4) -> MdpView:
    """Project one MPI to cylindrical points and collapse per shell."""
    cloud = mpi_to_cyl_points(mpi, cam, rig_center, alpha_cull)
    bins = bin_points(cloud, partition)
    maps = [_collapse_maps(bins[m], mapping, partition.bounds(m))
            for m in range(partition.count)]
    return MdpView(
        view=mpi.view,
        colors=np.stack([t[0] for t in maps]),
        depths=np.stack([t[1] for t in maps]),
        alphas=np.stack([t[2] for t in maps]),
        weights=np.stack([t[3] for t in maps]),
        mapping=mapping,
        partition=partition,
    )


def _pipeline_pieces(config: PipelineConfig, estimator):
    mapping = PanoMapping(width=config.pano_width, height=config.pano_height,
                          v_fov_slope=config.v_fov_slope)
    partition = ShellPartition(rho_min=config.effective_rho_min,
                               rho_max=config.effective_rho_max,
                               count=config.shells,
                               mode=config.partition_mode)
    if estimator is None:
        estimator = PhotoconsistencyEstimator(sigma0=config.sigma0,
                                              alpha_min=config.alpha_min)
    return mapping, partition, estimator


def _stream_in_order(fn, indices, workers):
    """Yield fn(i) in index order, computing at most ``workers`` ahead.

    Bounded prefetch keeps peak memory at O(workers) results instead of
    materializing every result, while the in-order yield keeps downstream
    folds bit-identical for any worker count.
    """
    if workers <= 1:
        for i in indices:
            yield fn(i)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = deque()
        for i in indices:
            pending.append(pool.submit(fn, i))
            if len(pending) > workers:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def _view_stream(rig, images, config, estimator, mapping, partition, workers):
    def one_view(v):
        psv = build_psv(rig, images, v, config.near, config.far,
                        config.mpi_layers, config.neighbors, workers=1)
        mpi = estimate_mpi(psv, estimator)
        return build_view_mdp(mpi, rig.cameras[v], rig.rig_center,
                              mapping, partition, config.alpha_cull)

    return _stream_in_order(one_view, range(len(rig.cameras)), workers)


def build_global_mdp(rig: CameraRig, images, config: PipelineConfig,
                     workers: int | None = None,
                     estimator: MpiEstimator | None = None) -> Mdp:
    """Full reconstruction: per-view MPIs, shell collapse, global blend.

    Views are processed independently (in parallel when ``workers`` > 1)
    and merged in fixed view order, so output is bit-deterministic for any
    worker count.
    """
    mapping, partition, estimator = _pipeline_pieces(config, estimator)
    workers = config.workers if workers is None else workers
    views = _view_stream(rig, images, config, estimator, mapping, partition,
                         workers)
    return blend_mdps(views)


def build_rgbd_panorama(rig: CameraRig, images, config: PipelineConfig,
                        workers: int | None = None,
                        estimator: MpiEstimator | None = None) -> Mdp:
    """Single-layer build: collapse each view's full cloud with no binning.

    Dedicated code path for the one-shell case; its output must be
    bit-identical to build_global_mdp with one shell.
    """
    config = dataclasses.replace(config, shells=1)
    mapping, partition, estimator = _pipeline_pieces(config, estimator)
    workers = config.workers if workers is None else workers
    bounds = (partition.rho_min, partition.rho_max)

    def one_view(v):
        psv = build_psv(rig, images, v, config.near, config.far,
                        config.mpi_layers, config.neighbors, workers=1)
        mpi = estimate_mpi(psv, estimator)
        cloud = mpi_to_cyl_points(mpi, rig.cameras[v], rig.rig_center,
                                  config.alpha_cull)
        color, depth, alpha, weight = _collapse_maps(cloud, mapping, bounds)
        return MdpView(view=v, colors=color[None], depths=depth[None],
                       alphas=alpha[None], weights=weight[None],
                       mapping=mapping, partition=partition)

    views = _stream_in_order(one_view, range(len(rig.cameras)), workers)
    return blend_mdps(views)
