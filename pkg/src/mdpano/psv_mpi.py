"""Plane-sweep volumes and per-view multiplane image estimation.

Depth layers are sampled linearly in disparity between near and far and
stored back to front: layer 0 is the farthest plane (largest metric
depth, smallest disparity). The default MPI estimator is a non-learned
photoconsistency method; anything conforming to :class:`MpiEstimator`
can replace it without touching downstream stages.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .exceptions import CalibrationError, NumericDegeneracyError
from .geometry import CameraRig, Extrinsics, Intrinsics


@dataclass(frozen=True)
class Psv:
    """Plane-sweep volume for one reference view.

    volume holds the N neighbor images warped to the reference view at
    each depth plane, shape (L, H, W, N, 3); validity marks in-bounds
    warps, shape (L, H, W, N).
    """

    ref_view: int
    depths: np.ndarray
    volume: np.ndarray
    validity: np.ndarray
    neighbors: tuple

    def __post_init__(self):
        d = np.asarray(self.depths, dtype=np.float64)
        if d.ndim != 1 or d.shape[0] < 2:
            raise ValueError("need at least 2 depth planes")
        if not (np.all(d > 0) and np.all(np.diff(d) < 0)):
            raise ValueError("depths must be positive and strictly decreasing")
        l, n = d.shape[0], len(self.neighbors)
        if n < 1:
            raise ValueError("need at least 1 neighbor view")
        if self.volume.shape[:1] + self.volume.shape[3:] != (l, n, 3):
            raise ValueError(f"volume shape {self.volume.shape} inconsistent")
        if self.validity.shape != self.volume.shape[:4]:
            raise ValueError(f"validity shape {self.validity.shape} inconsistent")
        object.__setattr__(self, "depths", d)

    @property
    def layer_count(self) -> int:
        return self.depths.shape[0]


@dataclass(frozen=True)
class Mpi:
    """Per-view stack of fronto-parallel RGBA planes, back to front."""

    view: int
    depths: np.ndarray
    colors: np.ndarray  # (L, H, W, 3) in [0, 1]
    alphas: np.ndarray  # (L, H, W) in [0, 1]

    def __post_init__(self):
        d = np.asarray(self.depths, dtype=np.float64)
        if not (np.all(d > 0) and np.all(np.diff(d) < 0)):
            raise ValueError("depths must be positive and strictly decreasing")
        if self.colors.shape != d.shape + self.alphas.shape[1:] + (3,):
            raise ValueError(
                f"colors {self.colors.shape} / alphas {self.alphas.shape} mismatch"
            )
        if float(self.alphas.min(initial=0.0)) < 0.0 or float(
            self.alphas.max(initial=0.0)
        ) > 1.0:
            raise ValueError("alphas must lie in [0, 1]")
        if float(self.colors.min(initial=0.0)) < 0.0 or float(
            self.colors.max(initial=0.0)
        ) > 1.0:
            raise ValueError("colors must lie in [0, 1]")
        object.__setattr__(self, "depths", d)

    @property
    def layer_count(self) -> int:
        return self.depths.shape[0]


class MpiEstimator(Protocol):
    """Anything that turns a plane-sweep volume into an MPI."""

    def estimate(self, psv: Psv) -> Mpi: ...


# ---------------------------------------------------------------------------
# neighbor selection
# ---------------------------------------------------------------------------

def nearest_neighbors(rig: CameraRig, view: int, n: int) -> list:
    """The n cameras whose optical axes are angularly closest to ``view``.

    Ties break by ascending camera index; the reference view is excluded.
    """
    k = len(rig.cameras)
    if not 0 <= view < k:
        raise ValueError(f"view {view} out of range for {k} cameras")
    if not 1 <= n < k:
        raise ValueError(f"neighbor count {n} must be in [1, {k - 1}]")
    ez = np.array([0.0, 0.0, 1.0])
    ref_axis = rig.cameras[view][1].rotation.T @ ez
    scored = []
    for j, (_, extr) in enumerate(rig.cameras):
        if j == view:
            continue
        cosang = float(np.clip(ref_axis @ (extr.rotation.T @ ez), -1.0, 1.0))
        scored.append((np.arccos(cosang), j))
    scored.sort()
    return [j for _, j in scored[:n]]


# ---------------------------------------------------------------------------
# plane-sweep volume construction
# ---------------------------------------------------------------------------

def _k3(intr: Intrinsics) -> np.ndarray:
    return np.array(
        [[intr.fx, 0.0, intr.cx], [0.0, intr.fy, intr.cy], [0.0, 0.0, 1.0]]
    )


def _bilinear_gather(img: np.ndarray, u: np.ndarray, v: np.ndarray):
    """Sample img (H, W, 3) at float coords; returns (values, inbounds)."""
    h, w = img.shape[:2]
    inb = (u >= 0.0) & (u <= w - 1) & (v >= 0.0) & (v <= h - 1)
    uc = np.clip(u, 0.0, w - 1)
    vc = np.clip(v, 0.0, h - 1)
    x0 = np.minimum(np.floor(uc).astype(np.int64), w - 2) if w > 1 else np.zeros_like(uc, np.int64)
    y0 = np.minimum(np.floor(vc).astype(np.int64), h - 2) if h > 1 else np.zeros_like(vc, np.int64)
    fu = (uc - x0)[..., None]
    fv = (vc - y0)[..., None]
    val = (
        img[y0, x0] * (1 - fu) * (1 - fv)
        + img[y0, x0 + 1] * fu * (1 - fv)
        + img[y0 + 1, x0] * (1 - fu) * fv
        + img[y0 + 1, x0 + 1] * fu * fv
    )
    return np.where(inb[..., None], val, 0.0), inb


def build_psv(rig: CameraRig, images, view: int, near: float, far: float,
              layer_count: int, neighbor_count: int, workers: int = 1) -> Psv:
    """Warp the nearest neighbor views to ``view`` over a disparity ladder.

    Each of ``layer_count`` planes is fronto-parallel to the reference
    camera at depth d_l, with 1/d_l spaced linearly between 1/far and
    1/near; neighbors are resampled bilinearly through the plane-induced
    homography. Output is deterministic for any ``workers`` value.
    """
    if not (near > 0 and far > near):
        raise ValueError("need far > near > 0")
    if layer_count < 2:
        raise ValueError("need at least 2 layers")
    if len(images) != len(rig.cameras):
        raise CalibrationError(
            f"{len(images)} images for {len(rig.cameras)} cameras"
        )
    disparities = np.linspace(1.0 / far, 1.0 / near, layer_count)
    depths = 1.0 / disparities

    neighbors = nearest_neighbors(rig, view, neighbor_count)
    ref_intr, ref_extr = rig.cameras[view]
    h, w = ref_intr.height, ref_intr.width
    k_ref_inv = np.linalg.inv(_k3(ref_intr))

    # homographies (reference pixel -> neighbor pixel) per neighbor, layer
    homs = np.empty((len(neighbors), layer_count, 3, 3))
    for j, nb in enumerate(neighbors):
        nb_intr, nb_extr = rig.cameras[nb]
        r_rel = nb_extr.rotation @ ref_extr.rotation.T
        t_rel = nb_extr.translation - r_rel @ ref_extr.translation
        # neighbor camera center in the reference frame; a sweep plane
        # through it makes the homography singular
        center_z = float((ref_extr.apply(nb_extr.center))[2])
        for l, d in enumerate(depths):
            if abs(1.0 - center_z / d) < 1e-9:
                raise NumericDegeneracyError(
                    f"sweep plane {l} (depth {d:.6g} m) passes through "
                    f"camera {nb}",
                    layer=l,
                )
            homs[j, l] = _k3(nb_intr) @ (
                r_rel + np.outer(t_rel, np.array([0.0, 0.0, 1.0])) / d
            ) @ k_ref_inv

    imgs64 = [np.asarray(im, dtype=np.float64) for im in images]
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    grid = np.stack([xs, ys, np.ones_like(xs)], axis=-1)  # (H, W, 3)

    volume = np.empty((layer_count, h, w, len(neighbors), 3), dtype=np.float32)
    validity = np.empty((layer_count, h, w, len(neighbors)), dtype=bool)

    def fill_layer(l: int) -> None:
        for j, nb in enumerate(neighbors):
            q = grid @ homs[j, l].T
            z = q[..., 2]
            behind = z <= 0.0
            zsafe = np.where(behind, 1.0, z)
            u = q[..., 0] / zsafe
            v = q[..., 1] / zsafe
            val, inb = _bilinear_gather(imgs64[nb], u, v)
            inb &= ~behind
            volume[l, :, :, j] = np.where(inb[..., None], val, 0.0)
            validity[l, :, :, j] = inb

    if workers <= 1:
        for l in range(layer_count):
            fill_layer(l)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(fill_layer, range(layer_count)))

    return Psv(ref_view=view, depths=depths, volume=volume,
               validity=validity, neighbors=tuple(neighbors))


# ---------------------------------------------------------------------------
# photoconsistency estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhotoconsistencyEstimator:
    """Opacity from inter-view color agreement on the sweep planes.

    Per pixel and layer, the mean color over valid neighbor samples
    becomes the layer color and the inter-view variance scores the
    layer; opacities are a softmax of -variance/sigma0^2 over layers,
    power-corrected so the per-pixel transmitted opacity
    1 - prod(1 - alpha_l) reaches at least ``alpha_min``.
    """

    sigma0: float = 0.05
    alpha_min: float = 0.999

    def estimate(self, psv: Psv) -> Mpi:
        valid = psv.validity[..., None]
        vol = psv.volume.astype(np.float64)
        counts = psv.validity.sum(axis=3)  # (L, H, W)
        safe = np.maximum(counts, 1)[..., None]
        mu = (vol * valid).sum(axis=3) / safe
        sq = ((vol - mu[:, :, :, None, :]) ** 2 * valid).sum(axis=3) / safe
        var = sq.mean(axis=-1)  # channel-mean inter-view variance

        score = np.where(counts > 0, -var / self.sigma0**2, -np.inf)
        peak = score.max(axis=0)
        any_layer = np.isfinite(peak)
        with np.errstate(invalid="ignore"):
            e = np.where(counts > 0, np.exp(score - np.where(any_layer, peak, 0.0)), 0.0)
        z = e.sum(axis=0)
        s = np.divide(e, z, out=np.zeros_like(e), where=z > 0)

        # power correction: alpha = 1 - (1-s)^gamma keeps the per-layer
        # ranking and lifts total transmitted opacity to alpha_min
        with np.errstate(divide="ignore", invalid="ignore"):
            log_keep = np.log1p(-np.minimum(s, 1.0))
            total = log_keep.sum(axis=0)
            gamma = np.maximum(1.0, np.log(1.0 - self.alpha_min) / total)
            alpha = -np.expm1(gamma[None] * log_keep)
        alpha = np.clip(np.where(s >= 1.0, 1.0, alpha), 0.0, 1.0)
        alpha = np.where(counts > 0, alpha, 0.0)

        colors = np.clip(mu, 0.0, 1.0)
        colors = np.where((counts > 0)[..., None], colors, 0.0)
        return Mpi(
            view=psv.ref_view,
            depths=psv.depths,
            colors=colors.astype(np.float32),
            alphas=alpha.astype(np.float32),
        )


def estimate_mpi(psv: Psv, estimator: MpiEstimator | None = None) -> Mpi:
    """Run ``estimator`` (default photoconsistency) and sanity-check shapes."""
    est = estimator if estimator is not None else PhotoconsistencyEstimator()
    mpi = est.estimate(psv)
    if mpi.alphas.shape != psv.volume.shape[:3]:
        raise ValueError(
            f"estimator produced {mpi.alphas.shape}, expected {psv.volume.shape[:3]}"
        )
    if not np.array_equal(mpi.depths, psv.depths):
        raise ValueError("estimator changed the depth ladder")
    return mpi


def composite_mpi(mpi: Mpi):
    """Over-composite the layer stack back to front at the source view.

    Returns (rgb, alpha) where rgb is premultiplied (the image over a
    black background); divide by alpha to un-premultiply.
    """
    rgb = np.zeros(mpi.alphas.shape[1:] + (3,), dtype=np.float64)
    acc_a = np.zeros(mpi.alphas.shape[1:], dtype=np.float64)
    for l in range(mpi.layer_count):
        a = mpi.alphas[l].astype(np.float64)[..., None]
        rgb = mpi.colors[l] * a + (1.0 - a) * rgb
        acc_a = mpi.alphas[l] + (1.0 - mpi.alphas[l]) * acc_a
    return rgb, acc_a
