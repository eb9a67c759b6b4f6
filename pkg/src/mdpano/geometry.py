"""Camera models, rig poses, and cylindrical panorama coordinates.

Conventions used throughout the package:

- Right-handed world frame; the cylinder axis is the world z-axis through
  the rig center and world coordinates are rig-centered by default.
- Camera frames look down +z with +x right and +y down in the image.
- ``Extrinsics`` maps world to frame: p_frame = R p_world + t.
- Azimuth phi lives in [-pi, pi); height coordinate h = z / rho.
- Panorama column c = (phi + pi) / (2 pi) * width with wrap-around, and
  row r = (1 - h / v_fov_slope) / 2 * height; integer pixel (i, j) is
  centered at continuous (c, r) = (i, j), so row 0 is the top of the
  image and column 0 sits at phi = -pi.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import AzimuthUndefinedError, CalibrationError

RIG_FILE_FORMAT = "mdpano-rig"
RIG_FILE_VERSION = 1


def _as_readonly(a, shape, name):
    arr = np.array(a, dtype=np.float64)
    if arr.shape != shape:
        raise CalibrationError(f"{name} must have shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise CalibrationError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise CalibrationError("image size must be at least 1x1")
        if not math.isfinite(self.fx + self.fy + self.cx + self.cy):
            raise CalibrationError("intrinsics must be finite")

    @property
    def hfov_deg(self) -> float:
        return math.degrees(2.0 * math.atan(self.width / (2.0 * self.fx)))

    def matrix4(self) -> np.ndarray:
        """Homogeneous projection: (x,y,z,1) -> (fx x + cx z, fy y + cy z, 1, z)."""
        return np.array(
            [
                [self.fx, 0.0, self.cx, 0.0],
                [0.0, self.fy, self.cy, 0.0],
                [0.0, 0.0, 0.0, 1.0],
                [0.0, 0.0, 1.0, 0.0],
            ]
        )


@dataclass(frozen=True)
class Extrinsics:
    """Rigid world-to-frame transform: p_frame = R p_world + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _as_readonly(self.rotation, (3, 3), "rotation")
        t = _as_readonly(self.translation, (3,), "translation")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-6):
            raise CalibrationError("rotation is not orthonormal within 1e-6")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise CalibrationError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    @property
    def center(self) -> np.ndarray:
        """Frame origin expressed in world coordinates."""
        return -self.rotation.T @ self.translation

    def apply(self, points) -> np.ndarray:
        """World points (..., 3) into this frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "Extrinsics":
        return Extrinsics(
            rotation=self.rotation.T, translation=-self.rotation.T @ self.translation
        )

    def matrix4(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class CameraRig:
    """Calibrated multi-camera rig plus the rig-center pose.

    ``rig_center`` maps world coordinates into the rig-centered frame and
    defaults to identity, i.e. world coordinates already rig-centered.
    ``max_camera_radius`` is a sanity bound on how far any camera center
    may sit from the rig center.
    """

    cameras: tuple
    rig_center: Extrinsics = field(default_factory=Extrinsics.identity)
    max_camera_radius: float = 1.0

    def __post_init__(self):
        cams = tuple((intr, extr) for intr, extr in self.cameras)
        if len(cams) < 2:
            raise CalibrationError("a rig needs at least 2 cameras")
        origin = self.rig_center.center
        for i, (intr, extr) in enumerate(cams):
            if not isinstance(intr, Intrinsics) or not isinstance(extr, Extrinsics):
                raise CalibrationError(f"camera {i} is not (Intrinsics, Extrinsics)")
            dist = float(np.linalg.norm(extr.center - origin))
            if dist > self.max_camera_radius:
                raise CalibrationError(
                    f"camera {i} sits {dist:.3f} m from the rig center, "
                    f"bound is {self.max_camera_radius:.3f} m"
                )
        object.__setattr__(self, "cameras", cams)

    def __len__(self) -> int:
        return len(self.cameras)


@dataclass(frozen=True)
class CylCoord:
    """Cylindrical point: radius rho (m), azimuth phi in [-pi, pi), height z (m)."""

    rho: float
    phi: float
    z: float


# ---------------------------------------------------------------------------
# pixel lifting
# ---------------------------------------------------------------------------

def unproject_pixels(xs, ys, inv_depth, intr: Intrinsics,
                     cam: Extrinsics, rig_center: Extrinsics) -> np.ndarray:
    """Lift pixels (..., ) at inverse depth to rig-centered world points (..., 3).

    Each pixel is lifted to the camera-space point at metric depth
    1/inv_depth along its viewing ray, then mapped camera -> world -> rig
    frame. Equivalent to the homogeneous product
    rig_pose @ inv(cam_pose) @ inv(K) applied to [xs, ys, inv_depth, 1].
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inv_d = np.asarray(inv_depth, dtype=np.float64)
    d = 1.0 / inv_d
    cam_pt = np.stack(
        [
            (xs - intr.cx) / intr.fx * d,
            (ys - intr.cy) / intr.fy * d,
            np.broadcast_to(d, np.broadcast_shapes(xs.shape, ys.shape, inv_d.shape)).copy(),
        ],
        axis=-1,
    )
    world = (cam_pt - cam.translation) @ cam.rotation
    return world @ rig_center.rotation.T + rig_center.translation


def unproject_mpi_pixel(xs: float, ys: float, inv_depth: float, intr: Intrinsics,
                        cam: Extrinsics, rig_center: Extrinsics) -> np.ndarray:
    """Single-pixel form of :func:`unproject_pixels`."""
    if not inv_depth > 0:
        raise ValueError("inv_depth must be positive")
    return unproject_pixels(
        np.float64(xs), np.float64(ys), np.float64(inv_depth), intr, cam, rig_center
    )


# ---------------------------------------------------------------------------
# cylindrical coordinates
# ---------------------------------------------------------------------------

def world_to_cylindrical(points) -> tuple:
    """Points (..., 3) -> (rho, phi, z) arrays, phi in [-pi, pi)."""
    p = np.asarray(points, dtype=np.float64)
    rho = np.hypot(p[..., 0], p[..., 1])
    phi = np.arctan2(p[..., 1], p[..., 0])
    phi = np.where(phi >= np.pi, phi - 2.0 * np.pi, phi)
    # points on the axis get phi = 0 by convention
    phi = np.where(rho == 0.0, 0.0, phi)
    return rho, phi, p[..., 2].copy()


def cylindrical_to_world(rho, phi, z) -> np.ndarray:
    """(rho, phi, z) arrays -> points (..., 3)."""
    rho = np.asarray(rho, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    return np.stack(
        [rho * np.cos(phi), rho * np.sin(phi), np.broadcast_to(z, rho.shape).copy()],
        axis=-1,
    )


def to_cylindrical(point) -> CylCoord:
    rho, phi, z = world_to_cylindrical(np.asarray(point, dtype=np.float64))
    return CylCoord(rho=float(rho), phi=float(phi), z=float(z))


def from_cylindrical(c: CylCoord) -> np.ndarray:
    return cylindrical_to_world(
        np.float64(c.rho), np.float64(c.phi), np.float64(c.z)
    )


# ---------------------------------------------------------------------------
# panorama mapping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PanoMapping:
    """Cylindrical panorama pixel grid.

    ``v_fov_slope`` is the half-extent of h = z / rho covered by the
    vertical axis; the default 1.0 spans -45 to +45 degrees.
    """

    width: int
    height: int
    v_fov_slope: float = 1.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise CalibrationError("panorama size must be at least 1x1")
        if not (self.v_fov_slope > 0 and math.isfinite(self.v_fov_slope)):
            raise CalibrationError("v_fov_slope must be positive and finite")

    # continuous mappings ---------------------------------------------------

    def col_of_phi(self, phi) -> np.ndarray:
        return (np.asarray(phi, dtype=np.float64) + np.pi) / (2.0 * np.pi) * self.width

    def phi_of_col(self, col) -> np.ndarray:
        return np.asarray(col, dtype=np.float64) * (2.0 * np.pi / self.width) - np.pi

    def row_of_h(self, h) -> np.ndarray:
        return (1.0 - np.asarray(h, dtype=np.float64) / self.v_fov_slope) / 2.0 * self.height

    def h_of_row(self, row) -> np.ndarray:
        return (1.0 - 2.0 * np.asarray(row, dtype=np.float64) / self.height) * self.v_fov_slope

    def phi_centers(self) -> np.ndarray:
        return self.phi_of_col(np.arange(self.width, dtype=np.float64))

    def h_centers(self) -> np.ndarray:
        return self.h_of_row(np.arange(self.height, dtype=np.float64))

    # point projection ------------------------------------------------------

    def project(self, rho, phi, z) -> tuple:
        """Cylindrical points -> continuous (cols, rows, valid).

        Columns are not wrapped here (callers splat with explicit
        wrap-around); valid requires rho > 0 and |z / rho| <= v_fov_slope.
        """
        rho = np.asarray(rho, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = z / rho
        valid = (rho > 0.0) & (np.abs(h) <= self.v_fov_slope)
        cols = self.col_of_phi(phi)
        rows = self.row_of_h(np.where(valid, h, 0.0))
        return cols, rows, valid

    def nearest_pixels(self, rho, phi, z) -> tuple:
        """Cylindrical points -> integer (cols, rows, valid), nearest pixel.

        Columns wrap modulo width; rows for in-range h clamp to the grid.
        """
        cols, rows, valid = self.project(rho, phi, z)
        ci = np.floor(cols + 0.5).astype(np.int64) % self.width
        ri = np.clip(np.floor(rows + 0.5).astype(np.int64), 0, self.height - 1)
        return ci, ri, valid

    def pixel_of(self, c: CylCoord):
        """Nearest pixel (col, row) of a single point, None if outside the
        vertical field of view."""
        if c.rho == 0.0:
            raise AzimuthUndefinedError("azimuth undefined on the cylinder axis")
        cols, rows, valid = self.nearest_pixels(
            np.float64(c.rho), np.float64(c.phi), np.float64(c.z)
        )
        if not bool(valid):
            return None
        return int(cols), int(rows)


# ---------------------------------------------------------------------------
# pose helpers
# ---------------------------------------------------------------------------

def rotation_looking(yaw: float, pitch: float) -> np.ndarray:
    """Camera-to-world rotation looking along (yaw, pitch), up = world +z.

    yaw 0 faces world +x, increasing counterclockwise; pitch > 0 looks up.
    Straight up/down poses are rejected (the image roll is undefined there).
    """
    f = np.array(
        [
            math.cos(pitch) * math.cos(yaw),
            math.cos(pitch) * math.sin(yaw),
            math.sin(pitch),
        ]
    )
    right = np.cross(f, np.array([0.0, 0.0, 1.0]))
    n = np.linalg.norm(right)
    if n < 1e-9:
        raise ValueError("pitch too close to +-90 degrees, image roll undefined")
    right /= n
    down = np.cross(f, right)
    return np.stack([right, down, f], axis=1)


def quaternion_to_rotation(w: float, x: float, y: float, z: float) -> np.ndarray:
    """Unit quaternion (w, x, y, z) -> 3x3 rotation matrix."""
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# base camera-to-world orientation: looking along world +x with up +z
_LOOK_ALONG_X = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)


def make_ring_rig(k: int = 16, ring_radius: float = 0.15, hfov_deg: float = 100.0,
                  width: int = 640, height: int = 640) -> CameraRig:
    """Outward-looking ring of k identical cameras in the z = 0 plane.

    Camera v sits at azimuth 2 pi v / k on a circle of ``ring_radius``
    meters and looks radially outward.
    """
    fx = width / (2.0 * math.tan(math.radians(hfov_deg) / 2.0))
    intr = Intrinsics(
        fx=fx, fy=fx, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
        width=width, height=height,
    )
    cameras = []
    for v in range(k):
        theta = 2.0 * math.pi * v / k
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        rz = np.array([[cos_t, -sin_t, 0.0], [sin_t, cos_t, 0.0], [0.0, 0.0, 1.0]])
        cam_to_world = rz @ _LOOK_ALONG_X
        pos = np.array([ring_radius * cos_t, ring_radius * sin_t, 0.0])
        rot = cam_to_world.T
        cameras.append((intr, Extrinsics(rotation=rot, translation=-rot @ pos)))
    return CameraRig(cameras=cameras, max_camera_radius=max(1.0, 2.0 * ring_radius))


# ---------------------------------------------------------------------------
# rig file I/O
# ---------------------------------------------------------------------------

def _extrinsics_to_json(e: Extrinsics) -> dict:
    return {
        "rotation": [float(v) for v in e.rotation.reshape(-1)],
        "translation": [float(v) for v in e.translation],
    }


def _extrinsics_from_json(obj, what: str) -> Extrinsics:
    try:
        rot = np.array(obj["rotation"], dtype=np.float64).reshape(3, 3)
        t = np.array(obj["translation"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise CalibrationError(f"bad {what} pose in rig file: {exc}") from exc
    return Extrinsics(rotation=rot, translation=t)


def write_rig_file(rig: CameraRig, path) -> None:
    """Write a rig as versioned JSON; field names are part of the format."""
    doc = {
        "format": RIG_FILE_FORMAT,
        "version": RIG_FILE_VERSION,
        "cameras": [
            {
                "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                "width": intr.width, "height": intr.height,
                **_extrinsics_to_json(extr),
            }
            for intr, extr in rig.cameras
        ],
        "rig_center": _extrinsics_to_json(rig.rig_center),
        "max_camera_radius": rig.max_camera_radius,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def read_rig_file(path) -> CameraRig:
    """Parse a rig file, rejecting unknown versions and malformed fields."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise CalibrationError(f"cannot read rig file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CalibrationError(f"rig file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != RIG_FILE_FORMAT:
        raise CalibrationError(f"{path} is not a rig file")
    if doc.get("version") != RIG_FILE_VERSION:
        raise CalibrationError(
            f"unsupported rig file version {doc.get('version')!r}, "
            f"this reader supports version {RIG_FILE_VERSION}"
        )
    cameras = []
    for i, cam in enumerate(doc.get("cameras", [])):
        try:
            intr = Intrinsics(
                fx=float(cam["fx"]), fy=float(cam["fy"]),
                cx=float(cam["cx"]), cy=float(cam["cy"]),
                width=int(cam["width"]), height=int(cam["height"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"bad intrinsics for camera {i}: {exc}") from exc
        cameras.append((intr, _extrinsics_from_json(cam, f"camera {i}")))
    return CameraRig(
        cameras=cameras,
        rig_center=_extrinsics_from_json(doc.get("rig_center", {}), "rig center"),
        max_camera_radius=float(doc.get("max_camera_radius", 1.0)),
    )
