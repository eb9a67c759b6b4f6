"""Independent reference implementations used to check the package.

Everything here is written the slow, obvious way (explicit matrices,
scalar loops) so the fast vectorized code under test has something
honest to disagree with. Nothing in this module imports the package.
"""

import math

import numpy as np


# ---------------------------------------------------------------------------
# pinhole / rig transforms
# ---------------------------------------------------------------------------

def intrinsics_matrix4(fx, fy, cx, cy):
    """4x4 homogeneous pinhole projection.

    Maps (x, y, z, 1) to (fx*x + cx*z, fy*y + cy*z, 1, z); after dividing
    by the last coordinate this is (fx*x/z + cx, fy*y/z + cy, 1/z).
    """
    return np.array(
        [
            [fx, 0.0, cx, 0.0],
            [0.0, fy, cy, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )


def extrinsics_matrix4(rotation, translation):
    """4x4 rigid transform, world point -> camera point."""
    m = np.eye(4)
    m[:3, :3] = np.asarray(rotation, dtype=float)
    m[:3, 3] = np.asarray(translation, dtype=float)
    return m


def unproject_oracle(xs, ys, inv_depth, fx, fy, cx, cy, cam_r, cam_t, rig_r, rig_t):
    """Brute-force pixel lift: explicit 4x4 product, then normalize.

    Forms rig_pose @ inv(cam_pose) @ inv(K4) applied to
    [xs, ys, inv_depth, 1] with numpy's general inverse, no closed forms.
    """
    k4 = intrinsics_matrix4(fx, fy, cx, cy)
    e_v = extrinsics_matrix4(cam_r, cam_t)
    e_w = extrinsics_matrix4(rig_r, rig_t)
    h = e_w @ np.linalg.inv(e_v) @ np.linalg.inv(k4) @ np.array(
        [xs, ys, inv_depth, 1.0]
    )
    return h[:3] / h[3]


def cylindrical_oracle(p):
    """Full-quadrant cylindrical coordinates of a single 3D point."""
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    rho = math.hypot(x, y)
    phi = math.atan2(y, x)
    return rho, phi, z


def random_rotation(rng):
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


# ---------------------------------------------------------------------------
# alpha compositing
# ---------------------------------------------------------------------------

def over_composite_scalar(colors, alphas):
    """Back-to-front over compositing of one pixel, plain float loop.

    ``colors`` is a sequence of RGB triples ordered back to front (the
    first entry is the farthest). Returns (premultiplied rgb, alpha).
    """
    acc_rgb = np.zeros(3)
    acc_a = 0.0
    for rgb, a in zip(colors, alphas):
        rgb = np.asarray(rgb, dtype=float)
        acc_rgb = a * rgb + (1.0 - a) * acc_rgb
        acc_a = a + (1.0 - a) * acc_a
    return acc_rgb, acc_a


def soft_z_oracle(colors, alphas, inv_depths, weights, tau):
    """Scalar soft z-buffer: shifted exponential softmax over inverse depth."""
    if len(colors) == 0:
        return np.zeros(3), 0.0
    d = np.asarray(inv_depths, dtype=float)
    w = np.asarray(weights, dtype=float)
    e = np.exp((d - d.max()) * tau)
    den = float((w * e).sum())
    if den <= 0.0:
        return np.zeros(3), 0.0
    c = np.asarray(colors, dtype=float)
    a = np.asarray(alphas, dtype=float)
    return (w * e) @ c / den, float((w * e * a).sum() / den)


def hard_z_oracle(colors, alphas, inv_depths):
    """Nearest contribution wins (largest inverse depth)."""
    i = int(np.argmax(inv_depths))
    return np.asarray(colors[i], dtype=float), float(alphas[i])


# ---------------------------------------------------------------------------
# analytic test images
# ---------------------------------------------------------------------------

def bilinear_sample_oracle(img, u, v):
    """Sample img (H, W, C) at one float location, plain arithmetic.

    Returns (value, inbounds); coordinates are valid on [0, W-1] x [0, H-1].
    """
    h, w = img.shape[:2]
    if not (0.0 <= u <= w - 1 and 0.0 <= v <= h - 1):
        return np.zeros(img.shape[2]), False
    x0 = min(int(math.floor(u)), w - 2) if w > 1 else 0
    y0 = min(int(math.floor(v)), h - 2) if h > 1 else 0
    fu, fv = u - x0, v - y0
    val = (
        img[y0, x0] * (1 - fu) * (1 - fv)
        + img[y0, x0 + 1] * fu * (1 - fv)
        + img[y0 + 1, x0] * (1 - fu) * fv
        + img[y0 + 1, x0 + 1] * fu * fv
    )
    return val, True


def render_plane_scene(fx, fy, cx, cy, width, height, center, planes):
    """Analytic pinhole render of fronto-parallel planes, camera axes = world.

    ``planes`` is a list of (z, xmin, xmax, ymin, ymax, texture_fn) sorted
    nearest first; texture_fn maps world (X, Y) arrays to an RGB array.
    The camera sits at ``center`` looking along world +z. Background is
    mid-gray.
    """
    xs, ys = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    dir_x = (xs - cx) / fx
    dir_y = (ys - cy) / fy
    img = np.full((height, width, 3), 0.5)
    done = np.zeros((height, width), dtype=bool)
    for z0, xmin, xmax, ymin, ymax, tex in planes:
        s = z0 - center[2]
        X = center[0] + dir_x * s
        Y = center[1] + dir_y * s
        hit = (~done) & (X >= xmin) & (X <= xmax) & (Y >= ymin) & (Y <= ymax)
        rgb = tex(X, Y)
        img[hit] = rgb[hit]
        done |= hit
    return img


def smooth_texture(X, Y):
    """Low-frequency smooth RGB texture of world coordinates."""
    return np.stack(
        [
            0.5 + 0.5 * np.sin(2 * np.pi * X / 3.0),
            0.5 + 0.5 * np.sin(2 * np.pi * Y / 3.0 + 1.0),
            0.5 + 0.5 * np.sin(2 * np.pi * (X + Y) / 5.0),
        ],
        axis=-1,
    )


def render_cylinder_scene(fx, fy, cx, cy, width, height, cam_to_world, center,
                          cylinders, background=0.5):
    """Analytic pinhole render of textured z-axis cylinders.

    ``cylinders`` is a list of (radius, zmin, zmax, texture_fn) with
    texture_fn mapping (phi, z) arrays to RGB; nearest hit wins. The
    camera-to-world rotation and camera center are explicit, so ring
    cameras work. Pure numpy, no package imports.
    """
    xs, ys = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    d_cam = np.stack([(xs - cx) / fx, (ys - cy) / fy, np.ones_like(xs)], axis=-1)
    d = d_cam @ np.asarray(cam_to_world, dtype=float).T
    o = np.asarray(center, dtype=float)
    img = np.full((height, width, 3), background)
    best_t = np.full((height, width), np.inf)
    a = d[..., 0] ** 2 + d[..., 1] ** 2
    b = 2.0 * (o[0] * d[..., 0] + o[1] * d[..., 1])
    for radius, zmin, zmax, tex in cylinders:
        c = o[0] ** 2 + o[1] ** 2 - radius**2
        disc = b * b - 4.0 * a * c
        ok = (disc >= 0.0) & (a > 0.0)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        for root in ((-b - sq) / np.where(a > 0, 2 * a, 1.0),
                     (-b + sq) / np.where(a > 0, 2 * a, 1.0)):
            z_hit = o[2] + root * d[..., 2]
            hit = ok & (root > 1e-9) & (z_hit >= zmin) & (z_hit <= zmax) & (root < best_t)
            if not hit.any():
                continue
            phi_hit = np.arctan2(o[1] + root * d[..., 1], o[0] + root * d[..., 0])
            rgb = tex(phi_hit, z_hit)
            img[hit] = rgb[hit]
            best_t = np.where(hit, root, best_t)
    return img


def eq3_blend_oracle(views):
    """Scalar weighted-blend of per-view layers at one pixel.

    ``views`` is a list of (w, alpha, color_rgb, depth); returns
    (color, depth, alpha) with the weighted sums divided by sum(w*alpha),
    zeros when that denominator vanishes.
    """
    den = sum(w * a for w, a, _, _ in views)
    if den <= 0.0:
        return np.zeros(3), 0.0, 0.0
    color = sum(w * a * np.asarray(c, float) for w, a, c, _ in views) / den
    depth = sum(w * a * d for w, a, _, d in views) / den
    alpha = sum(w * a * a for w, a, _, _ in views) / den
    return color, depth, alpha


def collapse_pixel_oracle(entries):
    """Scalar collapse of one panorama pixel.

    ``entries`` is a list of (layer_index, arrival_index, color, depth,
    alpha, weight). Sorts back to front by (layer, arrival), composites
    with the over operator in premultiplied form, and returns
    (color, depth, alpha, weight) with color/depth/weight normalized by
    the final alpha.
    """
    ordered = sorted(entries, key=lambda e: (e[0], e[1]))
    acc_c = np.zeros(3)
    acc_d = 0.0
    acc_w = 0.0
    acc_a = 0.0
    for _, _, c, d, a, w in ordered:
        acc_c = a * np.asarray(c, float) + (1 - a) * acc_c
        acc_d = a * d + (1 - a) * acc_d
        acc_w = a * w + (1 - a) * acc_w
        acc_a = a + (1 - a) * acc_a
    if acc_a <= 0.0:
        return np.zeros(3), 0.0, 0.0, 0.0
    return acc_c / acc_a, acc_d / acc_a, acc_a, acc_w / acc_a


# ---------------------------------------------------------------------------
# image metrics
# ---------------------------------------------------------------------------

def psnr_oracle(a, b, cap=99.0):
    mse = float(np.mean((np.asarray(a, float) - np.asarray(b, float)) ** 2))
    if mse == 0.0:
        return cap
    return min(10.0 * math.log10(1.0 / mse), cap)


def l1_oracle(a, b):
    return float(np.mean(np.abs(np.asarray(a, float) - np.asarray(b, float))))


def gaussian_window_oracle(size=11, sigma=1.5):
    half = size // 2
    g = np.array([math.exp(-(i - half) ** 2 / (2 * sigma**2)) for i in range(size)])
    return g / g.sum()


def ssim_oracle(a, b, k1=0.01, k2=0.03):
    """Scalar-loop SSIM with an 11x11 Gaussian window, valid-region mean.

    Grayscale single-channel inputs in [0, 1]; multi-channel callers
    average per-channel results themselves.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    win = gaussian_window_oracle()
    kernel = np.outer(win, win)
    half = len(win) // 2
    c1 = k1**2
    c2 = k2**2
    rows = a.shape[0] - 2 * half
    cols = a.shape[1] - 2 * half
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            pa = a[i : i + 2 * half + 1, j : j + 2 * half + 1]
            pb = b[i : i + 2 * half + 1, j : j + 2 * half + 1]
            mu_a = (kernel * pa).sum()
            mu_b = (kernel * pb).sum()
            var_a = (kernel * pa * pa).sum() - mu_a**2
            var_b = (kernel * pb * pb).sum() - mu_b**2
            cov = (kernel * pa * pb).sum() - mu_a * mu_b
            out[i, j] = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            )
    return float(out.mean())
