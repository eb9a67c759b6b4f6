"""Analytic gradients vs central finite differences on the frozen forward."""

import numpy as np

from mdpano.geometry import Extrinsics, Intrinsics, PanoMapping, rotation_looking
from mdpano.mdp import Mdp, MdpLayer, ShellPartition
from mdpano.renderer import (
    SoftZConfig,
    TargetCamera,
    _build_plan,
    _render_frozen,
    render,
    render_backward,
)

FD_STEP = 1e-4
REL_TOL = 1e-3


def pose_at(center, yaw, pitch=0.0):
    R = rotation_looking(yaw, pitch).T
    return Extrinsics(rotation=R, translation=-R @ np.asarray(center, float))


def random_mdp(seed, h=8, w=8, shells=2):
    # alpha in [0.1, 0.9] and depth away from shell edges keep every FD
    # step inside the validity range
    rng = np.random.default_rng(seed)
    mapping = PanoMapping(width=w, height=h, v_fov_slope=0.6)
    part = ShellPartition(rho_min=1.0, rho_max=5.0, count=shells, mode="radius")
    layers = []
    for m in range(shells):
        lo, hi = part.bounds(m)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        layers.append(MdpLayer(
            color=rng.uniform(0.1, 0.9, (h, w, 3)),
            depth=mid + rng.uniform(-0.5, 0.5, (h, w)) * half,
            alpha=rng.uniform(0.1, 0.9, (h, w)), shell=m))
    return Mdp(layers=layers, mapping=mapping, partition=part)


def random_pose(seed):
    rng = np.random.default_rng(seed + 1000)
    return pose_at(rng.uniform(-0.3, 0.3, 3),
                   rng.uniform(-np.pi, np.pi), rng.uniform(-0.2, 0.2))


def perturbed(mdp, field, m, i, j, ch, delta):
    layers = list(mdp.layers)
    arrs = {"color": layers[m].color.copy(), "depth": layers[m].depth.copy(),
            "alpha": layers[m].alpha.copy()}
    if field == "color":
        arrs["color"][i, j, ch] += delta
    else:
        arrs[field][i, j] += delta
    layers[m] = MdpLayer(color=arrs["color"], depth=arrs["depth"],
                         alpha=arrs["alpha"], shell=m)
    return Mdp(layers=layers, mapping=mdp.mapping, partition=mdp.partition)


def fd_check(seed, target_of, probes=40):
    mdp = random_mdp(seed)
    target = target_of(seed)
    zcfg = SoftZConfig()
    g = np.random.default_rng(seed + 77).normal(
        size=(target.height, target.width, 4))
    grads = render_backward(mdp, target, zcfg, g)
    plan = _build_plan(mdp, target, zcfg)

    def loss(m):
        return float((_render_frozen(m, plan, zcfg) * g).sum())

    rng = np.random.default_rng(seed + 5)
    worst = 0.0
    for _ in range(probes):
        m = int(rng.integers(0, mdp.shell_count))
        i, j = int(rng.integers(0, 8)), int(rng.integers(0, 8))
        field = ("color", "depth", "alpha")[rng.integers(0, 3)]
        ch = int(rng.integers(0, 3))
        fd = (loss(perturbed(mdp, field, m, i, j, ch, FD_STEP))
              - loss(perturbed(mdp, field, m, i, j, ch, -FD_STEP))) / (2 * FD_STEP)
        if field == "color":
            an = grads.colors[m, i, j, ch]
        elif field == "depth":
            an = grads.depths[m, i, j]
        else:
            an = grads.alphas[m, i, j]
        worst = max(worst, abs(an - fd) / max(1e-6, abs(an), abs(fd)))
    return worst


def test_gradients_match_fd_perspective_ten_seeds():
    intr = Intrinsics(fx=10.0, fy=10.0, cx=5.5, cy=3.5, width=12, height=8)
    for seed in range(10):
        worst = fd_check(
            seed, lambda s: TargetCamera.perspective(intr, random_pose(s)))
        assert worst < REL_TOL, f"seed {seed}: rel err {worst}"


def test_gradients_match_fd_panorama():
    mapping = PanoMapping(width=12, height=8, v_fov_slope=0.7)
    for seed in (20, 21):
        worst = fd_check(
            seed, lambda s: TargetCamera.panorama(mapping, random_pose(s)))
        assert worst < REL_TOL, f"seed {seed}: rel err {worst}"


def test_render_uses_the_frozen_plan():
    mdp = random_mdp(3)
    target = TargetCamera.perspective(
        Intrinsics(fx=10.0, fy=10.0, cx=5.5, cy=3.5, width=12, height=8),
        random_pose(3))
    zcfg = SoftZConfig()
    plan = _build_plan(mdp, target, zcfg)
    assert np.array_equal(render(mdp, target, zcfg).image,
                          _render_frozen(mdp, plan, zcfg))


def test_occluded_pixels_get_zero_gradient():
    # an opaque inner shell blocks the outer one everywhere, so nothing
    # about the outer shell can influence the image
    h, w = 8, 16
    mapping = PanoMapping(width=w, height=h, v_fov_slope=0.5)
    part = ShellPartition(rho_min=1.0, rho_max=9.0, count=2, mode="radius")
    rng = np.random.default_rng(9)
    inner = MdpLayer(color=rng.uniform(0.2, 0.8, (h, w, 3)),
                     depth=np.full((h, w), 2.0), alpha=np.ones((h, w)), shell=0)
    outer = MdpLayer(color=rng.uniform(0.2, 0.8, (h, w, 3)),
                     depth=np.full((h, w), 7.0), alpha=np.ones((h, w)), shell=1)
    mdp = Mdp(layers=[inner, outer], mapping=mapping, partition=part)
    target = TargetCamera.panorama(mapping, Extrinsics.identity())
    g = np.random.default_rng(10).normal(size=(h, w, 4))
    grads = render_backward(mdp, target, SoftZConfig(), g)
    assert np.array_equal(grads.colors[1], np.zeros((h, w, 3)))
    assert np.array_equal(grads.depths[1], np.zeros((h, w)))
    assert np.abs(grads.colors[0]).max() > 0.0


def test_alpha_gradient_of_output_opacity_is_nonnegative():
    # raising any shell opacity can only raise the rendered opacity
    for seed in range(5):
        mdp = random_mdp(seed + 40)
        target = TargetCamera.panorama(mdp.mapping, random_pose(seed + 40))
        g = np.zeros((target.height, target.width, 4))
        g[..., 3] = 1.0
        grads = render_backward(mdp, target, SoftZConfig(), g)
        assert grads.alphas.min() >= -1e-12
