"""Command-line entry points: build, render, eval, serve.

Exit codes: 0 success, 1 pipeline error, 2 usage error, 3 file I/O or
format error, 4 calibration or configuration error.
"""

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from .config import PipelineConfig, load_config
from .eval_oracle import (
    disparity_sweep_experiment,
    format_table,
    layer_sweep_experiment,
    save_table,
    scene_from_file,
    standard_eval_config,
    standard_eval_targets,
    standard_rig,
    standard_scene,
)
from .exceptions import (
    CalibrationError,
    ConfigError,
    ContainerFormatError,
    ImageIOError,
    MdpanoError,
    SceneFormatError,
)
from .geometry import (
    Extrinsics,
    Intrinsics,
    PanoMapping,
    make_ring_rig,
    read_rig_file,
    rotation_looking,
)
from .image_io import read_image, write_image
from .mdp import build_global_mdp
from .mdp_io import mdp_read, mdp_write, payload_nbytes
from .renderer import SoftZConfig, TargetCamera, render

EXIT_PIPELINE = 1
EXIT_IO = 3
EXIT_CALIBRATION = 4

_IO_ERRORS = (ContainerFormatError, ImageIOError, SceneFormatError, OSError,
              json.JSONDecodeError)
_CALIBRATION_ERRORS = (CalibrationError, ConfigError)


def _run(stage: str, fn):
    """Run one pipeline stage, mapping failures to stage-named messages
    and the documented exit codes."""
    try:
        return fn()
    except _CALIBRATION_ERRORS as exc:
        _fail(stage, exc, EXIT_CALIBRATION)
    except _IO_ERRORS as exc:
        _fail(stage, exc, EXIT_IO)
    except MdpanoError as exc:
        _fail(stage, exc, EXIT_PIPELINE)


def _fail(stage: str, exc, code: int):
    click.echo(f"{stage}: {exc}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Multi-shell panorama toolkit: reconstruct, render, benchmark,
    serve."""


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------

def _load_view_images(image_dir: str, camera_count: int, srgb: bool):
    paths = sorted(p for p in Path(image_dir).iterdir()
                   if p.suffix.lower() in (".png", ".exr"))
    if len(paths) != camera_count:
        raise CalibrationError(
            f"{image_dir} holds {len(paths)} view images for "
            f"{camera_count} rig cameras")
    return [read_image(p, assume_srgb=srgb)[..., :3] for p in paths]


@main.command()
@click.argument("rig_file", type=click.Path())
@click.argument("image_dir", type=click.Path())
@click.argument("config_file", type=click.Path())
@click.argument("out_mdp", type=click.Path())
@click.option("--workers", type=int, default=None,
              help="Parallel view workers (default: from config).")
def build(rig_file, image_dir, config_file, out_mdp, workers):
    """Reconstruct a shell panorama from posed view images.

    Reads cameras from RIG_FILE, one image per camera from IMAGE_DIR
    (sorted by name, .png or .exr), pipeline settings from CONFIG_FILE,
    and writes the result to OUT_MDP.
    """
    rig = _run("build", lambda: read_rig_file(rig_file))
    cfg = _run("build", lambda: load_config(config_file))
    images = _run("build", lambda: _load_view_images(
        image_dir, len(rig.cameras), cfg.srgb_input))
    mdp = _run("build", lambda: build_global_mdp(rig, images, cfg,
                                                 workers=workers))
    _run("build", lambda: mdp_write(mdp, out_mdp))
    nbytes = payload_nbytes(mdp.width, mdp.height, mdp.shell_count)
    click.echo(f"Dimension: {mdp.width} x {mdp.height} x {mdp.shell_count}")
    click.echo(f"Storage: {nbytes / 1e9:.3f} GB ({nbytes:,} bytes)")


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------

def _read_pose_file(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        if doc.get("format") != "mdpano-poses":
            raise ValueError(f"{path} is not a pose file")
        if doc.get("version") != 1:
            raise ValueError(f"unsupported pose file version "
                             f"{doc.get('version')!r}")
        poses = []
        for p in doc["poses"]:
            position = [float(v) for v in p["position"]]
            if len(position) != 3:
                raise ValueError("position must have 3 entries")
            poses.append((position, float(p.get("yaw_deg", 0.0)),
                          float(p.get("pitch_deg", 0.0))))
        if not poses:
            raise ValueError(f"{path} lists no poses")
        return poses
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"malformed pose file {path}: {exc}") from exc


def _orbit_poses(count: int, radius: float):
    poses = []
    for k in range(count):
        theta = 2.0 * math.pi * k / count
        poses.append(([radius * math.cos(theta), radius * math.sin(theta),
                       0.0], math.degrees(theta), 0.0))
    return poses


def _pose_to_extrinsics(position, yaw_deg, pitch_deg) -> Extrinsics:
    rot = rotation_looking(math.radians(yaw_deg), math.radians(pitch_deg)).T
    return Extrinsics(rotation=rot,
                      translation=-rot @ np.asarray(position, np.float64))


@main.command(name="render")
@click.argument("in_mdp", type=click.Path())
@click.argument("out_dir", type=click.Path())
@click.option("--pose-file", type=click.Path(), default=None,
              help="JSON pose list (format mdpano-poses v1).")
@click.option("--orbit", type=int, default=None,
              help="Render COUNT poses on a circle instead.")
@click.option("--orbit-radius", type=float, default=0.25, show_default=True,
              help="Circle radius in meters for --orbit.")
@click.option("--mode", type=click.Choice(["perspective", "panorama"]),
              default="perspective", show_default=True)
@click.option("--width", type=int, default=None,
              help="Frame width (default 640, panorama: source width).")
@click.option("--height", type=int, default=None,
              help="Frame height (default 360, panorama: source height).")
@click.option("--focal", type=float, default=None,
              help="Focal length in pixels (default: width / 2).")
def render_cmd(in_mdp, out_dir, pose_file, orbit, orbit_radius, mode,
               width, height, focal):
    """Render one PNG per pose from a shell panorama.

    Exactly one of --pose-file or --orbit selects the poses. Frames are
    written as OUT_DIR/frame_NNN.png; a pose outside the innermost
    occupied shell renders anyway and prints a note to stderr.
    """
    if (pose_file is None) == (orbit is None):
        raise click.UsageError("pass exactly one of --pose-file or --orbit")
    if orbit is not None and orbit < 1:
        raise click.UsageError("--orbit must be at least 1")
    mdp = _run("render", lambda: mdp_read(in_mdp))
    if pose_file is not None:
        poses = _run("render", lambda: _read_pose_file(pose_file))
    else:
        poses = _orbit_poses(orbit, orbit_radius)

    if mode == "panorama":
        width = mdp.width if width is None else width
        height = mdp.height if height is None else height
    else:
        width = 640 if width is None else width
        height = 360 if height is None else height

    def target_for(extr):
        if mode == "panorama":
            mapping = PanoMapping(width=width, height=height,
                                  v_fov_slope=mdp.mapping.v_fov_slope)
            return TargetCamera.panorama(mapping, extr)
        f = focal if focal is not None else width / 2.0
        intr = Intrinsics(fx=f, fy=f, cx=(width - 1) / 2.0,
                          cy=(height - 1) / 2.0, width=width, height=height)
        return TargetCamera.perspective(intr, extr)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, (position, yaw_deg, pitch_deg) in enumerate(poses):
        extr = _run("render", lambda: _pose_to_extrinsics(
            position, yaw_deg, pitch_deg))
        result = _run("render", lambda: render(mdp, target_for(extr)))
        _run("render", lambda: write_image(out / f"frame_{i:03d}.png",
                                           result.image))
        if result.ordering_warning:
            click.echo(f"note: pose {i} sits outside the innermost occupied "
                       f"shell; layer ordering may be wrong there", err=True)
    click.echo(f"Wrote {len(poses)} frames to {out_dir}")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _smoke_protocol():
    rig = make_ring_rig(k=16, ring_radius=0.5, hfov_deg=100.0,
                        width=96, height=56)
    cfg = PipelineConfig(near=1.6, far=9.0, mpi_layers=12, neighbors=4,
                         shells=3, partition_mode="inverse",
                         pano_width=128, pano_height=48,
                         v_fov_slope=0.45, sigma0=0.05)
    intr = Intrinsics(fx=20.0, fy=20.0, cx=15.5, cy=7.5, width=32, height=16)
    targets = []
    for position, yaw in (([0.2, 0.0, 0.0], math.pi / 2),
                          ([0.0, -0.2, 0.0], 0.0)):
        rot = rotation_looking(yaw, 0.0).T
        pose = Extrinsics(rotation=rot,
                          translation=-rot @ np.asarray(position))
        targets.append(TargetCamera.perspective(intr, pose))
    return rig, cfg, targets


@main.command(name="eval")
@click.argument("out_dir", type=click.Path())
@click.option("--scene-file", type=click.Path(), default=None,
              help="Scene JSON (default: built-in benchmark scene).")
@click.option("--config-file", type=click.Path(), default=None,
              help="Pipeline config (default: benchmark settings).")
@click.option("--layer-counts", default="1,2,3,4,5", show_default=True,
              help="Comma-separated shell counts for the layer sweep.")
@click.option("--translations", default="0,0.2,0.4", show_default=True,
              help="Comma-separated viewpoint offsets in meters.")
@click.option("--preset", type=click.Choice(["full", "smoke"]),
              default="full", show_default=True,
              help="full: benchmark rig and targets; smoke: tiny fast ones.")
def eval_cmd(out_dir, scene_file, config_file, layer_counts, translations,
             preset):
    """Run both quality sweeps and write their metric tables.

    Prints each table as TSV and saves layer_sweep.json and
    displacement_sweep.json into OUT_DIR.
    """
    try:
        m_values = [int(v) for v in layer_counts.split(",") if v.strip()]
        offsets = [float(v) for v in translations.split(",") if v.strip()]
    except ValueError as exc:
        raise click.UsageError(f"bad sweep list: {exc}") from exc
    if not m_values or not offsets:
        raise click.UsageError("sweep lists must not be empty")

    if preset == "smoke":
        rig, cfg, targets = _smoke_protocol()
    else:
        rig, cfg, targets = (standard_rig(), standard_eval_config(),
                             standard_eval_targets())
    if config_file is not None:
        cfg = _run("eval", lambda: load_config(config_file))
    scene = (standard_scene() if scene_file is None
             else _run("eval", lambda: scene_from_file(scene_file)))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = _run("eval", lambda: layer_sweep_experiment(
        scene, rig, m_values, targets, cfg))
    click.echo("# layer sweep")
    click.echo(format_table(rows), nl=False)
    _run("eval", lambda: save_table(rows, out / "layer_sweep.json"))

    rows = _run("eval", lambda: disparity_sweep_experiment(
        scene, rig, offsets, targets, cfg))
    click.echo("# displacement sweep")
    click.echo(format_table(rows), nl=False)
    _run("eval", lambda: save_table(rows, out / "displacement_sweep.json"))


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

@main.command()
@click.argument("in_mdp", type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--max-width", type=int, default=1920, show_default=True,
              help="Largest frame width the server will render.")
@click.option("--max-height", type=int, default=1080, show_default=True,
              help="Largest frame height the server will render.")
def serve(in_mdp, host, port, max_width, max_height):
    """Serve IN_MDP over HTTP for interactive viewers."""
    import uvicorn

    from .service import FrameLimits, create_app

    mdp = _run("serve", lambda: mdp_read(in_mdp))
    app = create_app(mdp, FrameLimits(max_width=max_width,
                                      max_height=max_height))
    click.echo(f"serving {in_mdp} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
