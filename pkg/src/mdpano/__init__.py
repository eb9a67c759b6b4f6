"""Multi-depth cylindrical panoramas: reconstruction and 6-DoF rendering."""

from .config import PipelineConfig, load_config, save_config
from .exceptions import (
    CalibrationError,
    ChecksumError,
    ConfigError,
    ContainerFormatError,
    ImageIOError,
    IncompatibleMdpError,
    MdpanoError,
    SceneFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .geometry import (
    CameraRig,
    Extrinsics,
    Intrinsics,
    PanoMapping,
    make_ring_rig,
    quaternion_to_rotation,
    read_rig_file,
    rotation_looking,
    write_rig_file,
)
from .image_io import encode_png, read_image, write_image
from .mdp import (
    Mdp,
    MdpLayer,
    ShellPartition,
    blend_mdps,
    build_global_mdp,
    build_rgbd_panorama,
    build_view_mdp,
)
from .mdp_io import mdp_read, mdp_write, payload_nbytes
from .psv_mpi import Mpi, PhotoconsistencyEstimator, build_psv, estimate_mpi
from .renderer import (
    MdpGradients,
    RenderResult,
    SoftZConfig,
    TargetCamera,
    render,
    render_backward,
    render_sequence,
)
from .eval_oracle import (
    Box,
    Cylinder,
    MetricsReport,
    Mirror,
    Sphere,
    SyntheticScene,
    Texture,
    compute_metrics,
    disparity_sweep_experiment,
    displaced_target,
    layer_sweep_experiment,
    mirror_scene,
    raycast_render,
    render_rig_views,
    scene_from_file,
    scene_to_file,
    standard_eval_config,
    standard_eval_targets,
    standard_rig,
    standard_scene,
)
from .service import FrameLimits, PoseRequest, create_app, motion_bound

__version__ = "0.1.0"
