"""Versioned binary container for shell panoramas.

Layout (all little-endian):

* header, 52 bytes: magic ``\\x89MDP\\r\\n\\x1a\\n``, format version u32,
  width u32, height u32, shell count u32, rho_min f64, rho_max f64,
  partition mode u32 (0 = radius, 1 = inverse), v_fov_slope f64
* payload: per shell, five contiguous float32 planes in the order
  C.r, C.g, C.b, D, alpha, each row-major with row 0 at the top
* trailer: CRC32 of the payload, u32
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .exceptions import (
    ChecksumError,
    ContainerFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .geometry import PanoMapping
from .mdp import Mdp, MdpLayer, ShellPartition

MAGIC = b"\x89MDP\r\n\x1a\n"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIddId")
HEADER_SIZE = _HEADER.size
_MODE_CODES = {"radius": 0, "inverse": 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}

assert HEADER_SIZE == 52


def payload_nbytes(width: int, height: int, shells: int) -> int:
    """Serialized plane bytes: 5 float32 planes (RGB, depth, alpha) per
    shell; header and checksum not included."""
    return width * height * 5 * shells * 4


def _planes(layer: MdpLayer):
    yield layer.color[:, :, 0]
    yield layer.color[:, :, 1]
    yield layer.color[:, :, 2]
    yield layer.depth
    yield layer.alpha


def mdp_write(mdp: Mdp, path) -> None:
    """Serialize to the container format; payload planes cast to float32."""
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, mdp.width, mdp.height, mdp.shell_count,
        mdp.partition.rho_min, mdp.partition.rho_max,
        _MODE_CODES[mdp.partition.mode], mdp.mapping.v_fov_slope,
    )
    crc = 0
    with open(path, "wb") as f:
        f.write(header)
        for layer in mdp.layers:
            for plane in _planes(layer):
                chunk = np.ascontiguousarray(plane, dtype="<f4").tobytes()
                crc = zlib.crc32(chunk, crc)
                f.write(chunk)
        f.write(struct.pack("<I", crc))


def mdp_read(path) -> Mdp:
    """Read a container file back into an Mdp, verifying the checksum."""
    with open(path, "rb") as f:
        raw = f.read()

    if len(raw) < HEADER_SIZE:
        if len(raw) >= len(MAGIC) and raw[: len(MAGIC)] != MAGIC:
            raise ContainerFormatError(f"{path}: not a shell-panorama container")
        raise TruncatedFileError(f"{path}: header cut short")

    magic, version, width, height, shells, rho_min, rho_max, mode_code, \
        slope = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ContainerFormatError(f"{path}: not a shell-panorama container")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this reader supports "
            f"{FORMAT_VERSION}"
        )
    if width < 1 or height < 1 or shells < 1:
        raise ContainerFormatError(f"{path}: bad dimensions in header")
    if mode_code not in _MODE_NAMES:
        raise ContainerFormatError(f"{path}: unknown partition mode {mode_code}")

    payload_size = shells * 5 * width * height * 4
    end = HEADER_SIZE + payload_size
    if len(raw) < end + 4:
        raise TruncatedFileError(f"{path}: payload or checksum cut short")
    if len(raw) > end + 4:
        raise ContainerFormatError(f"{path}: trailing data after checksum")

    payload = raw[HEADER_SIZE:end]
    (stored_crc,) = struct.unpack_from("<I", raw, end)
    if zlib.crc32(payload) != stored_crc:
        raise ChecksumError(f"{path}: payload checksum mismatch")

    planes = np.frombuffer(payload, dtype="<f4").reshape(
        shells, 5, height, width)
    try:
        mapping = PanoMapping(width=width, height=height, v_fov_slope=slope)
        partition = ShellPartition(rho_min=rho_min, rho_max=rho_max,
                                   count=shells, mode=_MODE_NAMES[mode_code])
        layers = []
        for m in range(shells):
            color = np.ascontiguousarray(
                np.moveaxis(planes[m, 0:3], 0, -1))
            layers.append(MdpLayer(color=color, depth=planes[m, 3],
                                   alpha=planes[m, 4], shell=m))
        return Mdp(layers=tuple(layers), mapping=mapping, partition=partition)
    except ValueError as exc:
        raise ContainerFormatError(f"{path}: invalid content: {exc}") from exc
