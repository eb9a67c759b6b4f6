"""Image file I/O: PNG (8/16-bit) and uncompressed float32 EXR.

Colors are processed in linear [0, 1] throughout the package; PNG files
carry sRGB-encoded values by default and are converted on load/store,
while EXR files always carry linear floats untouched.

8-bit PNG goes through Pillow. 16-bit-per-channel RGB(A) PNG is handled
by a small codec here because Pillow has no 16-bit multichannel mode;
the codec covers non-interlaced color types 0/2/6 at depths 8/16 with
all five scanline filters on read, and writes filter-0 scanlines.

EXR support is deliberately minimal: single-part scanline files,
uncompressed, all channels 32-bit float. Anything else is rejected with
a clear error instead of silently misdecoding.
"""

from __future__ import annotations

import io
import struct
import zlib

import numpy as np
from PIL import Image

from .exceptions import ImageIOError

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_EXR_MAGIC = b"\x76\x2f\x31\x01"


# ---------------------------------------------------------------------------
# sRGB transfer
# ---------------------------------------------------------------------------

def srgb_to_linear(x):
    """Decode sRGB-encoded values in [0, 1] to linear."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x):
    """Encode linear values in [0, 1] to sRGB."""
    x = np.asarray(x, dtype=np.float64)
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, x * 12.92, 1.055 * x ** (1.0 / 2.4) - 0.055)


# ---------------------------------------------------------------------------
# PNG codec (16-bit subset; 8-bit delegated to Pillow)
# ---------------------------------------------------------------------------

def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + tag
        + data
        + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
    )


def _write_png16(path, arr: np.ndarray) -> None:
    """arr: H x W x C uint16, C in {3, 4}; filter-0 scanlines."""
    h, w, c = arr.shape
    color_type = {3: 2, 4: 6}[c]
    ihdr = struct.pack(">IIBBBBB", w, h, 16, color_type, 0, 0, 0)
    rows = arr.astype(">u2").tobytes()
    stride = w * c * 2
    raw = b"".join(
        b"\x00" + rows[y * stride : (y + 1) * stride] for y in range(h)
    )
    with open(path, "wb") as f:
        f.write(_PNG_SIG)
        f.write(_png_chunk(b"IHDR", ihdr))
        f.write(_png_chunk(b"IDAT", zlib.compress(raw, 6)))
        f.write(_png_chunk(b"IEND", b""))


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    take_a = (pa <= pb) & (pa <= pc)
    take_b = (~take_a) & (pb <= pc)
    return np.where(take_a, a, np.where(take_b, b, c))


def _unfilter(raw: bytes, w: int, h: int, channels: int, depth: int) -> np.ndarray:
    bpp = channels * depth // 8
    stride = w * bpp
    if len(raw) < h * (stride + 1):
        raise ImageIOError("PNG pixel data truncated")
    out = np.zeros((h, stride), dtype=np.int64)
    for y in range(h):
        line = raw[y * (stride + 1) : (y + 1) * (stride + 1)]
        f = line[0]
        cur = np.frombuffer(line[1:], dtype=np.uint8).astype(np.int64)
        prev = out[y - 1] if y > 0 else np.zeros(stride, dtype=np.int64)
        if f == 0:
            rec = cur
        elif f == 1:
            rec = cur.copy()
            for i in range(bpp, stride):
                rec[i] = (rec[i] + rec[i - bpp]) & 0xFF
        elif f == 2:
            rec = (cur + prev) & 0xFF
        elif f == 3:
            rec = cur.copy()
            rec[:bpp] = (rec[:bpp] + prev[:bpp] // 2) & 0xFF
            for i in range(bpp, stride):
                rec[i] = (rec[i] + (rec[i - bpp] + prev[i]) // 2) & 0xFF
        elif f == 4:
            rec = cur.copy()
            rec[:bpp] = (rec[:bpp] + prev[:bpp]) & 0xFF
            for i in range(bpp, stride, bpp):
                a = rec[i - bpp : i]
                b = prev[i : i + bpp]
                cc = prev[i - bpp : i]
                rec[i : i + bpp] = (rec[i : i + bpp] + _paeth(a, b, cc)) & 0xFF
        else:
            raise ImageIOError(f"unsupported PNG filter {f}")
        out[y] = rec
    flat = out.astype(np.uint8).tobytes()
    if depth == 16:
        img = np.frombuffer(flat, dtype=">u2").astype(np.uint16)
    else:
        img = np.frombuffer(flat, dtype=np.uint8)
    return img.reshape(h, w, channels)


def _read_png_any_depth(data: bytes):
    """Own-parser path; used for 16-bit files. Returns uint8/uint16 array."""
    if data[:8] != _PNG_SIG:
        raise ImageIOError("not a PNG file")
    pos = 8
    ihdr = None
    idat = []
    while pos + 8 <= len(data):
        length, tag = struct.unpack(">I4s", data[pos : pos + 8])
        chunk = data[pos + 8 : pos + 8 + length]
        if len(chunk) < length:
            raise ImageIOError("PNG chunk truncated")
        if tag == b"IHDR":
            ihdr = chunk
        elif tag == b"IDAT":
            idat.append(chunk)
        elif tag == b"IEND":
            break
        pos += 12 + length
    if ihdr is None or not idat:
        raise ImageIOError("PNG missing IHDR or IDAT")
    w, h, depth, color, comp, filt, interlace = struct.unpack(">IIBBBBB", ihdr)
    if comp != 0 or filt != 0 or interlace != 0:
        raise ImageIOError("unsupported PNG compression/filter/interlace method")
    channels = {0: 1, 2: 3, 6: 4}.get(color)
    if channels is None or depth not in (8, 16):
        raise ImageIOError(f"unsupported PNG color type {color} / depth {depth}")
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise ImageIOError(f"corrupt PNG pixel data: {exc}") from exc
    img = _unfilter(raw, w, h, channels, depth)
    return img[:, :, 0] if channels == 1 else img


def _read_png(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != _PNG_SIG or len(data) < 26:
        raise ImageIOError(f"{path} is not a PNG file")
    depth = data[24]
    if depth == 16:
        return _read_png_any_depth(data)
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.mode in ("RGBA", "LA", "PA"):
                return np.asarray(im.convert("RGBA"))
            return np.asarray(im.convert("RGB"))
    except Exception as exc:
        raise ImageIOError(f"cannot decode PNG {path}: {exc}") from exc


def encode_png(img, srgb: bool = True) -> bytes:
    """8-bit PNG bytes for a linear H x W x {3,4} image in [0, 1]."""
    x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if srgb:
        x = linear_to_srgb(x)
    if x.ndim != 3 or x.shape[2] not in (3, 4):
        raise ImageIOError("PNG output expects an H x W x 3or4 array")
    q = np.floor(x * 255.0 + 0.5).astype(np.uint8)
    mode = "RGB" if q.shape[2] == 3 else "RGBA"
    buf = io.BytesIO()
    Image.fromarray(q, mode).save(buf, format="PNG")
    return buf.getvalue()


def _write_png(path, img: np.ndarray, srgb: bool, bit_depth: int) -> None:
    if bit_depth == 8:
        data = encode_png(img, srgb=srgb)
        with open(path, "wb") as f:
            f.write(data)
    elif bit_depth == 16:
        x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
        if srgb:
            x = linear_to_srgb(x)
        if x.ndim != 3 or x.shape[2] not in (3, 4):
            raise ImageIOError("PNG output expects an H x W x 3or4 array")
        q = np.floor(x * 65535.0 + 0.5).astype(np.uint16)
        _write_png16(path, q)
    else:
        raise ImageIOError(f"unsupported PNG bit depth {bit_depth}")


# ---------------------------------------------------------------------------
# EXR codec
# ---------------------------------------------------------------------------

_EXR_CHANNEL_INDEX = {"R": 0, "G": 1, "B": 2, "A": 3}


def write_exr(path, img: np.ndarray) -> None:
    """Write H x W x {3,4} float32 as an uncompressed scanline EXR."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] not in (3, 4):
        raise ImageIOError("EXR output expects an H x W x 3or4 array")
    h, w, c = img.shape
    names = ["B", "G", "R"] if c == 3 else ["A", "B", "G", "R"]

    def attr(name: bytes, typ: bytes, value: bytes) -> bytes:
        return name + b"\0" + typ + b"\0" + struct.pack("<i", len(value)) + value

    chlist = b""
    for name in names:  # alphabetical, as the format requires
        chlist += (
            name.encode() + b"\0" + struct.pack("<i", 2)  # FLOAT
            + b"\0\0\0\0" + struct.pack("<2i", 1, 1)
        )
    chlist += b"\0"
    header = _EXR_MAGIC + struct.pack("<i", 2)
    header += attr(b"channels", b"chlist", chlist)
    header += attr(b"compression", b"compression", b"\0")
    header += attr(b"dataWindow", b"box2i", struct.pack("<4i", 0, 0, w - 1, h - 1))
    header += attr(b"displayWindow", b"box2i", struct.pack("<4i", 0, 0, w - 1, h - 1))
    header += attr(b"lineOrder", b"lineOrder", b"\0")
    header += attr(b"pixelAspectRatio", b"float", struct.pack("<f", 1.0))
    header += attr(b"screenWindowCenter", b"v2f", struct.pack("<2f", 0.0, 0.0))
    header += attr(b"screenWindowWidth", b"float", struct.pack("<f", 1.0))
    header += b"\0"

    chunk_size = w * c * 4
    first = len(header) + 8 * h
    offsets = struct.pack(f"<{h}Q", *(first + y * (chunk_size + 8) for y in range(h)))
    with open(path, "wb") as f:
        f.write(header)
        f.write(offsets)
        for y in range(h):
            f.write(struct.pack("<2i", y, chunk_size))
            for name in names:
                f.write(img[y, :, _EXR_CHANNEL_INDEX[name]].astype("<f4").tobytes())


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ImageIOError("EXR file truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def cstr(self, limit=256) -> bytes:
        end = self.data.find(b"\0", self.pos, self.pos + limit)
        if end < 0:
            raise ImageIOError("EXR header string not terminated")
        out = self.data[self.pos : end]
        self.pos = end + 1
        return out


def read_exr(path) -> np.ndarray:
    """Read an uncompressed float32 scanline EXR written by this package
    (or any conforming writer); returns H x W x {3,4} float32."""
    with open(path, "rb") as f:
        cur = _Cursor(f.read())
    if cur.take(4) != _EXR_MAGIC:
        raise ImageIOError(f"{path} is not an EXR file")
    version = struct.unpack("<i", cur.take(4))[0]
    if version & 0xFF != 2:
        raise ImageIOError(f"unsupported EXR version {version & 0xFF}")
    if version & 0x200:
        raise ImageIOError("tiled EXR files are not supported")
    if version & 0x800 or version & 0x1000:
        raise ImageIOError("deep/multipart EXR files are not supported")

    attrs = {}
    while True:
        name = cur.cstr()
        if name == b"":
            break
        cur.cstr()  # attribute type, unused beyond the fields parsed below
        size = struct.unpack("<i", cur.take(4))[0]
        if size < 0:
            raise ImageIOError("negative EXR attribute size")
        attrs[name] = cur.take(size)

    for required in (b"channels", b"compression", b"dataWindow", b"lineOrder"):
        if required not in attrs:
            raise ImageIOError(f"EXR header missing {required.decode()}")
    if attrs[b"compression"][0] != 0:
        raise ImageIOError(
            "only uncompressed EXR is supported, got compression "
            f"{attrs[b'compression'][0]}"
        )
    if attrs[b"lineOrder"][0] != 0:
        raise ImageIOError("only increasing-y EXR line order is supported")
    x0, y0, x1, y1 = struct.unpack("<4i", attrs[b"dataWindow"])
    w, h = x1 - x0 + 1, y1 - y0 + 1
    if w < 1 or h < 1:
        raise ImageIOError("empty EXR data window")

    names = []
    ch = _Cursor(attrs[b"channels"])
    while True:
        name = ch.cstr()
        if name == b"":
            break
        ptype = struct.unpack("<i", ch.take(4))[0]
        ch.take(4)  # pLinear + reserved
        sx, sy = struct.unpack("<2i", ch.take(8))
        if ptype != 2:
            raise ImageIOError("only FLOAT EXR channels are supported")
        if (sx, sy) != (1, 1):
            raise ImageIOError("EXR channel subsampling is not supported")
        names.append(name.decode("latin-1"))
    if sorted(names) != names:
        raise ImageIOError("EXR channel list is not sorted")
    if set(names) == {"R", "G", "B"}:
        out_c = 3
    elif set(names) == {"R", "G", "B", "A"}:
        out_c = 4
    else:
        raise ImageIOError(f"unsupported EXR channel set {names}")

    cur.take(8 * h)  # offset table; chunks follow contiguously
    img = np.empty((h, w, out_c), dtype=np.float32)
    seen = np.zeros(h, dtype=bool)
    for _ in range(h):
        y, size = struct.unpack("<2i", cur.take(8))
        if not (y0 <= y <= y1) or size != w * len(names) * 4:
            raise ImageIOError("corrupt EXR scanline chunk")
        row = np.frombuffer(cur.take(size), dtype="<f4").reshape(len(names), w)
        for i, name in enumerate(names):
            img[y - y0, :, _EXR_CHANNEL_INDEX[name]] = row[i]
        seen[y - y0] = True
    if not seen.all():
        raise ImageIOError("EXR scanline coverage incomplete")
    return img


# ---------------------------------------------------------------------------
# routing front end
# ---------------------------------------------------------------------------

def read_image(path, assume_srgb: bool = True) -> np.ndarray:
    """Load an image as linear float32.

    PNG values are mapped to [0, 1] and sRGB-decoded unless
    ``assume_srgb`` is false; EXR floats pass through untouched.
    """
    p = str(path)
    if p.lower().endswith(".exr"):
        return read_exr(path)
    if p.lower().endswith(".png"):
        arr = _read_png(path)
        scale = 65535.0 if arr.dtype == np.uint16 else 255.0
        x = arr.astype(np.float64) / scale
        if assume_srgb:
            if x.ndim == 3 and x.shape[2] == 4:
                x = np.concatenate([srgb_to_linear(x[:, :, :3]), x[:, :, 3:]], axis=2)
            else:
                x = srgb_to_linear(x)
        return x.astype(np.float32)
    raise ImageIOError(f"unsupported image extension on {path}")


def write_image(path, img, srgb: bool = True, bit_depth: int = 8) -> None:
    """Write linear image data.

    PNG output is sRGB-encoded unless ``srgb`` is false and quantized to
    ``bit_depth`` (8 or 16); EXR output is float32 linear, parameters
    ignored.
    """
    p = str(path)
    if p.lower().endswith(".exr"):
        write_exr(path, img)
        return
    if p.lower().endswith(".png"):
        _write_png(path, img, srgb=srgb, bit_depth=bit_depth)
        return
    raise ImageIOError(f"unsupported image extension on {path}")
