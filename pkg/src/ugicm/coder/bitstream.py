"""Unified bitstream container.

Layout (little-endian):

    magic      4s   b"UGIC"
    version    u16
    orig_h     u32   original image size before padding
    orig_w     u32
    padded_h   u32   size seen by the encoder
    padded_w   u32
    digest     16s   codec-config digest (md5 of the canonical config)
    z_support  u16   symbol support radius of the hyper-latent segment
    y_support  u16   symbol support radius of the latent segment
    n_seg      u16
    lengths    n_seg * u32
    segments   concatenated payload bytes

The preference condition is deliberately absent: one stream serves every
decode variant.
"""

import struct
from dataclasses import dataclass, field

from ..errors import BadMagicError, LengthMismatchError, UnsupportedVersionError

MAGIC = b"UGIC"
VERSION = 1

_FIXED = struct.Struct("<4sHIIII16sHHH")


@dataclass
class StreamHeader:
    orig_h: int
    orig_w: int
    padded_h: int
    padded_w: int
    config_digest: bytes
    z_support: int = 0
    y_support: int = 0
    version: int = VERSION

    def __post_init__(self):
        if len(self.config_digest) != 16:
            raise ValueError("config digest must be 16 bytes")


@dataclass
class Bitstream:
    header: StreamHeader
    segments: list[bytes] = field(default_factory=list)

    @property
    def payload_bytes(self) -> int:
        return sum(len(s) for s in self.segments)


def pack_bitstream(header: StreamHeader, segments: list[bytes]) -> bytes:
    fixed = _FIXED.pack(
        MAGIC,
        header.version,
        header.orig_h,
        header.orig_w,
        header.padded_h,
        header.padded_w,
        header.config_digest,
        header.z_support,
        header.y_support,
        len(segments),
    )
    lengths = struct.pack(f"<{len(segments)}I", *(len(s) for s in segments))
    return fixed + lengths + b"".join(segments)


def unpack_bitstream(data: bytes) -> Bitstream:
    if len(data) < _FIXED.size:
        raise LengthMismatchError(f"stream shorter than fixed header ({len(data)} bytes)")
    (magic, version, oh, ow, ph, pw, digest, zs, ys, n_seg) = _FIXED.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"stream version {version}, supported {VERSION}")
    off = _FIXED.size
    if len(data) < off + 4 * n_seg:
        raise LengthMismatchError("stream truncated in segment-length table")
    lengths = struct.unpack_from(f"<{n_seg}I", data, off)
    off += 4 * n_seg
    if len(data) != off + sum(lengths):
        raise LengthMismatchError(
            f"declared payload {sum(lengths)} bytes, found {len(data) - off}"
        )
    segments = []
    for n in lengths:
        segments.append(data[off : off + n])
        off += n
    header = StreamHeader(oh, ow, ph, pw, digest, zs, ys, version=version)
    return Bitstream(header, segments)
