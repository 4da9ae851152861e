"""
Binary keyed-scan format (little-endian):

    b"KSCN"  u16 version=1  u16 robot  u64 index  u64 point_count
    point_count x 3 x f32
"""

import struct
from pathlib import Path

import numpy as np

from burrow.graph.model import KeyedScan, NodeKey
from burrow.utils.exceptions import ScanFormatError

MAGIC = b"KSCN"
VERSION = 1
_HEADER = struct.Struct("<4sHHQQ")

# key used when a whole map (not a key node's scan) is stored in this format
MAP_KEY = NodeKey(0xFFFF, 0)


def encode_scan(scan: KeyedScan) -> bytes:
    cloud = scan.cloud.astype("<f4", copy=False)
    header = _HEADER.pack(MAGIC, VERSION, scan.key.robot_id, scan.key.index, len(cloud))
    return header + cloud.tobytes()


def decode_scan(buffer: bytes) -> KeyedScan:
    """
    Raises:
        ScanFormatError: on a bad magic, version or a size that does not match
            the point count.
    """
    if len(buffer) < _HEADER.size:
        raise ScanFormatError(f"scan buffer of {len(buffer)} bytes has no header")
    magic, version, robot, index, count = _HEADER.unpack_from(buffer)
    if magic != MAGIC:
        raise ScanFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ScanFormatError(f"unsupported scan version {version}")
    expected = _HEADER.size + count * 12
    if len(buffer) != expected:
        raise ScanFormatError(f"scan body is {len(buffer)} bytes, expected {expected}")
    cloud = np.frombuffer(buffer, dtype="<f4", count=count * 3, offset=_HEADER.size)
    return KeyedScan(NodeKey(robot, index), cloud.reshape(-1, 3))


def write_scan(scan: KeyedScan, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_scan(scan))


def read_scan(path: Path) -> KeyedScan:
    return decode_scan(path.read_bytes())
