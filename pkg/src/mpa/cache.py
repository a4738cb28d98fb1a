"""Binary scene cache.

Layout (all integers and floats little-endian)::

    header   magic b"MPAS" | u32 version (=1) | u64 record count
    record*  u32 payload length | payload
    trailer  u32 CRC-32 of every preceding byte

    payload  str scene_id | u8 frame | 3 x f64 anchor pose
             | track target | u32 n_neighbors | track * n
             | u32 n_polylines | polyline * n
    track    str agent_id | u8 agent_type
             | u32 H | H*5 f64 history | H u8 history_valid
             | u32 T | T*5 f64 future  | T u8 future_valid
    polyline i32 lane_type | u32 n | n*4 f64 nodes
    str      u16 byte length | utf-8 bytes

States are stored as 64-bit floats so that a round trip is bit-exact.
"""
from __future__ import annotations

import io
import os
import struct
import zlib
from pathlib import Path
from typing import Iterable, List

import numpy as np

from .scene import STATE_DIM, AgentTrack, Frame, RoadGraphPolyline, Scene

MAGIC = b"MPAS"
VERSION = 1


class CacheFormatError(ValueError):
    pass


def _put_str(buf: io.BytesIO, text: str) -> None:
    raw = text.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)


def _put_array(buf: io.BytesIO, arr: np.ndarray, dtype: str) -> None:
    buf.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _put_track(buf: io.BytesIO, track: AgentTrack) -> None:
    _put_str(buf, track.agent_id)
    buf.write(struct.pack("<B", int(track.agent_type)))
    for states, valid in ((track.history, track.history_valid), (track.future, track.future_valid)):
        buf.write(struct.pack("<I", len(states)))
        _put_array(buf, states, "<f8")
        _put_array(buf, valid, "u1")


def encode_scene(scene: Scene) -> bytes:
    buf = io.BytesIO()
    _put_str(buf, scene.scene_id)
    buf.write(struct.pack("<B3d", int(scene.frame), *scene.anchor_pose))
    _put_track(buf, scene.target)
    buf.write(struct.pack("<I", len(scene.neighbors)))
    for track in scene.neighbors:
        _put_track(buf, track)
    buf.write(struct.pack("<I", len(scene.roadgraph)))
    for poly in scene.roadgraph:
        buf.write(struct.pack("<iI", poly.lane_type, len(poly.nodes)))
        _put_array(buf, poly.nodes, "<f8")
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CacheFormatError("truncated record")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    def array(self, count: int, dtype: str, shape) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(count * dt.itemsize), dtype=dt).reshape(shape).copy()


def _get_track(r: _Reader) -> AgentTrack:
    agent_id = r.string()
    (agent_type,) = r.unpack("<B")
    parts = []
    for _ in range(2):
        (n,) = r.unpack("<I")
        states = r.array(n * STATE_DIM, "<f8", (n, STATE_DIM)).astype(np.float64)
        valid = r.array(n, "u1", (n,)).astype(bool)
        parts.extend([states, valid])
    return AgentTrack(agent_id, agent_type, *parts)


def decode_scene(payload: bytes) -> Scene:
    r = _Reader(payload)
    scene_id = r.string()
    frame, ax, ay, ah = r.unpack("<B3d")
    target = _get_track(r)
    (n_nb,) = r.unpack("<I")
    neighbors = tuple(_get_track(r) for _ in range(n_nb))
    (n_poly,) = r.unpack("<I")
    polys = []
    for _ in range(n_poly):
        lane_type, n = r.unpack("<iI")
        nodes = r.array(n * 4, "<f8", (n, 4)).astype(np.float64)
        polys.append(RoadGraphPolyline(nodes=nodes, lane_type=lane_type))
    if r.pos != len(payload):
        raise CacheFormatError("trailing bytes in record")
    return Scene(scene_id, target, neighbors, tuple(polys), Frame(frame), (ax, ay, ah))


def dumps(scenes: Iterable[Scene]) -> bytes:
    scenes = list(scenes)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", VERSION, len(scenes)))
    for scene in scenes:
        if scene.frame != Frame.CANONICAL:
            raise ValueError(f"scene {scene.scene_id}: only canonical scenes are cached")
        payload = encode_scene(scene)
        buf.write(struct.pack("<I", len(payload)))
        buf.write(payload)
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> List[Scene]:
    if len(data) < 4 + 12 + 4:
        raise CacheFormatError("file too short to be a scene cache")
    if data[:4] != MAGIC:
        raise CacheFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<IQ", data[4:16])
    if version != VERSION:
        raise CacheFormatError(f"unsupported cache version {version}, expected {VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CacheFormatError("checksum mismatch, cache file is corrupt")
    r = _Reader(body)
    r.pos = 16
    scenes = []
    for _ in range(count):
        (n,) = r.unpack("<I")
        try:
            scenes.append(decode_scene(r.take(n)))
        except (struct.error, UnicodeDecodeError, ValueError) as exc:
            raise CacheFormatError(f"malformed record {len(scenes)}: {exc}") from exc
    if r.pos != len(body):
        raise CacheFormatError("trailing bytes after last record")
    return scenes


def cache_write(scenes: Iterable[Scene], path: str | os.PathLike) -> None:
    Path(path).write_bytes(dumps(scenes))


def cache_read(path: str | os.PathLike) -> List[Scene]:
    return loads(Path(path).read_bytes())
