'''
tensor archive layout (all integers little-endian):

    magic     8 bytes   b'CNSARCH\\x00'
    version   u32       currently 1
    length    u64       byte length of the manifest
    manifest  utf-8     json: {"metadata": {str: str}, "tensors": [entry, ...]}
    payload   raw       tensor buffers back to back, little-endian, C order

entry = {"name": str, "dtype": "f4"|"f8"|"i8"|"u1", "shape": [int], "offset": int, "nbytes": int}
offsets are relative to the first payload byte
'''
from __future__ import annotations

import json
import os
import struct
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cnsnet.core.errors import ArchiveError

MAGIC = b'CNSARCH\x00'
VERSION = 1

_DTYPES: dict[str, np.dtype] = {
    'f4': np.dtype('<f4'),
    'f8': np.dtype('<f8'),
    'i8': np.dtype('<i8'),
    'u1': np.dtype('u1'),
}


@dataclass(frozen=True)
class Archive:
    tensors: dict[str, np.ndarray]
    metadata: dict[str, str]


def _code(name: str, array: np.ndarray) -> str:
    code = f'{array.dtype.kind}{array.dtype.itemsize}'
    if code not in _DTYPES:
        raise ArchiveError(f'`{name}` has unsupported dtype {array.dtype}')
    return code


def dumps(tensors: Mapping[str, np.ndarray], metadata: Mapping[str, str] | None = None) -> bytes:
    entries = []
    buffers = []
    offset = 0
    for name, value in tensors.items():
        array = np.asarray(value)
        code = _code(name, array)
        raw = np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes()
        entries.append(
            {'name': name, 'dtype': code, 'shape': list(array.shape), 'offset': offset, 'nbytes': len(raw)}
        )
        buffers.append(raw)
        offset += len(raw)
    manifest = json.dumps(
        {'metadata': dict(metadata or {}), 'tensors': entries},
        separators=(',', ':'),
    ).encode('utf-8')
    header = MAGIC + struct.pack('<IQ', VERSION, len(manifest))
    return header + manifest + b''.join(buffers)


def loads(blob: bytes) -> Archive:
    head = len(MAGIC) + struct.calcsize('<IQ')
    if len(blob) < head or blob[: len(MAGIC)] != MAGIC:
        raise ArchiveError('not a tensor archive')
    version, length = struct.unpack('<IQ', blob[len(MAGIC) : head])
    if version != VERSION:
        raise ArchiveError(f'unsupported archive version {version}')
    try:
        manifest = json.loads(blob[head : head + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArchiveError('corrupt manifest') from e
    payload = memoryview(blob)[head + length :]

    tensors: dict[str, np.ndarray] = {}
    for entry in manifest['tensors']:
        dtype = _DTYPES.get(entry['dtype'])
        if dtype is None:
            raise ArchiveError(f'`{entry["name"]}` has unknown dtype code {entry["dtype"]}')
        start, stop = entry['offset'], entry['offset'] + entry['nbytes']
        if stop > len(payload):
            raise ArchiveError(f'`{entry["name"]}` runs past the end of the archive')
        array = np.frombuffer(payload[start:stop], dtype=dtype)
        tensors[entry['name']] = array.reshape(entry['shape']).astype(dtype.newbyteorder('='))
    return Archive(tensors, {str(k): str(v) for k, v in manifest['metadata'].items()})


def save_archive(
    path: str | os.PathLike[str],
    tensors: Mapping[str, np.ndarray],
    metadata: Mapping[str, str] | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + '.tmp')
    tmp.write_bytes(dumps(tensors, metadata))
    tmp.replace(path)
    return path


def load_archive(path: str | os.PathLike[str]) -> Archive:
    path = Path(path)
    if not path.is_file():
        raise ArchiveError(f'no archive at {path}')
    return loads(path.read_bytes())


__all__ = [
    'Archive',
    'MAGIC',
    'VERSION',
    'dumps',
    'load_archive',
    'loads',
    'save_archive',
]
