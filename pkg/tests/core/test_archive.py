from __future__ import annotations

import struct

import numpy as np
import pytest

from cnsnet.core.archive import dumps
from cnsnet.core.archive import load_archive
from cnsnet.core.archive import loads
from cnsnet.core.archive import MAGIC
from cnsnet.core.archive import save_archive
from cnsnet.core.errors import ArchiveError


def _tensors():
    return {
        'weight': np.arange(12, dtype=np.float32).reshape(3, 4),
        'step': np.array(7, dtype=np.int64),
        'mask': np.array([0, 1, 1], dtype=np.uint8),
        'stats': np.array([0.25, -1.5]),
    }


def test_archive_preserves_tensors_and_metadata(tmp_path):
    path = save_archive(tmp_path / 'nested' / 'a.ckpt', _tensors(), {'format': 'test'})
    archive = load_archive(path)

    assert list(archive.tensors) == ['weight', 'step', 'mask', 'stats']
    for name, value in _tensors().items():
        assert archive.tensors[name].dtype == value.dtype
        np.testing.assert_array_equal(archive.tensors[name], value)
    assert archive.metadata == {'format': 'test'}
    assert not (tmp_path / 'nested' / 'a.ckpt.tmp').exists()


def test_dumps_is_deterministic():
    blob = dumps(_tensors(), {'b': '2', 'a': '1'})
    assert blob == dumps(_tensors(), {'b': '2', 'a': '1'})
    archive = loads(blob)
    assert dumps(archive.tensors, archive.metadata) == blob


def test_header_layout():
    blob = dumps({'x': np.zeros(2, dtype=np.float32)})
    assert blob.startswith(MAGIC)
    version, length = struct.unpack('<IQ', blob[8:20])
    assert version == 1
    assert blob[20 + length :] == b'\x00' * 8


def test_unsupported_dtype():
    with pytest.raises(ArchiveError):
        dumps({'x': np.zeros(2, dtype=np.int16)})


def test_corrupt_archives(tmp_path):
    with pytest.raises(ArchiveError):
        loads(b'not an archive')
    with pytest.raises(ArchiveError):
        loads(dumps(_tensors())[:-4])

    blob = bytearray(dumps(_tensors()))
    blob[8:12] = struct.pack('<I', 99)
    with pytest.raises(ArchiveError):
        loads(bytes(blob))

    with pytest.raises(ArchiveError):
        load_archive(tmp_path / 'missing.ckpt')
