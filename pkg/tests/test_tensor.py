"""Test the tensor file format"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from sparklingmri.exceptions import CorruptFileException, FormatException
from sparklingmri.utilities.tensor import read_tensor, write_tensor


def test_multicoil_shot_set(tmp_path: Path, rng: np.random.Generator) -> None:
    """c128 [16][512][5] survives a write and read"""
    data = rng.normal(size=(16, 512, 5)) + 1j * rng.normal(size=(16, 512, 5))
    path = tmp_path / "kspace.tensor"
    write_tensor(path, data)
    tensor = read_tensor(path)
    assert tensor.dtype == "c128"
    assert tensor.shape == (16, 512, 5)
    np.testing.assert_array_equal(tensor.data, data)


def test_meta_and_explicit_dtype(tmp_path: Path) -> None:
    """f32 storage with a metadata object"""
    path = tmp_path / "density.tensor"
    write_tensor(path, np.ones((4, 4)), dtype="f32", meta={"method": "vds"})
    tensor = read_tensor(path)
    assert tensor.dtype == "f32"
    assert tensor.data.dtype == np.float32
    assert tensor.meta == {"method": "vds"}


def test_header_is_one_json_line(tmp_path: Path) -> None:
    """Header then raw little-endian payload"""
    path = tmp_path / "x.tensor"
    write_tensor(path, np.arange(3.0))
    header, payload = path.read_bytes().split(b"\n", 1)
    assert b'"dtype": "f64"' in header
    assert len(payload) == 24


def test_truncated_payload(tmp_path: Path) -> None:
    """Missing bytes are a corrupt file"""
    path = tmp_path / "x.tensor"
    write_tensor(path, np.arange(8.0))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(CorruptFileException):
        read_tensor(path)


def test_trailing_bytes(tmp_path: Path) -> None:
    """Extra bytes are a corrupt file"""
    path = tmp_path / "x.tensor"
    write_tensor(path, np.arange(8.0))
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(CorruptFileException):
        read_tensor(path)


@pytest.mark.parametrize(
    "header",
    [
        b"not json\n",
        b'{"shape": [2], "dtype": "i8"}\n',
        b'{"shape": [], "dtype": "f64"}\n',
        b'{"shape": [2], "dtype": "f64", "endianness": "big"}\n',
        b"{}",
    ],
)
def test_bad_header(tmp_path: Path, header: bytes) -> None:
    """Unknown dtype, empty shape, big endian or missing newline"""
    path = tmp_path / "x.tensor"
    path.write_bytes(header + b"\0" * 16)
    with pytest.raises(FormatException):
        read_tensor(path)


def test_shape_mismatch_on_write(tmp_path: Path) -> None:
    """Declared shape must match the element count"""
    with pytest.raises(FormatException):
        write_tensor(tmp_path / "x.tensor", np.zeros(6), shape=(4, 2))
    assert not list(tmp_path.iterdir())


def test_write_leaves_no_temporary_files(tmp_path: Path) -> None:
    """Atomic replace cleans up"""
    write_tensor(tmp_path / "x.tensor", np.zeros((2, 2)))
    assert [p.name for p in tmp_path.iterdir()] == ["x.tensor"]
