"""SPARKLING MRI: Tensor File Utilities

On-disk layout: one line of JSON header, a newline, then the raw
little-endian row-major payload. Complex values are stored interleaved
(re, im).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from json import JSONDecodeError, dumps, loads
import logging
import os
from pathlib import Path
import tempfile
from typing import Any, Optional, Union

import numpy as np

from ..exceptions import CorruptFileException, FormatException

DTYPES: dict[str, np.dtype] = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "c64": np.dtype("<c8"),
    "c128": np.dtype("<c16"),
}
MAX_HEADER_BYTES = 1 << 20

logger = logging.getLogger(__name__)


@dataclass
class TensorFile:
    """Decoded tensor file"""

    data: np.ndarray
    dtype: str
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, ...]:
        """Tensor shape"""
        return tuple(self.data.shape)


def dtype_name(data: np.ndarray) -> str:
    """Smallest supported dtype name that holds the array losslessly"""
    if np.iscomplexobj(data):
        return "c64" if data.dtype == np.complex64 else "c128"
    return "f32" if data.dtype == np.float32 else "f64"


def write_tensor(
    path: Union[str, Path],
    data: np.ndarray,
    shape: Optional[tuple[int, ...]] = None,
    dtype: Optional[str] = None,
    meta: Optional[dict[str, Any]] = None,
) -> None:
    """Write a tensor file atomically"""
    array = np.asarray(data)
    if shape is None:
        shape = tuple(array.shape)
    if dtype is None:
        dtype = dtype_name(array)
    if len(shape) == 0:
        raise FormatException("Tensor shape must be nonempty")
    if dtype not in DTYPES:
        raise FormatException(f"Unsupported dtype: {dtype}")
    if int(np.prod(shape)) != array.size:
        raise FormatException(
            f"Shape {list(shape)} does not match {array.size} elements"
        )

    header: dict[str, Any] = {
        "shape": [int(dim) for dim in shape],
        "dtype": dtype,
        "order": "row-major",
        "endianness": "little",
    }
    if meta:
        header["meta"] = meta
    payload = np.ascontiguousarray(array.reshape(shape), dtype=DTYPES[dtype])

    path = Path(path)
    handle, temp_path = tempfile.mkstemp(
        dir=path.parent if str(path.parent) else ".",
        prefix=f".{path.name}.",
    )
    try:
        with os.fdopen(handle, "wb") as file:
            file.write(dumps(header, sort_keys=True).encode("utf-8"))
            file.write(b"\n")
            file.write(payload.tobytes(order="C"))
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    logger.debug("Wrote tensor %s: shape=%s dtype=%s", path, list(shape), dtype)


def _parse_header(line: bytes) -> dict[str, Any]:
    """Parse and validate the header line"""
    try:
        header = loads(line.decode("utf-8"))
    except (UnicodeDecodeError, JSONDecodeError) as error:
        raise FormatException(f"Malformed tensor header: {error}") from error
    if not isinstance(header, dict):
        raise FormatException("Tensor header is not an object")
    if header.get("dtype") not in DTYPES:
        raise FormatException(f"Unknown dtype: {header.get('dtype')}")
    shape = header.get("shape")
    if (
        not isinstance(shape, list)
        or len(shape) == 0
        or not all(isinstance(dim, int) and dim >= 0 for dim in shape)
    ):
        raise FormatException(f"Invalid shape: {shape}")
    if header.get("endianness", "little") != "little":
        raise FormatException("Only little-endian payloads are supported")
    if header.get("order", "row-major") != "row-major":
        raise FormatException("Only row-major payloads are supported")
    return header


def read_tensor(
    path: Union[str, Path],
) -> TensorFile:
    """Read a tensor file"""
    with open(path, "rb") as file:
        line = file.readline(MAX_HEADER_BYTES)
        if not line.endswith(b"\n"):
            raise FormatException(f"Missing tensor header in {path}")
        header = _parse_header(line[:-1])
        dtype = DTYPES[header["dtype"]]
        shape = tuple(header["shape"])
        expected = int(np.prod(shape)) * dtype.itemsize
        payload = file.read(expected + 1)

    if len(payload) != expected:
        raise CorruptFileException(
            f"Payload of {path} has {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    return TensorFile(
        data=data,
        dtype=header["dtype"],
        meta=header.get("meta", {}),
    )
