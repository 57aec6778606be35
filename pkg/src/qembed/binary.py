"""Bit-packed binary embedding matrices: 8 columns per byte, little-endian bit order."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# popcount per byte value; avoids relying on newer numpy bit_count ufuncs
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


class BinaryMatrixError(ValueError):
    """Raised on shape mismatches or corrupt binary matrix files."""


@dataclass
class BinaryMatrix:
    packed: np.ndarray  # (n, ceil(m/8)) uint8
    m: int  # true column count (bank size)
    row_ids: list[str]

    def __post_init__(self):
        n = self.packed.shape[0]
        if len(self.row_ids) != n:
            raise BinaryMatrixError(f"{len(self.row_ids)} row ids for {n} rows")
        if self.packed.shape[1] != (self.m + 7) // 8:
            raise BinaryMatrixError(
                f"packed width {self.packed.shape[1]} does not fit m={self.m}")
        self._index = {rid: i for i, rid in enumerate(self.row_ids)}

    @property
    def n(self) -> int:
        return int(self.packed.shape[0])

    @classmethod
    def from_dense(cls, dense: np.ndarray, row_ids: list[str] | None = None) -> "BinaryMatrix":
        dense = np.asarray(dense)
        if dense.ndim != 2:
            raise BinaryMatrixError(f"dense matrix must be 2-d, got shape {dense.shape}")
        if dense.size and not np.isin(dense, (0, 1)).all():
            raise BinaryMatrixError("dense matrix must contain only 0/1 values")
        n, m = dense.shape
        if row_ids is None:
            row_ids = [str(i) for i in range(n)]
        packed = np.packbits(dense.astype(np.uint8), axis=1, bitorder="little")
        if m == 0:
            packed = packed.reshape(n, 0)
        return cls(packed=packed, m=m, row_ids=list(row_ids))

    def to_dense(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros((self.n, 0), dtype=np.uint8)
        dense = np.unpackbits(self.packed, axis=1, bitorder="little")
        return dense[:, :self.m]

    def row(self, i: int) -> np.ndarray:
        """Dense 0/1 view of one row."""
        if not 0 <= i < self.n:
            raise BinaryMatrixError(f"row {i} out of range [0, {self.n})")
        if self.m == 0:
            return np.zeros(0, dtype=np.uint8)
        return np.unpackbits(self.packed[i], bitorder="little")[:self.m]

    def row_index(self, row_id: str) -> int:
        if row_id not in self._index:
            raise KeyError(row_id)
        return self._index[row_id]

    def pair_load(self, i: int, j: int) -> int:
        """Shared-yes count of rows i and j via packed popcount."""
        return packed_cognitive_load(self.packed[i], self.packed[j])

    def truncate(self, m_prime: int) -> "BinaryMatrix":
        """Keep the first m_prime columns (bank id order)."""
        if not 1 <= m_prime <= self.m:
            raise BinaryMatrixError(f"m'={m_prime} out of range [1, {self.m}]")
        return BinaryMatrix.from_dense(self.to_dense()[:, :m_prime], self.row_ids)


def packed_cognitive_load(pu: np.ndarray, pv: np.ndarray) -> int:
    if pu.shape != pv.shape:
        raise BinaryMatrixError(f"packed length mismatch: {pu.shape} vs {pv.shape}")
    return int(_POPCOUNT[np.bitwise_and(pu, pv)].sum())


def save_binary_matrix(matrix: BinaryMatrix, path: str | Path) -> None:
    """Header: n and m as little-endian uint64; then packed rows; then row-id lines."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", matrix.n, matrix.m))
        fh.write(np.ascontiguousarray(matrix.packed).tobytes())
        fh.write("".join(rid + "\n" for rid in matrix.row_ids).encode("utf-8"))


def load_binary_matrix(path: str | Path) -> BinaryMatrix:
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise BinaryMatrixError(f"truncated binary matrix file: {path}")
    n, m = struct.unpack("<QQ", blob[:16])
    width = (m + 7) // 8
    end = 16 + n * width
    if len(blob) < end:
        raise BinaryMatrixError(f"binary matrix file shorter than header claims: {path}")
    packed = np.frombuffer(blob[16:end], dtype=np.uint8).reshape(n, width).copy()
    row_ids = blob[end:].decode("utf-8").splitlines()
    if len(row_ids) != n:
        raise BinaryMatrixError(f"expected {n} row ids, found {len(row_ids)}: {path}")
    return BinaryMatrix(packed=packed, m=int(m), row_ids=row_ids)
