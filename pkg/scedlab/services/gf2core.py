"""Bit-packed linear algebra over GF(2).

Rows are packed little-endian into 64-bit lanes: bit ``j`` of a row lives in
word ``j // 64`` at position ``j % 64``. Padding bits beyond ``cols`` are
always zero, so word-wise comparisons, hashing and XOR are exact.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from scedlab.core.exceptions import DimensionError

WORD_BITS = 64


def _n_words(length: int) -> int:
    return max(1, (length + WORD_BITS - 1) // WORD_BITS)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a (..., L) 0/1 array into (..., words) little-endian uint64 lanes."""
    bits = np.asarray(bits, dtype=np.uint8) & 1
    length = bits.shape[-1]
    words = _n_words(length)
    pad = words * WORD_BITS - length
    if pad:
        widths = [(0, 0)] * (bits.ndim - 1) + [(0, pad)]
        bits = np.pad(bits, widths)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8")


def unpack_bits(words: np.ndarray, length: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1, bitorder="little")[..., :length]


def _parity64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    for shift in (32, 16, 8, 4, 2, 1):
        x ^= x >> np.uint64(shift)
    return (x & np.uint64(1)).astype(np.uint8)


def _popcount(words: np.ndarray) -> np.ndarray:
    as_bytes = np.ascontiguousarray(words, dtype="<u8").view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1).sum(axis=-1, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class BitVector:
    length: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (_n_words(self.length),):
            raise DimensionError(
                f"packed data has shape {self.data.shape}, expected ({_n_words(self.length)},)"
            )
        self.data.setflags(write=False)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVector":
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
        return cls(int(arr.shape[0]), pack_bits(arr).copy())

    @classmethod
    def from_string(cls, text: str) -> "BitVector":
        return cls.from_bits(int(ch) for ch in text.strip())

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        return cls(length, np.zeros(_n_words(length), dtype="<u8"))

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.data, self.length)

    @property
    def weight(self) -> int:
        return int(_popcount(self.data))

    def is_zero(self) -> bool:
        return not self.data.any()

    def __xor__(self, other: "BitVector") -> "BitVector":
        _check_len(self.length, other.length)
        return BitVector(self.length, self.data ^ other.data)

    def dot(self, other: "BitVector") -> int:
        _check_len(self.length, other.length)
        return int(_parity64(np.atleast_1d(np.bitwise_xor.reduce(self.data & other.data)))[0])

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.to_bits())

    def to_hex(self) -> str:
        return np.packbits(self.to_bits(), bitorder="little").tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, length: int) -> "BitVector":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        bits = np.unpackbits(raw, bitorder="little")
        if bits.shape[0] < length or bits[length:].any():
            raise DimensionError(f"hex row does not describe {length} bits")
        return cls.from_bits(bits[:length])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash((self.length, self.data.tobytes()))

    def __len__(self) -> int:
        return self.length

    def __repr__(self) -> str:
        return f"BitVector({''.join(map(str, self.to_bits()))})"


@dataclass(frozen=True, eq=False)
class BitMatrix:
    rows: int
    cols: int
    data: np.ndarray

    def __post_init__(self):
        if self.cols < 1 or self.rows < 0:
            raise DimensionError(f"invalid shape {self.rows}x{self.cols}")
        if self.data.shape != (self.rows, _n_words(self.cols)):
            raise DimensionError("packed data does not match the declared shape")
        self.data.setflags(write=False)

    @classmethod
    def from_dense(cls, dense) -> "BitMatrix":
        arr = np.asarray(dense, dtype=np.uint8)
        if arr.ndim != 2:
            raise DimensionError("a dense matrix must be two-dimensional")
        rows, cols = arr.shape
        return cls(rows, cols, pack_bits(arr).reshape(rows, _n_words(cols)).copy())

    @classmethod
    def from_rows(cls, rows: Sequence[BitVector], cols: int) -> "BitMatrix":
        for row in rows:
            _check_len(cols, row.length)
        if not rows:
            return cls(0, cols, np.zeros((0, _n_words(cols)), dtype="<u8"))
        return cls(len(rows), cols, np.stack([r.data for r in rows]).copy())

    @classmethod
    def identity(cls, size: int) -> "BitMatrix":
        return cls.from_dense(np.eye(size, dtype=np.uint8))

    def to_dense(self) -> np.ndarray:
        return unpack_bits(self.data, self.cols).reshape(self.rows, self.cols)

    @cached_property
    def dense(self) -> np.ndarray:
        dense = self.to_dense()
        dense.setflags(write=False)
        return dense

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    def row(self, i: int) -> BitVector:
        return BitVector(self.cols, self.data[i].copy())

    def row_list(self) -> List[BitVector]:
        return [self.row(i) for i in range(self.rows)]

    def row_weights(self) -> np.ndarray:
        if self.rows == 0:
            return np.zeros(0, dtype=np.int64)
        return _popcount(self.data)

    def stack(self, extra: Sequence[BitVector]) -> "BitMatrix":
        if not extra:
            return self
        for row in extra:
            _check_len(self.cols, row.length)
        data = np.vstack([self.data] + [r.data[None] for r in extra])
        return BitMatrix(self.rows + len(extra), self.cols, data)

    def delete_rows(self, indices: Sequence[int]) -> "BitMatrix":
        keep = np.setdiff1d(np.arange(self.rows), np.asarray(indices, dtype=np.int64))
        return BitMatrix(len(keep), self.cols, self.data[keep].copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"BitMatrix({self.rows}x{self.cols})"


def _check_len(expected: int, got: int) -> None:
    if expected != got:
        raise DimensionError(f"length mismatch: expected {expected}, got {got}")


def rref(M: BitMatrix) -> Tuple[BitMatrix, List[int], int]:
    """Reduced row-echelon form over GF(2).

    Columns are swept left to right and the first row (from the current pivot
    row down) with a one in the column becomes the pivot, so the output is
    fully determined by the input. Zero rows are kept at the bottom.
    """
    data = np.array(M.data, copy=True)
    pivots: List[int] = []
    r = 0
    for col in range(M.cols):
        if r == M.rows:
            break
        word, bit = divmod(col, WORD_BITS)
        column = (data[:, word] >> np.uint64(bit)) & np.uint64(1)
        candidates = np.flatnonzero(column[r:])
        if candidates.size == 0:
            continue
        p = r + int(candidates[0])
        if p != r:
            data[[r, p]] = data[[p, r]]
            column[[r, p]] = column[[p, r]]
        hits = column.astype(bool)
        hits[r] = False
        data[hits] ^= data[r]
        pivots.append(col)
        r += 1
    return BitMatrix(M.rows, M.cols, data), pivots, len(pivots)


def rank(M: BitMatrix) -> int:
    if M.rows == 0:
        return 0
    return rref(M)[2]


def nullspace_basis(H: BitMatrix) -> BitMatrix:
    n = H.cols
    if H.rows == 0:
        return BitMatrix.identity(n)
    R, pivots, r = rref(H)
    dense = R.to_dense()[:r]
    pivot_set = set(pivots)
    free = [c for c in range(n) if c not in pivot_set]
    basis = np.zeros((len(free), n), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        basis[i, pivots] = dense[:, f]
    if not free:
        return BitMatrix(0, n, np.zeros((0, _n_words(n)), dtype="<u8"))
    return BitMatrix.from_dense(basis)


def reduce_against(R: BitMatrix, pivots: Sequence[int], v: BitVector) -> BitVector:
    """Residue of ``v`` after elimination by the pivot rows of an RREF matrix."""
    _check_len(R.cols, v.length)
    words = np.array(v.data, copy=True)
    for i, col in enumerate(pivots):
        word, bit = divmod(col, WORD_BITS)
        if (words[word] >> np.uint64(bit)) & np.uint64(1):
            words ^= R.data[i]
    return BitVector(v.length, words)


def in_rowspace(M: BitMatrix, v: BitVector) -> bool:
    _check_len(M.cols, v.length)
    if v.is_zero():
        return True
    if M.rows == 0:
        return False
    R, pivots, _ = rref(M)
    return reduce_against(R, pivots, v).is_zero()


def syndrome(H: BitMatrix, x: BitVector) -> BitVector:
    _check_len(H.cols, x.length)
    if H.rows == 0:
        return BitVector.zeros(0)
    folded = np.bitwise_xor.reduce(H.data & x.data[None, :], axis=1)
    return BitVector.from_bits(_parity64(folded))


def syndrome_batch(H: BitMatrix, bits: np.ndarray) -> np.ndarray:
    """Syndromes of a (B, n) 0/1 array as a (B, rows) uint8 array."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != H.cols:
        raise DimensionError(f"length mismatch: expected {H.cols}, got {bits.shape[-1]}")
    return ((bits.astype(np.int32) @ H.dense.T.astype(np.int32)) & 1).astype(np.uint8)
