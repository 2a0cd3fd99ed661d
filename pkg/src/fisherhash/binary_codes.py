"""Bit-packed binary codes and Hamming/dissimilarity arithmetic.

Codes live in {-1,+1}^K.  A code table packs each item column into
ceil(K/64) machine words so that Hamming distances reduce to XOR plus
popcount.  All other modules build on the operations here.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DataError

WORD_BITS = 64
CODE_MAGIC = b"FHSH"
CODE_VERSION = 1

_HEADER_DTYPE = np.dtype("<u4")


def _num_words(k: int) -> int:
    return (k + WORD_BITS - 1) // WORD_BITS


def _pad_mask(k: int) -> np.ndarray:
    """Words with ones at the K valid bit positions, zeros at padding."""
    w = _num_words(k)
    mask = np.full(w, np.uint64(0xFFFFFFFFFFFFFFFF))
    tail = k % WORD_BITS
    if tail:
        mask[-1] = np.uint64((1 << tail) - 1)
    return mask


def _pack_bool(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean (n, K) array into (n, W) uint64, True <-> +1.

    Padding bits are forced to 1 (the +1 convention) so identically
    padded columns never differ beyond bit K-1.
    """
    n, k = bits.shape
    w = _num_words(k)
    padded = np.ones((n, w * WORD_BITS), dtype=np.uint8)
    padded[:, :k] = bits
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view(np.uint64)


class BinaryCodeMatrix:
    """K x N matrix with entries in {-1,+1}, stored bit-packed.

    Column i is the K-bit code of item i, held as a contiguous run of
    uint64 words (bit j of word w is logical entry 64*w + j, bit value
    1 meaning +1).  Instances are immutable after construction and safe
    for concurrent reads.
    """

    __slots__ = ("K", "words")

    def __init__(self, K: int, words: np.ndarray):
        if K < 1:
            raise ValueError(f"code length must be >= 1, got {K}")
        words = np.asarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != _num_words(K):
            raise ValueError(
                f"expected words of shape (N, {_num_words(K)}) for K={K}, "
                f"got {words.shape}"
            )
        if words.shape[0] < 1:
            raise ValueError("code matrix needs at least one column")
        tail = K % WORD_BITS
        if tail:
            # Normalize padding to the canonical +1 fill so distance
            # arithmetic stays exact even for externally written tables.
            pad = np.uint64(0xFFFFFFFFFFFFFFFF) << np.uint64(tail)
            if ((words[:, -1] & pad) != pad).any():
                words = words.copy()
                words[:, -1] |= pad
        self.K = K
        self.words = words
        self.words.setflags(write=False)

    @property
    def n(self) -> int:
        """Number of columns (items)."""
        return self.words.shape[0]

    @classmethod
    def from_values(cls, values: np.ndarray) -> "BinaryCodeMatrix":
        """Sign-quantize a real K x N matrix (K vector means N=1).

        Entry (j, i) becomes +1 when values[j, i] >= 0, else -1; the
        sign of an exact zero is +1 by the package-wide convention.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"expected a K x N matrix, got shape {values.shape}")
        if not np.isfinite(values).all():
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(
                f"non-finite value at (bit {bad[0]}, item {bad[1]}); "
                "codes require finite inputs"
            )
        return cls(values.shape[0], _pack_bool((values >= 0).T))

    @classmethod
    def from_signs(cls, signs: np.ndarray) -> "BinaryCodeMatrix":
        """Pack a matrix whose entries are exactly -1 or +1."""
        signs = np.asarray(signs)
        if signs.ndim == 1:
            signs = signs[:, None]
        if not np.isin(signs, (-1, 1)).all():
            raise ValueError("entries must all be -1 or +1")
        return cls.from_values(signs.astype(np.float64))

    def dense(self, dtype=np.int8) -> np.ndarray:
        """Unpack to a K x N array of -1/+1 entries."""
        byte_view = np.ascontiguousarray(self.words).view(np.uint8)
        bits = np.unpackbits(byte_view, axis=-1, bitorder="little")[:, : self.K]
        out = bits.T.astype(dtype)
        return out * 2 - 1

    def column(self, i: int) -> "BinaryCodeMatrix":
        """Single column i as a K x 1 code matrix (shares storage)."""
        return BinaryCodeMatrix(self.K, self.words[i : i + 1])

    def take(self, indices) -> "BinaryCodeMatrix":
        """Select columns by index (copy)."""
        return BinaryCodeMatrix(self.K, self.words[np.asarray(indices)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryCodeMatrix):
            return NotImplemented
        return self.K == other.K and np.array_equal(self.words, other.words)

    def __repr__(self) -> str:
        return f"BinaryCodeMatrix(K={self.K}, n={self.n})"

    def save(self, path) -> None:
        """Write the code table: FHSH header then per-item LE words."""
        header = np.array([CODE_VERSION, self.K, self.n], dtype=_HEADER_DTYPE)
        with open(path, "wb") as fh:
            fh.write(CODE_MAGIC)
            fh.write(header.tobytes())
            fh.write(self.words.astype("<u8").tobytes())

    @classmethod
    def load(cls, path) -> "BinaryCodeMatrix":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CODE_MAGIC:
                raise DataError(f"{path}: bad magic {magic!r}, expected {CODE_MAGIC!r}")
            header = np.frombuffer(fh.read(12), dtype=_HEADER_DTYPE)
            if header.size != 3:
                raise DataError(f"{path}: truncated header")
            version, k, n = (int(v) for v in header)
            if version != CODE_VERSION:
                raise DataError(f"{path}: unsupported version {version}")
            w = _num_words(k)
            payload = fh.read()
        expected = n * w * 8
        if len(payload) != expected:
            raise DataError(
                f"{path}: expected {expected} payload bytes for K={k}, N={n}, "
                f"got {len(payload)}"
            )
        words = np.frombuffer(payload, dtype="<u8").astype(np.uint64).reshape(n, w)
        return cls(k, words)


def pack(column) -> BinaryCodeMatrix:
    """Sign-quantize one K-vector of reals into a packed code column."""
    values = np.asarray(column, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"expected a 1-D column, got shape {values.shape}")
    return BinaryCodeMatrix.from_values(values)


def unpack(code: BinaryCodeMatrix) -> np.ndarray:
    """Inverse of pack for a single-column code: the K-vector of signs."""
    if code.n != 1:
        raise ValueError(f"unpack expects a single column, got {code.n}")
    return code.dense()[:, 0]


def _require_same_k(a: BinaryCodeMatrix, b: BinaryCodeMatrix) -> None:
    if a.K != b.K:
        raise ValueError(f"code length mismatch: {a.K} vs {b.K}")


def hamming_cross(a: BinaryCodeMatrix, b: BinaryCodeMatrix) -> np.ndarray:
    """All-pairs Hamming distances, shape (a.n, b.n), via XOR popcount."""
    _require_same_k(a, b)
    diff = a.words[:, None, :] ^ b.words[None, :, :]
    return np.bitwise_count(diff).sum(axis=-1, dtype=np.int64)


def hamming_distance(a: BinaryCodeMatrix, b: BinaryCodeMatrix) -> int:
    """Number of differing bits between two single-column codes.

    Equals (K - <a, b>)/2 and one quarter of the squared Euclidean
    distance between the +-1 vectors.
    """
    if a.n != 1 or b.n != 1:
        raise ValueError("hamming_distance expects single-column codes")
    return int(hamming_cross(a, b)[0, 0])


def inner_product_matrix(a, b) -> np.ndarray:
    """Gram matrix <a_i, b_j> for two code tables or two real matrices.

    Packed inputs use word-level XOR/popcount (<a,b> = K - 2 * D_H) and
    match the unpacked integer dot product exactly.
    """
    if isinstance(a, BinaryCodeMatrix) and isinstance(b, BinaryCodeMatrix):
        return a.K - 2 * hamming_cross(a, b)
    if isinstance(a, BinaryCodeMatrix) or isinstance(b, BinaryCodeMatrix):
        raise TypeError("mixed packed/real inputs are not supported")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a.T @ b


def dissimilarity(a, b) -> float:
    """-1/2 <a, b>: monotone increasing in Hamming distance for codes.

    Accepts two single-column packed codes or two real 1-D vectors of
    equal length.
    """
    if isinstance(a, BinaryCodeMatrix) and isinstance(b, BinaryCodeMatrix):
        if a.n != 1 or b.n != 1:
            raise ValueError("dissimilarity expects single columns")
        ip = float(a.K - 2 * hamming_distance(a, b))
        return -0.5 * ip
    if isinstance(a, BinaryCodeMatrix) or isinstance(b, BinaryCodeMatrix):
        raise TypeError("mixed packed/real inputs are not supported")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(-0.5 * (a @ b))
