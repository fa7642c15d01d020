"""Universal hash family used as the message-receipt acknowledgment.

One member maps ell message bits to ell/2 digest bits through a random
Toeplitz matrix over GF(2): seed bits s_0..s_{3ell/2-2} define
T[i, j] = s[i - j + ell - 1], and the digest is T·m mod 2.  For any two
distinct messages the collision probability over the seed draw is exactly
2^{-ell/2}, the universal-family bound for this range size.

Seeds travel in the clear (their secrecy is irrelevant); transcripts carry
them as lowercase hex, and message bit vectors as hex with an explicit bit
length.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class HashSpec:
    """One family member: message length ``ell`` plus the Toeplitz seed."""

    ell: int
    seed_bits: tuple[int, ...]

    def __post_init__(self):
        if self.ell < 2 or self.ell % 2:
            raise ValueError(f"message length must be even and >= 2, got {self.ell}")
        want = self.ell + self.ell // 2 - 1
        if len(self.seed_bits) != want:
            raise ValueError(f"seed needs {want} bits, got {len(self.seed_bits)}")
        if any(b not in (0, 1) for b in self.seed_bits):
            raise ValueError("seed bits must be 0/1")

    @property
    def out_bits(self) -> int:
        return self.ell // 2

    def seed_hex(self) -> str:
        return bits_to_hex(np.asarray(self.seed_bits, dtype=np.uint8))

    @classmethod
    def from_seed_hex(cls, ell: int, hex_seed: str) -> "HashSpec":
        bits = hex_to_bits(hex_seed, ell + ell // 2 - 1)
        return cls(ell, tuple(int(b) for b in bits))


def sample_hash(ell: int, rng: np.random.Generator) -> HashSpec:
    """Uniform family member for message length ``ell``."""
    if ell < 2 or ell % 2:
        raise ValueError(f"message length must be even and >= 2, got {ell}")
    bits = rng.integers(0, 2, size=ell + ell // 2 - 1, dtype=np.uint8)
    return HashSpec(ell, tuple(int(b) for b in bits))


def toeplitz_matrix(spec: HashSpec) -> np.ndarray:
    """The (ell/2, ell) GF(2) matrix: constant along diagonals."""
    seed = np.asarray(spec.seed_bits, dtype=np.uint8)
    windows = np.lib.stride_tricks.sliding_window_view(seed, spec.ell)
    return windows[: spec.out_bits, ::-1]


def hash_bits(spec: HashSpec, message: np.ndarray) -> np.ndarray:
    """Digest T·m mod 2 as a uint8 bit vector of length ell/2."""
    message = np.asarray(message, dtype=np.uint8)
    if message.shape != (spec.ell,):
        raise ValueError(f"message must be {spec.ell} bits, got shape {message.shape}")
    return (toeplitz_matrix(spec) @ message.astype(np.int64) % 2).astype(np.uint8)


def expected_collisions(n_messages: int, range_size: int) -> Fraction:
    """Collision-count bound N/b for N messages hashed into b buckets."""
    if n_messages < 1 or range_size < 1:
        raise ValueError("counts must be positive")
    return Fraction(n_messages, range_size)


# ---------------------------------------------------------------------------
# Bit-vector wire helpers (MSB-first hex).
# ---------------------------------------------------------------------------

def random_bits(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.integers(0, 2, size=count, dtype=np.uint8)


def bits_to_hex(bits: np.ndarray) -> str:
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-bits.shape[0]) % 8
    padded = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    return bytes(np.packbits(padded)).hex()


def hex_to_bits(hex_str: str, count: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(hex_str), dtype=np.uint8)
    bits = np.unpackbits(raw)
    if bits.shape[0] < count:
        raise ValueError(f"hex carries {bits.shape[0]} bits, need {count}")
    if bits[count:].any():
        raise ValueError("nonzero padding past the declared bit length")
    return bits[:count]
