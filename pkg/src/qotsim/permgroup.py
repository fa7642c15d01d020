"""Exact algebra of the symmetric group and its fixed-point-free involutions.

A permutation of degree n is a bijection on {1..n}, stored as the 1-indexed
mapping tuple ``mapping[i-1] = sigma(i)``.  Composition is (a∘b)(i) = a(b(i)):
the right factor acts first.  This convention is fixed globally; the opening
phase of the transfer protocol is sensitive to it.

The fixed-point-free involutions (every point moved, order two) form the
trapdoor keyspace.  They are exactly the perfect matchings of {1..n}, which
is how both the uniform sampler and the exhaustive enumerator work.

Everything here is a small immutable value; the batch kernels in
:mod:`qotsim.kernels` are the vectorized counterparts and are tested against
these scalar references.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Permutation:
    """Bijection on {1..n} as a 1-indexed mapping tuple.

    >>> sigma = Permutation((2, 3, 1, 5, 4, 6))
    >>> sigma(1), sigma(6)
    (2, 6)
    >>> str(sigma)
    '(1 2 3)(4 5)'
    """

    mapping: tuple[int, ...]

    def __post_init__(self):
        n = len(self.mapping)
        if n < 2:
            raise ValueError("degree must be at least 2")
        if sorted(self.mapping) != list(range(1, n + 1)):
            raise ValueError(f"mapping {self.mapping!r} is not a bijection on 1..{n}")

    @property
    def n(self) -> int:
        return len(self.mapping)

    def __call__(self, i: int) -> int:
        if not 1 <= i <= self.n:
            raise ValueError(f"point {i} outside 1..{self.n}")
        return self.mapping[i - 1]

    def word(self) -> np.ndarray:
        """0-indexed mapping array, the form the batch kernels consume."""
        return np.asarray(self.mapping, dtype=np.int64) - 1

    def __str__(self) -> str:
        return to_cycles(self)


def identity(n: int) -> Permutation:
    return Permutation(tuple(range(1, n + 1)))


def perm_from_word(word) -> Permutation:
    """Inverse of :meth:`Permutation.word`."""
    return Permutation(tuple(int(v) + 1 for v in word))


def compose(a: Permutation, b: Permutation) -> Permutation:
    """a∘b, the right factor applied first: (a∘b)(i) = a(b(i))."""
    if a.n != b.n:
        raise ValueError(f"degree mismatch: {a.n} vs {b.n}")
    return Permutation(tuple(a.mapping[v - 1] for v in b.mapping))


def inverse(a: Permutation) -> Permutation:
    inv = [0] * a.n
    for i, v in enumerate(a.mapping):
        inv[v - 1] = i + 1
    return Permutation(tuple(inv))


def orbits(a: Permutation) -> tuple[tuple[int, ...], ...]:
    """Disjoint cycles in canonical form.

    Each cycle starts at its minimum, cycles are sorted by that minimum, and
    fixed points appear as length-1 cycles, so the result is a partition of
    {1..n}.
    """
    seen = [False] * a.n
    cycles = []
    for start in range(1, a.n + 1):
        if seen[start - 1]:
            continue
        cycle = [start]
        seen[start - 1] = True
        nxt = a(start)
        while nxt != start:
            cycle.append(nxt)
            seen[nxt - 1] = True
            nxt = a(nxt)
        cycles.append(tuple(cycle))
    return tuple(cycles)


def transposition_count(a: Permutation) -> int:
    """Minimal transposition count: sum of (cycle length - 1) over orbits."""
    return sum(len(c) - 1 for c in orbits(a))


def sign(a: Permutation) -> int:
    """+1 for even permutations, -1 for odd."""
    return -1 if transposition_count(a) & 1 else 1


def is_fpf_involution(a: Permutation) -> bool:
    """True iff a∘a is the identity and a moves every point."""
    for i in range(1, a.n + 1):
        j = a(i)
        if j == i or a(j) != i:
            return False
    return True


def sample_permutation(rng: np.random.Generator, n: int) -> Permutation:
    """Uniform over all degree-n permutations."""
    if n < 2:
        raise ValueError("degree must be at least 2")
    return perm_from_word(rng.permutation(n))


def sample_fpf_involution(rng: np.random.Generator, n: int) -> Permutation:
    """Uniform over fixed-point-free involutions.

    Draws a uniform perfect matching: repeatedly pair the smallest unpaired
    point with a uniformly chosen other unpaired point.  Rejection from the
    full group would be hopeless (acceptance rate (n-1)!!/n!).
    """
    if n < 2 or n % 2:
        raise ValueError(f"fixed-point-free involutions need even degree >= 2, got {n}")
    mapping = [0] * n
    unpaired = list(range(1, n + 1))
    while unpaired:
        i = unpaired.pop(0)
        j = unpaired.pop(int(rng.integers(len(unpaired))))
        mapping[i - 1] = j
        mapping[j - 1] = i
    return Permutation(tuple(mapping))


def enumerate_fpf_involutions(n: int) -> list[Permutation]:
    """All fixed-point-free involutions of degree n ((n-1)!! of them)."""
    if n < 2 or n % 2:
        raise ValueError(f"fixed-point-free involutions need even degree >= 2, got {n}")
    if n > 16:
        raise ValueError("exhaustive enumeration capped at degree 16")
    out: list[Permutation] = []
    mapping = [0] * n

    def pair(points: list[int]) -> None:
        if not points:
            out.append(Permutation(tuple(mapping)))
            return
        i = points[0]
        for k in range(1, len(points)):
            j = points[k]
            mapping[i - 1], mapping[j - 1] = j, i
            pair(points[1:k] + points[k + 1:])
        # mapping slots are overwritten by the next branch; no cleanup needed

    pair(list(range(1, n + 1)))
    return out


def all_permutations(n: int):
    """Iterate the whole degree-n group in Lehmer-rank order."""
    import itertools

    for mapping in itertools.permutations(range(1, n + 1)):
        yield Permutation(mapping)


# ---------------------------------------------------------------------------
# Lehmer (factorial number system) ranking: the canonical basis index.
# ---------------------------------------------------------------------------

def rank(a: Permutation) -> int:
    """Lehmer rank in [0, n!-1]; the identity ranks 0."""
    w = [v - 1 for v in a.mapping]
    n = len(w)
    acc = 0
    for i in range(n):
        smaller = sum(1 for j in range(i + 1, n) if w[j] < w[i])
        acc += smaller * math.factorial(n - 1 - i)
    return acc


def unrank(index: int, n: int) -> Permutation:
    """Inverse of :func:`rank`."""
    if n < 2:
        raise ValueError("degree must be at least 2")
    if not 0 <= index < math.factorial(n):
        raise ValueError(f"index {index} outside [0, {n}!-1]")
    remaining = list(range(n))
    word = []
    rem = index
    for i in range(n):
        f = math.factorial(n - 1 - i)
        d, rem = divmod(rem, f)
        word.append(remaining.pop(d))
    return perm_from_word(word)


# ---------------------------------------------------------------------------
# Cycle notation, the wire format for permutations.
# ---------------------------------------------------------------------------

_CYCLE_RE = re.compile(r"\(([^()]*)\)")


def to_cycles(a: Permutation) -> str:
    """Cycle notation with fixed points left implicit; identity is "()"."""
    parts = ["(" + " ".join(str(p) for p in c) + ")" for c in orbits(a) if len(c) > 1]
    return "".join(parts) if parts else "()"


def parse_cycles(text: str, n: int) -> Permutation:
    """Parse cycle notation like "(1 2 3)(4 5)" into a degree-n permutation.

    Points absent from the text are fixed points.  Commas and extra
    whitespace are tolerated.
    """
    if n < 2:
        raise ValueError("degree must be at least 2")
    stripped = text.strip()
    if not _CYCLE_RE.sub("", stripped).strip() == "" or stripped.count("(") != stripped.count(")"):
        raise ValueError(f"malformed cycle notation: {text!r}")
    mapping = list(range(1, n + 1))
    seen: set[int] = set()
    for body in _CYCLE_RE.findall(stripped):
        points = [int(tok) for tok in re.split(r"[,\s]+", body.strip()) if tok]
        if not points:
            continue
        for p in points:
            if not 1 <= p <= n:
                raise ValueError(f"point {p} outside 1..{n} in {text!r}")
            if p in seen:
                raise ValueError(f"point {p} repeated in {text!r}")
            seen.add(p)
        for k, p in enumerate(points):
            mapping[p - 1] = points[(k + 1) % len(points)]
    return Permutation(tuple(mapping))
