"""Exact sparse pure-state simulator over (ancilla ⊗ permutation-register) bases.

A basis configuration is (ancilla bit, r_1, ..., r_k) with each r_j the
Lehmer rank of a degree-n permutation.  A state stores the configurations
as lex-sorted rows of an int64 matrix next to a complex128 amplitude
vector; every operation returns a fresh state (states are frozen values).

All unitaries here are basis permutations or diagonal phases, so amplitudes
stay dyadic-rational multiples of powers of sqrt(1/2) and float error never
approaches the tolerances:

* pruning threshold 1e-12 (exact-zero cancellations land far below it),
* normalization / equality tolerance 1e-9.

For batching, a layout may carry a leading inert "tag" column that labels
independent samples sharing one array; gates act identically on every row,
and the measurement helpers with a ``_many`` suffix resolve outcomes per
tag.  Tags are an internal fast path for the session harness; the public
single-sample API never exposes them.

A dense brute-force oracle (degree capped so n! <= 5040) builds the mixture
and projector matrices directly from their defining sums, giving the
independent route against which the sparse path is verified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .permgroup import Permutation, is_fpf_involution, unrank

PRUNE_EPS = 1e-12
NORM_TOL = 1e-9
SQRT_HALF = math.sqrt(0.5)

ORACLE_MAX_STATES = 5040


@dataclass(frozen=True)
class RegisterLayout:
    """Shape of the basis: optional ancilla qubit plus >=1 permutation registers.

    ``tagged`` adds the internal leading sample-tag column (see module docs).
    """

    n: int
    perm_registers: int = 1
    has_ancilla: bool = False
    tagged: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("degree must be at least 2")
        if self.perm_registers < 1:
            raise ValueError("need at least one permutation register")

    @property
    def width(self) -> int:
        return int(self.tagged) + int(self.has_ancilla) + self.perm_registers

    @property
    def anc_col(self) -> int:
        if not self.has_ancilla:
            raise ValueError("layout has no ancilla")
        return int(self.tagged)

    def reg_col(self, reg: int) -> int:
        if not 0 <= reg < self.perm_registers:
            raise ValueError(f"register {reg} outside 0..{self.perm_registers - 1}")
        return int(self.tagged) + int(self.has_ancilla) + reg

    @property
    def n_basis(self) -> int:
        return math.factorial(self.n)


def _canonicalize(configs, amps, merge):
    if configs.shape[0] == 0:
        return configs, amps
    order = np.lexsort(configs.T[::-1])
    configs = configs[order]
    amps = amps[order]
    if merge and configs.shape[0] > 1:
        changed = np.any(configs[1:] != configs[:-1], axis=1)
        starts = np.concatenate(([0], np.flatnonzero(changed) + 1))
        if starts.shape[0] != configs.shape[0]:
            amps = np.add.reduceat(amps, starts)
            configs = configs[starts]
    keep = np.abs(amps) > PRUNE_EPS
    if not keep.all():
        configs = configs[keep]
        amps = amps[keep]
    return configs, amps


class SparseState:
    """Immutable sparse state: lex-sorted config rows + complex amplitudes."""

    __slots__ = ("layout", "configs", "amps")

    def __init__(self, layout: RegisterLayout, configs, amps, *, _canonical=False, _merge=True):
        configs = np.asarray(configs, dtype=np.int64).reshape(-1, layout.width)
        amps = np.asarray(amps, dtype=np.complex128).reshape(-1)
        if configs.shape[0] != amps.shape[0]:
            raise ValueError("configs and amplitudes disagree in length")
        if not _canonical:
            configs, amps = _canonicalize(configs, amps, _merge)
        configs.flags.writeable = False
        amps.flags.writeable = False
        self.layout = layout
        self.configs = configs
        self.amps = amps

    # -- constructors -------------------------------------------------------

    @classmethod
    def basis(cls, layout: RegisterLayout, registers, ancilla: int = 0, tag: int = 0):
        """Single basis vector. ``registers`` holds Permutations or ranks."""
        row = []
        if layout.tagged:
            row.append(tag)
        if layout.has_ancilla:
            if ancilla not in (0, 1):
                raise ValueError("ancilla bit must be 0 or 1")
            row.append(ancilla)
        regs = list(registers)
        if len(regs) != layout.perm_registers:
            raise ValueError(f"expected {layout.perm_registers} register values")
        for r in regs:
            row.append(rank_of(r, layout.n))
        return cls(layout, np.asarray([row]), np.asarray([1.0 + 0.0j]), _canonical=True)

    @classmethod
    def from_terms(cls, layout: RegisterLayout, terms: dict):
        """Build from {config tuple: amplitude}; tuples follow column order."""
        configs = np.asarray([tuple(k) for k in terms.keys()], dtype=np.int64)
        amps = np.asarray(list(terms.values()), dtype=np.complex128)
        return cls(layout, configs, amps)

    # -- views --------------------------------------------------------------

    @property
    def support_size(self) -> int:
        return self.configs.shape[0]

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def require_normalized(self, tol: float = NORM_TOL):
        if abs(self.norm() - 1.0) > tol:
            raise ValueError(f"state norm {self.norm()} deviates beyond {tol}")
        return self

    def terms(self) -> dict:
        return {tuple(int(v) for v in row): complex(a) for row, a in zip(self.configs, self.amps)}

    def dump_lines(self) -> list[str]:
        """Debug dump: "re im | ancilla | cycle-notation-per-register" rows."""
        if self.layout.tagged:
            raise ValueError("dump format is for single samples, not batches")
        lines = []
        for row, amp in zip(self.configs, self.amps):
            cols = list(row)
            anc = str(cols.pop(0)) if self.layout.has_ancilla else "-"
            cycles = " | ".join(str(unrank(int(c), self.layout.n)) for c in cols)
            lines.append(f"{amp.real:+.9f} {amp.imag:+.9f} | {anc} | {cycles}")
        return lines

    def __repr__(self):
        return f"SparseState(n={self.layout.n}, support={self.support_size}, norm={self.norm():.6f})"


def rank_of(value, n: int) -> int:
    """Coerce a Permutation or a pre-ranked int to a basis rank."""
    if isinstance(value, Permutation):
        if value.n != n:
            raise ValueError(f"degree mismatch: register degree {n}, permutation degree {value.n}")
        return kernel_rank_scalar(value)
    idx = int(value)
    if not 0 <= idx < math.factorial(n):
        raise ValueError(f"rank {idx} outside [0, {n}!-1]")
    return idx


def kernel_rank_scalar(perm: Permutation) -> int:
    return int(kernels.rank_batch(perm.word()[None, :])[0])


def _sorted_state(layout, configs, amps):
    # For basis-relabeling unitaries: rows stay distinct, only order breaks.
    return SparseState(layout, configs, amps, _merge=False)


def _key_word(key: Permutation, layout: RegisterLayout) -> np.ndarray:
    if key.n != layout.n:
        raise ValueError(f"degree mismatch: state degree {layout.n}, permutation degree {key.n}")
    return key.word()


_TABLE_STATES_CAP = 5040


@lru_cache(maxsize=128)
def _right_table(mapping: tuple[int, ...]) -> np.ndarray:
    """Full right-multiplication table rank -> rank(sigma∘key), small degrees."""
    key = Permutation(mapping)
    count = math.factorial(key.n)
    table = kernels.apply_right_batch(np.arange(count, dtype=np.int64), key.word())
    table.flags.writeable = False
    return table


def _right_action(indices: np.ndarray, key: Permutation, n: int) -> np.ndarray:
    """rank(sigma∘key) for an index array; table-backed when the degree is small.

    Keys recur heavily inside an experiment (the keyspace at degree 6 has
    only 15 members), so the cached table turns the hot flip into a gather.
    """
    if math.factorial(n) <= _TABLE_STATES_CAP:
        return _right_table(key.mapping)[indices]
    return kernels.apply_right_batch(np.ascontiguousarray(indices), key.word())


# ---------------------------------------------------------------------------
# Unitaries.
# ---------------------------------------------------------------------------

def hadamard_ancilla(s: SparseState) -> SparseState:
    """Hadamard on the ancilla: |0> -> (|0>+|1>)/sqrt2, |1> -> (|0>-|1>)/sqrt2."""
    ac = s.layout.anc_col
    c, a = s.configs, s.amps
    to_zero = c.copy()
    to_zero[:, ac] = 0
    to_one = c.copy()
    to_one[:, ac] = 1
    signs = 1.0 - 2.0 * c[:, ac]
    configs = np.vstack([to_zero, to_one])
    amps = np.concatenate([a, a * signs]) * SQRT_HALF
    return SparseState(s.layout, configs, amps)


def c_pi(s: SparseState, key: Permutation, target: int = 0) -> SparseState:
    """On ancilla-1 branches, right-multiply the target register by ``key``."""
    _key_word(key, s.layout)
    ac = s.layout.anc_col
    col = s.layout.reg_col(target)
    c = s.configs.copy()
    on = c[:, ac] == 1
    if on.any():
        c[on, col] = _right_action(c[on, col], key, s.layout.n)
    return _sorted_state(s.layout, c, s.amps)


def c_one(s: SparseState, target: int = 0) -> SparseState:
    """Flip the ancilla on every branch whose target register is not the identity.

    This is the concrete unitary completion of the disentangling step: on the
    span of {|0>|id>, |1>|kappa>} it sends both to ancilla 0, which is all the
    generation circuit requires, and it is a basis permutation (self-inverse).
    """
    ac = s.layout.anc_col
    col = s.layout.reg_col(target)
    c = s.configs.copy()
    c[:, ac] ^= (c[:, col] != 0).astype(np.int64)
    return _sorted_state(s.layout, c, s.amps)


def c_compose_right(s: SparseState, src: int, dst: int) -> SparseState:
    """Branchwise dst <- src∘dst (the src register's content acts last)."""
    return _compose(s, src, dst, right=True)


def c_compose_left(s: SparseState, src: int, dst: int) -> SparseState:
    """Branchwise dst <- dst∘src."""
    return _compose(s, src, dst, right=False)


def _compose(s, src, dst, right):
    if src == dst:
        raise ValueError("source and destination registers must differ")
    cs = s.layout.reg_col(src)
    cd = s.layout.reg_col(dst)
    c = s.configs.copy()
    a_idx = np.ascontiguousarray(c[:, cs] if right else c[:, cd])
    b_idx = np.ascontiguousarray(c[:, cd] if right else c[:, cs])
    c[:, cd] = kernels.compose_rank_batch(a_idx, b_idx, s.layout.n)
    return _sorted_state(s.layout, c, s.amps)


def c_swap(s: SparseState, r1: int, r2: int) -> SparseState:
    """Exchange two register contents branchwise."""
    if r1 == r2:
        raise ValueError("swap needs two distinct registers")
    c1 = s.layout.reg_col(r1)
    c2 = s.layout.reg_col(r2)
    c = s.configs.copy()
    c[:, [c1, c2]] = c[:, [c2, c1]]
    return _sorted_state(s.layout, c, s.amps)


def c_sgn(s: SparseState, target: int = 0) -> SparseState:
    """Diagonal phase: multiply each branch by the target content's sign."""
    col = s.layout.reg_col(target)
    parity = kernels.index_parity_batch(np.ascontiguousarray(s.configs[:, col]), s.layout.n)
    amps = s.amps * (1.0 - 2.0 * parity)
    return SparseState(s.layout, s.configs, amps, _canonical=True)


def apply_flip(s: SparseState, key: Permutation, target: int = 0) -> SparseState:
    """Right-multiplication on every branch: |sigma> -> |sigma∘key>."""
    _key_word(key, s.layout)
    col = s.layout.reg_col(target)
    c = s.configs.copy()
    c[:, col] = _right_action(c[:, col], key, s.layout.n)
    return _sorted_state(s.layout, c, s.amps)


# ---------------------------------------------------------------------------
# Ancilla / register plumbing.
# ---------------------------------------------------------------------------

def adjoin_ancilla(s: SparseState, bit: int = 0) -> SparseState:
    if s.layout.has_ancilla:
        raise ValueError("state already has an ancilla")
    layout = RegisterLayout(s.layout.n, s.layout.perm_registers, True, s.layout.tagged)
    at = int(s.layout.tagged)
    col = np.full((s.support_size, 1), bit, dtype=np.int64)
    configs = np.hstack([s.configs[:, :at], col, s.configs[:, at:]])
    return SparseState(layout, configs, s.amps, _canonical=True)


def drop_ancilla(s: SparseState) -> SparseState:
    """Remove an ancilla in a definite computational state (per tag, if tagged)."""
    ac = s.layout.anc_col
    vals = s.configs[:, ac]
    if s.layout.tagged:
        same_tag = s.configs[1:, 0] == s.configs[:-1, 0]
        entangled = s.support_size and not (vals[1:][same_tag] == vals[:-1][same_tag]).all()
    else:
        entangled = s.support_size and not (vals == vals[0]).all()
    if entangled:
        raise ValueError("ancilla is entangled; cannot drop it")
    layout = RegisterLayout(s.layout.n, s.layout.perm_registers, False, s.layout.tagged)
    configs = np.delete(s.configs, ac, axis=1)
    return SparseState(layout, configs, s.amps, _canonical=True)


def extract_register(s: SparseState, reg: int) -> tuple[SparseState, tuple]:
    """Split off one register when all other columns are a constant basis value.

    Returns the single-register state and the constant remainder row.  For
    tagged states the constancy requirement is per tag.
    """
    col = s.layout.reg_col(reg)
    others = [j for j in range(s.layout.width) if j != col and not (s.layout.tagged and j == 0)]
    c = s.configs
    if s.layout.tagged:
        same_tag = c[1:, 0] == c[:-1, 0]
        for j in others:
            if not (c[1:, j][same_tag] == c[:-1, j][same_tag]).all():
                raise ValueError("other registers are entangled; cannot extract")
        kept = [0, col]
    else:
        for j in others:
            if s.support_size and not (c[:, j] == c[0, j]).all():
                raise ValueError("other registers are entangled; cannot extract")
        kept = [col]
    layout = RegisterLayout(s.layout.n, 1, False, s.layout.tagged)
    out = SparseState(layout, c[:, kept], s.amps, _canonical=not s.layout.tagged)
    remainder = tuple(int(c[0, j]) for j in others) if s.support_size else ()
    return out, remainder


def _wrap(layout: RegisterLayout, configs, amps) -> SparseState:
    # Fast constructor for arrays already canonical; hot-path internal.
    configs.flags.writeable = False
    amps.flags.writeable = False
    out = SparseState.__new__(SparseState)
    out.layout = layout
    out.configs = configs
    out.amps = amps
    return out


def make_batch(states: list[SparseState]) -> SparseState:
    """Stack untagged states of one layout into a tagged batch (tag = index)."""
    if not states:
        raise ValueError("empty batch")
    base = states[0].layout
    if base.tagged:
        raise ValueError("states are already tagged")
    for st in states:
        if st.layout != base:
            raise ValueError("layout mismatch in batch")
    layout = RegisterLayout(base.n, base.perm_registers, base.has_ancilla, True)
    counts = np.array([st.support_size for st in states])
    total = int(counts.sum())
    configs = np.empty((total, layout.width), dtype=np.int64)
    configs[:, 0] = np.repeat(np.arange(len(states), dtype=np.int64), counts)
    configs[:, 1:] = np.vstack([st.configs for st in states])
    amps = np.concatenate([st.amps for st in states])
    configs.flags.writeable = False
    amps.flags.writeable = False
    return _wrap(layout, configs, amps)


def split_batch(s: SparseState) -> list[SparseState]:
    """Inverse of :func:`make_batch`; tags must be 0..B-1."""
    if not s.layout.tagged:
        raise ValueError("state is not a batch")
    layout = RegisterLayout(s.layout.n, s.layout.perm_registers, s.layout.has_ancilla, False)
    tags = s.configs[:, 0]
    n_tags = int(tags.max()) + 1 if tags.size else 0
    bounds = np.searchsorted(tags, np.arange(n_tags + 1))
    rest = s.configs[:, 1:]
    out = []
    for i in range(n_tags):
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        if lo == hi:
            raise ValueError(f"batch member {i} has empty support")
        out.append(_wrap(layout, rest[lo:hi], s.amps[lo:hi]))
    return out


def num_tags(s: SparseState) -> int:
    if not s.layout.tagged:
        raise ValueError("state is not a batch")
    return int(s.configs[:, 0].max()) + 1 if s.support_size else 0


# ---------------------------------------------------------------------------
# Inner products, phase-insensitive equality.
# ---------------------------------------------------------------------------

def inner_product(a: SparseState, b: SparseState) -> complex:
    """<a|b> over shared configurations."""
    if a.layout != b.layout:
        raise ValueError("layout mismatch")
    if a.support_size > b.support_size:
        lookup = {tuple(r): amp for r, amp in zip(b.configs, b.amps)}
        return complex(sum(np.conj(amp) * lookup.get(tuple(r), 0.0)
                           for r, amp in zip(a.configs, a.amps)))
    lookup = {tuple(r): amp for r, amp in zip(a.configs, a.amps)}
    return complex(sum(np.conj(lookup.get(tuple(r), 0.0)) * amp
                       for r, amp in zip(b.configs, b.amps)))


def states_equal_up_to_phase(a: SparseState, b: SparseState, tol: float = NORM_TOL) -> bool:
    """Equality modulo a global phase.

    Both states are rephased so the largest-magnitude amplitude is positive
    real, then compared configuration-by-configuration.
    """
    if a.layout != b.layout or a.support_size != b.support_size:
        return False
    if not np.array_equal(a.configs, b.configs):
        return False
    if a.support_size == 0:
        return True

    def rephased(amps):
        k = int(np.argmax(np.abs(amps)))
        phase = amps[k] / abs(amps[k])
        return amps / phase

    return bool(np.allclose(rephased(a.amps), rephased(b.amps), atol=tol, rtol=0.0))


# ---------------------------------------------------------------------------
# Projective measurement with a trapdoor key.
#
# The two projectors of the key's observable act as (I ± flip)/2; the
# equality of this closed form with the defining even-permutation projector
# sum is itself verified against the dense oracle below.
# ---------------------------------------------------------------------------

def _projection_parts(s: SparseState, key: Permutation, target: int):
    """Merged union support with BOTH projection amplitude vectors.

    The two projectors (I ± flip)/2 differ only in the sign on the flipped
    half, so one flip, one sort, and two grouped sums produce both.
    Returns (rows, plus_amps, minus_amps) with rows lex-sorted.
    """
    _key_word(key, s.layout)
    col = s.layout.reg_col(target)
    n = s.layout.n
    m = s.support_size
    if m == 0:
        empty = np.empty(0, dtype=np.complex128)
        return s.configs, empty, empty
    flipped = s.configs.copy()
    flipped[:, col] = _right_action(s.configs[:, col], key, n)
    rows = np.vstack([s.configs, flipped])
    halves = np.concatenate([s.amps, s.amps]) * 0.5
    flip_sign = np.empty(2 * m)
    flip_sign[:m] = 1.0
    flip_sign[m:] = -1.0

    width = s.layout.width
    count = math.factorial(n)
    if width == 1:
        order = np.argsort(rows[:, 0], kind="stable")
    elif width == 2 and s.layout.tagged and (int(rows[:, 0].max()) + 1) * count < 2 ** 62:
        packed = rows[:, 0] * count + rows[:, 1]
        order = np.argsort(packed, kind="stable")
    else:
        order = np.lexsort(rows.T[::-1])
    rows = rows[order]
    halves = halves[order]
    flip_sign = flip_sign[order]

    changed = np.any(rows[1:] != rows[:-1], axis=1)
    starts = np.concatenate(([0], np.flatnonzero(changed) + 1))
    plus = np.add.reduceat(halves, starts)
    minus = np.add.reduceat(halves * flip_sign, starts)
    return rows[starts], plus, minus


def project_pm(s: SparseState, key: Permutation, sign: int, target: int = 0) -> SparseState:
    """Unnormalized projection (I ± flip)/2 applied to the state."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    rows, plus, minus = _projection_parts(s, key, target)
    amps = plus if sign > 0 else minus
    keep = np.abs(amps) > PRUNE_EPS
    return _wrap(s.layout, rows[keep], amps[keep])


def _require_measure_key(key: Permutation):
    if not is_fpf_involution(key):
        raise ValueError("measurement key must be a fixed-point-free involution")


def measure_pm(s: SparseState, key: Permutation, rng: np.random.Generator,
               target: int = 0) -> tuple[str, SparseState]:
    """Two-outcome measurement of the key's observable on a single sample.

    Returns ('+' or '-', collapsed renormalized state).  The outcome is drawn
    with probability equal to the squared projection norm.
    """
    if s.layout.tagged:
        raise ValueError("use measure_pm_many for batches")
    _require_measure_key(key)
    rows, plus, minus = _projection_parts(s, key, target)
    p_plus = float(np.sum(np.abs(plus) ** 2))
    p_minus = float(np.sum(np.abs(minus) ** 2))
    total = p_plus + p_minus
    if total < PRUNE_EPS:
        raise ValueError("both projections vanish; input state was not normalized")
    if float(rng.random()) * total < p_plus:
        outcome, amps, p = "+", plus, p_plus
    else:
        outcome, amps, p = "-", minus, p_minus
    amps = amps / math.sqrt(p)
    keep = np.abs(amps) > PRUNE_EPS
    return outcome, _wrap(s.layout, rows[keep], amps[keep])


def measure_pm_many(s: SparseState, key: Permutation, rng: np.random.Generator,
                    target: int = 0) -> tuple[np.ndarray, SparseState]:
    """Batch form of :func:`measure_pm`: one outcome per tag.

    Returns (int8 array of +1/-1 outcome signs, collapsed batch).
    """
    if not s.layout.tagged:
        raise ValueError("state is not a batch")
    _require_measure_key(key)
    n_tags = num_tags(s)
    rows, plus, minus = _projection_parts(s, key, target)
    tags = rows[:, 0]
    p_plus = np.bincount(tags, weights=np.abs(plus) ** 2, minlength=n_tags)
    p_minus = np.bincount(tags, weights=np.abs(minus) ** 2, minlength=n_tags)
    totals = p_plus + p_minus
    if (totals < PRUNE_EPS).any():
        raise ValueError("a batch member's projections vanish; state was not normalized")
    take_plus = rng.random(n_tags) * totals < p_plus
    chosen_p = np.where(take_plus, p_plus, p_minus)

    row_plus = take_plus[tags]
    amps = np.where(row_plus, plus, minus) / np.sqrt(chosen_p[tags])
    keep = np.abs(amps) > PRUNE_EPS
    out = _wrap(s.layout, rows[keep], amps[keep])
    signs = np.where(take_plus, 1, -1).astype(np.int8)
    return signs, out


def measure_ancilla(s: SparseState, rng: np.random.Generator) -> tuple[int, SparseState]:
    """Computational-basis measurement of the ancilla of a single sample."""
    if s.layout.tagged:
        raise ValueError("use measure_ancilla_many for batches")
    ac = s.layout.anc_col
    ones = s.configs[:, ac] == 1
    p_one = float(np.sum(np.abs(s.amps[ones]) ** 2))
    p_zero = float(np.sum(np.abs(s.amps[~ones]) ** 2))
    total = p_zero + p_one
    if total < PRUNE_EPS:
        raise ValueError("state has vanishing norm")
    bit = 1 if float(rng.random()) * total < p_one else 0
    keep = ones if bit else ~ones
    amps = s.amps[keep] / math.sqrt(p_one if bit else p_zero)
    return bit, SparseState(s.layout, s.configs[keep], amps, _canonical=True)


def measure_ancilla_many(s: SparseState, rng: np.random.Generator) -> tuple[np.ndarray, SparseState]:
    """Batch ancilla measurement: one bit per tag."""
    if not s.layout.tagged:
        raise ValueError("state is not a batch")
    ac = s.layout.anc_col
    n_tags = num_tags(s)
    tags = s.configs[:, 0]
    weights = np.abs(s.amps) ** 2
    ones = s.configs[:, ac] == 1
    p_one = np.bincount(tags[ones], weights=weights[ones], minlength=n_tags)
    p_zero = np.bincount(tags[~ones], weights=weights[~ones], minlength=n_tags)
    totals = p_zero + p_one
    if (totals < PRUNE_EPS).any():
        raise ValueError("a batch member has vanishing norm")
    bits = (rng.random(n_tags) * totals < p_one).astype(np.int64)
    keep = (s.configs[:, ac] == bits[tags])
    chosen_p = np.where(bits == 1, p_one, p_zero)
    configs = s.configs[keep]
    amps = s.amps[keep] / np.sqrt(chosen_p[configs[:, 0]])
    return bits, SparseState(s.layout, configs, amps, _canonical=True)


def uniform_superposition(n: int, tol_states: int = ORACLE_MAX_STATES) -> SparseState:
    """(1/sqrt(n!)) sum over all basis permutations, on one register."""
    count = math.factorial(n)
    if count > tol_states:
        raise ValueError(f"{n}! = {count} basis states exceeds the dense cap {tol_states}")
    layout = RegisterLayout(n, 1, False)
    configs = np.arange(count, dtype=np.int64)[:, None]
    amps = np.full(count, 1.0 / math.sqrt(count), dtype=np.complex128)
    return SparseState(layout, configs, amps, _canonical=True)


# ---------------------------------------------------------------------------
# Dense brute-force oracle (n! capped at 5040).
# ---------------------------------------------------------------------------

def _require_oracle_degree(n: int) -> int:
    count = math.factorial(n)
    if count > ORACLE_MAX_STATES:
        raise ValueError(f"dense oracle limited to n! <= {ORACLE_MAX_STATES}, got {n}! = {count}")
    return count


def dense_flip_matrix(key: Permutation) -> np.ndarray:
    """Permutation matrix of |sigma> -> |sigma∘key| on the full basis."""
    count = _require_oracle_degree(key.n)
    src = np.arange(count, dtype=np.int64)
    dst = kernels.apply_right_batch(src, key.word())
    mat = np.zeros((count, count))
    mat[dst, src] = 1.0
    return mat


def dense_sign_matrix(n: int) -> np.ndarray:
    """Diagonal of permutation signs over the full basis."""
    count = _require_oracle_degree(n)
    parity = kernels.index_parity_batch(np.arange(count, dtype=np.int64), n)
    return np.diag(1.0 - 2.0 * parity)


def even_indices(n: int) -> np.ndarray:
    """Ranks of the even permutations."""
    count = _require_oracle_degree(n)
    parity = kernels.index_parity_batch(np.arange(count, dtype=np.int64), n)
    return np.flatnonzero(parity == 0)


def oracle_density(kind: str, key: Permutation) -> np.ndarray:
    """Mixture matrices built directly from their defining sums.

    kind 'plus'/'minus': (1/2n!) sum over all sigma of the outer product of
    |sigma> ± |sigma∘key>.  kind 'mixed': the maximally mixed I/n!.
    """
    count = _require_oracle_degree(key.n)
    if kind == "mixed":
        return np.eye(count, dtype=np.complex128) / count
    if kind not in ("plus", "minus"):
        raise ValueError(f"unknown density kind {kind!r}")
    sign = 1.0 if kind == "plus" else -1.0
    columns = np.eye(count) + sign * dense_flip_matrix(key)
    rho = (columns @ columns.T) / (2.0 * count)
    return rho.astype(np.complex128)


def dense_projector_sum(key: Permutation, sign: int) -> np.ndarray:
    """Defining projector sum: (1/2) sum over even sigma of the outer product
    of |sigma> ± |sigma∘key>."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    count = _require_oracle_degree(key.n)
    cols = even_indices(key.n)
    vectors = (np.eye(count) + float(sign) * dense_flip_matrix(key))[:, cols]
    return (vectors @ vectors.T) / 2.0


def projector_from_flip(key: Permutation, sign: int) -> np.ndarray:
    """Closed form (I ± flip)/2 of the same projector."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    count = _require_oracle_degree(key.n)
    return (np.eye(count) + float(sign) * dense_flip_matrix(key)) / 2.0


def state_to_dense(s: SparseState) -> np.ndarray:
    """Single-register untagged state as a dense length-n! vector."""
    if s.layout.tagged or s.layout.has_ancilla or s.layout.perm_registers != 1:
        raise ValueError("dense form is for single-register states")
    count = _require_oracle_degree(s.layout.n)
    vec = np.zeros(count, dtype=np.complex128)
    vec[s.configs[:, 0]] = s.amps
    return vec


def dense_oracle_report(key: Permutation, other_key: Permutation) -> dict[str, float]:
    """Max deviations of the brute-force identities; all should sit at ~0.

    ``other_key`` must be a different keyspace member: it drives the
    wrong-key trace identity (overlap exactly 1/2).
    """
    if key.mapping == other_key.mapping:
        raise ValueError("the two keys must differ")
    count = _require_oracle_degree(key.n)
    rho_plus = oracle_density("plus", key)
    rho_minus = oracle_density("minus", key)
    mixed = oracle_density("mixed", key)
    eye = np.eye(count)

    report: dict[str, float] = {}
    for name, rho in (("plus", rho_plus), ("minus", rho_minus)):
        report[f"rho_{name}_hermitian"] = float(np.abs(rho - rho.conj().T).max())
        report[f"rho_{name}_trace_minus_1"] = float(abs(np.trace(rho).real - 1.0))
        eigs = np.linalg.eigvalsh(rho)
        report[f"rho_{name}_min_eigenvalue"] = float(min(eigs.min(), 0.0))
        report[f"rho_{name}_rank_defect"] = float(abs(int(np.sum(eigs > 1e-9)) - count // 2))
    report["rho_product_zero"] = float(np.abs(rho_plus @ rho_minus).max())

    proj_plus = projector_from_flip(key, +1)
    proj_minus = projector_from_flip(key, -1)
    report["projector_completeness"] = float(np.abs(proj_plus + proj_minus - eye).max())
    report["projector_orthogonality"] = float(np.abs(proj_plus @ proj_minus).max())
    for sign, proj in ((+1, proj_plus), (-1, proj_minus)):
        defining = dense_projector_sum(key, sign)
        report[f"flip_form_vs_sum_{'plus' if sign > 0 else 'minus'}"] = float(
            np.abs(proj - defining).max())

    report["trace_correct_key_minus_1"] = float(
        abs((proj_plus @ rho_plus).trace().real - 1.0))
    wrong_plus = projector_from_flip(other_key, +1)
    report["trace_wrong_key_minus_half"] = float(
        abs((wrong_plus @ rho_plus).trace().real - 0.5))

    sign_mat = dense_sign_matrix(key.n)
    report["sign_twist_maps_plus_to_minus"] = float(
        np.abs(sign_mat @ rho_plus @ sign_mat - rho_minus).max())
    report["sign_twist_fixes_mixed"] = float(
        np.abs(sign_mat @ mixed @ sign_mat - mixed).max())

    evens = even_indices(key.n)
    columns = (eye + dense_flip_matrix(key))[:, evens] * SQRT_HALF
    report["ensemble_sum_matches_mixture"] = float(
        np.abs((2.0 / count) * (columns @ columns.conj().T) - rho_plus).max())
    return report
