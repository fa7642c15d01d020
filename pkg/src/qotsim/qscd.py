"""Trapdoor state-distinguishability toolkit.

Per message bit the sender prepares one member of a two-state family over a
single permutation register: with secret key ``kappa`` (a fixed-point-free
involution) and a uniformly drawn ``sigma``, the payload is

    (|sigma> + |sigma∘kappa>)/sqrt2        ("plus", encodes bit 1)
    (|sigma> - |sigma∘kappa>)/sqrt2        ("minus", encodes bit 0)

Holding ``kappa`` these are perfectly distinguishable, either by the
ancilla-interference circuit (:func:`distinguish_circuit`) or by measuring
the key's two-outcome observable (:func:`measure_bit`); the two procedures
are equivalent branch by branch, which the tests check exactly.  Without
the key every other measurement key splits 50/50.

Output labels: the distinguisher answers 0 for "plus" and 1 for "minus";
message encoding maps bit 1 to "plus".  :func:`decode_bit` fixes the
conversion in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import qsim
from .permgroup import Permutation, is_fpf_involution, sample_permutation
from .qsim import RegisterLayout, SparseState


@dataclass(frozen=True)
class SampleOrigin:
    """Privileged provenance of one transmitted sample (hidden from parties)."""

    sigma: Permutation
    secret_key: Permutation
    sign: int


@dataclass(frozen=True)
class QscdSample:
    """One per-bit quantum payload plus inspector-only origin metadata."""

    payload: SparseState
    origin: SampleOrigin | None = None


def _require_key(key: Permutation) -> None:
    if not is_fpf_involution(key):
        raise ValueError("secret key must be a fixed-point-free involution")


def pair_state(sigma: Permutation, key: Permutation, sign: int) -> SparseState:
    """Direct construction of (|sigma> ± |sigma∘key>)/sqrt2."""
    from .permgroup import compose

    layout = RegisterLayout(sigma.n, 1, False)
    a = qsim.rank_of(sigma, sigma.n)
    b = qsim.rank_of(compose(sigma, key), sigma.n)
    return SparseState.from_terms(layout, {(a,): qsim.SQRT_HALF, (b,): sign * qsim.SQRT_HALF})


def generate_plus(key: Permutation, rng: np.random.Generator) -> QscdSample:
    """Prepare one "plus" sample by the literal generation circuit.

    The three-register run: start in |0>|id>|sigma>, Hadamard the ancilla,
    right-multiply register 0 by the key on the ancilla-1 branch, disentangle
    the ancilla, swap, compose.  The third register then carries the pair
    state exactly and the first two factor out as |0>|sigma>.
    """
    _require_key(key)
    sigma = sample_permutation(rng, key.n)
    batch = _generate_plus_batch(key, [sigma])
    payload = qsim.split_batch(batch)[0]
    return QscdSample(payload, SampleOrigin(sigma, key, +1))


def _perm_ranks(perms: list[Permutation], key: Permutation) -> tuple[np.ndarray, np.ndarray]:
    """Batched Lehmer ranks of each sigma and of sigma∘key."""
    words = np.stack([p.word() for p in perms])
    return (qsim.kernels.rank_batch(np.ascontiguousarray(words)),
            qsim.kernels.rank_batch(np.ascontiguousarray(words[:, key.word()])))


def _generate_plus_batch(key: Permutation, sigmas: list[Permutation]) -> SparseState:
    layout = RegisterLayout(key.n, 2, True, tagged=True)
    a_ranks, b_ranks = _perm_ranks(sigmas, key)
    rows = np.empty((len(sigmas), 4), dtype=np.int64)
    rows[:, 0] = np.arange(len(sigmas))
    rows[:, 1] = 0
    rows[:, 2] = 0  # identity ranks 0
    rows[:, 3] = a_ranks
    state = SparseState(layout, rows, np.ones(len(sigmas), dtype=np.complex128), _canonical=True)

    state = qsim.hadamard_ancilla(state)
    state = qsim.c_pi(state, key, target=0)
    state = qsim.c_one(state, target=0)
    state = qsim.c_swap(state, 0, 1)
    state = qsim.c_compose_right(state, 0, 1)

    # ancilla must end at 0 and the swapped register must hold each sigma
    tags = state.configs[:, 0]
    if not ((state.configs[:, 1] == 0).all()
            and (state.configs[:, 2] == a_ranks[tags]).all()):
        raise AssertionError("generation circuit left the first registers entangled")
    payloads, _ = qsim.extract_register(state, 1)
    expected = _pair_batch_from_ranks(key.n, a_ranks, b_ranks,
                                      np.ones(len(sigmas), dtype=np.int64))
    if not (np.array_equal(payloads.configs, expected.configs)
            and np.array_equal(payloads.amps, expected.amps)):
        raise AssertionError("generation circuit output deviates from the pair state")
    return payloads


def _pair_batch_from_ranks(n, a_ranks, b_ranks, signs) -> SparseState:
    layout = RegisterLayout(n, 1, False, tagged=True)
    m = a_ranks.shape[0]
    rows = np.empty((2 * m, 2), dtype=np.int64)
    amps = np.empty(2 * m, dtype=np.complex128)
    rows[0::2, 0] = rows[1::2, 0] = np.arange(m)
    rows[0::2, 1] = a_ranks
    rows[1::2, 1] = b_ranks
    amps[0::2] = qsim.SQRT_HALF
    amps[1::2] = signs * qsim.SQRT_HALF
    return SparseState(layout, rows, amps)


def convert_sign(sample: QscdSample) -> QscdSample:
    """Flip the family sign without knowing the key (diagonal sign phase).

    An honest "plus" payload becomes the "minus" payload up to a global
    phase; computational basis states only pick up phases, so the maximally
    mixed ensemble is untouched.
    """
    payload = qsim.c_sgn(sample.payload, 0)
    origin = None
    if sample.origin is not None:
        origin = replace(sample.origin, sign=-sample.origin.sign)
    return QscdSample(payload, origin)


# ---------------------------------------------------------------------------
# Distinguishing with the key: interference circuit and observable paths.
# ---------------------------------------------------------------------------

def distinguish_circuit(key: Permutation, sample: QscdSample,
                        rng: np.random.Generator) -> tuple[int, QscdSample]:
    """Ancilla-interference distinguisher: 0 for "plus", 1 for "minus".

    Adjoin |0>, Hadamard, controlled right-multiplication by the key,
    Hadamard, measure the ancilla.
    """
    _require_key(key)
    s = qsim.adjoin_ancilla(sample.payload)
    s = qsim.hadamard_ancilla(s)
    s = qsim.c_pi(s, key, target=0)
    s = qsim.hadamard_ancilla(s)
    bit, post = qsim.measure_ancilla(s, rng)
    return bit, QscdSample(qsim.drop_ancilla(post), sample.origin)


def measure_bit(key: Permutation, sample: QscdSample,
                rng: np.random.Generator) -> tuple[int, QscdSample]:
    """Observable path: measure the key's projector pair; same labels as the
    circuit (outcome '+' returns 0, '-' returns 1)."""
    outcome, post = qsim.measure_pm(sample.payload, key, rng)
    return (0 if outcome == "+" else 1), QscdSample(post, sample.origin)


def circuit_branches(key: Permutation, sample: QscdSample):
    """Deterministic branch data of the circuit path: for each ancilla
    outcome, (probability, payload-after-collapse).  Lets tests compare the
    two paths exactly, with no sampling."""
    _require_key(key)
    s = qsim.adjoin_ancilla(sample.payload)
    s = qsim.hadamard_ancilla(s)
    s = qsim.c_pi(s, key, target=0)
    s = qsim.hadamard_ancilla(s)
    branches = {}
    for bit in (0, 1):
        keep = s.configs[:, s.layout.anc_col] == bit
        prob = float(np.sum(np.abs(s.amps[keep]) ** 2))
        if prob > qsim.PRUNE_EPS:
            collapsed = SparseState(s.layout, s.configs[keep], s.amps[keep] / np.sqrt(prob),
                                    _canonical=True)
            branches[bit] = (prob, qsim.drop_ancilla(collapsed))
        else:
            branches[bit] = (prob, None)
    return branches


def observable_branches(key: Permutation, sample: QscdSample):
    """Deterministic branch data of the observable path, same shape as
    :func:`circuit_branches` (bit 0 <-> '+')."""
    _require_key(key)
    branches = {}
    for bit, sign in ((0, +1), (1, -1)):
        proj = qsim.project_pm(sample.payload, key, sign)
        prob = proj.norm() ** 2
        if prob > qsim.PRUNE_EPS:
            collapsed = SparseState(proj.layout, proj.configs, proj.amps / np.sqrt(prob),
                                    _canonical=True)
            branches[bit] = (prob, collapsed)
        else:
            branches[bit] = (prob, None)
    return branches


# ---------------------------------------------------------------------------
# Message-bit encoding.
# ---------------------------------------------------------------------------

def encode_bit(bit: int, key: Permutation, rng: np.random.Generator) -> QscdSample:
    """Bit 1 -> "plus" sample, bit 0 -> sign-converted sample."""
    if bit not in (0, 1):
        raise ValueError("message bit must be 0 or 1")
    sample = generate_plus(key, rng)
    return sample if bit == 1 else convert_sign(sample)


def decode_bit(outcome: str) -> int:
    """Measured outcome to message bit: '+' -> 1, '-' -> 0."""
    if outcome == "+":
        return 1
    if outcome == "-":
        return 0
    raise ValueError(f"unknown outcome {outcome!r}")


def decode_signs(signs: np.ndarray) -> np.ndarray:
    """Vector form of :func:`decode_bit` over +1/-1 outcome signs."""
    return (np.asarray(signs) > 0).astype(np.uint8)


def encode_message(bits: np.ndarray, key: Permutation,
                   rng: np.random.Generator) -> list[QscdSample]:
    """Encode a whole bit vector, one sample per bit.

    Single batched circuit run; the per-bit sign conversion is the same
    diagonal phase :func:`convert_sign` applies, blended per sample.
    """
    _require_key(key)
    bits = np.asarray(bits, dtype=np.uint8)
    sigmas = [sample_permutation(rng, key.n) for _ in range(bits.shape[0])]
    batch = _generate_plus_batch(key, sigmas)

    reg_col = batch.layout.reg_col(0)
    parity = qsim.kernels.index_parity_batch(
        np.ascontiguousarray(batch.configs[:, reg_col]), key.n)
    minus_amps = batch.amps * (1.0 - 2.0 * parity)
    wants_plus = bits[batch.configs[:, 0]] == 1
    amps = np.where(wants_plus, batch.amps, minus_amps)
    blended = SparseState(batch.layout, batch.configs, amps, _canonical=True)

    payloads = qsim.split_batch(blended)
    signs = np.where(bits == 1, 1, -1)
    return [QscdSample(p, SampleOrigin(s, key, int(sg)))
            for p, s, sg in zip(payloads, sigmas, signs)]


def measure_samples(samples: list[QscdSample], key: Permutation, rng: np.random.Generator,
                    method: str = "observable") -> tuple[np.ndarray, list[QscdSample]]:
    """Measure many samples with one key in a single batched pass.

    Returns (+1/-1 outcome signs, post-measurement samples).  ``method``
    selects the observable path or the interference-circuit path; the two
    produce identically distributed outcomes and states.
    """
    _require_key(key)
    batch = qsim.make_batch([s.payload for s in samples])
    if method == "observable":
        signs, collapsed = qsim.measure_pm_many(batch, key, rng)
    elif method == "circuit":
        s = qsim.adjoin_ancilla(batch)
        s = qsim.hadamard_ancilla(s)
        s = qsim.c_pi(s, key, target=0)
        s = qsim.hadamard_ancilla(s)
        bits, post = qsim.measure_ancilla_many(s, rng)
        signs = np.where(bits == 0, 1, -1).astype(np.int8)
        collapsed = qsim.drop_ancilla(post)
    else:
        raise ValueError(f"unknown measurement method {method!r}")
    payloads = qsim.split_batch(collapsed)
    out = [QscdSample(p, s.origin) for p, s in zip(payloads, samples)]
    return signs, out
