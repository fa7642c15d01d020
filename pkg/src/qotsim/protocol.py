"""Two-party transfer protocol: state machines, steps 1-9, and adversaries.

Transfer phase: Alice samples a secret key (a fixed-point-free involution),
encodes each message bit as one trapdoor sample, and sends the samples with
a universal-hash digest of the message.

Opening phase: Bob sends a uniformly random challenge permutation; Alice
returns it composed with the key on a coin-chosen side; Bob strips the
challenge on his own coin-chosen side.  When the side choices match his
resolved key equals Alice's; otherwise he holds a conjugate.  He measures
every sample with the resolved key, checks the digest, and, on success,
re-measures everything with a fresh key: honestly prepared samples flip
about half the bits, while measurement-invariant cheating states reproduce
the message exactly, which he treats as cheating and aborts.

Strategies are small stateless objects consumed by the session harness; the
two cheating senders and the eager-measuring receiver realize the attacks
the step-9 recheck and the hash acknowledgment exist to blunt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .hashing import HashSpec, bits_to_hex, hash_bits, random_bits, sample_hash
from .permgroup import (Permutation, compose, inverse, is_fpf_involution,
                        sample_fpf_involution, sample_permutation)
from .qscd import QscdSample, decode_signs, encode_message


class ProtocolViolation(RuntimeError):
    """A party broke the protocol contract; sessions record it, never crash."""


@dataclass(frozen=True)
class ProtocolParams:
    """Session parameters.

    The degree must be twice an odd number >= 3 so that every key is an odd
    permutation; the message length must be even for the half-length digest.
    """

    n: int = 6
    ell: int = 32
    threshold_sigmas: float = 3.0
    copies: int = 1

    def __post_init__(self):
        if self.n < 6 or self.n % 4 != 2:
            raise ValueError(
                f"degree must be 2(2m+1) with m >= 1 (6, 10, 14, ...), got {self.n}")
        if self.ell < 8 or self.ell % 2:
            raise ValueError(f"message length must be even and >= 8, got {self.ell}")
        if self.copies < 1:
            raise ValueError("copies per bit must be >= 1")
        if self.threshold_sigmas <= 0:
            raise ValueError("threshold multiplier must be positive")

    @property
    def recheck_window(self) -> float:
        """Accepted deviation of flipped-bit counts from ell/2 in step 9."""
        return self.threshold_sigmas * math.sqrt(self.ell / 4.0)


@dataclass
class TransferMessage:
    """Everything Bob receives in the transfer phase."""

    handles: list[int]
    digest: np.ndarray
    hash_spec: HashSpec


@dataclass
class AliceState:
    params: ProtocolParams
    secret_key: Permutation
    message: np.ndarray | None
    digest: np.ndarray
    hash_spec: HashSpec
    phase: str = "opening"


@dataclass
class BobState:
    params: ProtocolParams
    challenge: Permutation | None = None
    resolved_key: Permutation | None = None
    decoded: np.ndarray | None = None
    recheck: np.ndarray | None = None
    phase: str = "challenge"


@dataclass
class Verdict:
    """Observable outcome of one session (plus inspector cross-checks)."""

    session_id: int
    strategy_alice: str
    strategy_bob: str
    bob_received: bool = False
    bob_aborted_cheat: bool = False
    violation: str | None = None
    hamming_d: int | None = None
    gamma_equals_pi: bool | None = None
    hash_collision: bool = False
    alice_guess_received: bool | None = None
    decoded_hex: str | None = None
    bits_correct: int = 0
    bits_total: int = 0
    seeds: dict = field(default_factory=dict)

    @property
    def aborted(self) -> bool:
        return self.bob_aborted_cheat or self.violation is not None

    def to_json_dict(self) -> dict:
        return {
            "v": 1,
            "session_id": self.session_id,
            "strategy_alice": self.strategy_alice,
            "strategy_bob": self.strategy_bob,
            "gamma_equals_pi": self.gamma_equals_pi,
            "bob_received": self.bob_received,
            "aborted": self.aborted,
            "bob_aborted_cheat": self.bob_aborted_cheat,
            "violation": self.violation,
            "hamming_d": self.hamming_d,
            "hash_collision": self.hash_collision,
            "alice_guess_received": self.alice_guess_received,
            "decoded_hex": self.decoded_hex,
            "bits_correct": self.bits_correct,
            "bits_total": self.bits_total,
            "seeds": self.seeds,
        }


# ---------------------------------------------------------------------------
# Protocol steps as free functions.
# ---------------------------------------------------------------------------

def alice_transfer(params: ProtocolParams, message: np.ndarray,
                   rng: np.random.Generator, registry) -> tuple[TransferMessage, AliceState]:
    """Steps 1-3: sample the key, encode the message, commit to its digest."""
    message = np.asarray(message, dtype=np.uint8)
    if message.shape != (params.ell,):
        raise ValueError(f"message must be {params.ell} bits")
    key = sample_fpf_involution(rng, params.n)
    per_sample_bits = np.repeat(message, params.copies)
    samples = encode_message(per_sample_bits, key, rng)
    handles = registry.deposit_many("alice", samples)
    spec = sample_hash(params.ell, rng)
    digest = hash_bits(spec, message)
    state = AliceState(params, key, message, digest, spec)
    return TransferMessage(handles, digest, spec), state


def bob_challenge(params: ProtocolParams, rng: np.random.Generator) -> tuple[Permutation, BobState]:
    """Step 4: a uniformly random challenge permutation."""
    state = BobState(params)
    state.challenge = sample_permutation(rng, params.n)
    state.phase = "resolve"
    return state.challenge, state


def alice_respond(state: AliceState, challenge: Permutation, rng: np.random.Generator,
                  coin: int | None = None) -> Permutation:
    """Step 5: mask the key with the challenge on a coin-chosen side."""
    if state.phase != "opening":
        raise ProtocolViolation("response requested outside the opening phase")
    side = int(rng.integers(2)) if coin is None else coin
    state.phase = "done"
    if side == 0:
        return compose(state.secret_key, challenge)
    return compose(challenge, state.secret_key)


def bob_resolve(state: BobState, response: Permutation, rng: np.random.Generator,
                coin: int | None = None) -> Permutation:
    """Step 6: strip the challenge on a coin-chosen side.

    An honest response leaves both candidate compositions inside the key
    space; Bob validates both and flags the response as malformed otherwise.
    Matching side choices recover the sender's key exactly; mismatched ones
    yield a conjugate.
    """
    if state.phase != "resolve":
        raise ProtocolViolation("resolve requested before the challenge was sent")
    inv = inverse(state.challenge)
    right = compose(response, inv)
    left = compose(inv, response)
    if not (is_fpf_involution(right) and is_fpf_involution(left)):
        raise ProtocolViolation("malformed response: candidate keys leave the key space")
    side = int(rng.integers(2)) if coin is None else coin
    state.resolved_key = right if side == 0 else left
    state.phase = "open"
    return state.resolved_key


def _majority(bits: np.ndarray, copies: int) -> np.ndarray:
    """Per-bit majority over copies; ties resolve to each bit's first copy."""
    if copies == 1:
        return bits
    grouped = bits.reshape(-1, copies)
    votes = grouped.sum(axis=1)
    out = (2 * votes > copies).astype(np.uint8)
    tie = 2 * votes == copies
    out[tie] = grouped[tie, 0]
    return out


def sample_recheck_key(gamma: Permutation, rng: np.random.Generator) -> Permutation:
    """Fresh key for step 9, excluding the one just used (which would trivially
    reproduce the decode and mis-abort an honest sender)."""
    while True:
        cand = sample_fpf_involution(rng, gamma.n)
        if cand.mapping != gamma.mapping:
            return cand


def bob_open(params: ProtocolParams, state: BobState, msg: TransferMessage,
             rng: np.random.Generator, registry,
             method: str = "observable") -> tuple[bool, bool, int | None]:
    """Steps 7-9: decode, check the digest, and on success run the recheck.

    Returns (received, aborted_cheat, flipped-bit count or None).  The
    decoded message stays in ``state.decoded``.
    """
    if state.phase != "open":
        raise ProtocolViolation("open requested before the key was resolved")
    signs = registry.measure_with_key("bob", msg.handles, state.resolved_key, rng, method)
    state.decoded = _majority(decode_signs(signs), params.copies)
    state.phase = "done"

    if not np.array_equal(hash_bits(msg.hash_spec, state.decoded), msg.digest):
        return False, False, None

    recheck_key = sample_recheck_key(state.resolved_key, rng)
    signs2 = registry.measure_with_key("bob", msg.handles, recheck_key, rng, method)
    state.recheck = _majority(decode_signs(signs2), params.copies)
    flipped = int(np.sum(state.recheck != state.decoded))
    aborted = abs(flipped - params.ell / 2.0) > params.recheck_window
    return True, aborted, flipped


# ---------------------------------------------------------------------------
# Strategies.
# ---------------------------------------------------------------------------

class HonestAlice:
    """Protocol-following sender; the message is drawn from her own stream."""

    name = "honest"
    guess_received = None

    def __init__(self, respond_coin: int | None = None):
        self.respond_coin = respond_coin

    def transfer(self, params, rng, registry):
        message = random_bits(rng, params.ell)
        msg, state = alice_transfer(params, message, rng, registry)
        return msg, state, message

    def respond(self, state, challenge, rng):
        return alice_respond(state, challenge, rng, self.respond_coin)


class InvariantCheatAlice:
    """Sends simultaneous eigenvectors of every measurement key.

    The uniform superposition over the whole basis is fixed by every
    right-multiplication, and its sign-twisted counterpart is negated by
    every key (keys are odd), so each bit decodes deterministically no
    matter which key Bob resolves -- which is exactly what step 9 punishes:
    the recheck reproduces the message, zero bits flip, Bob aborts.

    Classically she behaves honestly (real key, honest digest).
    """

    name = "invariant-cheat"
    guess_received = True

    def __init__(self):
        self.respond_coin = None

    def transfer(self, params, rng, registry):
        message = random_bits(rng, params.ell)
        key = sample_fpf_involution(rng, params.n)
        plus = qsim.uniform_superposition(params.n)
        minus = qsim.c_sgn(plus, 0)
        samples = [QscdSample(plus if b == 1 else minus, None)
                   for b in np.repeat(message, params.copies)]
        handles = registry.deposit_many("alice", samples)
        spec = sample_hash(params.ell, rng)
        digest = hash_bits(spec, message)
        state = AliceState(params, key, message, digest, spec)
        return TransferMessage(handles, digest, spec), state, message

    def respond(self, state, challenge, rng):
        return alice_respond(state, challenge, rng, self.respond_coin)


class MixedCheatAlice:
    """Sends per-bit uniformly random basis states (the pure-state unraveling
    of the maximally mixed ensemble) under a digest of an unrelated string,
    so she knows Bob's digest check fails."""

    name = "mixed-cheat"
    guess_received = False

    def __init__(self):
        self.respond_coin = None

    def transfer(self, params, rng, registry):
        key = sample_fpf_involution(rng, params.n)
        layout = qsim.RegisterLayout(params.n, 1, False)
        words = np.stack([sample_permutation(rng, params.n).word()
                          for _ in range(params.ell * params.copies)])
        ranks = qsim.kernels.rank_batch(np.ascontiguousarray(words))
        one = np.ones(1, dtype=np.complex128)
        samples = [QscdSample(qsim.SparseState(layout, [[int(r)]], one, _canonical=True), None)
                   for r in ranks]
        handles = registry.deposit_many("alice", samples)
        spec = sample_hash(params.ell, rng)
        decoy = random_bits(rng, params.ell)
        digest = hash_bits(spec, decoy)
        state = AliceState(params, key, None, digest, spec)
        return TransferMessage(handles, digest, spec), state, None

    def respond(self, state, challenge, rng):
        return alice_respond(state, challenge, rng, self.respond_coin)


class HonestBob:
    """Protocol-following receiver."""

    name = "honest"

    def __init__(self, resolve_coin: int | None = None, method: str = "observable"):
        self.resolve_coin = resolve_coin
        self.method = method

    def challenge(self, params, rng):
        return bob_challenge(params, rng)

    def resolve(self, state, response, rng):
        return bob_resolve(state, response, rng, self.resolve_coin)

    def open(self, params, state, msg, rng, registry):
        return bob_open(params, state, msg, rng, registry, self.method)


class PremeasureBob:
    """Measures everything with a guessed key before the opening phase.

    His guess lands on the sender's key with probability 1/|keyspace|; any
    other key makes every decoded bit a fair coin, leaving the digest check
    to a negligible-probability collision.  ``force`` is an inspector-mode
    test hook: "match" measures with the true key, "mismatch" guarantees a
    wrong one.
    """

    name = "premeasure"

    def __init__(self, force: str | None = None):
        if force not in (None, "match", "mismatch"):
            raise ValueError("force must be None, 'match', or 'mismatch'")
        self.force = force

    def premeasure(self, params, msg, rng, registry, true_key=None):
        if self.force == "match":
            if true_key is None:
                raise ValueError("inspector mode needs the true key")
            guess_key = true_key
        elif self.force == "mismatch":
            if true_key is None:
                raise ValueError("inspector mode needs the true key")
            while True:
                guess_key = sample_fpf_involution(rng, params.n)
                if guess_key.mapping != true_key.mapping:
                    break
        else:
            guess_key = sample_fpf_involution(rng, params.n)
        signs = registry.measure_with_key("bob", msg.handles, guess_key, rng)
        guess = _majority(decode_signs(signs), params.copies)
        success = bool(np.array_equal(hash_bits(msg.hash_spec, guess), msg.digest))
        return guess, success, guess_key


ALICE_STRATEGIES = {
    "honest": HonestAlice,
    "invariant-cheat": InvariantCheatAlice,
    "mixed-cheat": MixedCheatAlice,
}

BOB_STRATEGIES = {
    "honest": HonestBob,
    "premeasure": PremeasureBob,
}


def describe_bits(bits: np.ndarray) -> dict:
    """Wire form of a bit vector: hex plus explicit bit length."""
    return {"hex": bits_to_hex(bits), "bits": int(np.asarray(bits).shape[0])}
