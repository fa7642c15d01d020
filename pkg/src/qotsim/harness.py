"""Simulated two-party environment.

The quantum channel is a registry of opaque handles: parties deposit,
transfer, and measure through capability-checked methods and never touch
amplitudes; only the privileged inspector (and nothing on a party code
path) may read them.  The session runner drives the two state machines
through the protocol steps, logs every classical message, handle transfer,
and measurement into a replayable transcript, and enriches the verdict
with inspector cross-checks (key match, decode accuracy, collisions).

Determinism: every session's randomness is derived from (base seed,
session index, role) through a fixed 64-bit mix, so experiments reproduce
bit-for-bit at any parallelism level.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .hashing import bits_to_hex
from .permgroup import Permutation, is_fpf_involution
from .protocol import (ProtocolParams, ProtocolViolation, QscdSample, Verdict,
                       describe_bits)
from .qscd import measure_samples, pair_state

MASK64 = (1 << 64) - 1
ROLE_ALICE = 0xA11CE
ROLE_BOB = 0xB0B


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(base: int, *path: int) -> int:
    """Fixed seed mix: fold each path element through splitmix64."""
    s = base & MASK64
    for p in path:
        s = splitmix64(s ^ (p & MASK64))
    return s


class OwnershipError(RuntimeError):
    """A party touched a handle it does not own."""


@dataclass
class _RegistryEntry:
    current: QscdSample
    deposited: QscdSample
    owner: str


class QuantumRegistry:
    """Opaque-handle store for quantum payloads.

    Party-facing capabilities: deposit, transfer, measure.  Measuring
    mutates which state a handle points at (collapse) but states themselves
    are immutable values.  ``inspect_*`` methods are the privileged path.
    """

    def __init__(self, on_event=None):
        self._entries: list[_RegistryEntry] = []
        self._on_event = on_event

    def _emit(self, kind, **fields):
        if self._on_event is not None:
            self._on_event(kind, **fields)

    def _entry(self, handle: int) -> _RegistryEntry:
        if not 0 <= handle < len(self._entries):
            raise KeyError(f"unknown handle {handle}")
        return self._entries[handle]

    def deposit_many(self, party: str, samples: list[QscdSample]) -> list[int]:
        start = len(self._entries)
        for s in samples:
            self._entries.append(_RegistryEntry(s, s, party))
        return list(range(start, len(self._entries)))

    def transfer_many(self, handles: list[int], sender: str, receiver: str) -> None:
        for h in handles:
            entry = self._entry(h)
            if entry.owner != sender:
                raise OwnershipError(f"handle {h} is owned by {entry.owner}, not {sender}")
            entry.owner = receiver
        self._emit("handle_transfer", sender=sender, receiver=receiver,
                   handles=list(handles))

    def owner_of(self, handle: int) -> str:
        return self._entry(handle).owner

    def measure_with_key(self, party: str, handles: list[int], key: Permutation,
                         rng: np.random.Generator, method: str = "observable") -> np.ndarray:
        """Measure each handle's payload with ``key``; returns +1/-1 signs."""
        entries = []
        for h in handles:
            entry = self._entry(h)
            if entry.owner != party:
                raise OwnershipError(f"handle {h} is owned by {entry.owner}, not {party}")
            entries.append(entry)
        signs, post = measure_samples([e.current for e in entries], key, rng, method)
        for entry, sample in zip(entries, post):
            entry.current = sample
        self._emit("measurement", party=party, handles=list(handles),
                   key=str(key), method=method,
                   outcomes=describe_bits((np.asarray(signs) > 0).astype(np.uint8)))
        return signs

    # -- privileged ----------------------------------------------------------

    def inspect_current(self, handle: int) -> QscdSample:
        return self._entry(handle).current

    def inspect_deposited(self, handle: int) -> QscdSample:
        return self._entry(handle).deposited

    def __len__(self):
        return len(self._entries)


class Transcript:
    """Ordered, versioned event log of one session; JSON-lines on the wire."""

    def __init__(self, header: dict):
        self.header = dict(header, v=1, kind="header")
        self.events: list[dict] = []

    def add(self, kind: str, **fields) -> None:
        self.events.append({"v": 1, "kind": kind, "seq": len(self.events), **fields})

    def lines(self) -> list[str]:
        dump = lambda d: json.dumps(d, sort_keys=True, separators=(",", ":"))  # noqa: E731
        return [dump(self.header)] + [dump(e) for e in self.events]

    def to_jsonl(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def alice_view_lines(self) -> list[str]:
        """The sender's view: classical traffic and the transfers she makes.

        Measurements and the verdict are receiver-local and excluded; so is
        the header (it carries the receiver's seed).
        """
        dump = lambda d: json.dumps(d, sort_keys=True, separators=(",", ":"))  # noqa: E731
        return [dump(e) for e in self.events
                if e["kind"] in ("classical", "handle_transfer")]


@dataclass
class SessionRecord:
    params: ProtocolParams
    verdict: Verdict
    transcript: Transcript | None
    registry: QuantumRegistry
    alice_state: object
    bob_state: object
    true_message: np.ndarray | None


def run_session(params: ProtocolParams, alice, bob, seed: int,
                session_id: int = 0, record_transcript: bool = False) -> SessionRecord:
    """Drive one session end to end; deterministic given the seed."""
    seeds = {
        "session": seed & MASK64,
        "alice": derive_seed(seed, ROLE_ALICE),
        "bob": derive_seed(seed, ROLE_BOB),
    }
    arng = np.random.default_rng(seeds["alice"])
    brng = np.random.default_rng(seeds["bob"])

    transcript = None
    if record_transcript:
        transcript = Transcript({
            "session_id": session_id,
            "strategy_alice": alice.name,
            "strategy_bob": bob.name,
            "params": {"n": params.n, "ell": params.ell,
                       "threshold_sigmas": params.threshold_sigmas,
                       "copies": params.copies},
            "seeds": seeds,
        })
    registry = QuantumRegistry(on_event=transcript.add if transcript else None)

    verdict = Verdict(session_id=session_id, strategy_alice=alice.name,
                      strategy_bob=bob.name, seeds=seeds,
                      alice_guess_received=alice.guess_received)
    astate = bstate = None
    true_message = None
    try:
        msg, astate, true_message = alice.transfer(params, arng, registry)
        if transcript:
            transcript.add("classical", sender="alice", name="transfer_commitment",
                           payload={"digest": describe_bits(msg.digest),
                                    "hash_spec": {"ell": msg.hash_spec.ell,
                                                  "seed_hex": msg.hash_spec.seed_hex()}})
        registry.transfer_many(msg.handles, "alice", "bob")

        premeasure = getattr(bob, "premeasure", None)
        if premeasure is not None:
            guess, success, _ = premeasure(params, msg, brng, registry,
                                           true_key=astate.secret_key)
            verdict.bob_received = success
            verdict.decoded_hex = bits_to_hex(guess)
            if true_message is not None:
                verdict.bits_total = params.ell
                verdict.bits_correct = int(np.sum(guess == true_message))
                verdict.hash_collision = success and not np.array_equal(guess, true_message)
        else:
            challenge, bstate = bob.challenge(params, brng)
            if transcript:
                transcript.add("classical", sender="bob", name="challenge",
                               payload={"perm": str(challenge)})
            response = alice.respond(astate, challenge, arng)
            if transcript:
                transcript.add("classical", sender="alice", name="masked_key",
                               payload={"perm": str(response)})
            bob.resolve(bstate, response, brng)
            received, aborted, flipped = bob.open(params, bstate, msg, brng, registry)
            verdict.bob_received = received
            verdict.bob_aborted_cheat = aborted
            verdict.hamming_d = flipped
            verdict.decoded_hex = bits_to_hex(bstate.decoded)
            verdict.gamma_equals_pi = (
                bstate.resolved_key.mapping == astate.secret_key.mapping)
            if true_message is not None:
                verdict.bits_total = params.ell
                verdict.bits_correct = int(np.sum(bstate.decoded == true_message))
                verdict.hash_collision = received and not np.array_equal(
                    bstate.decoded, true_message)
    except ProtocolViolation as exc:
        verdict.violation = str(exc)

    if transcript:
        transcript.add("verdict", **verdict.to_json_dict())
    return SessionRecord(params, verdict, transcript, registry, astate, bstate,
                         true_message)


# ---------------------------------------------------------------------------
# Monte Carlo experiments.
# ---------------------------------------------------------------------------

def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """95% (default) Wilson score interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class ExperimentStats:
    """Aggregated counters for one strategy pair; merging is associative."""

    strategy_alice: str
    strategy_bob: str
    params: ProtocolParams
    base_seed: int
    sessions: int = 0
    received: int = 0
    aborted_cheat: int = 0
    violations: int = 0
    hash_collisions: int = 0
    gamma_known: int = 0
    gamma_matches: int = 0
    bits_correct: int = 0
    bits_total: int = 0

    def absorb(self, v: Verdict) -> None:
        self.sessions += 1
        self.received += int(v.bob_received)
        self.aborted_cheat += int(v.bob_aborted_cheat)
        self.violations += int(v.violation is not None)
        self.hash_collisions += int(v.hash_collision)
        if v.gamma_equals_pi is not None:
            self.gamma_known += 1
            self.gamma_matches += int(v.gamma_equals_pi)
        self.bits_correct += v.bits_correct
        self.bits_total += v.bits_total

    def merge(self, other: "ExperimentStats") -> "ExperimentStats":
        if (self.strategy_alice, self.strategy_bob) != (other.strategy_alice, other.strategy_bob):
            raise ValueError("cannot merge stats of different strategy pairs")
        out = ExperimentStats(self.strategy_alice, self.strategy_bob, self.params,
                              self.base_seed)
        for name in ("sessions", "received", "aborted_cheat", "violations",
                     "hash_collisions", "gamma_known", "gamma_matches",
                     "bits_correct", "bits_total"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out

    def to_json_dict(self) -> dict:
        rec_ci = wilson_interval(self.received, self.sessions)
        ab_ci = wilson_interval(self.aborted_cheat, self.sessions)
        acc_ci = wilson_interval(self.bits_correct, self.bits_total)
        return {
            "v": 1,
            "strategy_alice": self.strategy_alice,
            "strategy_bob": self.strategy_bob,
            "params": {"n": self.params.n, "ell": self.params.ell,
                       "threshold_sigmas": self.params.threshold_sigmas,
                       "copies": self.params.copies},
            "base_seed": self.base_seed,
            "sessions": self.sessions,
            "received": self.received,
            "received_rate": self.received / self.sessions if self.sessions else 0.0,
            "received_ci95": list(rec_ci),
            "aborted_cheat": self.aborted_cheat,
            "aborted_rate": self.aborted_cheat / self.sessions if self.sessions else 0.0,
            "aborted_ci95": list(ab_ci),
            "violations": self.violations,
            "hash_collisions": self.hash_collisions,
            "gamma_known": self.gamma_known,
            "gamma_matches": self.gamma_matches,
            "bits_correct": self.bits_correct,
            "bits_total": self.bits_total,
            "bit_accuracy": self.bits_correct / self.bits_total if self.bits_total else None,
            "bit_accuracy_ci95": list(acc_ci) if self.bits_total else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        d = self.to_json_dict()
        flat = {}
        for k, v in sorted(d.items()):
            if k == "v":
                continue
            if k == "params":
                flat.update({f"param_{pk}": pv for pk, pv in sorted(v.items())})
            elif isinstance(v, list):
                flat[f"{k}_lo"], flat[f"{k}_hi"] = v
            else:
                flat[k] = v
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(flat.keys()))
        writer.writeheader()
        writer.writerow(flat)
        return buf.getvalue()


def _verdict_for(params, alice, bob, base_seed, index) -> Verdict:
    seed = derive_seed(base_seed, index)
    return run_session(params, alice, bob, seed, session_id=index).verdict


def _run_chunk(args) -> list[Verdict]:
    params, alice, bob, base_seed, indices = args
    return [_verdict_for(params, alice, bob, base_seed, i) for i in indices]


def run_experiment(params: ProtocolParams, alice, bob, n_sessions: int,
                   base_seed: int, parallelism: int = 1) -> ExperimentStats:
    """N independent sessions with derived seeds; parallelism cannot change
    the result, only the wall clock."""
    if n_sessions < 1:
        raise ValueError("need at least one session")
    stats = ExperimentStats(alice.name, bob.name, params, base_seed)
    if parallelism <= 1:
        for i in range(n_sessions):
            stats.absorb(_verdict_for(params, alice, bob, base_seed, i))
        return stats
    indices = list(range(n_sessions))
    chunk = max(1, math.ceil(n_sessions / (parallelism * 4)))
    tasks = [(params, alice, bob, base_seed, indices[lo:lo + chunk])
             for lo in range(0, n_sessions, chunk)]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        for verdicts in pool.map(_run_chunk, tasks):
            for v in verdicts:
                stats.absorb(v)
    return stats


# ---------------------------------------------------------------------------
# Privileged inspection.
# ---------------------------------------------------------------------------

def inspector_verify(record: SessionRecord, oracle: bool = False) -> list[str]:
    """Post-hoc invariant checks on one session; empty report means clean.

    Flags: a resolved key outside the key space, transmitted payloads that
    are not honest two-branch pair states, payloads inconsistent with their
    declared origin, and (``oracle=True``, dense-capped degrees only) an
    ensemble average of the deposited projectors that strays from the exact
    mixture beyond Monte Carlo error.
    """
    report: list[str] = []
    params = record.params
    bstate = record.bob_state
    if bstate is not None and getattr(bstate, "resolved_key", None) is not None:
        if not is_fpf_involution(bstate.resolved_key):
            report.append(f"resolved key {bstate.resolved_key} outside the key space")

    registry = record.registry
    deposited = [registry.inspect_deposited(h) for h in range(len(registry))]
    for h, sample in enumerate(deposited):
        payload = sample.payload
        if payload.support_size != 2:
            report.append(f"handle {h}: payload support {payload.support_size} != 2")
            continue
        if not np.allclose(np.abs(payload.amps), qsim.SQRT_HALF, atol=qsim.NORM_TOL):
            report.append(f"handle {h}: payload amplitudes are not ±1/sqrt2")
        if sample.origin is not None:
            expect = pair_state(sample.origin.sigma, sample.origin.secret_key,
                                sample.origin.sign)
            if not qsim.states_equal_up_to_phase(payload, expect):
                report.append(f"handle {h}: payload disagrees with its origin record")

    if oracle and math.factorial(params.n) <= qsim.ORACLE_MAX_STATES:
        astate = record.alice_state
        key = getattr(astate, "secret_key", None)
        by_sign = {+1: [], -1: []}
        for sample in deposited:
            if sample.origin is not None:
                by_sign[sample.origin.sign].append(sample.payload)
        if key is not None:
            for sign, payloads in by_sign.items():
                if not payloads:
                    continue
                rho = qsim.oracle_density("plus" if sign > 0 else "minus", key)
                check = pair_ensemble_density_check(payloads, rho)
                if not check["ok"]:
                    report.append(
                        f"sign {sign:+d} ensemble strays from the exact mixture: {check}")
    return report


def _binomial_envelope(n: int, p: float, tail: float) -> tuple[int, int]:
    """Smallest symmetric-tail [lo, hi] count window with P(outside) <= 2*tail."""
    pmf = [math.comb(n, k) * (p ** k) * ((1 - p) ** (n - k)) for k in range(n + 1)]
    acc = 0.0
    lo = 0
    for k in range(n + 1):
        acc += pmf[k]
        if acc > tail:
            lo = k
            break
    acc = 0.0
    hi = n
    for k in range(n, -1, -1):
        acc += pmf[k]
        if acc > tail:
            hi = k
            break
    return lo, hi


def pair_ensemble_density_check(payloads: list[qsim.SparseState], rho: np.ndarray,
                                max_sigma: float = 6.0,
                                max_frac_over_3sigma: float = 0.01) -> dict:
    """Compare an empirical average of two-branch projectors with the exact
    mixture.

    Each draw touches only entries inside the mixture's support with values
    of magnitude 1/2, so any off-support mass is an immediate failure and
    each support entry's deviation reduces to a Binomial(N, 2/n!) hit count.
    With many draws (expected hits >= ~10 per entry) the normal regime
    applies: at most ``max_frac_over_3sigma`` of support entries beyond
    3 sigma and none beyond ``max_sigma`` (a literal all-entries 3-sigma
    bound would fail ~0.27% of entries by chance alone).  With fewer draws
    the check falls back to an exact binomial envelope at per-entry tail
    1e-6, which any honest session passes.
    """
    dim = rho.shape[0]
    draws = len(payloads)
    if draws == 0:
        raise ValueError("need at least one payload")
    emp = np.zeros((dim, dim), dtype=np.complex128)
    for p in payloads:
        idx = p.configs[:, 0]
        emp[np.ix_(idx, idx)] += np.outer(p.amps, np.conj(p.amps))
    emp /= draws

    support = np.abs(rho) > 0
    off = np.abs(emp[~support]).max() if (~support).any() else 0.0
    p_hit = 2.0 / dim
    # Every two-branch draw deposits four entries of magnitude 1/2, all with
    # the mixture's own signs: total on-support mass is exactly 2.
    mass = float(np.sum(np.abs(emp[support])))
    result = {"draws": draws, "off_support_max": float(off), "support_mass": mass}
    mass_ok = abs(mass - 2.0) <= 1e-6
    if draws * p_hit >= 10.0:
        sigma = math.sqrt(0.25 * p_hit * (1.0 - p_hit) / draws)
        dev = np.abs(emp[support] - rho[support]) / sigma
        result["max_sigma"] = float(dev.max())
        result["frac_over_3sigma"] = float(np.mean(dev > 3.0))
        result["ok"] = (off == 0.0 and mass_ok and result["max_sigma"] <= max_sigma
                        and result["frac_over_3sigma"] <= max_frac_over_3sigma)
    else:
        hits = np.rint(2.0 * draws * np.abs(emp[support])).astype(np.int64)
        lo, hi = _binomial_envelope(draws, p_hit, 1e-6)
        result["hit_range"] = [int(hits.min()), int(hits.max())]
        result["hit_envelope"] = [lo, hi]
        result["max_sigma"] = float("nan")
        result["frac_over_3sigma"] = float("nan")
        result["ok"] = bool(off == 0.0 and mass_ok
                            and hits.min() >= lo and hits.max() <= hi)
    return result
