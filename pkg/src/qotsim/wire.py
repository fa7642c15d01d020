"""Split-process transport: the two parties as separate OS processes.

Classical traffic travels as line-delimited JSON over byte pipes.  Quantum
payloads never serialize: a broker process (the parent) owns the registry
and resolves opaque handle references on the parties' behalf, mirroring the
in-process capability rules (deposit/transfer/measure only; ownership
enforced).

This is the optional transport for the honest protocol; adversarial
strategies live in the in-process harness.  Determinism follows the same
seed-derivation scheme: every session is reproducible bit-for-bit.
"""

from __future__ import annotations

import json
from multiprocessing import Pipe, Process, connection

import numpy as np

from .harness import ROLE_ALICE, ROLE_BOB, QuantumRegistry, derive_seed
from .hashing import HashSpec, bits_to_hex, hash_bits, hex_to_bits, random_bits, sample_hash
from .permgroup import parse_cycles, sample_fpf_involution
from .protocol import (AliceState, ProtocolParams, Verdict, alice_respond,
                       bob_challenge, bob_resolve, sample_recheck_key)
from .qscd import decode_signs, encode_message


def _send(conn, **message) -> None:
    conn.send_bytes(json.dumps(message, sort_keys=True).encode() + b"\n")


def _recv(conn) -> dict:
    return json.loads(conn.recv_bytes().decode().rstrip("\n"))


def _perm(text: str, n: int):
    return parse_cycles(text, n)


def _alice_process(conn, params: ProtocolParams, seed: int) -> None:
    rng = np.random.default_rng(seed)
    n = params.n
    message = random_bits(rng, params.ell)
    key = sample_fpf_involution(rng, n)
    spec = sample_hash(params.ell, rng)
    digest = hash_bits(spec, message)

    _send(conn, type="quantum", op="encode", key=str(key),
          bits=bits_to_hex(message), count=params.ell,
          seed=int(rng.integers(1 << 62)))
    handles = _recv(conn)["handles"]
    _send(conn, type="quantum", op="transfer", handles=handles, to="bob")
    _recv(conn)
    _send(conn, type="to_peer", name="transfer_commitment",
          payload={"digest": bits_to_hex(digest), "bits": params.ell,
                   "spec_seed": spec.seed_hex(), "handles": handles})

    challenge_msg = _recv(conn)
    challenge = _perm(challenge_msg["payload"]["perm"], n)
    state = AliceState(params, key, message, digest, spec)
    response = alice_respond(state, challenge, rng)
    _send(conn, type="to_peer", name="masked_key", payload={"perm": str(response)})
    _send(conn, type="done", secret_key=str(key), message=bits_to_hex(message))
    conn.close()


def _bob_process(conn, params: ProtocolParams, seed: int) -> None:
    rng = np.random.default_rng(seed)
    n = params.n
    commit = _recv(conn)["payload"]
    digest = hex_to_bits(commit["digest"], params.ell // 2)
    spec = HashSpec.from_seed_hex(params.ell, commit["spec_seed"])
    handles = commit["handles"]

    challenge, state = bob_challenge(params, rng)
    _send(conn, type="to_peer", name="challenge", payload={"perm": str(challenge)})
    response = _perm(_recv(conn)["payload"]["perm"], n)
    gamma = bob_resolve(state, response, rng)

    def measure(key):
        _send(conn, type="quantum", op="measure", handles=handles, key=str(key),
              seed=int(rng.integers(1 << 62)))
        return hex_to_bits(_recv(conn)["outcomes"], params.ell)

    decoded = measure(gamma)
    received = bool(np.array_equal(hash_bits(spec, decoded), digest))
    aborted = False
    flipped = None
    if received:
        recheck = measure(sample_recheck_key(gamma, rng))
        flipped = int(np.sum(recheck != decoded))
        aborted = abs(flipped - params.ell / 2.0) > params.recheck_window
    _send(conn, type="result", gamma=str(gamma), received=received,
          aborted=aborted, flipped=flipped, decoded=bits_to_hex(decoded))
    conn.close()


def run_split_session(params: ProtocolParams, seed: int, session_id: int = 0) -> Verdict:
    """One honest session with each party in its own process."""
    if params.copies != 1:
        raise ValueError("the split transport supports one sample per bit")
    seeds = {"session": seed, "alice": derive_seed(seed, ROLE_ALICE),
             "bob": derive_seed(seed, ROLE_BOB)}
    a_parent, a_child = Pipe()
    b_parent, b_child = Pipe()
    alice = Process(target=_alice_process, args=(a_child, params, seeds["alice"]))
    bob = Process(target=_bob_process, args=(b_child, params, seeds["bob"]))
    alice.start()
    bob.start()
    a_child.close()
    b_child.close()

    registry = QuantumRegistry()
    party = {id(a_parent): "alice", id(b_parent): "bob"}
    peer = {id(a_parent): b_parent, id(b_parent): a_parent}
    verdict = Verdict(session_id=session_id, strategy_alice="honest",
                      strategy_bob="honest", seeds=seeds)
    alice_report = bob_report = None
    live = [a_parent, b_parent]
    try:
        while live:
            for conn in connection.wait(live):
                try:
                    msg = _recv(conn)
                except EOFError:
                    live.remove(conn)
                    continue
                kind = msg["type"]
                if kind == "to_peer":
                    _send(peer[id(conn)], type="from_peer", name=msg["name"],
                          payload=msg["payload"])
                elif kind == "quantum":
                    _serve_quantum(registry, params, party[id(conn)], conn, msg)
                elif kind == "done":
                    alice_report = msg
                elif kind == "result":
                    bob_report = msg
    finally:
        alice.join(timeout=30)
        bob.join(timeout=30)
        for p in (alice, bob):
            if p.is_alive():
                p.terminate()

    if alice_report is None or bob_report is None:
        raise RuntimeError("a party exited without reporting")
    verdict.bob_received = bool(bob_report["received"])
    verdict.bob_aborted_cheat = bool(bob_report["aborted"])
    verdict.hamming_d = bob_report["flipped"]
    verdict.decoded_hex = bob_report["decoded"]
    gamma = _perm(bob_report["gamma"], params.n)
    secret = _perm(alice_report["secret_key"], params.n)
    verdict.gamma_equals_pi = gamma.mapping == secret.mapping
    true_message = hex_to_bits(alice_report["message"], params.ell)
    decoded = hex_to_bits(bob_report["decoded"], params.ell)
    verdict.bits_total = params.ell
    verdict.bits_correct = int(np.sum(decoded == true_message))
    verdict.hash_collision = verdict.bob_received and not np.array_equal(
        decoded, true_message)
    return verdict


def _serve_quantum(registry, params, who, conn, msg) -> None:
    op = msg["op"]
    if op == "encode":
        key = _perm(msg["key"], params.n)
        bits = hex_to_bits(msg["bits"], msg["count"])
        samples = encode_message(bits, key, np.random.default_rng(msg["seed"]))
        handles = registry.deposit_many(who, samples)
        _send(conn, type="quantum_result", handles=handles)
    elif op == "transfer":
        registry.transfer_many(msg["handles"], who, msg["to"])
        _send(conn, type="quantum_result", ok=True)
    elif op == "measure":
        key = _perm(msg["key"], params.n)
        signs = registry.measure_with_key(who, msg["handles"], key,
                                          np.random.default_rng(msg["seed"]))
        _send(conn, type="quantum_result",
              outcomes=bits_to_hex(decode_signs(signs)))
    else:
        raise ValueError(f"unknown quantum op {op!r}")
