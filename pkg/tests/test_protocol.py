import math

import numpy as np
import pytest

from qotsim import permgroup as pg
from qotsim import protocol, qsim
from qotsim.harness import QuantumRegistry, derive_seed, run_session
from qotsim.hashing import hash_bits, random_bits
from qotsim.protocol import (AliceState, HonestAlice, HonestBob,
                             InvariantCheatAlice, MixedCheatAlice,
                             PremeasureBob, ProtocolParams, ProtocolViolation,
                             alice_respond, alice_transfer, bob_resolve,
                             sample_recheck_key)

PARAMS = ProtocolParams(n=6, ell=32)


class TestParams:
    @pytest.mark.parametrize("n", [4, 8, 12, 5])
    def test_bad_degrees_rejected(self, n):
        with pytest.raises(ValueError, match=r"2\(2m\+1\)"):
            ProtocolParams(n=n)

    @pytest.mark.parametrize("n", [6, 10, 14])
    def test_good_degrees_accepted(self, n):
        assert ProtocolParams(n=n).n == n

    def test_bad_lengths_rejected(self):
        with pytest.raises(ValueError, match="even"):
            ProtocolParams(ell=9)
        with pytest.raises(ValueError, match="even"):
            ProtocolParams(ell=6)

    def test_recheck_window(self):
        assert ProtocolParams(ell=32).recheck_window == pytest.approx(3 * math.sqrt(8))


class TestTransfer:
    def test_all_ones_message_yields_plus_family(self):
        rng = np.random.default_rng(0)
        registry = QuantumRegistry()
        msg, state = alice_transfer(PARAMS, np.ones(32, dtype=np.uint8), rng, registry)
        assert len(msg.handles) == 32
        keys = set()
        for h in msg.handles:
            origin = registry.inspect_deposited(h).origin
            assert origin.sign == +1
            keys.add(origin.secret_key.mapping)
        assert keys == {state.secret_key.mapping}

    def test_signs_follow_message_bits(self):
        from qotsim.qscd import pair_state

        rng = np.random.default_rng(1)
        registry = QuantumRegistry()
        message = random_bits(rng, 32)
        msg, state = alice_transfer(PARAMS, message, rng, registry)
        for h, bit in zip(msg.handles, message):
            sample = registry.inspect_deposited(h)
            assert sample.origin.sign == (+1 if bit else -1)
            assert sample.payload.support_size == 2
            expect = pair_state(sample.origin.sigma, state.secret_key,
                                sample.origin.sign)
            assert qsim.states_equal_up_to_phase(sample.payload, expect)

    def test_digest_is_honest(self):
        rng = np.random.default_rng(2)
        registry = QuantumRegistry()
        message = random_bits(rng, 32)
        msg, state = alice_transfer(PARAMS, message, rng, registry)
        np.testing.assert_array_equal(msg.digest, hash_bits(msg.hash_spec, message))
        np.testing.assert_array_equal(state.digest, msg.digest)

    def test_wrong_length_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError, match="bits"):
            alice_transfer(PARAMS, np.ones(16, dtype=np.uint8), rng, QuantumRegistry())


def _fixed_alice_state(key):
    spec_rng = np.random.default_rng(10)
    from qotsim.hashing import sample_hash

    spec = sample_hash(PARAMS.ell, spec_rng)
    msg = np.zeros(PARAMS.ell, dtype=np.uint8)
    return AliceState(PARAMS, key, msg, hash_bits(spec, msg), spec)


class TestOpeningAlgebra:
    KEY = pg.parse_cycles("(1 2)(3 6)(4 5)", 6)
    TAU = pg.parse_cycles("(1 2 3)", 6)  # does not commute with KEY

    @pytest.mark.parametrize("alice_coin,bob_coin,matches", [
        (0, 0, True), (1, 1, True), (0, 1, False), (1, 0, False)])
    def test_side_choice_combinations(self, alice_coin, bob_coin, matches):
        rng = np.random.default_rng(4)
        astate = _fixed_alice_state(self.KEY)
        response = alice_respond(astate, self.TAU, rng, coin=alice_coin)
        bstate = protocol.BobState(PARAMS, challenge=self.TAU, phase="resolve")
        gamma = bob_resolve(bstate, response, rng, coin=bob_coin)
        assert pg.is_fpf_involution(gamma)
        assert (gamma.mapping == self.KEY.mapping) == matches
        if not matches:
            # mismatch resolves to a conjugate of the key
            conj = (pg.compose(self.TAU, pg.compose(self.KEY, pg.inverse(self.TAU))),
                    pg.compose(pg.inverse(self.TAU), pg.compose(self.KEY, self.TAU)))
            assert gamma.mapping in {c.mapping for c in conj}

    def test_commuting_challenge_recovers_key_even_on_mismatch(self):
        rng = np.random.default_rng(5)
        tau = pg.parse_cycles("(1 2)", 6)  # commutes with KEY
        astate = _fixed_alice_state(self.KEY)
        response = alice_respond(astate, tau, rng, coin=0)
        bstate = protocol.BobState(PARAMS, challenge=tau, phase="resolve")
        gamma = bob_resolve(bstate, response, rng, coin=1)
        assert gamma.mapping == self.KEY.mapping

    def test_match_probability_equals_exact_enumeration(self):
        """Coin-level Monte Carlo against the exactly enumerated probability.

        The match rate is 1/2 (coin agreement) plus half the chance that the
        challenge commutes with the key, which at degree 6 is 48/720; the
        total is 8/15, not 1/2.
        """
        key = self.KEY
        commuting = sum(
            1 for t in pg.all_permutations(6)
            if pg.compose(t, key).mapping == pg.compose(key, t).mapping)
        assert commuting == 48
        p_exact = 0.5 + 0.5 * commuting / 720
        assert p_exact == pytest.approx(8 / 15)

        rng = np.random.default_rng(6)
        trials = 20_000
        matches = 0
        for _ in range(trials):
            astate = _fixed_alice_state(key)
            tau = pg.sample_permutation(rng, 6)
            response = alice_respond(astate, tau, rng)
            bstate = protocol.BobState(PARAMS, challenge=tau, phase="resolve")
            gamma = bob_resolve(bstate, response, rng)
            matches += int(gamma.mapping == key.mapping)
        rate = matches / trials
        sigma = math.sqrt(p_exact * (1 - p_exact) / trials)
        assert abs(rate - p_exact) <= 3 * sigma

    def test_phase_discipline(self):
        rng = np.random.default_rng(7)
        astate = _fixed_alice_state(self.KEY)
        alice_respond(astate, self.TAU, rng)
        with pytest.raises(ProtocolViolation, match="opening"):
            alice_respond(astate, self.TAU, rng)
        bstate = protocol.BobState(PARAMS)
        with pytest.raises(ProtocolViolation, match="challenge"):
            bob_resolve(bstate, self.TAU, rng)

    def test_recheck_key_never_equals_resolved(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            assert sample_recheck_key(self.KEY, rng).mapping != self.KEY.mapping


class _SessionRunner:
    """Forced-coin full sessions for targeted opening-phase behavior."""

    @staticmethod
    def run(n_sessions, seed, ell=32, alice_coin=0, bob_coin=0, alice_cls=HonestAlice):
        params = ProtocolParams(n=6, ell=ell)
        out = []
        for i in range(n_sessions):
            alice = alice_cls() if alice_cls is not HonestAlice else HonestAlice(alice_coin)
            bob = HonestBob(resolve_coin=bob_coin)
            out.append(run_session(params, alice, bob, derive_seed(seed, i), session_id=i))
        return out


class TestOpeningOutcomes:
    def test_matched_coins_decode_the_message(self):
        records = _SessionRunner.run(60, seed=100, ell=64)
        aborts = 0
        for rec in records:
            v = rec.verdict
            assert v.gamma_equals_pi
            assert v.bob_received
            assert v.bits_correct == v.bits_total == 64
            assert v.hamming_d is not None
            aborts += int(v.bob_aborted_cheat)
        assert aborts <= 2  # false-abort probability ~0.0018 per session

    def test_recheck_flips_about_half(self):
        records = _SessionRunner.run(40, seed=101, ell=64)
        ds = [rec.verdict.hamming_d for rec in records]
        assert all(d is not None for d in ds)
        assert 20 <= float(np.mean(ds)) <= 44  # centered on 32

    def test_mismatched_coins_rarely_receive(self):
        records = _SessionRunner.run(80, seed=102, alice_coin=0, bob_coin=1)
        received = sum(rec.verdict.bob_received for rec in records)
        matched = sum(bool(rec.verdict.gamma_equals_pi) for rec in records)
        # only the commuting-challenge coincidence (p = 1/15) should match
        assert received == matched
        assert matched <= 18

    def test_verdict_json_schema(self):
        rec = _SessionRunner.run(1, seed=103)[0]
        d = rec.verdict.to_json_dict()
        for field in ("session_id", "strategy_alice", "strategy_bob",
                      "gamma_equals_pi", "bob_received", "aborted", "hamming_d",
                      "seeds"):
            assert field in d


class TestCheatingAlice:
    def test_invariant_states_defeated_by_recheck(self):
        params = ProtocolParams(n=6, ell=32)
        for i in range(50):
            rec = run_session(params, InvariantCheatAlice(), HonestBob(),
                              derive_seed(7, i))
            v = rec.verdict
            assert v.bob_received          # digest check passes every time
            assert v.hamming_d == 0        # the recheck reproduces the decode
            assert v.bob_aborted_cheat     # and that is exactly what aborts
            assert v.alice_guess_received is True

    def test_invariant_state_decodes_deterministically_for_all_keys(self):
        rng = np.random.default_rng(11)
        u = qsim.uniform_superposition(6)
        twisted = qsim.c_sgn(u, 0)
        for key in pg.enumerate_fpf_involutions(6):
            assert qsim.measure_pm(u, key, rng)[0] == "+"
            assert qsim.measure_pm(twisted, key, rng)[0] == "-"

    def test_mixed_states_never_deliver(self):
        params = ProtocolParams(n=6, ell=32)
        for i in range(200):
            rec = run_session(params, MixedCheatAlice(), HonestBob(), derive_seed(8, i))
            v = rec.verdict
            assert not v.bob_received
            assert not v.bob_aborted_cheat
            assert v.alice_guess_received is False
            assert v.bits_total == 0  # no true message to compare against

    def test_mixed_per_bit_outcome_is_exactly_half(self):
        layout = qsim.RegisterLayout(6)
        rng = np.random.default_rng(12)
        for _ in range(20):
            sigma = pg.sample_permutation(rng, 6)
            basis = qsim.SparseState.basis(layout, [sigma])
            for key in (pg.parse_cycles("(1 2)(3 6)(4 5)", 6),
                        pg.parse_cycles("(1 3)(2 5)(4 6)", 6)):
                p = qsim.project_pm(basis, key, +1).norm() ** 2
                assert p == pytest.approx(0.5, abs=1e-12)
                # sign twisting leaves the distribution untouched
                p2 = qsim.project_pm(qsim.c_sgn(basis, 0), key, +1).norm() ** 2
                assert p2 == pytest.approx(0.5, abs=1e-12)


class _EvilDeltaAlice(HonestAlice):
    """Returns the challenge itself: both resolve candidates leave the keyspace."""

    name = "evil-delta"

    def respond(self, state, challenge, rng):
        return challenge


class TestRobustness:
    def test_malformed_response_aborts_without_crash(self):
        params = ProtocolParams(n=6, ell=32)
        rec = run_session(params, _EvilDeltaAlice(), HonestBob(), seed=99)
        v = rec.verdict
        assert v.violation is not None and "malformed" in v.violation
        assert v.aborted and not v.bob_received

    def test_copies_roundtrip(self):
        params = ProtocolParams(n=6, ell=8, copies=3)
        rec = run_session(params, HonestAlice(respond_coin=0),
                          HonestBob(resolve_coin=0), seed=5)
        v = rec.verdict
        assert v.bob_received
        assert v.bits_correct == 8

    def test_circuit_method_bob(self):
        params = ProtocolParams(n=6, ell=32)
        rec = run_session(params, HonestAlice(respond_coin=1),
                          HonestBob(resolve_coin=1, method="circuit"), seed=6)
        assert rec.verdict.bob_received
        assert rec.verdict.bits_correct == 32


class TestPremeasure:
    def test_forced_match_always_succeeds(self):
        params = ProtocolParams(n=6, ell=32)
        for i in range(30):
            rec = run_session(params, HonestAlice(), PremeasureBob(force="match"),
                              derive_seed(13, i))
            assert rec.verdict.bob_received
            assert rec.verdict.bits_correct == 32

    def test_forced_mismatch_is_per_bit_guessing(self):
        params = ProtocolParams(n=6, ell=32)
        correct = total = 0
        for i in range(300):
            rec = run_session(params, HonestAlice(), PremeasureBob(force="mismatch"),
                              derive_seed(14, i))
            correct += rec.verdict.bits_correct
            total += rec.verdict.bits_total
        rate = correct / total
        assert abs(rate - 0.5) < 0.02

    def test_natural_guess_success_matches_exact_mixture(self):
        """Success = guessed the key (1/15) plus a negligible collision term."""
        params = ProtocolParams(n=6, ell=32)
        n_sessions = 3000
        successes = 0
        for i in range(n_sessions):
            rec = run_session(params, HonestAlice(), PremeasureBob(), derive_seed(15, i))
            successes += int(rec.verdict.bob_received)
        p_exact = 1 / 15 + (14 / 15) * 2 ** -16
        sigma = math.sqrt(p_exact * (1 - p_exact) / n_sessions)
        assert abs(successes / n_sessions - p_exact) <= 3 * sigma

    def test_invalid_force_mode(self):
        with pytest.raises(ValueError, match="force"):
            PremeasureBob(force="sideways")
