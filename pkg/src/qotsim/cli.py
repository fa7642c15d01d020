"""Command-line driver.

Subcommands:

* ``session``      one protocol session, transcript to a JSON-lines file
* ``experiment``   Monte Carlo over many sessions, stats as JSON or CSV
* ``distinguish``  trapdoor-vs-wrong-key distinguishing trials, both paths
* ``oracle``       dense brute-force identity suite (small degrees)
* ``enumerate-k``  exhaustive keyspace listing in cycle notation

Exit codes: 0 success, 1 oracle suite failure, 2 usage error.  Output files
land in --output, or in $QOTSIM_OUTPUT_DIR (default ".") under an automatic
name; "-" writes to stdout.  Everything is deterministic under a fixed
--seed regardless of --parallelism.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import qsim
from .harness import derive_seed, run_experiment, run_session, wilson_interval
from .permgroup import (enumerate_fpf_involutions, is_fpf_involution,
                        parse_cycles, sample_fpf_involution)
from .protocol import ALICE_STRATEGIES, BOB_STRATEGIES, ProtocolParams
from .qscd import decode_signs, encode_message, measure_samples

ORACLE_TOL = 1e-9


def _out_path(arg: str | None, default_name: str) -> str:
    if arg == "-":
        return "-"
    if arg:
        return arg
    return os.path.join(os.environ.get("QOTSIM_OUTPUT_DIR", "."), default_name)


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
        print(f"wrote {path}")


def _params(args) -> ProtocolParams:
    return ProtocolParams(n=args.n, ell=args.ell,
                          threshold_sigmas=args.threshold_sigmas, copies=args.copies)


def _require_degree(n: int) -> None:
    if n < 6 or n % 4 != 2:
        raise ValueError(f"degree must be 2(2m+1) with m >= 1 (6, 10, 14, ...), got {n}")


def _add_common(p, ell=True):
    p.add_argument("--n", type=int, default=6, help="group degree (2(2m+1): 6, 10, ...)")
    if ell:
        p.add_argument("--ell", type=int, default=32, help="message length in bits")
        p.add_argument("--threshold-sigmas", type=float, default=3.0,
                       help="recheck acceptance window in binomial sigmas")
        p.add_argument("--copies", type=int, default=1, help="samples per message bit")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--output", default=None, help='output path ("-" for stdout)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qotsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("session", help="run one session and dump its transcript")
    _add_common(p)
    p.add_argument("--alice", default="honest", choices=sorted(ALICE_STRATEGIES))
    p.add_argument("--bob", default="honest", choices=sorted(BOB_STRATEGIES))
    p.add_argument("--dump-states", action="store_true",
                   help="append privileged state dumps of the transmitted samples")

    p = sub.add_parser("experiment", help="Monte Carlo over many sessions")
    _add_common(p)
    p.add_argument("--alice", default="honest", choices=sorted(ALICE_STRATEGIES))
    p.add_argument("--bob", default="honest", choices=sorted(BOB_STRATEGIES))
    p.add_argument("--sessions", type=int, default=10_000)
    p.add_argument("--parallelism", type=int, default=os.cpu_count() or 1)
    p.add_argument("--format", default="json", choices=("json", "csv"))

    p = sub.add_parser("distinguish", help="trapdoor distinguishing trials")
    _add_common(p, ell=False)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--key", default=None, metavar="CYCLES",
                   help='fix the trapdoor key, in cycle notation like "(1 2)(3 4)(5 6)"')
    p.add_argument("--format", default="json", choices=("json", "csv"))

    p = sub.add_parser("oracle", help="dense brute-force identity suite")
    _add_common(p, ell=False)

    p = sub.add_parser("enumerate-k", help="list the keyspace exhaustively")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--output", default=None)
    return parser


def cmd_session(args) -> int:
    params = _params(args)
    alice = ALICE_STRATEGIES[args.alice]()
    bob = BOB_STRATEGIES[args.bob]()
    record = run_session(params, alice, bob, derive_seed(args.seed, 0),
                         session_id=0, record_transcript=True)
    lines = record.transcript.lines()
    if args.dump_states:
        for h in range(len(record.registry)):
            sample = record.registry.inspect_deposited(h)
            lines.append(json.dumps(
                {"v": 1, "kind": "state_dump", "handle": h,
                 "lines": sample.payload.dump_lines()},
                sort_keys=True, separators=(",", ":")))
    path = _out_path(args.output, f"session-{args.seed}.jsonl")
    _write(path, "\n".join(lines) + "\n")
    v = record.verdict
    print(f"received={v.bob_received} aborted={v.aborted} hamming_d={v.hamming_d}")
    return 0


def cmd_experiment(args) -> int:
    params = _params(args)
    alice = ALICE_STRATEGIES[args.alice]()
    bob = BOB_STRATEGIES[args.bob]()
    stats = run_experiment(params, alice, bob, args.sessions, args.seed,
                           parallelism=args.parallelism)
    suffix = "json" if args.format == "json" else "csv"
    path = _out_path(args.output, f"experiment-{args.alice}-{args.bob}-{args.seed}.{suffix}")
    _write(path, stats.to_json() if args.format == "json" else stats.to_csv())
    d = stats.to_json_dict()
    print(f"sessions={d['sessions']} received_rate={d['received_rate']:.4f} "
          f"aborted_rate={d['aborted_rate']:.4f}")
    return 0


def _distinguish_stats(n: int, trials: int, seed: int, fixed_key=None) -> dict:
    """Correct-key and wrong-key accuracy for both distinguishing paths.

    Trials run in key groups; each group's pristine samples are decoded
    independently through the interference circuit and through the
    observable (the two are equivalent processes, so with the right key both
    must be correct always and with a wrong key both are plain guessing).
    """
    if fixed_key is not None and not is_fpf_involution(fixed_key):
        raise ValueError(f"{fixed_key} is not a fixed-point-free involution")
    rng = np.random.default_rng(derive_seed(seed, 0xD15))
    group = 250
    counts = {
        "correct": {"circuit": 0, "observable": 0, "trials": 0},
        "wrong": {"circuit": 0, "observable": 0, "trials": 0},
    }
    done = 0
    while done < trials:
        take = min(group, trials - done)
        key = fixed_key if fixed_key is not None else sample_fpf_involution(rng, n)
        while True:
            wrong = sample_fpf_involution(rng, n)
            if wrong.mapping != key.mapping:
                break
        bits = (np.arange(take) % 2).astype(np.uint8)
        samples = encode_message(bits, key, rng)

        for mode, mkey in (("correct", key), ("wrong", wrong)):
            for route in ("circuit", "observable"):
                signs, _ = measure_samples(samples, mkey, rng, method=route)
                counts[mode][route] += int(np.sum(decode_signs(signs) == bits))
            counts[mode]["trials"] += take
        done += take

    out = {"v": 1, "n": n, "seed": seed,
           "key": str(fixed_key) if fixed_key is not None else None}
    for mode, c in counts.items():
        block = {"trials": c["trials"]}
        for path in ("circuit", "observable"):
            rate = c[path] / c["trials"]
            lo, hi = wilson_interval(c[path], c["trials"])
            block[path] = {"correct": c[path], "accuracy": rate, "ci95": [lo, hi]}
        out[f"{mode}_key"] = block
    return out


def cmd_distinguish(args) -> int:
    _require_degree(args.n)
    fixed_key = parse_cycles(args.key, args.n) if args.key else None
    stats = _distinguish_stats(args.n, args.trials, args.seed, fixed_key)
    path = _out_path(args.output, f"distinguish-{args.seed}.json")
    if args.format == "json":
        _write(path, json.dumps(stats, sort_keys=True, indent=2) + "\n")
    else:
        rows = []
        for mode in ("correct_key", "wrong_key"):
            for route in ("circuit", "observable"):
                b = stats[mode][route]
                rows.append(f"{mode},{route},{stats[mode]['trials']},{b['correct']},"
                            f"{b['accuracy']},{b['ci95'][0]},{b['ci95'][1]}")
        _write(path, "mode,path,trials,correct,accuracy,ci_lo,ci_hi\n" + "\n".join(rows) + "\n")
    for mode in ("correct_key", "wrong_key"):
        for route in ("circuit", "observable"):
            print(f"{mode}/{route}: accuracy={stats[mode][route]['accuracy']:.4f}")
    return 0


def cmd_oracle(args) -> int:
    _require_degree(args.n)
    if math.factorial(args.n) > qsim.ORACLE_MAX_STATES:
        print(f"error: dense oracle needs n! <= {qsim.ORACLE_MAX_STATES}", file=sys.stderr)
        return 2
    rng = np.random.default_rng(derive_seed(args.seed, 0x0AC7E))
    key = sample_fpf_involution(rng, args.n)
    while True:
        other = sample_fpf_involution(rng, args.n)
        if other.mapping != key.mapping:
            break
    report = qsim.dense_oracle_report(key, other)
    failures = 0
    for name, dev in sorted(report.items()):
        ok = abs(dev) <= ORACLE_TOL
        failures += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'}  {name:<34} max deviation {dev:.3e}")
    print(f"keys: {key} / {other}; {len(report)} identities, {failures} failures")
    return 1 if failures else 0


def cmd_enumerate_k(args) -> int:
    if args.n > 10:
        print("error: exhaustive keyspace listing capped at degree 10", file=sys.stderr)
        return 2
    members = enumerate_fpf_involutions(args.n)
    lines = [str(p) for p in members]
    text = "\n".join(lines + [f"count: {len(members)}"]) + "\n"
    if args.output:
        _write(_out_path(args.output, f"keyspace-{args.n}.txt"), text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        handler = {
            "session": cmd_session,
            "experiment": cmd_experiment,
            "distinguish": cmd_distinguish,
            "oracle": cmd_oracle,
            "enumerate-k": cmd_enumerate_k,
        }[args.command]
        return handler(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
