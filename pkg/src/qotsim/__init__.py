"""Exact desk-scale simulator of a trapdoor-permutation quantum oblivious
transfer protocol: symmetric-group algebra, a sparse pure-state simulator
with a dense brute-force oracle, the trapdoor distinguishing toolkit, a
Toeplitz universal-hash acknowledgment, and a two-party session harness
with honest and adversarial strategies."""

__version__ = "0.1.0"
