"""sctplab: a user-space SCTP-style transport, a TCP-like baseline, and a
deterministic discrete-event simulator for data-center transport benchmarks."""

__version__ = "0.1.0"
