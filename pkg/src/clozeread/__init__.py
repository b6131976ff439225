"""Desk-scale Cloze reading comprehension toolkit.

Pipeline pieces: entity-anonymised corpus construction, symbolic baselines,
and small attention-based neural readers built on a hand-rolled reverse-mode
tape. Everything runs on a single machine in double precision with seeded,
reproducible randomness.
"""

__version__ = "0.1.0"
