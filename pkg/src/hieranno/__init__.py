"""Multi-level hate-speech annotation platform.

Corpus ingestion and anonymization, a conditional question scheme with
deterministic label derivations, inter-annotator agreement statistics,
an append-only annotation store, and a two-arm pilot-experiment service.
"""

__version__ = "0.1.0"
