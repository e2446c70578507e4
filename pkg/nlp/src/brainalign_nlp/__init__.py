"""Transformer-side companion: context-window feature extraction,
uniform-attention ablation and masked-verb agreement probes.

Talks to the alignment engine only through its interchange surfaces:
feature files in the BAFM format and probe outcomes as CSV.
"""

__version__ = "0.1.0"


class NlpError(Exception):
    """Base error; exit codes mirror the engine CLI (2 config, 3 data)."""

    exit_code = 3


class NlpConfigError(NlpError):
    exit_code = 2


class StimulusError(NlpError):
    exit_code = 3
