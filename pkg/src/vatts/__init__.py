"""Listener-aware phoneme prosody prediction for streaming speech synthesis.

Subpackages: ``dsp`` and ``features`` measure audio, ``align`` maps phonemes
onto the listener video clock, ``model`` holds the predictor, ``metrics``
scores output and ``corpus`` reads and synthesizes data. ``vatts.cli`` is
the command-line entry point.
"""

__version__ = "0.1.0"
