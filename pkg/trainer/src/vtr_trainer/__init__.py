"""Toy-scale reference trainer for the vtr engine.

Trains a small shifted-patch-tokenization transformer with locality
self-attention on a synthetic speckled-shape dataset and exports VTRW
weights, VTRT activation traces and the fixture manifest the engine's
validation suite consumes. Communicates with the engine only through
those files and its CLI.
"""

__version__ = "0.1.0"
