"""Computational stereology workbench.

Segments and counts stained cells on extended-depth-of-field images with a
classical adaptive pipeline, a trainable convolutional segmenter, and an
iterative accept/reject review loop.
"""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
