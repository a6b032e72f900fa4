"""Sketch-to-render facade renovation pipeline.

Stages: guidance (detect components, propose a renovation plan), synthesis
(generate component patches and merge them into the sketch), rendering
(structure-conditioned image plus a fidelity score). Every generative
backend sits behind an interface with a deterministic stub, so the whole
pipeline runs without models.
"""

__version__ = "0.1.0"
