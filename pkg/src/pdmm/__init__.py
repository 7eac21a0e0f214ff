"""Multimodal Parkinson's severity classification toolkit.

Symptom-feature pruning, MRI cross-section preprocessing, three neural
classifiers (symptoms-only, image-only, hybrid fusion), per-stage
evaluation, and a seeded synthetic cohort generator for desk-scale runs.
"""

__version__ = "0.1.0"
