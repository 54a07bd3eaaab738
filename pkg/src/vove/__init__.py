"""Vo-Ve: an explainable 44-dimensional voice-attribute embedding."""

from vove.attributes import ATTRIBUTES, NUM_ATTRIBUTES, Intensity, annotation_to_soft_label

__version__ = "0.1.0"

__all__ = ["ATTRIBUTES", "NUM_ATTRIBUTES", "Intensity", "annotation_to_soft_label", "__version__"]
