"""Uncertainty-guided interactive segmentation refinement.

Fuses an ensemble of probability predictions into a segmentation plus a
pixel-wise uncertainty map, ranks slices by normalized uncertainty to
schedule human review, and refines individual slices with an interactive
level-set solver driven by geodesic scribble likelihoods.
"""

from ugseg.core import (
    BinaryMask,
    ProbabilityGroup,
    RefineConfig,
    ScribbleSet,
    Stack,
    Stroke,
    read_stack,
    write_stack,
)
from ugseg.uncertainty import FusedResult, SliceQueue, fuse_predictions, rank_slices

__all__ = [
    "BinaryMask",
    "ProbabilityGroup",
    "RefineConfig",
    "ScribbleSet",
    "Stack",
    "Stroke",
    "read_stack",
    "write_stack",
    "FusedResult",
    "SliceQueue",
    "fuse_predictions",
    "rank_slices",
]
