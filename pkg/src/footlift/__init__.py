"""Foot motion refinement: lifting 2D foot keypoints to residual ankle rotations."""

__version__ = "0.1.0"
