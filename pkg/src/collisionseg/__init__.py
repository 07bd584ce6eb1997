"""Weakly-supervised segmentation of collision sound sources.

Given a short audio clip of a collision and one video frame, the pipeline
predicts pixel masks of the one or two objects that produced the sound.
"""

__version__ = "0.1.0"

from collisionseg.audio import AudioClip
from collisionseg.config import RunConfig, soundboard_profile
from collisionseg.masks import BBox, BinaryMask, Image, SoftMask
from collisionseg.verify import CandidateSet, CollisionPrediction, verify_collision

__all__ = [
    "AudioClip",
    "BBox",
    "BinaryMask",
    "CandidateSet",
    "CollisionPrediction",
    "Image",
    "RunConfig",
    "SoftMask",
    "soundboard_profile",
    "verify_collision",
    "__version__",
]
