"""Binary-code retrieval: SimHash barcodes, multi-index hashing and biometric evaluation."""

from hvindex.bitcode import BitCode, CodeSet, Substring, hamming, substring_at, enumerate_ball
from hvindex.mih import MihIndex, QueryStats
from hvindex.simhash import ProjectionBank, binarize, estimate_cosine, collision_probability

__all__ = [
    "BitCode",
    "CodeSet",
    "Substring",
    "hamming",
    "substring_at",
    "enumerate_ball",
    "MihIndex",
    "QueryStats",
    "ProjectionBank",
    "binarize",
    "estimate_cosine",
    "collision_probability",
]

__version__ = "0.1.0"
