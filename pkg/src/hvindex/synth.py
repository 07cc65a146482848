"""Synthetic genuine/imposter code sets with a class structure.

Each class gets a uniformly random center code; every sample of the class is
the center with each bit flipped independently with probability ``p_g``.
Samples are laid out class-major, sample-minor, and the first samples of
each class form the gallery while the rest become probes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hvindex.bitcode import MAX_WIDTH, BitCode, CodeSet
from hvindex.errors import DomainError
from hvindex.rng import Stream

GALLERY_FRACTION = 0.4
DEFAULT_FLIP_PROB = 0.035


@dataclass(frozen=True)
class Preset:
    classes: int
    total: int
    gallery: int


# Class counts and gallery/probe sizes of the four evaluation databases.
PRESETS = {
    "iitk": Preset(classes=2042, total=20420, gallery=8168),
    "interval": Preset(classes=349, total=2555, gallery=1022),
    "iitd": Preset(classes=224, total=1120, gallery=450),
    "lamp": Preset(classes=819, total=15660, gallery=6264),
}


@dataclass(frozen=True)
class SynthSpec:
    classes: int
    samples_per_class: int | tuple[int, ...]
    width: int = 512
    genuine_flip_prob: float = DEFAULT_FLIP_PROB
    seed: int = 0
    gallery_fraction: float = GALLERY_FRACTION
    gallery_size: int | None = None

    def __post_init__(self):
        if self.classes < 2:
            raise DomainError(f"need at least 2 classes, got {self.classes}")
        if not 1 <= self.width <= MAX_WIDTH:
            raise DomainError(f"width must lie in 1..{MAX_WIDTH}")
        if not 0.0 <= self.genuine_flip_prob < 0.5:
            raise DomainError(f"genuine_flip_prob must lie in [0, 0.5), got {self.genuine_flip_prob}")
        if not 0.0 <= self.gallery_fraction <= 1.0:
            raise DomainError("gallery_fraction must lie in [0, 1]")
        counts = self.class_counts()
        if len(counts) != self.classes or min(counts) < 1:
            raise DomainError("every class needs at least one sample")
        if self.gallery_size is not None and not 0 <= self.gallery_size <= sum(counts):
            raise DomainError("gallery_size exceeds the number of samples")

    @classmethod
    def from_preset(cls, name: str, **overrides) -> SynthSpec:
        try:
            p = PRESETS[name]
        except KeyError:
            raise DomainError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        base, extra = divmod(p.total, p.classes)
        counts = tuple(base + (c < extra) for c in range(p.classes))
        spc = counts[0] if extra == 0 else counts
        return cls(classes=p.classes, samples_per_class=spc, gallery_size=p.gallery, **overrides)

    def class_counts(self) -> list[int]:
        if isinstance(self.samples_per_class, int):
            return [self.samples_per_class] * self.classes
        return list(self.samples_per_class)

    def gallery_counts(self) -> list[int]:
        """Per-class gallery sizes, apportioned by largest remainder."""
        counts = self.class_counts()
        total = sum(counts)
        target = self.gallery_size if self.gallery_size is not None else round(self.gallery_fraction * total)
        exact = [c * target / total for c in counts]
        out = [int(e) for e in exact]
        order = sorted(range(len(counts)), key=lambda c: (-(exact[c] - out[c]), c))
        for c in order[: target - sum(out)]:
            out[c] += 1
        return out

    def expected_genuine_distance(self) -> float:
        p = self.genuine_flip_prob
        return 2 * p * (1 - p) * self.width


def generate(spec: SynthSpec) -> tuple[CodeSet, CodeSet]:
    """Gallery and probe sets for ``spec``; identical output for identical specs."""
    stream = Stream(spec.seed)
    k = spec.width
    n_bytes = (k + 7) // 8
    gallery = CodeSet(k)
    probes = CodeSet(k)
    counts = spec.class_counts()
    g_counts = spec.gallery_counts()
    for label, (n, n_g) in enumerate(zip(counts, g_counts)):
        center = stream.bits(k)
        flips = stream.uniform(n * k).reshape(n, k) < spec.genuine_flip_prob
        samples = np.packbits(center ^ flips, axis=1, bitorder="little")
        for i in range(n):
            code = BitCode(k, int.from_bytes(samples[i, :n_bytes].tobytes(), "little"))
            (gallery if i < n_g else probes).append(code, label)
    return gallery, probes
