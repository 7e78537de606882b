"""k-same obscuration over an arbitrary feature space.

Each pass takes the lowest remaining record id as the anchor, gathers its k
nearest remaining neighbours (itself included, Euclidean distance, ties to
the lower id), and replaces all k with their mean. When fewer than k records
remain they form the final group together.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from .image import Image

DEFAULT_K = 10


@dataclass(frozen=True)
class FeatureRecord:
    id: int
    identity: Hashable
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64).reshape(-1))


@dataclass
class KSameResult:
    obscured: dict = field(default_factory=dict)  # record id -> averaged vector
    groups: list = field(default_factory=list)  # lists of record ids, in formation order

    def group_of(self, record_id):
        for g in self.groups:
            if record_id in g:
                return g
        raise KeyError(record_id)


def k_same(records: Sequence[FeatureRecord], k: int = DEFAULT_K) -> KSameResult:
    if not records:
        raise ValueError("k_same needs at least one record")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    dims = {r.features.shape for r in records}
    if len(dims) != 1:
        raise ValueError(f"records have differing feature dimensionality: {sorted(dims)}")
    ordered = sorted(records, key=lambda r: r.id)
    ids = np.array([r.id for r in ordered])
    if len(set(ids.tolist())) != len(ids):
        raise ValueError("record ids must be unique")
    feats = np.stack([r.features for r in ordered])
    remaining = np.arange(len(ordered))
    result = KSameResult()
    while remaining.size:
        kk = min(k, remaining.size)
        anchor = feats[remaining[0]]
        dist = np.sum((feats[remaining] - anchor) ** 2, axis=1)
        # primary key distance, secondary key id
        chosen = remaining[np.lexsort((ids[remaining], dist))[:kk]]
        chosen.sort()
        centroid = feats[chosen].mean(axis=0)
        group = [ordered[i].id for i in chosen]
        result.groups.append(group)
        for rid in group:
            result.obscured[rid] = centroid
        remaining = np.setdiff1d(remaining, chosen, assume_unique=True)
    return result


def k_same_images(images: Sequence[Image], k: int = DEFAULT_K) -> list[Image]:
    """Pixel-space k-same: each image is replaced by the mean of its group."""
    if not images:
        return []
    shapes = {(img.shape, img.color_space) for img in images}
    if len(shapes) != 1:
        raise ValueError("k_same_images needs images of identical size and colour space")
    records = [FeatureRecord(i, None, img.flatten()) for i, img in enumerate(images)]
    result = k_same(records, k)
    template = images[0]
    return [template.with_data(result.obscured[i].reshape(template.shape)) for i in range(len(images))]


def check_k_anonymity_precondition(records) -> list:
    """Identities that occur more than once (k-anonymity then no longer holds).

    Accepts FeatureRecords or bare identity labels; result is in first-seen order.
    """
    labels = [r.identity if isinstance(r, FeatureRecord) else r for r in records]
    counts = Counter(labels)
    seen, out = set(), []
    for lab in labels:
        if counts[lab] > 1 and lab not in seen:
            seen.add(lab)
            out.append(lab)
    return out


class GenerativeKSame:
    """k-same over attribute/landmark vectors feeding a face generator.

    No generator ships with this package; pass a callable mapping an averaged
    attribute vector to an Image. Without one, ``obscure`` raises.
    """

    def __init__(self, name: str, k: int = DEFAULT_K, generator: Optional[Callable[[np.ndarray], Image]] = None):
        self.name = name
        self.k = k
        self.generator = generator

    def obscure(self, attributes: Sequence[np.ndarray]) -> list[Image]:
        if self.generator is None:
            raise NotImplementedError(f"{self.name} needs a generator hook; none is bundled")
        records = [FeatureRecord(i, None, a) for i, a in enumerate(attributes)]
        result = k_same(records, self.k)
        return [self.generator(result.obscured[i]) for i in range(len(records))]
