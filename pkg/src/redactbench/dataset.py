"""Identity-labelled image collections, split policies and a synthetic face stand-in."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Hashable, Optional, Sequence

import numpy as np

from .image import ColorSpace, Image, load_png, resize_nearest

SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (6, 2, 2)
DEFAULT_SIDE = 128


@dataclass(frozen=True)
class Item:
    image: Image
    identity: Hashable
    split: str = "train"
    source: str = ""


@dataclass
class LabeledDataset:
    items: list = field(default_factory=list)

    def __post_init__(self):
        for it in self.items:
            if it.split not in SPLITS:
                raise ValueError(f"unknown split tag {it.split!r}")

    def __len__(self):
        return len(self.items)

    @property
    def identities(self) -> list:
        return sorted({it.identity for it in self.items}, key=str)

    def subset(self, split: str) -> list:
        return [it for it in self.items if it.split == split]

    def images(self, split: Optional[str] = None) -> list:
        return [it.image for it in self.items if split is None or it.split == split]

    def labels(self, split: Optional[str] = None) -> list:
        return [it.identity for it in self.items if split is None or it.split == split]

    def by_identity(self, split: Optional[str] = None) -> dict:
        out = {}
        for it in self.items:
            if split is None or it.split == split:
                out.setdefault(it.identity, []).append(it)
        return out

    def restrict(self, identities) -> LabeledDataset:
        keep = set(identities)
        return LabeledDataset([it for it in self.items if it.identity in keep])


def _split_counts(n, ratios):
    total = sum(ratios)
    n_val = n * ratios[1] // total
    n_test = n * ratios[2] // total
    return n - n_val - n_test, n_val, n_test


def _assign(order, counts):
    tags = {}
    n_train, n_val, _ = counts
    for rank, key in enumerate(order):
        tags[key] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return tags


def split_by_image(ds: LabeledDataset, ratios: Sequence[int] = DEFAULT_RATIOS, seed: int = 0) -> LabeledDataset:
    """Split each identity's images train/val/test; remainders go to train."""
    if not ds.items:
        raise ValueError("cannot split an empty dataset")
    groups = {}
    for i, it in enumerate(ds.items):
        groups.setdefault(it.identity, []).append(i)
    tags = {}
    for k, ident in enumerate(sorted(groups, key=str)):
        idx = groups[ident]
        if len(idx) < 3:
            warnings.warn(f"identity {ident!r} has {len(idx)} image(s); all assigned to train")
            tags.update({i: "train" for i in idx})
            continue
        rng = np.random.default_rng([seed, k])
        order = [idx[j] for j in rng.permutation(len(idx))]
        tags.update(_assign(order, _split_counts(len(idx), ratios)))
    return LabeledDataset([replace(it, split=tags[i]) for i, it in enumerate(ds.items)])


def split_by_identity(ds: LabeledDataset, ratios: Sequence[int] = DEFAULT_RATIOS, seed: int = 0) -> LabeledDataset:
    """Split identities (not images) train/val/test; an identity's images share its split."""
    idents = ds.identities
    if len(idents) < 3:
        raise ValueError(f"split_by_identity needs at least 3 identities, got {len(idents)}")
    rng = np.random.default_rng(seed)
    order = [idents[j] for j in rng.permutation(len(idents))]
    tags = _assign(order, _split_counts(len(idents), ratios))
    return LabeledDataset([replace(it, split=tags[it.identity]) for it in ds.items])


# --- synthetic identities -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticParams:
    n_ids: int = 32
    per_id: int = 12
    side: int = DEFAULT_SIDE
    seed: int = 0
    noise: float = 0.05
    max_shift: int = 2
    n_modes: int = 6
    max_freq: int = 6
    color: bool = True


def _identity_modes(rng, p: SyntheticParams):
    modes = []
    for _ in range(p.n_modes):
        while True:
            fx, fy = rng.integers(-p.max_freq, p.max_freq + 1, size=2)
            if fx or fy:
                break
        amp = rng.uniform(0.04, 0.10)
        phase = rng.uniform(0, 2 * np.pi)
        tint = rng.uniform(0.4, 1.0, size=3) if p.color else np.ones(1)
        modes.append((fx, fy, amp, phase, tint))
    level = rng.uniform(0.35, 0.65, size=3 if p.color else 1)
    return level, modes


def _render(level, modes, side, dx=0, dy=0):
    y, x = np.mgrid[0:side, 0:side].astype(np.float64)
    x -= dx
    y -= dy
    out = np.broadcast_to(level[:, None, None], (len(level), side, side)).copy()
    for fx, fy, amp, phase, tint in modes:
        wave = amp * np.cos(2 * np.pi * (fx * x + fy * y) / side + phase)
        out += tint[:, None, None] * wave
    return out


def generate_synthetic(
    n_ids: int = 32,
    per_id: int = 12,
    side: int = DEFAULT_SIDE,
    seed: int = 0,
    noise: float = 0.05,
    max_shift: int = 2,
    color: bool = True,
    **extra,
) -> LabeledDataset:
    """Seeded identities built from a few low-frequency cosine modes each.

    Sample 0 of every identity is its unshifted base; later samples are
    translated by up to ``max_shift`` pixels. Gaussian pixel noise of std
    ``noise`` is added to all samples, then values are clamped to [0, 1].
    """
    if n_ids < 2 or per_id < 1 or side < 8 or noise < 0 or max_shift < 0:
        raise ValueError("invalid synthetic dataset parameters")
    p = SyntheticParams(n_ids, per_id, side, seed, noise, max_shift, color=color, **extra)
    items = []
    for ident in range(n_ids):
        rng = np.random.default_rng([seed, ident])
        level, modes = _identity_modes(rng, p)
        for j in range(per_id):
            dx, dy = (0, 0) if j == 0 else rng.integers(-max_shift, max_shift + 1, size=2)
            arr = _render(level, modes, side, dx, dy)
            if noise > 0:
                arr = arr + rng.normal(0.0, noise, size=arr.shape)
            img = Image(np.clip(arr, 0.0, 1.0), ColorSpace.RGB if color else ColorSpace.GRAY)
            items.append(Item(img, f"id{ident:03d}", "train", f"synthetic:{ident}:{j}"))
    return LabeledDataset(items)


# --- folders and manifests ---------------------------------------------------------


def load_folder(path, side: int = DEFAULT_SIDE) -> LabeledDataset:
    """Load ``<root>/<identity>/<image>.png``; unreadable or misplaced entries are skipped with a warning."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    items = []
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            warnings.warn(f"ignoring {entry}: files must live in an identity subfolder")
            continue
        for f in sorted(entry.iterdir()):
            if f.is_dir():
                warnings.warn(f"ignoring nested folder {f}")
                continue
            if f.suffix.lower() != ".png":
                warnings.warn(f"skipping non-PNG file {f}")
                continue
            try:
                img = load_png(f)
            except (OSError, ValueError) as exc:
                warnings.warn(f"skipping unreadable image {f}: {exc}")
                continue
            if (img.width, img.height) != (side, side):
                img = resize_nearest(img, side, side)
            items.append(Item(img, entry.name, "train", str(f)))
    if not items:
        raise ValueError(f"no images found under {root}")
    return LabeledDataset(items)


def write_manifest(ds: LabeledDataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["path", "identity", "split"])
        for it in ds.items:
            w.writerow([it.source, it.identity, it.split])


def read_manifest(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))
