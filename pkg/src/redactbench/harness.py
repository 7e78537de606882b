"""Attacks on obscured faces under three threat models, and their metrics.

Threat models differ only in the attacker's training data:

* T1 trains on clear images only.
* T2 adds obscured copies made with *other* methods (the training pool).
* T3 adds obscured copies made with the exact method and setting under test.

Identification reports top-1 accuracy of a PCA + softmax identifier on
obscured test images. Verification pairs clear and obscured test images in
mini-batches and reports ROC AUC over repeated draws. Reconstruction fits a
reconstructor on (obscured, clear) pairs of training identities and scores
unseen identities by MSE and by a clear-trained identifier.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy.stats import rankdata

from .dataset import LabeledDataset, split_by_identity
from .filters import STANDARD_SIZES
from .image import Image
from .methods import TRADITIONAL, ObscurationSpec, obscure_batch
from .recognition import (
    DEFAULT_DIM,
    DEFAULT_MARGIN,
    DEFAULT_SCALE,
    Identifier,
    VerificationModel,
    as_matrix,
    choose_threshold,
    pairwise_angular,
    pca_fit_inplace,
    train_arcface,
    train_softmax_identifier,
)

log = logging.getLogger(__name__)

THREAT_MODELS = ("T1", "T2", "T3")
ATTACKS = ("identification", "verification", "reconstruction")


def derive_seed(master: int, *keys) -> int:
    """Stable 32-bit seed from a master seed and any string/int keys."""
    words = [int(master) & 0xFFFFFFFF] + [zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# --- metrics --------------------------------------------------------------------


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties count half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both positive and negative examples")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def mse(a: Image, b: Image) -> float:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a.data - b.data) ** 2))


# --- threat models --------------------------------------------------------------


@dataclass(frozen=True)
class ThreatModel:
    tag: str
    method_under_test: ObscurationSpec
    training_pool: tuple = ()

    def __post_init__(self):
        if self.tag not in THREAT_MODELS:
            raise ValueError(f"unknown threat model {self.tag!r}")
        object.__setattr__(self, "training_pool", tuple(self.training_pool))
        if self.tag == "T2":
            if not self.training_pool:
                raise ValueError("T2 needs a non-empty training pool")
            if self.method_under_test in self.training_pool:
                raise ValueError("T2 training pool must exclude the method under test")

    @classmethod
    def default(cls, tag: str, spec: ObscurationSpec, pool_settings: Sequence[int] = STANDARD_SIZES) -> ThreatModel:
        """T2 pool: the two other traditional methods at the same size for a
        traditional method; all three traditional methods at every pool size otherwise."""
        if tag == "T1":
            return cls(tag, spec)
        if tag == "T3":
            return cls(tag, spec, (spec,))
        if spec.traditional:
            pool = tuple(ObscurationSpec(m, spec.setting) for m in TRADITIONAL if m != spec.method)
        else:
            pool = tuple(ObscurationSpec(m, s) for m in TRADITIONAL for s in pool_settings)
        return cls(tag, spec, pool)

    @property
    def attacker_view(self) -> tuple:
        """Obscurations the attacker has seen (clear is implicit)."""
        return () if self.tag == "T1" else self.training_pool


class ObscuredCache:
    """Obscured copies of each split, computed once per (method, setting)."""

    def __init__(self, ds: LabeledDataset, master_seed: int = 0):
        self.ds = ds
        self.master_seed = master_seed
        self._store = {}

    def clear(self, split: str) -> list[Image]:
        return self.ds.images(split)

    def get(self, spec: ObscurationSpec, split: str) -> list[Image]:
        if spec.method == "clear":
            return self.clear(split)
        key = (spec, split)
        if key not in self._store:
            seed = derive_seed(self.master_seed, "obscure", spec.label, split)
            self._store[key] = obscure_batch(spec, self.clear(split), seed)
        return self._store[key]


def _assemble(ds, view, cache):
    clear = ds.images("train")
    if not clear:
        raise ValueError("dataset has no train split")
    labels = ds.labels("train")
    images, out_labels = list(clear), list(labels)
    for spec in view:
        images += cache.get(spec, "train")
        out_labels += labels
    return images, out_labels


def build_training_set(ds: LabeledDataset, tm: ThreatModel, cache: Optional[ObscuredCache] = None):
    """Attacker training images and labels: clear train split plus the threat model's obscured copies."""
    return _assemble(ds, tm.attacker_view, cache or ObscuredCache(ds))


# --- attacker models ---------------------------------------------------------


@dataclass
class AttackerConfig:
    embedding_dim: int = DEFAULT_DIM
    arcface_s: float = DEFAULT_SCALE
    arcface_m: float = DEFAULT_MARGIN
    epochs: int = 20
    lr: float = 0.1
    milestones: tuple = (6, 11, 16)
    batch_size: int = 128
    weight_decay: float = 5e-4


@dataclass
class Attacker:
    identifier: Identifier
    verifier: VerificationModel
    arcface_losses: list = field(default_factory=list)


def train_attacker(images, labels, cfg: AttackerConfig, seed: int, with_verifier: bool = True) -> Attacker:
    X = as_matrix(images)
    d = max(1, min(cfg.embedding_dim, len(X) - 1))
    basis, emb = pca_fit_inplace(X, d, seed=seed)
    del X
    head = train_softmax_identifier(emb, labels, seed=seed)
    verifier = VerificationModel(basis)
    losses = []
    if with_verifier:
        res = train_arcface(
            emb, labels, cfg.arcface_s, cfg.arcface_m, cfg.epochs, cfg.lr, cfg.milestones,
            cfg.batch_size, cfg.weight_decay, seed=seed,
        )
        verifier.arcface = res.params
        losses = res.epoch_losses
    return Attacker(Identifier(basis, head), verifier, losses)


# --- identification -------------------------------------------------------------


def identification_attack(identifier: Identifier, obscured_test: Sequence[Image], labels: Sequence) -> float:
    """Top-1 accuracy of ``identifier`` on obscured test images."""
    return identifier.accuracy(obscured_test, labels)


def run_identification(ds, tm, cache=None, cfg=None, seed=0) -> float:
    """Train an attacker for ``tm`` and report its top-1 accuracy on the obscured test split."""
    cache = cache or ObscuredCache(ds, seed)
    cfg = cfg or AttackerConfig()
    images, labels = build_training_set(ds, tm, cache)
    attacker = train_attacker(images, labels, cfg, seed, with_verifier=False)
    return identification_attack(attacker.identifier, cache.get(tm.method_under_test, "test"), ds.labels("test"))


# --- verification ----------------------------------------------------------------


def _pair_indices(by_id, rng, n_ids):
    idents = sorted(by_id, key=str)
    chosen = [idents[i] for i in sorted(rng.choice(len(idents), size=n_ids, replace=False))]
    clear_idx, obs_idx = [], []
    if any(len(by_id[i]) < 2 for i in chosen):
        warnings.warn("some identities have a single test image; it is used for both sides of its pair")
    for ident in chosen:
        pool = by_id[ident]
        if len(pool) >= 2:
            a, b = rng.choice(len(pool), size=2, replace=False)
        else:
            a = b = 0
        clear_idx.append(pool[a])
        obs_idx.append(pool[b])
    return clear_idx, obs_idx


def verification_attack(
    model,
    clear_images: Sequence[Image],
    obscured_images: Sequence[Image],
    labels: Sequence,
    repeats: int = 10,
    n_identities: int = 64,
    seed: int = 0,
):
    """Mean and std of ROC AUC over ``repeats`` mini-batches.

    Each batch draws ``n_identities`` identities with two images each; one is
    shown clear, the other obscured. Every clear x obscured pair is scored by
    negative angular distance; pairs of the same identity are genuine.
    Returns (auc_mean, auc_std, per-repeat AUCs).
    """
    by_id = {}
    for i, lab in enumerate(labels):
        by_id.setdefault(lab, []).append(i)
    if len(by_id) < 2:
        raise ValueError("verification needs at least two identities")
    if len(by_id) < n_identities:
        warnings.warn(f"only {len(by_id)} identities available; shrinking batch from {n_identities}")
        n_identities = len(by_id)
    emb_clear = np.asarray(model.embed_many(list(clear_images)))
    emb_obs = np.asarray(model.embed_many(list(obscured_images)))
    aucs = []
    genuine = np.eye(n_identities, dtype=bool).ravel()
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        ci, oi = _pair_indices(by_id, rng, n_identities)
        dist = pairwise_angular(emb_clear[ci], emb_obs[oi])
        aucs.append(roc_auc(-dist.ravel(), genuine))
    aucs = np.array(aucs)
    return float(aucs.mean()), float(aucs.std()), aucs.tolist()


def validation_threshold(model: VerificationModel, clear_val, view_val, labels) -> float:
    """Threshold maximizing verification accuracy on validation clear x view pairs."""
    labels = np.asarray(labels)
    dist = pairwise_angular(model.embed_many(clear_val), model.embed_many(view_val))
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)  # pair distinct images only
    off = ~np.eye(len(labels), dtype=bool)
    genuine, impostor = dist[same], dist[off & ~same]
    if genuine.size == 0 or impostor.size == 0:
        return model.threshold
    return choose_threshold(genuine, impostor)[0]


# --- reconstruction -------------------------------------------------------------


class Reconstructor(Protocol):
    def fit(self, obscured: Sequence[Image], clear: Sequence[Image]) -> "Reconstructor": ...

    def __call__(self, img: Image) -> Image: ...


class IdentityReconstructor:
    """Returns the obscured image unchanged."""

    def fit(self, obscured, clear):
        return self

    def __call__(self, img):
        return img


def _tiles(data, patch, context):
    """(C, H, W) -> (n_tiles, C * (patch + 2 context)^2) with edge padding."""
    c, h, w = data.shape
    ph, pw = -(-h // patch) * patch, -(-w // patch) * patch
    padded = np.pad(data, ((0, 0), (context, ph - h + context), (context, pw - w + context)), mode="edge")
    size = patch + 2 * context
    win = np.lib.stride_tricks.sliding_window_view(padded, (size, size), axis=(1, 2))[:, ::patch, ::patch]
    # win: (C, rows, cols, size, size)
    return win.transpose(1, 2, 0, 3, 4).reshape(-1, c * size * size)


class RidgeReconstructor:
    """One linear map, shared by all positions, from an obscured patch (plus a
    context border) to the clear patch; closed-form ridge with an unpenalized
    intercept."""

    def __init__(self, patch: int = 8, context: int = 2, lam: float = 1e-2):
        if lam <= 0:
            raise ValueError("ridge penalty must be positive")
        self.patch = patch
        self.context = context
        self.lam = lam
        self.coef = None

    def fit(self, obscured, clear):
        X = np.concatenate([_tiles(o.data, self.patch, self.context) for o in obscured])
        Y = np.concatenate([_tiles(c.data, self.patch, 0) for c in clear])
        if len(X) < 100:
            raise ValueError(f"need at least 100 patch samples, got {len(X)}")
        self.x_mean = X.mean(axis=0)
        self.y_mean = Y.mean(axis=0)
        X -= self.x_mean
        Y -= self.y_mean
        gram = X.T @ X
        gram[np.diag_indices_from(gram)] += self.lam
        self.coef = np.linalg.solve(gram, X.T @ Y)
        return self

    def __call__(self, img: Image) -> Image:
        if self.coef is None:
            raise RuntimeError("reconstructor is not fitted")
        c, h, w = img.shape
        p = self.patch
        rows, cols = -(-h // p), -(-w // p)
        pred = (_tiles(img.data, p, self.context) - self.x_mean) @ self.coef + self.y_mean
        out = pred.reshape(rows, cols, c, p, p).transpose(2, 0, 3, 1, 4).reshape(c, rows * p, cols * p)
        return img.with_data(out[:, :h, :w])


RECONSTRUCTORS = {"identity": IdentityReconstructor, "ridge": RidgeReconstructor}


def _gallery_probe_split(ds: LabeledDataset, seed: int):
    held_out = {}
    for it in ds.items:
        if it.split != "train":
            held_out.setdefault(it.identity, []).append(it)
    gallery, probe = [], []
    for k, (ident, items) in enumerate(sorted(held_out.items(), key=lambda kv: str(kv[0]))):
        order = np.random.default_rng([seed, k]).permutation(len(items))
        half = (len(items) + 1) // 2
        gallery += [items[j] for j in order[:half]]
        probe += [items[j] for j in order[half:]]
    return gallery, probe


@dataclass
class ReconstructionResult:
    mse: float
    recon_top1: float
    n_probe: int


def reconstruction_attack(
    ds: LabeledDataset,
    spec: ObscurationSpec,
    reconstructor: Reconstructor,
    cfg: Optional[AttackerConfig] = None,
    seed: int = 0,
) -> ReconstructionResult:
    """Fit ``reconstructor`` on training identities, evaluate on unseen ones.

    ``ds`` must be split by identity. The reconstructor has nothing to tune,
    so val and test identities are both held out. Each held-out identity's
    images are halved into a gallery, used only to train the clear-image
    identifier, and probes that are obscured, reconstructed and scored.
    """
    cfg = cfg or AttackerConfig()
    train_ids = {it.identity for it in ds.subset("train")}
    held_ids = {it.identity for it in ds.items if it.split != "train"}
    if not train_ids or not held_ids or train_ids & held_ids:
        raise ValueError("reconstruction needs a dataset split by identity")
    obs_seed = derive_seed(seed, "obscure", spec.label)
    train_clear = ds.images("train")
    reconstructor.fit(obscure_batch(spec, train_clear, derive_seed(obs_seed, "train")), train_clear)

    gallery, probe = _gallery_probe_split(ds, seed)
    if not probe:
        raise ValueError("held-out identities need at least two images each")
    identifier = Identifier.fit([it.image for it in gallery], [it.identity for it in gallery], cfg.embedding_dim, seed)
    clear_probe = [it.image for it in probe]
    recon = [reconstructor(o) for o in obscure_batch(spec, clear_probe, derive_seed(obs_seed, "test"))]
    err = float(np.mean([mse(r, c) for r, c in zip(recon, clear_probe)]))
    top1 = identifier.accuracy(recon, [it.identity for it in probe])
    return ReconstructionResult(err, top1, len(probe))


# --- the evaluation matrix -------------------------------------------------------


@dataclass
class AttackReport:
    method: str
    setting: str
    tm: str
    attack: str
    seed: int
    top1: Optional[float] = None
    auc_mean: Optional[float] = None
    auc_std: Optional[float] = None
    mse: Optional[float] = None
    recon_top1: Optional[float] = None
    runtime: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def metrics(self) -> list:
        """(metric, value, std) rows in a fixed order."""
        if self.error is not None:
            return [("error", None, None)]
        if self.attack == "identification":
            return [("top1", self.top1, None)]
        if self.attack == "verification":
            return [("auc", self.auc_mean, self.auc_std)]
        return [("mse", self.mse, None), ("recon_top1", self.recon_top1, None)]


@dataclass
class MatrixConfig:
    specs: list
    threat_models: tuple = THREAT_MODELS
    attacks: tuple = ("identification", "verification")
    master_seed: int = 0
    attacker: AttackerConfig = field(default_factory=AttackerConfig)
    verification_repeats: int = 10
    verification_identities: int = 64
    t2_pool_settings: Optional[tuple] = None
    reconstructor: str = "ridge"
    ridge_lambda: float = 1e-2

    def __post_init__(self):
        for tm in self.threat_models:
            if tm not in THREAT_MODELS:
                raise ValueError(f"unknown threat model {tm!r}")
        for a in self.attacks:
            if a not in ATTACKS:
                raise ValueError(f"unknown attack {a!r}")
        if self.reconstructor not in RECONSTRUCTORS:
            raise ValueError(f"unknown reconstructor {self.reconstructor!r}")

    def pool_settings(self) -> tuple:
        if self.t2_pool_settings:
            return tuple(self.t2_pool_settings)
        sizes = sorted({s.setting for s in self.specs if s.traditional})
        return tuple(sizes) or STANDARD_SIZES

    def make_reconstructor(self):
        if self.reconstructor == "ridge":
            return RidgeReconstructor(lam=self.ridge_lambda)
        return IdentityReconstructor()


class MatrixRunner:
    """Evaluates cells, sharing obscured images and trained attackers across them."""

    def __init__(self, ds: LabeledDataset, cfg: MatrixConfig, recon_ds: Optional[LabeledDataset] = None):
        self.ds = ds
        self.cfg = cfg
        self.recon_ds = recon_ds
        self.cache = ObscuredCache(ds, cfg.master_seed)
        self._attackers = {}

    def attacker(self, view: tuple) -> Attacker:
        """Attacker trained on clear train images plus the given obscurations (cached)."""
        if view not in self._attackers:
            seed = derive_seed(self.cfg.master_seed, "attacker", *[s.label for s in view])
            images, labels = _assemble(self.ds, view, self.cache)
            want_verifier = "verification" in self.cfg.attacks
            att = train_attacker(images, labels, self.cfg.attacker, seed, with_verifier=want_verifier)
            del images
            if want_verifier:
                val_view = self.cache.get(view[0], "val") if view else self.cache.clear("val")
                if self.ds.images("val"):
                    att.verifier.threshold = validation_threshold(
                        att.verifier, self.cache.clear("val"), val_view, self.ds.labels("val")
                    )
            self._attackers[view] = att
        return self._attackers[view]

    def cell_seed(self, spec, tm, attack) -> int:
        return derive_seed(self.cfg.master_seed, spec.label, tm, attack)

    def run_cell(self, spec: ObscurationSpec, tm_tag: str, attack: str) -> AttackReport:
        seed = self.cell_seed(spec, tm_tag, attack)
        rep = AttackReport(spec.method, spec.setting_label, tm_tag, attack, seed)
        start = time.perf_counter()
        try:
            if attack == "reconstruction":
                ds = self.recon_ds or split_by_identity(self.ds, seed=derive_seed(self.cfg.master_seed, "recon-split"))
                res = reconstruction_attack(ds, spec, self.cfg.make_reconstructor(), self.cfg.attacker, seed)
                rep.mse, rep.recon_top1 = res.mse, res.recon_top1
            else:
                tm = ThreatModel.default(tm_tag, spec, self.cfg.pool_settings())
                att = self.attacker(tm.attacker_view)
                obscured = self.cache.get(spec, "test")
                if attack == "identification":
                    rep.top1 = identification_attack(att.identifier, obscured, self.ds.labels("test"))
                else:
                    with warnings.catch_warnings(record=True) as caught:
                        warnings.simplefilter("always")
                        rep.auc_mean, rep.auc_std, _ = verification_attack(
                            att.verifier, self.cache.clear("test"), obscured, self.ds.labels("test"),
                            self.cfg.verification_repeats, self.cfg.verification_identities, seed,
                        )
                    for msg in dict.fromkeys(str(w.message) for w in caught):
                        log.debug("%s/%s: %s", spec.label, tm_tag, msg)
        except Exception as exc:  # recorded in the report; the run continues
            log.warning("cell %s/%s/%s failed: %s", spec.label, tm_tag, attack, exc)
            rep.error = f"{type(exc).__name__}: {exc}"
        rep.runtime = time.perf_counter() - start
        return rep

    def cells(self):
        for spec in self.cfg.specs:
            for attack in self.cfg.attacks:
                if attack == "reconstruction":
                    yield spec, "T1", attack
                    continue
                for tm in self.cfg.threat_models:
                    yield spec, tm, attack

    def run(self, progress=None) -> list[AttackReport]:
        reports = []
        for spec, tm, attack in self.cells():
            rep = self.run_cell(spec, tm, attack)
            if progress:
                progress(rep)
            reports.append(rep)
        return reports


def run_matrix(ds: LabeledDataset, cfg: MatrixConfig, recon_ds: Optional[LabeledDataset] = None, progress=None):
    """Evaluate every (method/setting, threat model, attack) cell.

    Reconstruction runs once per method/setting, under T1 only. ``ds`` must
    already be split by image; ``recon_ds`` (split by identity) defaults to a
    seeded identity split of ``ds``.
    """
    return MatrixRunner(ds, cfg, recon_ds).run(progress)


def chance_level(ds: LabeledDataset) -> float:
    return 1.0 / max(1, len(ds.identities))


def nan_to_none(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x
