"""Desk-scale face recognition: PCA embeddings, ArcFace, softmax identification.

The PCA basis stands in for a deep backbone. ArcFace trains the auxiliary
projection weight ``W`` (one column per identity) on fixed embeddings;
verification compares embeddings by angular distance against a threshold
chosen on validation pairs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .image import Image

DEFAULT_DIM = 32
DEFAULT_SCALE = 8.0
DEFAULT_MARGIN = 0.5
SINGULAR_GUARD = 1e-6

# exact SVD below this many flops-ish (N * D * min(N, D)), randomized above
_EXACT_PCA_BUDGET = 3e10


class DegenerateGradientError(ArithmeticError):
    """Target cosine too close to +-1: the arccos derivative diverges there."""


def as_matrix(images) -> np.ndarray:
    """Stack images (or vectors) into an (N, D) float64 matrix."""
    if isinstance(images, np.ndarray):
        return np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    return np.stack([img.flatten() if isinstance(img, Image) else np.ravel(img) for img in images]).astype(np.float64)


@dataclass
class EmbeddingBasis:
    mean: np.ndarray
    components: np.ndarray  # (d, D), orthonormal rows
    variances: np.ndarray = None

    @property
    def d(self) -> int:
        return self.components.shape[0]

    def embed_many(self, images) -> np.ndarray:
        X = as_matrix(images)
        if X.shape[1] != self.mean.shape[0]:
            raise ValueError(f"input dimension {X.shape[1]} does not match basis {self.mean.shape[0]}")
        return (X - self.mean) @ self.components.T

    def reconstruct(self, coords) -> np.ndarray:
        return np.asarray(coords) @ self.components + self.mean


def _fix_signs(components):
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def pca_fit(images, d: int = DEFAULT_DIM, seed: int = 0, method: str = "auto") -> EmbeddingBasis:
    """Top-``d`` principal directions of the mean-centred flattened samples.

    ``method`` is "exact" (thin SVD), "randomized" (seeded subspace iteration)
    or "auto", which picks randomized only for large inputs.
    """
    X = as_matrix(images)
    if isinstance(images, np.ndarray):
        X = X.copy()
    return pca_fit_inplace(X, d, seed, method)[0]


def pca_fit_inplace(X: np.ndarray, d: int, seed: int = 0, method: str = "auto"):
    """Like :func:`pca_fit` but centres ``X`` in place; returns (basis, training embeddings)."""
    n, dim = X.shape
    if d < 1 or d > n or d > dim:
        raise ValueError(f"cannot extract {d} components from {n} samples of dimension {dim}")
    mean = X.mean(axis=0)
    X -= mean
    if method == "auto":
        method = "exact" if n * dim * min(n, dim) <= _EXACT_PCA_BUDGET else "randomized"
    if method == "exact":
        _, s, vt = np.linalg.svd(X, full_matrices=False)
    elif method == "randomized":
        rng = np.random.default_rng(seed)
        k = min(d + 10, n, dim)
        q, _ = np.linalg.qr(X @ rng.standard_normal((dim, k)))
        for _ in range(4):
            z, _ = np.linalg.qr(X.T @ q)
            q, _ = np.linalg.qr(X @ z)
        _, s, vt = np.linalg.svd(q.T @ X, full_matrices=False)
    else:
        raise ValueError(f"unknown PCA method {method!r}")
    comps = _fix_signs(vt[:d])
    basis = EmbeddingBasis(mean, comps, s[:d] ** 2 / max(n - 1, 1))
    return basis, X @ comps.T


def random_basis(dim: int, d: int, seed: int = 0) -> EmbeddingBasis:
    """Orthonormal basis drawn at random (an untrained backbone)."""
    g = np.random.default_rng(seed).standard_normal((dim, d))
    q, _ = np.linalg.qr(g)
    return EmbeddingBasis(np.full(dim, 0.5), _fix_signs(q.T), None)


def embed(img, basis: EmbeddingBasis) -> np.ndarray:
    return basis.embed_many([img])[0]


def angular_distance(x1, x2) -> float:
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    n1, n2 = np.linalg.norm(x1), np.linalg.norm(x2)
    if n1 == 0 or n2 == 0:
        raise ValueError("angular distance undefined for a zero vector")
    return float(np.arccos(np.clip(np.dot(x1, x2) / (n1 * n2), -1.0, 1.0)))


def pairwise_angular(A, B) -> np.ndarray:
    """Angular distances between every row of A and every row of B."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    na = np.linalg.norm(A, axis=1, keepdims=True)
    nb = np.linalg.norm(B, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("angular distance undefined for a zero vector")
    return np.arccos(np.clip((A / na) @ (B / nb).T, -1.0, 1.0))


# --- ArcFace ----------------------------------------------------------------


def _normalize_inputs(x, W, t):
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if not 0 <= t < W.shape[1]:
        raise IndexError(f"target {t} out of range for {W.shape[1]} classes")
    xn = np.linalg.norm(x)
    wn = np.linalg.norm(W, axis=0)
    if xn == 0 or np.any(wn == 0):
        raise ValueError("ArcFace needs a nonzero embedding and nonzero weight columns")
    return x, W, xn, wn


def _logsumexp(z, axis=-1):
    zmax = np.max(z, axis=axis, keepdims=True)
    return np.squeeze(zmax, axis) + np.log(np.sum(np.exp(z - zmax), axis=axis))


def arcface_loss(x, W, t: int, s: float = DEFAULT_SCALE, m: float = DEFAULT_MARGIN) -> float:
    x, W, xn, wn = _normalize_inputs(x, W, t)
    cos = np.clip((W / wn).T @ (x / xn), -1.0, 1.0)
    logits = s * cos
    logits[t] = s * math.cos(math.acos(cos[t]) + m)
    return float(_logsumexp(logits) - logits[t])


def arcface_grad(x, W, t: int, s: float = DEFAULT_SCALE, m: float = DEFAULT_MARGIN):
    """Analytic (dL/dx, dL/dW) of :func:`arcface_loss`."""
    x, W, xn, wn = _normalize_inputs(x, W, t)
    xh = x / xn
    Wh = W / wn
    cos = Wh.T @ xh
    ct = cos[t]
    if abs(ct) >= 1 - SINGULAR_GUARD:
        raise DegenerateGradientError(f"target cosine {ct!r} within {SINGULAR_GUARD} of +-1")
    theta = math.acos(ct)
    logits = s * cos
    logits[t] = s * math.cos(theta + m)
    p = np.exp(logits - _logsumexp(logits))
    dlogit = p.copy()
    dlogit[t] -= 1.0
    dcos = s * dlogit
    dcos[t] = dlogit[t] * s * math.sin(theta + m) / math.sin(theta)
    # d cos_j / d x = (wh_j - cos_j xh) / |x| ;  d cos_j / d w_j = (xh - cos_j wh_j) / |w_j|
    gx = (Wh @ dcos - np.dot(dcos, cos) * xh) / xn
    gW = (np.outer(xh, dcos) - Wh * (dcos * cos)) / wn
    return gx, gW


def arcface_batch(X, W, targets, s=DEFAULT_SCALE, m=DEFAULT_MARGIN, with_grad=True):
    """Mean ArcFace loss over rows of X and its gradient w.r.t. W.

    Target cosines are clamped to the singularity guard instead of raising.
    """
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets)
    xn = np.linalg.norm(X, axis=1, keepdims=True)
    wn = np.linalg.norm(W, axis=0, keepdims=True)
    Xh, Wh = X / xn, W / wn
    cos = np.clip(Xh @ Wh, -1.0, 1.0)
    rows = np.arange(len(X))
    ct = np.clip(cos[rows, targets], -1 + SINGULAR_GUARD, 1 - SINGULAR_GUARD)
    theta = np.arccos(ct)
    logits = s * cos
    logits[rows, targets] = s * np.cos(theta + m)
    lse = _logsumexp(logits, axis=1)
    loss = float(np.mean(lse - logits[rows, targets]))
    if not with_grad:
        return loss, None
    p = np.exp(logits - lse[:, None])
    p[rows, targets] -= 1.0
    dcos = s * p
    dcos[rows, targets] = p[rows, targets] * s * np.sin(theta + m) / np.sin(theta)
    dcos /= len(X)
    gW = (Xh.T @ dcos - Wh * np.sum(dcos * cos, axis=0, keepdims=True)) / wn
    return loss, gW


@dataclass
class ArcFaceParams:
    W: np.ndarray
    s: float = DEFAULT_SCALE
    m: float = DEFAULT_MARGIN
    classes: tuple = ()

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("scale s must be positive")
        if not 0 <= self.m < math.pi / 2:
            raise ValueError("margin m must lie in [0, pi/2)")

    @property
    def n(self) -> int:
        return self.W.shape[1]


@dataclass
class TrainResult:
    params: ArcFaceParams
    epoch_losses: list = field(default_factory=list)


def lr_at_epoch(epoch: int, lr: float, milestones: Sequence[int]) -> float:
    """Step schedule: divide by 10 at each milestone (epochs counted from 1)."""
    return lr * 0.1 ** sum(1 for mstone in milestones if epoch + 1 >= mstone)


def train_arcface(
    embeddings,
    labels,
    s: float = DEFAULT_SCALE,
    m: float = DEFAULT_MARGIN,
    epochs: int = 20,
    lr: float = 0.1,
    milestones: Sequence[int] = (6, 11, 16),
    batch_size: int = 128,
    weight_decay: float = 5e-4,
    seed: int = 0,
    W0: Optional[np.ndarray] = None,
) -> TrainResult:
    """Mini-batch SGD on W with fixed embeddings."""
    X = np.asarray(embeddings, dtype=np.float64)
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise ValueError("ArcFace training needs at least two identities")
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[lab] for lab in labels])
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((X.shape[1], len(classes))) if W0 is None else np.array(W0, dtype=np.float64)
    result = TrainResult(ArcFaceParams(W, s, m, classes))
    for epoch in range(epochs):
        step = lr_at_epoch(epoch, lr, milestones)
        order = rng.permutation(len(X))
        for start in range(0, len(X), batch_size):
            idx = order[start : start + batch_size]
            _, gW = arcface_batch(X[idx], W, y[idx], s, m)
            W -= step * (gW + weight_decay * W)
        result.epoch_losses.append(arcface_batch(X, W, y, s, m, with_grad=False)[0])
    result.params.W = W
    return result


# --- verification -------------------------------------------------------------


def _threshold_candidates(values):
    u = np.unique(values)
    mids = (u[:-1] + u[1:]) / 2
    return np.concatenate([[0.0], mids, [math.pi]])


def choose_threshold(genuine, impostor):
    """Cut on angular distance (<= means same person) maximizing accuracy.

    Candidates are 0, pi and the midpoints between adjacent distinct values;
    ties go to the smallest threshold. Returns (threshold, accuracy).
    """
    genuine = np.sort(np.asarray(genuine, dtype=np.float64))
    impostor = np.sort(np.asarray(impostor, dtype=np.float64))
    if genuine.size == 0 or impostor.size == 0:
        raise ValueError("need at least one genuine and one impostor distance")
    cands = _threshold_candidates(np.concatenate([genuine, impostor]))
    tp = np.searchsorted(genuine, cands, side="right")
    tn = impostor.size - np.searchsorted(impostor, cands, side="right")
    acc = (tp + tn) / (genuine.size + impostor.size)
    best = int(np.argmax(acc))
    return float(cands[best]), float(acc[best])


@dataclass
class VerificationModel:
    basis: EmbeddingBasis
    threshold: float = math.pi / 2
    arcface: Optional[ArcFaceParams] = None

    def __post_init__(self):
        if not 0 <= self.threshold <= math.pi:
            raise ValueError("threshold must lie in [0, pi]")

    def embed_many(self, images):
        return self.basis.embed_many(images)

    def distance(self, a, b) -> float:
        return angular_distance(embed(a, self.basis), embed(b, self.basis))

    def verify(self, clear, obscured) -> bool:
        return self.distance(clear, obscured) <= self.threshold

    def save(self, path):
        arrays = {"mean": self.basis.mean, "components": self.basis.components}
        meta = {"kind": "verification", "threshold": self.threshold}
        if self.arcface is not None:
            arrays["W"] = self.arcface.W
            meta.update(s=self.arcface.s, m=self.arcface.m, classes=list(map(str, self.arcface.classes)))
        np.savez(path, meta=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            basis = EmbeddingBasis(z["mean"], z["components"])
            arc = None
            if "W" in z:
                arc = ArcFaceParams(z["W"], meta["s"], meta["m"], tuple(meta["classes"]))
        return cls(basis, meta["threshold"], arc)


def verify(clear, obscured, model: VerificationModel) -> bool:
    return model.verify(clear, obscured)


class RandomEmbeddingModel:
    """Untrained scorer: every image gets a seeded random embedding, unrelated to its pixels."""

    def __init__(self, d: int = DEFAULT_DIM, seed: int = 0):
        self.d = d
        self._rng = np.random.default_rng(seed)

    def embed_many(self, images):
        return self._rng.standard_normal((len(images), self.d))


# --- softmax identification -------------------------------------------------


@dataclass
class SoftmaxIdentifier:
    """Multinomial logistic regression on standardized embeddings."""

    weights: np.ndarray
    bias: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    classes: tuple

    def logits(self, embeddings) -> np.ndarray:
        Z = (np.asarray(embeddings, dtype=np.float64) - self.center) / self.scale
        return Z @ self.weights + self.bias

    def predict(self, embeddings) -> list:
        idx = np.argmax(self.logits(embeddings), axis=1)
        return [self.classes[i] for i in idx]


def train_softmax_identifier(
    embeddings, labels, iterations: int = 400, lr: float = 0.5, l2: float = 1e-3, seed: int = 0
) -> SoftmaxIdentifier:
    """Full-batch gradient descent with Nesterov momentum from a zero start.

    ``seed`` is accepted for interface symmetry; the zero start makes the fit
    deterministic on its own.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    classes = tuple(sorted(set(labels), key=str))
    if len(classes) < 2:
        raise ValueError("identification needs at least two identities")
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[lab] for lab in labels])
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - center) / scale
    n, k = len(Z), len(classes)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    Wt = np.zeros((Z.shape[1], k))
    b = np.zeros(k)
    vW, vb = np.zeros_like(Wt), np.zeros_like(b)
    mu = 0.9
    for _ in range(iterations):
        lookW, lookb = Wt + mu * vW, b + mu * vb
        logits = Z @ lookW + lookb
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        gW = Z.T @ g + l2 * lookW
        gb = g.sum(axis=0)
        vW = mu * vW - lr * gW
        vb = mu * vb - lr * gb
        Wt += vW
        b += vb
    return SoftmaxIdentifier(Wt, b, center, scale, classes)


@dataclass
class Identifier:
    """PCA backbone plus softmax head: images in, identity labels out."""

    basis: EmbeddingBasis
    head: SoftmaxIdentifier

    @classmethod
    def fit(cls, images, labels, d: int = DEFAULT_DIM, seed: int = 0):
        X = as_matrix(images)
        if isinstance(images, np.ndarray):
            X = X.copy()
        d = min(d, len(X) - 1) if len(X) > 1 else 1
        basis, emb = pca_fit_inplace(X, d, seed=seed)
        return cls(basis, train_softmax_identifier(emb, labels, seed=seed))

    def predict(self, images) -> list:
        return self.head.predict(self.basis.embed_many(images))

    def accuracy(self, images, labels) -> float:
        pred = self.predict(images)
        return float(np.mean([p == t for p, t in zip(pred, labels)]))

    def save(self, path):
        np.savez(
            path,
            meta=np.array(json.dumps({"kind": "identifier", "classes": list(self.head.classes)})),
            mean=self.basis.mean,
            components=self.basis.components,
            weights=self.head.weights,
            bias=self.head.bias,
            center=self.head.center,
            scale=self.head.scale,
        )

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            head = SoftmaxIdentifier(z["weights"], z["bias"], z["center"], z["scale"], tuple(meta["classes"]))
            return cls(EmbeddingBasis(z["mean"], z["components"]), head)
