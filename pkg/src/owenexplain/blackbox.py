"""Black-box model abstraction, top-k output wrappers, and the seeded toy
victim zoo.

Victims are pure functions of immutable parameters, fully determined by
their spec, and therefore safe for concurrent evaluation. Batches are
(n_rows, n_cells) float64 matrices of flat row-major inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import QueryLedger, check_shape, make_rng

_PROB_ATOL = 1e-9


class Model:
    """Deterministic probabilistic classifier over flat inputs."""

    num_classes: int
    input_shape: tuple[int, ...]

    @property
    def n_cells(self) -> int:
        return math.prod(self.input_shape)

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        """(n_rows, n_cells) -> (n_rows, num_classes) probabilities."""
        raise NotImplementedError

    def evaluate_one(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


def _check_prob_vector(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if p.size < 1:
        raise ValueError("probability vector is empty")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and non-negative")
    if abs(float(p.sum()) - 1.0) > _PROB_ATOL:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


def _topk_indices(p: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries; ties broken by lower class index."""
    order = np.argsort(-p, kind="stable")
    return order[:k]


def wrap_topk_soft(raw_probs, k: int) -> np.ndarray:
    """Top-k probabilities kept, leftover mass spread uniformly over the
    masked classes. Identity when k equals the class count.

    Leftover shares can underflow for huge class counts; exact float64
    arithmetic is kept and no flooring is applied.
    """
    p = _check_prob_vector(raw_probs)
    c = p.size
    if not 1 <= k <= c:
        raise ValueError(f"k must be in [1, {c}], got {k}")
    if k == c:
        return p.copy()
    top = _topk_indices(p, k)
    out = np.full(c, (1.0 - float(p[top].sum())) / (c - k), dtype=np.float64)
    out[top] = p[top]
    return out


def wrap_topk_hard(raw_probs, k: int) -> np.ndarray:
    """1/k on each of the k top classes, 0 elsewhere."""
    p = _check_prob_vector(raw_probs)
    c = p.size
    if not 1 <= k <= c:
        raise ValueError(f"k must be in [1, {c}], got {k}")
    out = np.zeros(c, dtype=np.float64)
    out[_topk_indices(p, k)] = 1.0 / k
    return out


@dataclass(frozen=True)
class TopKConfig:
    """Victim output access mode: soft/hard top-k, or all probabilities."""

    mode: str = "all"
    k: int | None = None

    def __post_init__(self):
        if self.mode not in {"soft", "hard", "all"}:
            raise ValueError(f"mode must be soft, hard or all, got {self.mode!r}")
        if self.mode != "all" and (self.k is None or self.k < 1):
            raise ValueError("soft/hard modes require k >= 1")

    def apply(self, raw: np.ndarray) -> np.ndarray:
        if self.mode == "all":
            return np.asarray(raw, dtype=np.float64).copy()
        if self.mode == "soft":
            return wrap_topk_soft(raw, self.k)
        return wrap_topk_hard(raw, self.k)

    def apply_batch(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 2:
            raise ValueError("batch must be 2-D")
        if self.mode == "all":
            return raw.copy()
        if np.any(raw < 0) or not np.all(np.isfinite(raw)):
            raise ValueError("probabilities must be finite and non-negative")
        if np.any(np.abs(raw.sum(axis=1) - 1.0) > _PROB_ATOL):
            raise ValueError("probability rows must sum to 1")
        c = raw.shape[1]
        k = self.k
        if not 1 <= k <= c:
            raise ValueError(f"k must be in [1, {c}], got {k}")
        if self.mode == "soft" and k == c:
            return raw.copy()
        top = np.argsort(-raw, axis=1, kind="stable")[:, :k]
        if self.mode == "soft":
            top_vals = np.take_along_axis(raw, top, axis=1)
            leftover = (1.0 - top_vals.sum(axis=1)) / (c - k)
            out = np.repeat(leftover[:, None], c, axis=1)
            np.put_along_axis(out, top, top_vals, axis=1)
        else:
            out = np.zeros_like(raw)
            np.put_along_axis(out, top, 1.0 / k, axis=1)
        return out


class WrappedModel(Model):
    """Model view through a top-k wrapper; what an attacker observes."""

    def __init__(self, inner: Model, topk: TopKConfig):
        if topk.mode != "all" and topk.k > inner.num_classes:
            raise ValueError("k exceeds the model class count")
        self.inner = inner
        self.topk = topk
        self.num_classes = inner.num_classes
        self.input_shape = inner.input_shape

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        return self.topk.apply_batch(self.inner.evaluate(batch))


def query(
    model: Model, batch: np.ndarray, topk: TopKConfig, ledger: QueryLedger
) -> np.ndarray:
    """Charge the ledger for the batch and return wrapped outputs."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.n_cells:
        raise ValueError("batch shape does not match model input")
    ledger.charge(batch.shape[0], "query")
    return topk.apply_batch(model.evaluate(batch))


VICTIM_KINDS = ("linear_softmax", "quadrant_bright", "group_symmetric", "dead_feature")


@dataclass(frozen=True)
class VictimSpec:
    """Seeded toy victim description, reconstructible from its fields."""

    kind: str
    seed: int
    num_classes: int
    input_shape: tuple[int, ...]
    weight_scale: float = 1.0
    temperature: float = 1.0
    dead_index: int = 0
    group_sizes: tuple[int, ...] | None = None
    class_bias: tuple[float, ...] | None = None
    input_cap: float = 1.0

    def __post_init__(self):
        if self.kind not in VICTIM_KINDS:
            raise ValueError(f"unknown victim kind {self.kind!r}")
        object.__setattr__(self, "input_shape", check_shape(self.input_shape))
        if self.num_classes < 2:
            raise ValueError("victims need at least 2 classes")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class LinearSoftmaxVictim(Model):
    """softmax((W x + b) / temperature) with seeded W, b."""

    def __init__(self, spec: VictimSpec, dead_index: int | None = None):
        self.spec = spec
        self.num_classes = spec.num_classes
        self.input_shape = spec.input_shape
        n = self.n_cells
        rng = make_rng(spec.seed)
        self.W = rng.normal(0.0, spec.weight_scale / math.sqrt(n), (spec.num_classes, n))
        self.b = rng.normal(0.0, 0.1 * spec.weight_scale, spec.num_classes)
        if dead_index is not None:
            if not 0 <= dead_index < n:
                raise ValueError("dead feature index outside the input")
            self.W[:, dead_index] = 0.0
        self.W.setflags(write=False)
        self.b.setflags(write=False)

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        logits = batch @ self.W.T + self.b
        return _softmax(logits / self.spec.temperature)


def class_regions(input_shape: tuple[int, ...], num_classes: int) -> np.ndarray:
    """Cell -> class region map. Rank-2+ inputs get a near-square grid of
    bands over the first two axes when num_classes factors; otherwise cells
    are chunked contiguously."""
    n = math.prod(input_shape)
    if len(input_shape) >= 2:
        rows = int(math.isqrt(num_classes))
        while rows > 1 and num_classes % rows:
            rows -= 1
        cols = num_classes // rows
        if rows * cols == num_classes:
            h, w = input_shape[0], input_shape[1]
            band_r = np.minimum(np.arange(h) * rows // h, rows - 1)
            band_c = np.minimum(np.arange(w) * cols // w, cols - 1)
            region2d = band_r[:, None] * cols + band_c[None, :]
            tail = math.prod(input_shape[2:]) if len(input_shape) > 2 else 1
            return np.repeat(region2d.reshape(-1), tail).astype(np.int32)
    return np.minimum(np.arange(n) * num_classes // n, num_classes - 1).astype(np.int32)


class QuadrantBrightVictim(Model):
    """Each class scored by the mean brightness of its assigned region,
    plus an optional per-class bias, through a softmax."""

    def __init__(self, spec: VictimSpec):
        self.spec = spec
        self.num_classes = spec.num_classes
        self.input_shape = spec.input_shape
        regions = class_regions(spec.input_shape, spec.num_classes)
        n = self.n_cells
        member = np.zeros((spec.num_classes, n), dtype=np.float64)
        member[regions, np.arange(n)] = 1.0
        self.region_mean = member / member.sum(axis=1, keepdims=True)
        if spec.class_bias is not None:
            if len(spec.class_bias) != spec.num_classes:
                raise ValueError("class_bias length must equal num_classes")
            self.bias = np.asarray(spec.class_bias, dtype=np.float64)
        else:
            self.bias = np.zeros(spec.num_classes)
        self.region_mean.setflags(write=False)
        self.bias.setflags(write=False)

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        scores = batch @ self.region_mean.T + self.bias
        return _softmax(scores / self.spec.temperature)


class GroupSymmetricVictim(Model):
    """Affine probability model over within-group sums.

    Output is 1/C plus a centered linear term in the group means, so it is
    exactly invariant under permuting cells inside a group and the induced
    coalition game is additive in the cells. Inputs are clipped to
    [-input_cap, input_cap], the domain on which outputs are valid
    probabilities by construction.
    """

    def __init__(self, spec: VictimSpec):
        self.spec = spec
        self.num_classes = spec.num_classes
        self.input_shape = spec.input_shape
        n = self.n_cells
        sizes = spec.group_sizes
        if sizes is None:
            g = min(4, n)
            bounds = [i * n // g for i in range(g + 1)]
            sizes = tuple(bounds[i + 1] - bounds[i] for i in range(g))
        if sum(sizes) != n or any(s < 1 for s in sizes):
            raise ValueError("group sizes must be positive and cover the input")
        self.group_sizes = tuple(int(s) for s in sizes)
        groups = np.repeat(np.arange(len(sizes)), sizes)
        member = np.zeros((len(sizes), n), dtype=np.float64)
        member[groups, np.arange(n)] = 1.0
        self.group_mean = member / member.sum(axis=1, keepdims=True)
        rng = make_rng(spec.seed)
        a = rng.uniform(-1.0, 1.0, (spec.num_classes, len(sizes)))
        a -= a.mean(axis=0, keepdims=True)
        peak = float(np.abs(a).max())
        if peak > 0:
            cap = max(spec.input_cap, 1e-12)
            a *= (0.9 / spec.num_classes) / (len(sizes) * cap * peak)
        self.A = a
        self.A.setflags(write=False)
        self.group_mean.setflags(write=False)

    def evaluate(self, batch: np.ndarray) -> np.ndarray:
        clipped = np.clip(batch, -self.spec.input_cap, self.spec.input_cap)
        means = clipped @ self.group_mean.T
        return 1.0 / self.num_classes + means @ self.A.T


def make_victim(spec: VictimSpec) -> Model:
    if spec.kind == "linear_softmax":
        return LinearSoftmaxVictim(spec)
    if spec.kind == "dead_feature":
        return LinearSoftmaxVictim(spec, dead_index=spec.dead_index)
    if spec.kind == "quadrant_bright":
        return QuadrantBrightVictim(spec)
    if spec.kind == "group_symmetric":
        return GroupSymmetricVictim(spec)
    raise ValueError(f"unknown victim kind {spec.kind!r}")
