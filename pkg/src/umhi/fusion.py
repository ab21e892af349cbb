"""Feature fusion: concatenate component vectors and score pairs with an MLP."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .optim import PAPER_BETAS, Adam
from .sampling import BalancedSampler, split_validation

log = logging.getLogger(__name__)

STRUCTURE_SOURCES = ("line1", "line2", "deepwalk", "node2vec")
ALL_SOURCES = ("line1", "line2", "han", "mf")
HIDDEN = (256, 64)


class MissingComponentError(KeyError):
    pass


@dataclass
class Components:
    """Frozen per-user vectors produced by the pretrained components."""

    line1: np.ndarray | None = None
    line2: np.ndarray | None = None
    han: np.ndarray | None = None
    mf_P: np.ndarray | None = None
    mf_Q: np.ndarray | None = None
    deepwalk: np.ndarray | None = None
    node2vec: np.ndarray | None = None

    @property
    def num_users(self) -> int:
        for v in self.__dict__.values():
            if v is not None:
                return len(v)
        return 0

    def _get(self, name: str) -> np.ndarray:
        arr = getattr(self, name)
        if arr is None:
            raise MissingComponentError(f"missing component vector: {name}")
        return arr

    def width(self, sources: Sequence[str]) -> int:
        w = 0
        for s in sources:
            if s == "mf":
                w += self._get("mf_P").shape[1] + self._get("mf_Q").shape[1]
            else:
                w += 2 * self._get(s).shape[1]
        return w


def _check_sources(sources: Sequence[str]) -> tuple[str, ...]:
    known = STRUCTURE_SOURCES + ("han", "mf")
    bad = [s for s in sources if s not in known]
    if bad:
        raise ValueError(f"unknown feature sources {bad}")
    return tuple(s for s in known if s in sources)


def assemble_batch(I, J, components: Components, sources: Sequence[str] = ALL_SOURCES) -> np.ndarray:
    """Rows ``n_i + n_j + m_i + m_j + p_i + q_j`` restricted to ``sources``.

    ``n`` is the concatenation of the structural embeddings in the order
    line1, line2, deepwalk, node2vec.
    """
    I = np.asarray(I, dtype=np.int64)
    J = np.asarray(J, dtype=np.int64)
    sources = _check_sources(sources)
    structural = [components._get(s) for s in sources if s in STRUCTURE_SOURCES]
    blocks = [t[I] for t in structural] + [t[J] for t in structural]
    if "han" in sources:
        m = components._get("han")
        blocks += [m[I], m[J]]
    if "mf" in sources:
        blocks += [components._get("mf_P")[I], components._get("mf_Q")[J]]
    if not blocks:
        raise ValueError("no feature sources selected")
    return np.concatenate([np.asarray(b, dtype=np.float64) for b in blocks], axis=1)


def assemble_features(i: int, j: int, components: Components, sources: Sequence[str] = ALL_SOURCES) -> np.ndarray:
    return assemble_batch([i], [j], components, sources)[0]


def init_mlp(sizes: Sequence[int], seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = np.sqrt(6.0 / (a + b))
        params[f"W{k}"] = rng.uniform(-lim, lim, (a, b))
        params[f"b{k}"] = np.zeros(b)
    return params


def mlp_forward(params: dict[str, np.ndarray], X: np.ndarray):
    """Logits and cached activations; rectified hidden layers, linear output."""
    n_layers = len(params) // 2
    acts = [X]
    h = X
    for k in range(n_layers):
        z = h @ params[f"W{k}"] + params[f"b{k}"]
        h = np.maximum(z, 0.0) if k < n_layers - 1 else z
        acts.append(h)
    return h[:, 0], acts


def mlp_backward(params, acts, dlogits):
    """Parameter gradients and the input gradient for upstream ``dlogits``."""
    n_layers = len(params) // 2
    grads = {}
    d = dlogits[:, None]
    for k in range(n_layers - 1, -1, -1):
        grads[f"W{k}"] = acts[k].T @ d
        grads[f"b{k}"] = d.sum(axis=0)
        d = d @ params[f"W{k}"].T
        if k > 0:
            d = d * (acts[k] > 0)
    return grads, d


def bce_with_logits(z, y) -> float:
    return float(np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def sigmoid(z):
    return 0.5 * (np.tanh(0.5 * np.asarray(z)) + 1.0)


@dataclass
class FusionModel:
    components: Components
    sources: tuple[str, ...] = ALL_SOURCES
    params: dict[str, np.ndarray] = field(default_factory=dict)
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    @classmethod
    def create(cls, components: Components, sources: Sequence[str] = ALL_SOURCES,
               hidden: Sequence[int] = HIDDEN, seed: int = 0) -> "FusionModel":
        sources = _check_sources(sources)
        width = components.width(sources)
        return cls(components, sources, init_mlp([width, *hidden, 1], seed), np.zeros(width), np.ones(width))

    @property
    def input_width(self) -> int:
        return self.params["W0"].shape[0]

    def copy_head(self) -> "FusionModel":
        return FusionModel(self.components, self.sources, {k: v.copy() for k, v in self.params.items()},
                           self.mean.copy(), self.scale.copy())

    def standardize(self, D: np.ndarray) -> np.ndarray:
        return (D - self.mean) / self.scale

    def features(self, I, J) -> np.ndarray:
        return assemble_batch(I, J, self.components, self.sources)

    def predict_proba(self, I, J) -> np.ndarray:
        return fusion_forward(self, self.features(I, J))


def fusion_forward(model: FusionModel, d) -> np.ndarray | float:
    """``sigmoid(MLP(d))`` for one feature vector or a batch of rows."""
    d = np.asarray(d, dtype=np.float64)
    single = d.ndim == 1
    D = d[None, :] if single else d
    if D.shape[1] != model.input_width:
        raise ValueError(f"feature width {D.shape[1]} != model input width {model.input_width}")
    z, _ = mlp_forward(model.params, model.standardize(D))
    y = sigmoid(z)
    return float(y[0]) if single else y


def fusion_input_gradient(model: FusionModel, d) -> np.ndarray:
    """d y / d d for a single feature vector."""
    D = np.asarray(d, dtype=np.float64)[None, :]
    z, acts = mlp_forward(model.params, model.standardize(D))
    y = sigmoid(z)
    _, dX = mlp_backward(model.params, acts, y * (1.0 - y))
    return dX[0] / model.scale


def fusion_loss_and_grads(model: FusionModel, D: np.ndarray, y) -> tuple[float, dict[str, np.ndarray]]:
    """Mean binary cross-entropy (the negated log-likelihood) and MLP gradients."""
    y = np.asarray(y, dtype=float)
    z, acts = mlp_forward(model.params, model.standardize(D))
    grads, _ = mlp_backward(model.params, acts, (sigmoid(z) - y) / len(y))
    return bce_with_logits(z, y), grads


def train_fusion(
    model: FusionModel,
    pairs_i,
    pairs_j,
    labels,
    epochs: int = 10,
    lr: float = 0.001,
    batch: int = 64,
    seed: int = 0,
    betas: tuple[float, float] = PAPER_BETAS,
    val_fraction: float = 0.1,
    audit=None,
    history: list | None = None,
    weight_decay: float = 0.0,
) -> FusionModel:
    """Train only the MLP head on balanced mini-batches.

    Each batch holds ``batch // 2`` positives and negatives drawn with
    replacement; an epoch is ``ceil(n_train / batch)`` batches. Inputs are
    standardized with the training-split mean and deviation. The head with
    the best AUC on a held-out ``val_fraction`` of the pairs is returned.
    ``weight_decay`` adds ``weight_decay / 2 * |W|^2`` for every weight
    matrix (biases excluded) to the loss.
    """
    from .evaluation.metrics import auc_score

    pairs_i = np.asarray(pairs_i, dtype=np.int64)
    pairs_j = np.asarray(pairs_j, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if audit is not None:
        audit.record("fusion", pairs_i, pairs_j)
    rng = np.random.default_rng(seed)
    tr, va = split_validation(labels, val_fraction, rng)
    sampler = BalancedSampler(labels[tr], batch, rng)
    D = model.features(pairs_i, pairs_j)
    model = model.copy_head()
    model.mean = D[tr].mean(axis=0)
    sd = D[tr].std(axis=0)
    model.scale = np.where(sd > 1e-12, sd, 1.0)
    opt = Adam(model.params, lr=lr, betas=betas)
    steps = max(1, -(-len(tr) // batch))
    best, best_auc = model.copy_head(), -np.inf
    for epoch in range(epochs):
        losses = []
        for _ in range(steps):
            idx = tr[sampler.draw()]
            loss, grads = fusion_loss_and_grads(model, D[idx], labels[idx])
            if weight_decay:
                for k in grads:
                    if k.startswith("W"):
                        grads[k] = grads[k] + weight_decay * model.params[k]
            opt.step(grads)
            losses.append(loss)
        if len(va) and len(np.unique(labels[va])) == 2:
            score = auc_score(fusion_forward(model, D[va]), labels[va])
        else:
            score = -float(np.mean(losses))
        if history is not None:
            history.append({"epoch": epoch + 1, "loss": float(np.mean(losses)), "val_auc": float(score),
                            "first_loss": float(losses[0])})
        log.debug("fusion epoch %d: loss %.4f val %.4f", epoch + 1, np.mean(losses), score)
        if score > best_auc:
            best, best_auc = model.copy_head(), score
    return best


@dataclass
class PredictionRecord:
    follower: int
    followee: int
    score: float
    label: int


def predict_edge(model: FusionModel, i: int, j: int, threshold: float = 0.5) -> PredictionRecord:
    n = model.components.num_users
    if not (0 <= i < n and 0 <= j < n):
        raise KeyError(f"unknown user in pair ({i}, {j})")
    y = float(model.predict_proba([i], [j])[0])
    return PredictionRecord(int(i), int(j), y, int(y >= threshold))
