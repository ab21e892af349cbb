"""Five-fold cross-validation, ablations, baselines and robustness sweeps."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .._accel import substream_seed
from ..config import ExperimentConfig
from ..embed import train_line, train_walk_embedding
from ..fusion import Components, FusionModel, train_fusion
from ..graph import EvalSet, TemporalGraph, UnfollowMatrix, mask_test_edges
from ..mf import factorize_history
from ..netstats import TfidfIndex
from ..sampling import split_validation
from ..text.han import ContentEncoderParams, encode_users, pretrain_content_encoder, tokenize_posts
from ..text.tokenize import tokenize
from ..text.word2vec import train_word_vectors
from .baselines import UserStats, extract_baseline_features, train_logistic
from .metrics import MetricsReport, auc_score, compute_metrics, mean_report

log = logging.getLogger(__name__)

FUSION_SOURCES = {
    "umhi": ("line1", "line2", "han", "mf"),
    "line1": ("line1",),
    "line2": ("line2",),
    "line1+line2": ("line1", "line2"),
    "han": ("han",),
    "mf": ("mf",),
    "line1+line2+han": ("line1", "line2", "han"),
    "deepwalk": ("deepwalk",),
    "node2vec": ("node2vec",),
}
LR_KINDS = {"da_lr": "content_action", "sa_lr": "structural_action"}


class LeakageAudit:
    """Records every labeled pair a training stage consumes, per fold."""

    def __init__(self):
        self.fold: int | None = None
        self.consumed: dict[tuple[int, str], set[tuple[int, int]]] = {}

    def record(self, stage: str, pairs_i, pairs_j) -> None:
        key = (-1 if self.fold is None else self.fold, stage)
        bucket = self.consumed.setdefault(key, set())
        bucket.update(zip(np.asarray(pairs_i).tolist(), np.asarray(pairs_j).tolist()))

    def stages(self) -> list[str]:
        return sorted({s for _, s in self.consumed})

    def test_label_uses(self, E: EvalSet) -> dict[str, int]:
        """Per stage, the number of test-fold pairs consumed while training that fold."""
        out: dict[str, int] = {}
        for (fold, stage), pairs in self.consumed.items():
            if fold < 0:
                test = E.pair_set()
            else:
                test = E.subset(E.fold == fold).pair_set()
            out[stage] = out.get(stage, 0) + len(pairs & test)
        return out


class ComponentStore:
    """Label-free components shared by every fold.

    LINE, random-walk and word vectors never see labels, and the history
    matrix always has all evaluation pairs masked, so these inputs are the
    same in every fold. Training them again per fold with the same seeds
    would reproduce them bit for bit; they are built once and cached.
    """

    def __init__(self, G: TemporalGraph, R: UnfollowMatrix, E: EvalSet, cfg: ExperimentConfig):
        self.G, self.R, self.E, self.cfg = G, R, E, cfg
        self._cache: dict[str, object] = {}

    def _seed(self, name: str) -> int:
        return substream_seed(self.cfg.seed, name)

    def get(self, name: str):
        if name not in self._cache:
            self._cache[name] = getattr(self, "_build_" + name.replace("+", "_"))()
        return self._cache[name]

    def _build_line1(self):
        c = self.cfg
        return train_line(self.G, "first", c.line_dim, c.line_epochs, c.line_negatives, c.line_lr,
                          self._seed("line1"), c.workers).vectors

    def _build_line2(self):
        c = self.cfg
        return train_line(self.G, "second", c.line_dim, c.line_epochs, c.line_negatives, c.line_lr,
                          self._seed("line2"), c.workers).vectors

    def _walk(self, name, p, q):
        c = self.cfg
        return train_walk_embedding(self.G, c.walk_dim, c.walks_per_node, c.walk_length, c.walk_window, p, q,
                                    epochs=c.walk_epochs, seed=self._seed(name), workers=c.workers).vectors

    def _build_deepwalk(self):
        return self._walk("deepwalk", 1.0, 1.0)

    def _build_node2vec(self):
        return self.node2vec_vectors(self.cfg.node2vec_p, self.cfg.node2vec_q)

    def node2vec_vectors(self, p: float, q: float) -> np.ndarray:
        key = f"node2vec:{p!r}:{q!r}"
        if key not in self._cache:
            self._cache[key] = self._walk("node2vec", p, q)
        return self._cache[key]

    def _build_words(self):
        c = self.cfg
        corpus = [tokenize(p.text) for ps in self.G.posts for p in ps]
        return train_word_vectors(corpus, c.word_dim, c.word_window, c.word_negatives, c.word_epochs,
                                  seed=self._seed("word2vec"), workers=c.workers)

    def _build_tokenized(self):
        words = self.get("words")
        index = {w: k for k, w in enumerate(words.ids)}
        c = self.cfg
        return [tokenize_posts(ps, index, c.han_max_tokens, c.han_max_posts) for ps in self.G.posts]

    def _build_r_train(self):
        return mask_test_edges(self.R, self.E)

    def _build_mf(self):
        c = self.cfg
        return factorize_history(self.get("r_train"), c.mf_k, c.mf_lambda, c.mf_lr, c.mf_epochs, self._seed("mf"))

    def _build_stats(self):
        return UserStats(self.G, TfidfIndex(self.G.posts))


@dataclass
class FoldResult:
    fold: int
    reports: dict[str, MetricsReport]
    han_history: list = field(default_factory=list)


@dataclass
class CVResult:
    methods: tuple[str, ...]
    folds: list[FoldResult]
    leakage: dict[str, int] = field(default_factory=dict)

    def per_method(self, method: str) -> list[MetricsReport]:
        return [f.reports[method] for f in self.folds]

    def summary(self) -> dict:
        return {m: mean_report(self.per_method(m)) for m in self.methods}

    def mean_auc(self, method: str) -> float:
        return float(np.mean([r.auc for r in self.per_method(method)]))

    def to_json(self) -> str:
        doc = {
            "format": "umhi-metrics/1",
            "methods": {m: {"folds": [r.as_dict() for r in self.per_method(m)], "summary": self.summary()[m]}
                        for m in self.methods},
            "leakage": self.leakage,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        lines = ["method\tfold\tprecision\trecall\tauc\tn_pos\tn_neg"]
        for m in self.methods:
            for f in self.folds:
                r = f.reports[m]
                lines.append(f"{m}\t{f.fold}\t{r.precision:.6f}\t{r.recall:.6f}\t{r.auc:.6f}\t{r.n_pos}\t{r.n_neg}")
            s = self.summary()[m]
            lines.append(f"{m}\tmean\t{s['precision']:.6f}\t{s['recall']:.6f}\t{s['auc']:.6f}\t\t")
        return "\n".join(lines) + "\n"


class FoldRunner:
    """Trains the label-dependent stages for one train/test split."""

    def __init__(self, store: ComponentStore, audit: LeakageAudit | None = None):
        self.store = store
        self.cfg = store.cfg
        self.audit = audit

    def seed(self, *parts) -> int:
        return substream_seed(self.cfg.seed, "/".join(map(str, parts)))

    def content_vectors(self, fold: int, train: EvalSet, history: list | None = None) -> np.ndarray:
        c = self.cfg
        dtype = np.float32 if c.han_float32 else np.float64
        user_posts = self.store.get("tokenized")
        params = ContentEncoderParams.initialize(self.store.get("words"), c.han_hidden, c.han_attention,
                                                 seed=self.seed("han-init", fold), dtype=dtype,
                                                 t_max=c.han_max_tokens, l_max=c.han_max_posts)
        params = pretrain_content_encoder(train.follower, train.followee, train.label, user_posts, params,
                                          epochs=c.han_epochs, lr=c.han_lr, betas=c.betas, batch=c.han_batch,
                                          val_fraction=c.val_fraction, seed=self.seed("han", fold),
                                          audit=self.audit, history=history)
        return encode_users(user_posts, params).astype(np.float64)

    def components(self, methods, fold: int, train: EvalSet, history: list | None = None) -> Components:
        need = {s for m in methods if m in FUSION_SOURCES for s in FUSION_SOURCES[m]}
        comp = Components()
        for name in ("line1", "line2", "deepwalk"):
            if name in need:
                setattr(comp, name, self.store.get(name))
        if "node2vec" in need:
            comp.node2vec = self.node2vec_choice(fold, train)
        if "mf" in need:
            mf = self.store.get("mf")
            if self.audit is not None:
                entries = self.store.get("r_train").sorted_entries()
                self.audit.record("mf", [e[0] for e in entries], [e[1] for e in entries])
            comp.mf_P, comp.mf_Q = mf.P, mf.Q
        if "han" in need:
            comp.han = self.content_vectors(fold, train, history)
        return comp

    def node2vec_choice(self, fold: int, train: EvalSet) -> np.ndarray:
        """Walk vectors for the grid point whose head scores best on held-out training pairs."""
        grid = self.cfg.node2vec_grid_points
        if not grid:
            return self.store.get("node2vec")
        c = self.cfg
        rng = np.random.default_rng(self.seed("node2vec-grid", fold))
        fit, held = split_validation(train.label, c.val_fraction, rng)
        fit_set, held_set = train.subset(fit), train.subset(held)
        best, best_auc = None, -np.inf
        for p, q in grid:
            vectors = self.store.node2vec_vectors(p, q)
            model = FusionModel.create(Components(node2vec=vectors), ("node2vec",), c.hidden_layers,
                                       seed=self.seed("fusion-init", "node2vec", fold))
            model = train_fusion(model, fit_set.follower, fit_set.followee, fit_set.label, epochs=c.fusion_epochs,
                                 lr=c.fusion_lr, batch=c.fusion_batch, seed=self.seed("node2vec-grid-fit", fold),
                                 betas=c.betas, val_fraction=c.val_fraction, audit=self.audit)
            auc = auc_score(model.predict_proba(held_set.follower, held_set.followee), held_set.label)
            log.info("fold %d node2vec p=%g q=%g held-out auc %.4f", fold, p, q, auc)
            if auc > best_auc:
                best, best_auc = vectors, auc
        return best

    def fusion_scores(self, method: str, comp: Components, fold: int, train: EvalSet, test: EvalSet,
                      seed_tag: str = "") -> np.ndarray:
        c = self.cfg
        model = FusionModel.create(comp, FUSION_SOURCES[method], c.hidden_layers,
                                   seed=self.seed("fusion-init", method, fold))
        model = train_fusion(model, train.follower, train.followee, train.label, epochs=c.fusion_epochs,
                             lr=c.fusion_lr, batch=c.fusion_batch, seed=self.seed("fusion", method, fold, seed_tag),
                             betas=c.betas, val_fraction=c.val_fraction, audit=self.audit)
        return model.predict_proba(test.follower, test.followee)

    def baseline_scores(self, method: str, train: EvalSet, test: EvalSet) -> np.ndarray:
        stats = self.store.get("stats")
        kind = LR_KINDS[method]
        users = np.concatenate([train.follower, train.followee])
        Xtr = extract_baseline_features(stats, train.follower, train.followee, kind, users, self.cfg.svd_dim)
        Xte = extract_baseline_features(stats, test.follower, test.followee, kind, users, self.cfg.svd_dim)
        if self.audit is not None:
            self.audit.record(method, train.follower, train.followee)
        model = train_logistic(Xtr, train.label, l2=self.cfg.lr_l2)
        return model.predict_proba(Xte)

    def scores(self, method: str, comp: Components, fold: int, train: EvalSet, test: EvalSet) -> np.ndarray:
        if method in LR_KINDS:
            return self.baseline_scores(method, train, test)
        return self.fusion_scores(method, comp, fold, train, test)


def cross_validate(G: TemporalGraph, R: UnfollowMatrix, E: EvalSet, cfg: ExperimentConfig,
                   audit: LeakageAudit | None = None, store: ComponentStore | None = None) -> CVResult:
    """Per-fold metrics for every configured method.

    Fold ``f`` is the test set and the remaining folds are the supervised
    training pairs. The history matrix masks every evaluation pair in all
    folds.
    """
    if E.num_folds < 2 or np.any(E.fold < 0):
        raise ValueError("evaluation set needs fold assignments")
    methods = cfg.method_list
    store = store or ComponentStore(G, R, E, cfg)
    runner = FoldRunner(store, audit)
    results = []
    for fold in range(E.num_folds):
        if audit is not None:
            audit.fold = fold
        train, test = E.subset(E.fold != fold), E.subset(E.fold == fold)
        history: list = []
        try:
            comp = runner.components(methods, fold, train, history)
            reports = {}
            for m in methods:
                s = runner.scores(m, comp, fold, train, test)
                reports[m] = compute_metrics(s, test.label, cfg.threshold)
                log.info("fold %d %-16s auc %.4f", fold, m, reports[m].auc)
        except Exception as exc:
            raise RuntimeError(f"fold {fold}: {exc}") from exc
        results.append(FoldResult(fold, reports, history))
    if audit is not None:
        audit.fold = None
    leakage = audit.test_label_uses(E) if audit is not None else {}
    return CVResult(methods, results, leakage)


@dataclass
class SweepRow:
    fraction: float
    report: MetricsReport
    n_train: int


def robustness_sweep(G: TemporalGraph, R: UnfollowMatrix, E: EvalSet, cfg: ExperimentConfig,
                     fractions=tuple(np.round(np.arange(1, 10) / 10, 1)), method: str = "umhi",
                     fold: int = 0, store: ComponentStore | None = None,
                     audit: LeakageAudit | None = None) -> list[SweepRow]:
    """Retrain only the fusion head on seeded subsamples of fold ``fold``'s training pairs.

    Components are trained once on the full training portion. A fraction
    of 1.0 uses the complete training set and reproduces the cross-validation
    run for that fold and method.
    """
    store = store or ComponentStore(G, R, E, cfg)
    runner = FoldRunner(store, audit)
    if audit is not None:
        audit.fold = fold
    train, test = E.subset(E.fold != fold), E.subset(E.fold == fold)
    comp = runner.components([method], fold, train)
    rows = []
    for frac in fractions:
        frac = float(frac)
        if frac >= 1.0:
            sub = train
        else:
            rng = np.random.default_rng(runner.seed("sweep", fold, f"{frac:.4f}"))
            n = int(round(frac * len(train)))
            sub = train.subset(np.sort(rng.choice(len(train), size=n, replace=False)))
        if min(np.sum(sub.label == 1), np.sum(sub.label == 0)) < 1:
            log.warning("fraction %.2f leaves too few examples per class; skipped", frac)
            continue
        s = runner.scores(method, comp, fold, sub, test)
        rows.append(SweepRow(frac, compute_metrics(s, test.label, cfg.threshold), len(sub)))
    if audit is not None:
        audit.fold = None
    return rows
