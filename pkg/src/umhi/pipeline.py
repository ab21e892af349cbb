"""On-disk artifacts and the stage functions behind the command line."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._accel import substream_seed
from .config import ExperimentConfig
from .embed import EmbeddingTable, read_embeddings, write_embeddings
from .evaluation.crossval import ComponentStore, FoldRunner, LeakageAudit, cross_validate, robustness_sweep
from .fusion import Components, FusionModel, train_fusion
from .graph import (EvalSet, IngestStats, Post, TemporalGraph, UnfollowMatrix, UserIndex,
                    build_balanced_eval_set, build_unfollow_matrix, ingest_posts, ingest_relations, kfold_split)
from .netstats import (ROLE_NAMES, TfidfIndex, assign_roles, burt_constraint, interaction_values, pagerank,
                       rou_curve)
from .text.han import ContentEncoderParams, encode_users, pretrain_content_encoder
from .text.word2vec import write_vocabulary

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
UNBOUNDED_END = 2 ** 62


class ArtifactError(Exception):
    """A required input is missing, unreadable or has the wrong format version."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise ArtifactError(f"missing input artifact: {p}")
    return p


def write_json(path, kind: str, payload: dict) -> None:
    doc = {"format": f"umhi-{kind}", "version": FORMAT_VERSION, **payload}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path, kind: str) -> dict:
    p = require(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{p}: not valid JSON ({exc})") from None
    if doc.get("format") != f"umhi-{kind}" or doc.get("version") != FORMAT_VERSION:
        raise ArtifactError(f"{p}: expected umhi-{kind} version {FORMAT_VERSION}, "
                            f"found {doc.get('format')} version {doc.get('version')}")
    return doc


class Layout:
    def __init__(self, out):
        self.root = Path(out)

    def __getattr__(self, name):
        sub = {"data": "data", "analysis": "analysis", "embed": "embed", "pretrain": "pretrain",
               "model": "model", "metrics": "metrics"}
        if name in sub:
            return self.root / sub[name]
        raise AttributeError(name)

    def ensure(self, name: str) -> Path:
        d = getattr(self, name)
        d.mkdir(parents=True, exist_ok=True)
        return d


class RunManifest:
    """Config snapshot, per-stage wall clock and artifact checksums, merged across stages."""

    def __init__(self, out):
        self.path = Path(out) / "run_manifest.json"

    def update(self, stage: str, cfg: ExperimentConfig, seconds: float, artifacts: list[Path],
               summary: dict | None = None) -> None:
        doc = read_json(self.path, "run") if self.path.exists() else {"stages": {}}
        entry = {"config": cfg.to_text(), "seconds": round(seconds, 3),
                 "checksums": {self._key(p): sha256_file(p) for p in artifacts}}
        if summary is not None:
            entry["summary"] = summary
        doc["stages"][stage] = entry
        write_json(self.path, "run", {"stages": doc["stages"]})

    def _key(self, path: Path) -> str:
        """Run-relative name for artifacts inside the run directory, absolute otherwise."""
        path = Path(path).resolve()
        root = self.path.parent.resolve()
        return str(path.relative_to(root)) if path.is_relative_to(root) else str(path)


@dataclass
class Dataset:
    users: list[str]
    graph: TemporalGraph
    unfollow: UnfollowMatrix
    eval_set: EvalSet


def effective_window(cfg: ExperimentConfig) -> tuple[int, int]:
    return (cfg.window_start, cfg.window_end if cfg.window_end > 0 else UNBOUNDED_END)


def write_dataset(layout: Layout, users: list[str], G: TemporalGraph, R: UnfollowMatrix, E: EvalSet,
                  stats: dict) -> list[Path]:
    d = layout.ensure("data")
    (d / "users.txt").write_text("".join(u + "\n" for u in users), encoding="utf-8")
    with open(d / "edges.tsv", "w", encoding="utf-8") as fh:
        for i, j in G.edges.tolist():
            fh.write(f"{i}\t{j}\n")
    with open(d / "unfollow.tsv", "w", encoding="utf-8") as fh:
        for i, j in R.sorted_entries():
            fh.write(f"{i}\t{j}\n")
    with open(d / "posts.jsonl", "w", encoding="utf-8") as fh:
        for ps in G.posts:
            for p in ps:
                fh.write(json.dumps({"user": p.user, "time": p.time, "text": p.text, "upvotes": p.upvotes},
                                    sort_keys=True, ensure_ascii=False) + "\n")
    E.to_tsv(d / "eval.tsv")
    write_json(d / "manifest.json", "dataset", {
        "num_users": len(users), "num_edges": G.num_edges, "num_unfollow": len(R.entries),
        "num_eval": len(E), "eval_unfollow": int(E.label.sum()), "window": list(G.window), "ingest": stats,
    })
    return [d / n for n in ("users.txt", "edges.tsv", "unfollow.tsv", "posts.jsonl", "eval.tsv", "manifest.json")]


def _read_pairs(path) -> np.ndarray:
    rows = [line.split("\t") for line in require(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    return np.array([[int(a), int(b)] for a, b in rows], dtype=np.int64).reshape(-1, 2)


def load_dataset(layout: Layout) -> Dataset:
    d = layout.data
    meta = read_json(d / "manifest.json", "dataset")
    users = require(d / "users.txt").read_text(encoding="utf-8").splitlines()
    posts: list[list[Post]] = [[] for _ in users]
    with open(require(d / "posts.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            o = json.loads(line)
            posts[o["user"]].append(Post(o["user"], o["time"], o["text"], o["upvotes"]))
    window = tuple(meta["window"])
    G = TemporalGraph(len(users), _read_pairs(d / "edges.tsv"), posts, window)
    R = UnfollowMatrix(len(users), map(tuple, _read_pairs(d / "unfollow.tsv").tolist()))
    E = EvalSet.from_tsv(require(d / "eval.tsv"))
    return Dataset(users, G, R, E)


def run_ingest(cfg: ExperimentConfig, layout: Layout) -> list[Path]:
    if not cfg.relations or not cfg.posts:
        raise ArtifactError("ingest needs both 'relations' and 'posts' paths")
    window = effective_window(cfg)
    users, stats = UserIndex(), IngestStats()
    records = ingest_relations(require(cfg.relations), window, users, stats)
    posts = ingest_posts(require(cfg.posts), window, users, stats)
    G = TemporalGraph.from_records(len(users), records, posts, window)
    R = build_unfollow_matrix(records, len(users))
    E = build_balanced_eval_set(records, posts, seed=substream_seed(cfg.seed, "eval-set"),
                                hold_ratio=cfg.hold_ratio, max_unfollow=cfg.max_unfollow or None)
    E = kfold_split(E, cfg.folds, seed=substream_seed(cfg.seed, "folds"))
    return write_dataset(layout, users.names, G, R, E, stats.as_dict())


def run_analyze(cfg: ExperimentConfig, layout: Layout) -> list[Path]:
    ds = load_dataset(layout)
    G, E = ds.graph, ds.eval_set
    pr = pagerank(G, cfg.damping)
    cs = burt_constraint(G)
    roles = assign_roles(pr, cs, cfg.role_fraction)
    d = layout.ensure("analysis")
    with open(d / "roles.tsv", "w", encoding="utf-8") as fh:
        fh.write("#user\tpagerank\tconstraint\trole\n")
        for name, p, c, r in zip(ds.users, pr.tolist(), cs.tolist(), roles.tolist()):
            fh.write(f"{name}\t{p!r}\t{c!r}\t{ROLE_NAMES[r]}\n")
    out = [d / "roles.tsv"]
    tfidf = TfidfIndex(G.posts)
    for cond in ("similarity", "exposure"):
        table = rou_curve(E, interaction_values(E, cond, G, tfidf), roles, cfg.rou_bins, cfg.rou_min_count, cond)
        (d / f"rou_{cond}.tsv").write_text(table.to_tsv(), encoding="utf-8")
        out.append(d / f"rou_{cond}.tsv")
    return out


def _store(cfg: ExperimentConfig, ds: Dataset) -> ComponentStore:
    return ComponentStore(ds.graph, ds.unfollow, ds.eval_set, cfg)


def run_embed(cfg: ExperimentConfig, layout: Layout) -> list[Path]:
    ds = load_dataset(layout)
    store = _store(cfg, ds)
    d = layout.ensure("embed")
    out = []
    for name in ("line1", "line2"):
        write_embeddings(d / f"{name}.emb", EmbeddingTable(store.get(name)))
        out.append(d / f"{name}.emb")
    words = store.get("words")
    write_embeddings(d / "words.emb", EmbeddingTable(words.vectors))
    write_vocabulary(d / "vocab.txt", words.ids)
    out += [d / "words.emb", d / "vocab.txt"]
    write_json(d / "manifest.json", "embed", {
        "line_dim": cfg.line_dim, "line_epochs": cfg.line_epochs, "word_dim": cfg.word_dim,
        "checksums": {p.name: sha256_file(p) for p in out}})
    return out + [d / "manifest.json"]


def _load_embed(layout: Layout, name: str) -> np.ndarray:
    read_json(layout.embed / "manifest.json", "embed")
    return read_embeddings(require(layout.embed / f"{name}.emb"), dense_ids=True).vectors


def _word_table(layout: Layout) -> EmbeddingTable:
    from .text.word2vec import read_vocabulary
    read_json(layout.embed / "manifest.json", "embed")
    vecs = read_embeddings(require(layout.embed / "words.emb"), dense_ids=True).vectors
    return EmbeddingTable(vecs, read_vocabulary(require(layout.embed / "vocab.txt")))


def run_pretrain(cfg: ExperimentConfig, layout: Layout) -> list[Path]:
    """Content encoder on every labeled pair plus the history factorization."""
    ds = load_dataset(layout)
    store = _store(cfg, ds)
    store._cache["words"] = _word_table(layout)
    E = ds.eval_set
    dtype = np.float32 if cfg.han_float32 else np.float64
    params = ContentEncoderParams.initialize(store.get("words"), cfg.han_hidden, cfg.han_attention,
                                             seed=substream_seed(cfg.seed, "han-init"), dtype=dtype,
                                             t_max=cfg.han_max_tokens, l_max=cfg.han_max_posts)
    params = pretrain_content_encoder(E.follower, E.followee, E.label, store.get("tokenized"), params,
                                      epochs=cfg.han_epochs, lr=cfg.han_lr, betas=cfg.betas, batch=cfg.han_batch,
                                      val_fraction=cfg.val_fraction, seed=substream_seed(cfg.seed, "han"))
    d = layout.ensure("pretrain")
    params.save(d / "han.npz")
    M = encode_users(store.get("tokenized"), params).astype(np.float64)
    write_embeddings(d / "content.emb", EmbeddingTable(M))
    mf = store.get("mf")
    write_embeddings(d / "mf_P.emb", EmbeddingTable(mf.P))
    write_embeddings(d / "mf_Q.emb", EmbeddingTable(mf.Q))
    out = [d / n for n in ("han.npz", "content.emb", "mf_P.emb", "mf_Q.emb")]
    write_json(d / "manifest.json", "pretrain", {
        "han_hidden": cfg.han_hidden, "han_epochs": cfg.han_epochs,
        "mf": {"k": mf.k, "lambda": mf.lam, "epochs": mf.epochs, "seed": mf.seed, "mode": mf.mode},
        "checksums": {p.name: sha256_file(p) for p in out}})
    return out + [d / "manifest.json"]


def load_components(layout: Layout) -> Components:
    read_json(layout.pretrain / "manifest.json", "pretrain")

    def rd(path):
        return read_embeddings(require(path), dense_ids=True).vectors

    return Components(line1=_load_embed(layout, "line1"), line2=_load_embed(layout, "line2"),
                      han=rd(layout.pretrain / "content.emb"), mf_P=rd(layout.pretrain / "mf_P.emb"),
                      mf_Q=rd(layout.pretrain / "mf_Q.emb"))


def save_fusion(path, model: FusionModel, checksums: dict) -> None:
    write_json(path, "fusion", {
        "sources": list(model.sources),
        "params": {k: v.tolist() for k, v in model.params.items()},
        "mean": model.mean.tolist(), "scale": model.scale.tolist(), "components": checksums,
    })


def load_fusion(path, components: Components) -> FusionModel:
    doc = read_json(path, "fusion")
    model = FusionModel(components, tuple(doc["sources"]), {k: np.array(v) for k, v in doc["params"].items()},
                        np.array(doc["mean"]), np.array(doc["scale"]))
    if components.width(model.sources) != model.input_width:
        raise ArtifactError(f"{path}: component widths do not match the stored model")
    return model


def _component_files(layout: Layout) -> list[Path]:
    return [layout.embed / "line1.emb", layout.embed / "line2.emb", layout.pretrain / "content.emb",
            layout.pretrain / "mf_P.emb", layout.pretrain / "mf_Q.emb"]


def run_train(cfg: ExperimentConfig, layout: Layout) -> list[Path]:
    ds = load_dataset(layout)
    comp = load_components(layout)
    E = ds.eval_set
    model = FusionModel.create(comp, hidden=cfg.hidden_layers, seed=substream_seed(cfg.seed, "fusion-init"))
    model = train_fusion(model, E.follower, E.followee, E.label, epochs=cfg.fusion_epochs, lr=cfg.fusion_lr,
                         batch=cfg.fusion_batch, seed=substream_seed(cfg.seed, "fusion"), betas=cfg.betas,
                         val_fraction=cfg.val_fraction)
    d = layout.ensure("model")
    save_fusion(d / "fusion.json", model,
                {str(p.relative_to(layout.root)): sha256_file(p) for p in _component_files(layout)})
    return [d / "fusion.json"]


def run_predict(cfg: ExperimentConfig, layout: Layout, pairs_path, dest) -> list[Path]:
    """Score ``follower<TAB>followee`` name pairs; writes ``follower followee score label`` lines."""
    users = require(layout.data / "users.txt").read_text(encoding="utf-8").splitlines()
    index = {u: k for k, u in enumerate(users)}
    model = load_fusion(layout.model / "fusion.json", load_components(layout))
    names, I, J = [], [], []
    for lineno, line in enumerate(require(pairs_path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2 or parts[0] not in index or parts[1] not in index:
            raise ArtifactError(f"{pairs_path}:{lineno}: unknown user pair {line!r}")
        names.append((parts[0], parts[1]))
        I.append(index[parts[0]])
        J.append(index[parts[1]])
    scores = model.predict_proba(I, J) if I else []
    lines = [f"{a}\t{b}\t{float(y)!r}\t{int(y >= cfg.threshold)}\n" for (a, b), y in zip(names, scores)]
    Path(dest).write_text("".join(lines), encoding="utf-8")
    return [Path(dest)]


def run_evaluate(cfg: ExperimentConfig, layout: Layout, sweep: bool = False) -> tuple[list[Path], dict]:
    ds = load_dataset(layout)
    audit = LeakageAudit()
    store = _store(cfg, ds)
    result = cross_validate(ds.graph, ds.unfollow, ds.eval_set, cfg, audit=audit, store=store)
    d = layout.ensure("metrics")
    (d / "metrics.json").write_text(result.to_json(), encoding="utf-8")
    (d / "metrics.tsv").write_text(result.to_tsv(), encoding="utf-8")
    out = [d / "metrics.json", d / "metrics.tsv"]
    if sweep:
        rows = robustness_sweep(ds.graph, ds.unfollow, ds.eval_set, cfg, store=store)
        text = "fraction\tn_train\tprecision\trecall\tauc\n" + "".join(
            f"{r.fraction:.1f}\t{r.n_train}\t{r.report.precision:.6f}\t{r.report.recall:.6f}\t{r.report.auc:.6f}\n"
            for r in rows)
        (d / "robustness.tsv").write_text(text, encoding="utf-8")
        out.append(d / "robustness.tsv")
    summary = {m: round(result.mean_auc(m), 6) for m in result.methods}
    return out, summary


def run_report(layout: Layout) -> bytes:
    p = require(layout.metrics / "metrics.json")
    data = p.read_bytes()
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{p}: not valid JSON ({exc})") from None
    if doc.get("format") != "umhi-metrics/1":
        raise ArtifactError(f"{p}: unsupported metrics format {doc.get('format')!r}")
    return data


def run_synth(cfg: ExperimentConfig, layout: Layout, users: int, communities: int | None = None,
              target_pairs: int | None = None, desk: bool = True) -> list[Path]:
    """Generate a dataset, write it in the ingest formats with a matching config, then ingest it."""
    from .config import DESK_PROFILE
    from .evaluation.synth import SynthConfig, generate_synthetic_benchmark, write_synthetic

    kw = {"n_users": users, "seed": cfg.seed}
    if communities:
        kw["n_communities"] = communities
    if target_pairs:
        kw["target_pairs"] = target_pairs
    scfg = SynthConfig(**kw)
    ds = generate_synthetic_benchmark(scfg)
    layout.root.mkdir(parents=True, exist_ok=True)
    rel, posts = write_synthetic(ds, layout.root)
    w0, w1 = scfg.window
    overrides = {"relations": str(rel.resolve()), "posts": str(posts.resolve()), "window_start": w0,
                 "window_end": w1, "max_unfollow": int(scfg.target_pairs / (1 + scfg.hold_ratio))}
    if desk:
        # explicit settings win over the profile
        defaults = ExperimentConfig()
        overrides.update({k: v for k, v in DESK_PROFILE.items() if getattr(cfg, k) == getattr(defaults, k)})
    cfg = cfg.with_overrides(**overrides)
    (layout.root / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    return [rel, posts, layout.root / "config.txt"] + run_ingest(cfg, layout)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    res = fn(*args, **kw)
    return res, time.perf_counter() - t0
