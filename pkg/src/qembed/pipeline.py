"""Stage orchestration: each stage reads upstream artifacts from the workspace,
does its piece of the pipeline, and writes its own artifacts plus a summary.

All stage randomness derives from one root seed expanded per stage name, so a
single seed reproduces the whole run.
"""

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .answering import collect_answers, split_examples
from .binary import BinaryMatrix, save_binary_matrix
from .cluster import effective_k, kmeans_fit, load_cluster_model, save_cluster_model
from .config import (ConfigError, PipelineConfig, config_hash, dump_config,
                     parse_float_list, parse_hours_map, parse_int_list)
from .corpus import content_id, exact_dedup, ingest, load_corpus, save_corpus, split_heldout
from .cost import comparison_rows, cost_rows_jsonl, render_cost_table
from .evaluation import (clustering_evaluate, explain_pair, load_clustering_task,
                         load_retrieval_task, load_sts_task, mean_cognitive_load,
                         retrieval_evaluate, sts_evaluate)
from .heads import (TrainingConfig, TrainingExample, embed_documents,
                    evaluate_heldout, load_heads, save_heads, train_heads)
from .metrics import MetricError
from .providers import AnswerCache, CachedLLM, MockEncoder, PromptCacheStore, RemoteLLM, ScriptedLLM
from .question_gen import (CandidateQuestion, ProbeOutcome, ScoredQuestion,
                           generate_cluster_questions, load_question_bank,
                           probe_question, sample_contrastive,
                           save_question_bank, select_question_bank)
from .synthetic import TopicOracleLLM
from .workspace import Workspace, file_fingerprint

logger = logging.getLogger(__name__)

STAGE_ORDER = ["ingest", "encode", "cluster", "generate", "probe", "select",
               "collect", "train", "embed", "eval-sts", "eval-retrieval",
               "eval-clustering", "explain", "ablate", "cost"]


def stage_seed(root_seed: int, stage: str) -> int:
    """Expand the root seed into an independent per-stage seed."""
    digest = hashlib.sha256(f"{root_seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _rng(root_seed: int, stage: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stage_seed(root_seed, stage)))


@dataclass
class StageContext:
    cfg: PipelineConfig
    ws: Workspace
    config_dir: Path
    input_fps: dict[str, str] = field(default_factory=dict)
    _encoder: object = None
    _llm: object = None

    @property
    def seed(self) -> int:
        return self.cfg.pipeline.seed

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.config_dir / p

    @property
    def encoder(self):
        if self._encoder is None:
            self._encoder = MockEncoder(dim=self.cfg.encoder.dim,
                                        seed=self.cfg.encoder.seed)
        return self._encoder

    @property
    def llm(self):
        if self._llm is None:
            self._llm = self._build_llm()
        return self._llm

    def _build_llm(self):
        kind = self.cfg.llm.kind
        if kind == "oracle":
            return TopicOracleLLM()
        if kind == "scripted":
            if not self.cfg.llm.transcript:
                raise ConfigError("[llm] transcript is required when kind = scripted")
            return ScriptedLLM.from_file(self.resolve(self.cfg.llm.transcript))
        if not self.cfg.llm.endpoint:
            raise ConfigError("[llm] endpoint is required when kind = remote")
        remote = RemoteLLM(endpoint=self.cfg.llm.endpoint, model=self.cfg.llm.model,
                           max_parallel=self.cfg.llm.max_parallel,
                           timeout=self.cfg.llm.timeout)
        store = PromptCacheStore(self.ws.root / "prompt_cache.jsonl")
        return CachedLLM(remote, store)

    def provenance(self) -> dict:
        return {"config_hash": config_hash(self.cfg), "inputs": dict(self.input_fps)}


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# stage implementations

def _stage_ingest(ctx: StageContext) -> dict:
    if not ctx.cfg.corpus.input:
        raise ConfigError("[corpus] input is not configured")
    source = ctx.resolve(ctx.cfg.corpus.input)
    if not source.exists():
        raise ConfigError(f"[corpus] input file not found: {source}")
    corpus = exact_dedup(ingest(source, format=ctx.cfg.corpus.format))
    save_corpus(corpus, ctx.ws.path("corpus"))
    split = split_heldout(corpus, ctx.cfg.corpus.heldout_fraction,
                          seed=stage_seed(ctx.seed, "split"))
    _write_json(ctx.ws.path("split"), {
        "seed": split.seed,
        "train_ids": sorted(split.train_ids),
        "heldout_ids": sorted(split.heldout_ids),
    })
    return {"documents": len(corpus), "heldout": len(split.heldout_ids),
            "skipped_records": corpus.skipped_records}


def _stage_encode(ctx: StageContext) -> dict:
    corpus = load_corpus(ctx.ws.path("corpus"))
    embeddings = ctx.encoder.encode(corpus.texts())
    np.save(ctx.ws.path("doc_embeddings"), embeddings)
    return {"documents": len(corpus), "dim": int(embeddings.shape[1])}


def _stage_cluster(ctx: StageContext) -> dict:
    corpus = load_corpus(ctx.ws.path("corpus"))
    embeddings = np.load(ctx.ws.path("doc_embeddings"))
    k = effective_k(ctx.cfg.cluster.k, len(corpus))
    model = kmeans_fit(embeddings, k=k, seed=stage_seed(ctx.seed, "cluster"),
                       max_iters=ctx.cfg.cluster.max_iters, tol=ctx.cfg.cluster.tol,
                       doc_ids=corpus.ids())
    save_cluster_model(model, ctx.ws.path("cluster_model"))
    return {"k": model.k, "iterations": model.iterations,
            "inertia": round(model.inertia, 6)}


def _stage_generate(ctx: StageContext) -> dict:
    corpus = load_corpus(ctx.ws.path("corpus"))
    model = load_cluster_model(ctx.ws.path("cluster_model"))
    texts = corpus.text_by_id()
    rng = _rng(ctx.seed, "generate")
    gen = ctx.cfg.generation
    candidates = []
    for c in range(model.k):
        sample = sample_contrastive(model, c, n_p=gen.positives,
                                    n_h=gen.hard_negatives, n_e=gen.easy_negatives,
                                    rng=rng, hard_from=gen.hard_neighbor_clusters)
        candidates.extend(generate_cluster_questions(sample, texts, ctx.llm))
    with open(ctx.ws.path("candidates"), "w", encoding="utf-8") as fh:
        for cand in candidates:
            fh.write(json.dumps({"text": cand.text, "origin_cluster": cand.origin_cluster,
                                 "ordinal": cand.ordinal}, sort_keys=True) + "\n")
    return {"clusters": model.k, "candidates": len(candidates)}


def _stage_probe(ctx: StageContext) -> dict:
    corpus = load_corpus(ctx.ws.path("corpus"))
    model = load_cluster_model(ctx.ws.path("cluster_model"))
    texts = corpus.text_by_id()
    rng = _rng(ctx.seed, "probe")
    cfg = ctx.cfg.probe
    kept = dropped = 0
    with open(ctx.ws.path("candidates"), encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    with open(ctx.ws.path("probes"), "w", encoding="utf-8") as out:
        for row in rows:
            cand = CandidateQuestion(text=row["text"],
                                     origin_cluster=row["origin_cluster"],
                                     ordinal=row["ordinal"])
            outcome = probe_question(cand, model, texts, ctx.llm,
                                     p_p=cfg.positives, p_h=cfg.hard_negatives,
                                     p_e=cfg.easy_negatives, rng=rng,
                                     neighbor_from=cfg.neighbor_clusters)
            if outcome is None:
                dropped += 1
                continue
            kept += 1
            record = dict(row)
            record.update({"pos_yes": outcome.pos_yes, "neg_yes": outcome.neg_yes,
                           "p_p": outcome.p_p, "p_neg": outcome.p_neg,
                           "quality": outcome.quality})
            out.write(json.dumps(record, sort_keys=True) + "\n")
    return {"probed": kept, "dropped": dropped}


def _stage_select(ctx: StageContext) -> dict:
    with open(ctx.ws.path("probes"), encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    scored = []
    for row in rows:
        cand = CandidateQuestion(text=row["text"], origin_cluster=row["origin_cluster"],
                                 ordinal=row["ordinal"])
        outcome = ProbeOutcome(pos_yes=row["pos_yes"], neg_yes=row["neg_yes"],
                               p_p=row["p_p"], p_neg=row["p_neg"],
                               quality=row["quality"])
        scored.append(ScoredQuestion(question=cand, probe=outcome))
    bank = select_question_bank(scored, ctx.encoder,
                                theta=ctx.cfg.selection.dedup_threshold,
                                t=ctx.cfg.selection.per_cluster_cap)
    save_question_bank(bank, ctx.ws.path("bank"))
    return {"candidates": len(scored), "bank_size": bank.m,
            "bank_fingerprint": bank.fingerprint()}


def _write_examples(path: Path, examples: list[TrainingExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            answers = {str(q): int(a) for q, a in sorted(ex.answers.items())}
            fh.write(json.dumps({"document_id": ex.document_id,
                                 "answers": answers}, sort_keys=True) + "\n")


def _read_examples(path: Path) -> list[TrainingExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(TrainingExample(document_id=rec["document_id"],
                                       answers={int(q): int(a) for q, a
                                                in rec["answers"].items()}))
    return out


def _stage_collect(ctx: StageContext) -> dict:
    corpus = load_corpus(ctx.ws.path("corpus"))
    model = load_cluster_model(ctx.ws.path("cluster_model"))
    bank = load_question_bank(ctx.ws.path("bank"))
    split = json.loads(ctx.ws.path("split").read_text(encoding="utf-8"))
    cache = AnswerCache(ctx.ws.path("answers"))
    col = ctx.cfg.collection
    result = collect_answers(bank, model, corpus.text_by_id(), ctx.llm, cache,
                             _rng(ctx.seed, "collect"),
                             in_cluster=col.in_cluster, neighbor=col.neighbor,
                             neighbor_from=col.neighbor_clusters,
                             random_count=col.random, group=col.group)
    train, heldout = split_examples(result.examples,
                                    frozenset(split["heldout_ids"]))
    _write_examples(ctx.ws.path("train_examples"), train)
    _write_examples(ctx.ws.path("heldout_examples"), heldout)
    return {"pairs": result.requested_pairs, "llm_calls": result.llm_calls,
            "cache_hits": result.cache_hits, "unparsed": result.unparsed,
            "train_docs": len(train), "heldout_docs": len(heldout)}


def _pos_weight_setting(raw: str) -> float | None:
    if raw == "auto":
        return None
    if raw == "none":
        return 1.0
    return float(raw)


def _stage_train(ctx: StageContext) -> dict:
    corpus = load_corpus(ctx.ws.path("corpus"))
    bank = load_question_bank(ctx.ws.path("bank"))
    train = _read_examples(ctx.ws.path("train_examples"))
    heldout = _read_examples(ctx.ws.path("heldout_examples"))
    tcfg = ctx.cfg.training
    cfg = TrainingConfig(learning_rate=tcfg.learning_rate, steps=tcfg.steps,
                         pos_weight=_pos_weight_setting(tcfg.pos_weight),
                         hidden=tcfg.hidden, seed=stage_seed(ctx.seed, "train"),
                         tau=tcfg.tau)
    texts = corpus.text_by_id()
    heads = train_heads(train, texts, ctx.encoder, bank, cfg)
    save_heads(heads, ctx.ws.path("heads"))
    payload = {"provenance": ctx.provenance(), "train_docs": len(train),
               "heldout_docs": len(heldout), "accuracy": None, "report": None}
    if heldout:
        report = evaluate_heldout(heads, ctx.encoder, heldout, texts, tau=tcfg.tau)
        payload["accuracy"] = report.accuracy
        payload["report"] = report.as_dict()
    _write_json(ctx.ws.path("heldout_report"), payload)
    return {"heads": bank.m, "steps": tcfg.steps,
            "heldout_accuracy": payload["accuracy"]}


def _stage_embed(ctx: StageContext) -> dict:
    corpus = load_corpus(ctx.ws.path("corpus"))
    heads = load_heads(ctx.ws.path("heads"))
    matrix = embed_documents(corpus.texts(), ctx.encoder, heads,
                             tau=ctx.cfg.training.tau, row_ids=corpus.ids())
    save_binary_matrix(matrix, ctx.ws.path("matrix"))
    dense = matrix.to_dense()
    meta = {"provenance": ctx.provenance(), "bank_fingerprint": heads.bank_fingerprint,
            "tau": ctx.cfg.training.tau, "documents": matrix.n, "questions": matrix.m,
            "mean_bits_per_document": float(dense.sum(axis=1).mean()) if matrix.n else 0.0}
    _write_json(ctx.ws.path("embed_meta"), meta)
    return {"documents": matrix.n, "questions": matrix.m,
            "mean_bits": meta["mean_bits_per_document"]}


def _embed_texts(ctx: StageContext, heads, texts: list[str], tau: float | None = None
                 ) -> BinaryMatrix:
    """Embed task texts keyed by content id (texts must be distinct)."""
    return embed_documents(texts, ctx.encoder, heads, tau=tau,
                           row_ids=[content_id(t) for t in texts])


def _require_sts(ctx: StageContext):
    if not ctx.cfg.eval.sts:
        raise ConfigError("[eval] sts task file is not configured")
    return load_sts_task(ctx.resolve(ctx.cfg.eval.sts))


def _stage_eval_sts(ctx: StageContext) -> dict:
    task = _require_sts(ctx)
    heads = load_heads(ctx.ws.path("heads"))
    matrix = _embed_texts(ctx, heads, task.texts(), tau=ctx.cfg.training.tau)
    result = sts_evaluate(task, matrix)
    load = mean_cognitive_load(task, matrix)
    payload = {"provenance": ctx.provenance(), "pairs": result.pairs,
               "spearman": result.spearman, "spearman_x100": result.spearman_x100,
               "mean_cognitive_load": load.exact,
               "mean_cognitive_load_rounded": load.rounded,
               "tau": ctx.cfg.training.tau}
    _write_json(ctx.ws.path("sts_report"), payload)
    _write_text(ctx.ws.root / "reports" / "sts.txt",
                f"semantic similarity over {result.pairs} pairs\n"
                f"spearman        {result.spearman:.4f}  (x100: {result.spearman_x100:.2f})\n"
                f"cognitive load  {load.exact:.2f}  (rounded: {load.rounded})")
    return {"spearman": result.spearman, "mean_load": load.exact}


def _stage_eval_retrieval(ctx: StageContext) -> dict:
    ev = ctx.cfg.eval
    if not (ev.queries and ev.corpus and ev.qrels):
        raise ConfigError("[eval] queries, corpus, and qrels must all be configured")
    task = load_retrieval_task(ctx.resolve(ev.queries), ctx.resolve(ev.corpus),
                               ctx.resolve(ev.qrels))
    heads = load_heads(ctx.ws.path("heads"))
    qids = sorted(task.queries)
    dids = sorted(task.corpus)
    qmat = embed_documents([task.queries[q] for q in qids], ctx.encoder, heads,
                           tau=ctx.cfg.training.tau, row_ids=qids)
    dmat = embed_documents([task.corpus[d] for d in dids], ctx.encoder, heads,
                           tau=ctx.cfg.training.tau, row_ids=dids)
    result = retrieval_evaluate(task, qmat, dmat)
    payload = {"provenance": ctx.provenance(), "k": result.k,
               "mean_ndcg": result.mean_ndcg, "per_query": result.per_query,
               "queries": len(qids), "documents": len(dids)}
    _write_json(ctx.ws.path("retrieval_report"), payload)
    _write_text(ctx.ws.root / "reports" / "retrieval.txt",
                f"retrieval over {len(qids)} queries, {len(dids)} documents\n"
                f"mean nDCG@{result.k}  {result.mean_ndcg:.4f}")
    return {"mean_ndcg": result.mean_ndcg}


def _stage_eval_clustering(ctx: StageContext) -> dict:
    if not ctx.cfg.eval.clustering:
        raise ConfigError("[eval] clustering task file is not configured")
    task = load_clustering_task(ctx.resolve(ctx.cfg.eval.clustering))
    heads = load_heads(ctx.ws.path("heads"))
    matrix = embed_documents(list(task.texts), ctx.encoder, heads,
                             tau=ctx.cfg.training.tau,
                             row_ids=[f"r{i}" for i in range(len(task.texts))])
    score = clustering_evaluate(matrix, list(task.labels),
                                seed=stage_seed(ctx.seed, "eval-clustering"))
    payload = {"provenance": ctx.provenance(), "v_measure": score,
               "texts": len(task.texts), "k": len(set(task.labels))}
    _write_json(ctx.ws.path("clustering_report"), payload)
    _write_text(ctx.ws.root / "reports" / "clustering.txt",
                f"clustering over {len(task.texts)} texts into "
                f"{len(set(task.labels))} groups\nv-measure  {score:.4f}")
    return {"v_measure": score}


def _stage_explain(ctx: StageContext) -> dict:
    task = _require_sts(ctx)
    heads = load_heads(ctx.ws.path("heads"))
    bank = load_question_bank(ctx.ws.path("bank"))
    n = min(ctx.cfg.eval.explain_pairs, len(task.pairs))
    reports = []
    for pair in task.pairs[:n]:
        matrix = _embed_texts(ctx, heads, list(dict.fromkeys([pair.text_a, pair.text_b])),
                              tau=ctx.cfg.training.tau)
        a = matrix.row(matrix.row_index(content_id(pair.text_a)))
        b = matrix.row(matrix.row_index(content_id(pair.text_b)))
        reports.append(explain_pair(a, b, bank, text_a=pair.text_a,
                                    text_b=pair.text_b,
                                    bank_fingerprint=heads.bank_fingerprint))
    with open(ctx.ws.path("explanations"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"provenance": ctx.provenance()}, sort_keys=True) + "\n")
        for rep in reports:
            fh.write(json.dumps(rep.as_dict(), sort_keys=True) + "\n")
    _write_text(ctx.ws.root / "reports" / "explanations.txt",
                "\n\n".join(r.render_text() for r in reports) or "(no pairs)")
    _write_text(ctx.ws.root / "reports" / "explanations.md",
                "\n\n".join(r.render_markdown() for r in reports) or "_no pairs_")
    return {"pairs_explained": len(reports)}


def _sts_numbers(ctx: StageContext, task, heads, tau: float | None,
                 matrix: BinaryMatrix | None = None):
    if matrix is None:
        matrix = _embed_texts(ctx, heads, task.texts(), tau=tau)
    try:
        rho = sts_evaluate(task, matrix).spearman
    except MetricError:
        rho = None  # constant similarities (e.g. all-zero rows at extreme tau)
    return rho, mean_cognitive_load(task, matrix).exact, matrix


def _stage_ablate(ctx: StageContext) -> dict:
    task = _require_sts(ctx)
    heads = load_heads(ctx.ws.path("heads"))
    taus = parse_float_list(ctx.cfg.eval.ablate_taus)
    dims = parse_int_list(ctx.cfg.eval.ablate_dims)
    if not taus and not dims:
        raise ConfigError("[eval] ablation sweep is empty: set ablate_taus or ablate_dims")
    rows = []
    for tau in taus:
        if not 0 < tau < 1:
            raise ConfigError(f"[eval] ablate_taus entries must be in (0, 1), got {tau}")
        rho, load, _ = _sts_numbers(ctx, task, heads, tau)
        rows.append({"parameter": "tau", "value": tau, "spearman": rho,
                     "mean_load": load})
    if dims:
        _, _, base = _sts_numbers(ctx, task, heads, ctx.cfg.training.tau)
        for m_prime in dims:
            if not 1 <= m_prime <= base.m:
                logger.warning("skipping ablation width %d outside [1, %d]",
                               m_prime, base.m)
                continue
            rho, load, _ = _sts_numbers(ctx, task, heads, None,
                                        matrix=base.truncate(m_prime))
            rows.append({"parameter": "dims", "value": m_prime, "spearman": rho,
                         "mean_load": load})
    with open(ctx.ws.path("ablation_report"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"provenance": ctx.provenance()}, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    lines = [f"{'parameter':>10}  {'value':>8}  {'spearman':>9}  {'mean load':>10}"]
    for r in rows:
        rho = "n/a" if r["spearman"] is None else f"{r['spearman']:.4f}"
        lines.append(f"{r['parameter']:>10}  {r['value']:>8}  {rho:>9}  "
                     f"{r['mean_load']:>10.2f}")
    _write_text(ctx.ws.root / "reports" / "ablate.txt", "\n".join(lines))
    return {"settings": len(rows)}


def _stage_cost(ctx: StageContext) -> dict:
    cc = ctx.cfg.cost
    counts = parse_int_list(cc.question_counts)
    if not counts:
        raise ConfigError("[cost] question_counts is empty")
    overrides = dict(
        questions_per_prompt=cc.questions_per_prompt,
        avg_input_tokens_per_prompt=cc.avg_input_tokens_per_prompt,
        avg_output_tokens_per_prompt=cc.avg_output_tokens_per_prompt,
        price_in=cc.price_in, price_out=cc.price_out,
        training_texts_per_question=cc.training_texts_per_question,
        api_cost_per_pair=cc.api_cost_per_pair, gpu_rate=cc.gpu_rate,
        train_hours=cc.train_hours, infer_hours=parse_hours_map(cc.infer_hours))
    rows = comparison_rows(cc.num_docs, counts, **overrides)
    header = json.dumps({"provenance": ctx.provenance()}, sort_keys=True) + "\n"
    (ctx.ws.path("cost_report")).parent.mkdir(parents=True, exist_ok=True)
    ctx.ws.path("cost_report").write_text(
        header + cost_rows_jsonl(rows, cc.num_docs), encoding="utf-8")
    _write_text(ctx.ws.root / "reports" / "cost.txt",
                render_cost_table(rows, cc.num_docs))
    return {"rows": len(rows)}


# --------------------------------------------------------------------------
# registry and runner

@dataclass(frozen=True)
class Stage:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    func: object


STAGES: dict[str, Stage] = {s.name: s for s in [
    Stage("ingest", (), ("corpus", "split"), _stage_ingest),
    Stage("encode", ("corpus",), ("doc_embeddings",), _stage_encode),
    Stage("cluster", ("corpus", "doc_embeddings"), ("cluster_model",), _stage_cluster),
    Stage("generate", ("corpus", "cluster_model"), ("candidates",), _stage_generate),
    Stage("probe", ("corpus", "cluster_model", "candidates"), ("probes",), _stage_probe),
    Stage("select", ("probes",), ("bank",), _stage_select),
    Stage("collect", ("corpus", "split", "cluster_model", "bank"),
          ("answers", "train_examples", "heldout_examples"), _stage_collect),
    Stage("train", ("corpus", "bank", "train_examples", "heldout_examples"),
          ("heads", "heldout_report"), _stage_train),
    Stage("embed", ("corpus", "heads"), ("matrix", "embed_meta"), _stage_embed),
    Stage("eval-sts", ("heads",), ("sts_report",), _stage_eval_sts),
    Stage("eval-retrieval", ("heads",), ("retrieval_report",), _stage_eval_retrieval),
    Stage("eval-clustering", ("heads",), ("clustering_report",), _stage_eval_clustering),
    Stage("explain", ("heads", "bank"), ("explanations",), _stage_explain),
    Stage("ablate", ("heads",), ("ablation_report",), _stage_ablate),
    Stage("cost", (), ("cost_report",), _stage_cost),
]}


@dataclass(frozen=True)
class StageResult:
    stage: str
    skipped: bool
    summary: dict


def _external_inputs(name: str, cfg: PipelineConfig, config_dir: Path
                     ) -> dict[str, Path]:
    """Config-referenced files a stage reads, for change detection."""
    def resolve(p):
        path = Path(p)
        return path if path.is_absolute() else config_dir / p

    out: dict[str, Path] = {}
    ev = cfg.eval
    if name == "ingest" and cfg.corpus.input:
        out["file:corpus_input"] = resolve(cfg.corpus.input)
    if name in ("eval-sts", "explain", "ablate") and ev.sts:
        out["file:sts_task"] = resolve(ev.sts)
    if name == "eval-retrieval":
        for key, p in (("queries", ev.queries), ("corpus", ev.corpus),
                       ("qrels", ev.qrels)):
            if p:
                out[f"file:{key}"] = resolve(p)
    if name == "eval-clustering" and ev.clustering:
        out["file:clustering_task"] = resolve(ev.clustering)
    if (cfg.llm.kind == "scripted" and cfg.llm.transcript
            and name in ("generate", "probe", "collect")):
        out["file:transcript"] = resolve(cfg.llm.transcript)
    return out


def run_stage(name: str, cfg: PipelineConfig, ws: Workspace, config_dir: Path,
              force: bool = False) -> StageResult:
    if name not in STAGES:
        raise ConfigError(f"unknown stage {name!r}; "
                          f"known: {', '.join(STAGE_ORDER)}")
    stage = STAGES[name]
    input_fps = ws.require_inputs(name, list(stage.inputs))
    ws.verify_chain(name, input_fps, force=force)
    for key, path in _external_inputs(name, cfg, config_dir).items():
        if path.exists():  # a missing file fails inside the stage, with context
            input_fps[key] = file_fingerprint(path)
    ch = config_hash(cfg)
    if not force and ws.up_to_date(name, ch, input_fps):
        ws.log({"stage": name, "status": "skipped"})
        return StageResult(stage=name, skipped=True, summary={})
    ctx = StageContext(cfg=cfg, ws=ws, config_dir=config_dir, input_fps=input_fps)
    started = time.perf_counter()
    summary = stage.func(ctx)
    elapsed = round(time.perf_counter() - started, 3)
    output_fps = ws.fingerprint_outputs(list(stage.outputs))
    ws.record_stage(name, ch, input_fps, output_fps)
    ws.log({"stage": name, "status": "ran", "seconds": elapsed, **summary})
    return StageResult(stage=name, skipped=False, summary=summary)


def _stage_applicable(name: str, cfg: PipelineConfig) -> bool:
    ev = cfg.eval
    if name in ("eval-sts", "ablate"):
        return bool(ev.sts)
    if name == "explain":
        return bool(ev.sts) and ev.explain_pairs > 0
    if name == "eval-retrieval":
        return bool(ev.queries and ev.corpus and ev.qrels)
    if name == "eval-clustering":
        return bool(ev.clustering)
    return True


def run_all(cfg: PipelineConfig, ws: Workspace, config_dir: Path,
            force: bool = False) -> list[StageResult]:
    """Run every applicable stage in order; snapshot the config for provenance."""
    (ws.root / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    results = []
    for name in STAGE_ORDER:
        if not _stage_applicable(name, cfg):
            ws.log({"stage": name, "status": "not-configured"})
            continue
        results.append(run_stage(name, cfg, ws, config_dir, force=force))
    return results


# --------------------------------------------------------------------------
# bundled demo

_DEMO_CONFIG = """\
[pipeline]
seed = {seed}

[corpus]
input = demo_corpus.jsonl
format = json-lines
heldout_fraction = 0.1

[encoder]
kind = mock
dim = {dim}
seed = 0

[llm]
kind = oracle

[cluster]
k = 4

[generation]
positives = {gen_pos}
hard_negatives = {gen_neg}
easy_negatives = {gen_neg}
hard_neighbor_clusters = 2

[probe]
neighbor_clusters = 2

[collection]
in_cluster = {in_cluster}
neighbor = {neighbor}
neighbor_clusters = 2
random = {random}

[training]
learning_rate = {learning_rate}
steps = {steps}
hidden = {hidden}

[eval]
sts = sts.jsonl
queries = queries.jsonl
corpus = retrieval_corpus.jsonl
qrels = qrels.jsonl
clustering = clustering.jsonl
explain_pairs = 2
ablate_taus = 0.1,0.3,0.5,0.7,0.9
ablate_dims = 4,8,16
"""


def write_demo_workspace(root: Path, seed: int = 0, *, n_per_topic: int = 50,
                         steps: int = 20_000, learning_rate: float = 3e-3,
                         hidden: int = 16, dim: int = 64,
                         sts_pairs: int = 150) -> Path:
    """Write the synthetic corpus, task files, and desk-scale config; return
    the config path. Four latent topics, deterministic rule-based provider."""
    from .synthetic import (synthetic_clustering_task, synthetic_corpus,
                            synthetic_retrieval_task, synthetic_sts_task)

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    corpus = synthetic_corpus(n_per_topic=n_per_topic, seed=seed)
    with open(root / "demo_corpus.jsonl", "w", encoding="utf-8") as fh:
        for doc in corpus:
            fh.write(json.dumps({"id": doc.id, "text": doc.text,
                                 "source": doc.source}, sort_keys=True) + "\n")
    sts = synthetic_sts_task(corpus, n_pairs=sts_pairs,
                             seed=stage_seed(seed, "demo-sts"))
    with open(root / "sts.jsonl", "w", encoding="utf-8") as fh:
        for p in sts.pairs:
            fh.write(json.dumps({"text_a": p.text_a, "text_b": p.text_b,
                                 "score": p.score}, sort_keys=True) + "\n")
    retrieval = synthetic_retrieval_task(corpus, queries_per_topic=2,
                                         seed=stage_seed(seed, "demo-retrieval"))
    with open(root / "queries.jsonl", "w", encoding="utf-8") as fh:
        for qid in sorted(retrieval.queries):
            fh.write(json.dumps({"id": qid, "text": retrieval.queries[qid]},
                                sort_keys=True) + "\n")
    with open(root / "retrieval_corpus.jsonl", "w", encoding="utf-8") as fh:
        for did in sorted(retrieval.corpus):
            fh.write(json.dumps({"id": did, "text": retrieval.corpus[did]},
                                sort_keys=True) + "\n")
    with open(root / "qrels.jsonl", "w", encoding="utf-8") as fh:
        for qid in sorted(retrieval.qrels):
            for did in sorted(retrieval.qrels[qid]):
                fh.write(json.dumps({"query_id": qid, "doc_id": did,
                                     "rel": retrieval.qrels[qid][did]},
                                    sort_keys=True) + "\n")
    clustering = synthetic_clustering_task(corpus)
    with open(root / "clustering.jsonl", "w", encoding="utf-8") as fh:
        for text, label in zip(clustering.texts, clustering.labels):
            fh.write(json.dumps({"text": text, "label": label},
                                sort_keys=True) + "\n")
    config_path = root / "demo.ini"
    config_path.write_text(
        _DEMO_CONFIG.format(seed=seed, dim=dim, steps=steps, hidden=hidden,
                            learning_rate=learning_rate,
                            gen_pos=min(6, n_per_topic // 2),
                            gen_neg=min(18, (3 * n_per_topic) // 4),
                            in_cluster=n_per_topic,
                            neighbor=(3 * n_per_topic) // 5,
                            random=(2 * n_per_topic) // 5),
        encoding="utf-8")
    return config_path
