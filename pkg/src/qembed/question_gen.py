"""Contrastive question generation: sampling, probing, quality scoring, dedup, selection.

Per cluster: sample positives plus hard/easy negatives, prompt the LLM for
discriminative yes/no questions, probe each candidate against fresh texts, and
keep the highest-quality non-duplicate questions as embedding dimensions.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cluster import ClusterModel, nearest_clusters
from .prompts import (
    QUESTIONS_PER_GENERATION,
    CandidateQuestion,
    QuestionParseError,
    parse_answers,
    parse_questions,
    render_answer_prompt,
    render_contrastive_prompt,
    render_example_based_prompt,
)
from .providers import Encoder, LLMProvider, ProviderError

logger = logging.getLogger(__name__)

HARD_NEGATIVE_CLUSTERS = 3   # nearest clusters feeding generation hard negatives
PROBE_NEIGHBOR_CLUSTERS = 3  # nearest clusters feeding hard probes


class SamplingError(ValueError):
    """A sampling pool cannot fill the requested count; message names the pool."""


@dataclass(frozen=True)
class ContrastiveSample:
    cluster_id: int
    positives: list[str]
    hard_negatives: list[str]
    easy_negatives: list[str]


@dataclass(frozen=True)
class ProbeOutcome:
    pos_yes: int
    neg_yes: int
    p_p: int
    p_neg: int  # p_h + p_e
    quality: float


@dataclass(frozen=True)
class ScoredQuestion:
    question: CandidateQuestion
    probe: ProbeOutcome

    @property
    def quality(self) -> float:
        return self.probe.quality


@dataclass(frozen=True, eq=False)
class BankQuestion:
    id: int
    text: str
    origin_cluster: int
    quality: float | None  # absent for the example-guided baseline
    embedding: np.ndarray


@dataclass
class QuestionBank:
    questions: list[BankQuestion]
    theta: float
    t: int
    encoder_fingerprint: str

    @property
    def m(self) -> int:
        return len(self.questions)

    def texts(self) -> list[str]:
        return [q.text for q in self.questions]

    def fingerprint(self) -> str:
        payload = json.dumps({
            "theta": self.theta, "t": self.t,
            "encoder": self.encoder_fingerprint,
            "questions": [(q.id, q.text, q.origin_cluster, q.quality)
                          for q in self.questions],
        }, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def quality_score(pos_yes: int, p_p: int, neg_yes: int, p_neg: int) -> float:
    """Positive yes-rate minus negative yes-rate; in [-1, 1], 1 only for a perfect split."""
    if not 0 <= pos_yes <= p_p:
        raise ValueError(f"pos_yes={pos_yes} outside [0, {p_p}]")
    if not 0 <= neg_yes <= p_neg:
        raise ValueError(f"neg_yes={neg_yes} outside [0, {p_neg}]")
    return pos_yes / p_p - neg_yes / p_neg


def _draw(pool: list[str], count: int, rng: np.random.Generator, pool_name: str,
          allow_short: bool = False) -> list[str]:
    if len(pool) < count:
        if not allow_short:
            raise SamplingError(f"{pool_name} has {len(pool)} texts, need {count}")
        logger.warning("%s has only %d texts, need %d; taking all", pool_name, len(pool), count)
        count = len(pool)
    idx = rng.choice(len(pool), size=count, replace=False)
    return [pool[int(i)] for i in idx]


def _negative_pools(model: ClusterModel, c: int,
                    neighbor_count: int) -> tuple[list[str], list[str]]:
    neighbor_count = min(neighbor_count, model.k - 1)
    neighbors = nearest_clusters(model, c, neighbor_count) if neighbor_count else []
    hard_pool: list[str] = []
    for nc in neighbors:
        hard_pool.extend(model.members(nc))
    excluded = set(neighbors) | {c}
    easy_pool: list[str] = []
    for other in range(model.k):
        if other not in excluded:
            easy_pool.extend(model.members(other))
    return hard_pool, easy_pool


def sample_contrastive(model: ClusterModel, c: int, n_p: int, n_h: int, n_e: int,
                       rng: np.random.Generator,
                       hard_from: int = HARD_NEGATIVE_CLUSTERS) -> ContrastiveSample:
    """Draw generation texts: positives from c, hard negatives from its nearest
    clusters, easy negatives from everywhere else. Pools are disjoint by construction.

    A cluster smaller than n_p yields all its members with a warning; negative
    pools that cannot fill their count are an error naming the pool.
    """
    members = model.members(c)
    if not members:
        raise SamplingError(f"cluster {c} has no members")
    positives = _draw(members, n_p, rng, f"cluster {c} positives", allow_short=True)
    hard_pool, easy_pool = _negative_pools(model, c, hard_from)
    hard = _draw(hard_pool, n_h, rng, "hard negative pool")
    easy = _draw(easy_pool, n_e, rng, "easy negative pool")
    return ContrastiveSample(cluster_id=c, positives=positives,
                             hard_negatives=hard, easy_negatives=easy)


def generate_cluster_questions(sample: ContrastiveSample, texts: dict[str, str],
                               llm: LLMProvider) -> list[CandidateQuestion]:
    """Render the contrastive prompt for a sample and parse the LLM's questions.

    Fewer than the requested 10 questions is accepted with a warning; extras
    are truncated. Returns [] when nothing parses (logged, cluster skipped).
    """
    prompt = render_contrastive_prompt(
        [texts[d] for d in sample.positives],
        [texts[d] for d in sample.hard_negatives + sample.easy_negatives])
    try:
        raw = llm.complete(prompt)
    except ProviderError as exc:
        logger.warning("generation failed for cluster %d: %s", sample.cluster_id, exc)
        return []
    try:
        questions = parse_questions(raw, origin_cluster=sample.cluster_id)
    except QuestionParseError as exc:
        logger.warning("cluster %d produced no parseable questions: %s", sample.cluster_id, exc)
        return []
    if len(questions) > QUESTIONS_PER_GENERATION:
        logger.warning("cluster %d returned %d questions, truncating to %d",
                       sample.cluster_id, len(questions), QUESTIONS_PER_GENERATION)
        questions = questions[:QUESTIONS_PER_GENERATION]
    elif len(questions) < QUESTIONS_PER_GENERATION:
        logger.warning("cluster %d returned only %d questions", sample.cluster_id,
                       len(questions))
    return questions


def probe_question(q: CandidateQuestion, model: ClusterModel, texts: dict[str, str],
                   llm: LLMProvider, p_p: int, p_h: int, p_e: int,
                   rng: np.random.Generator,
                   neighbor_from: int = PROBE_NEIGHBOR_CLUSTERS) -> ProbeOutcome | None:
    """Ask the LLM the candidate question against fresh probe texts and score it.

    Returns None (question excluded downstream) if the provider fails.
    """
    members = model.members(q.origin_cluster)
    pos_probes = _draw(members, p_p, rng, f"cluster {q.origin_cluster} probe positives",
                       allow_short=True)
    hard_pool, easy_pool = _negative_pools(model, q.origin_cluster, neighbor_from)
    hard_probes = _draw(hard_pool, p_h, rng, "hard probe pool")
    easy_probes = _draw(easy_pool, p_e, rng, "easy probe pool")

    def ask(doc_id: str) -> int:
        answers, _ = parse_answers(llm.complete(render_answer_prompt(texts[doc_id], [q.text])),
                                   expected=1)
        return answers[0]

    try:
        pos_yes = sum(ask(d) for d in pos_probes)
        neg_yes = sum(ask(d) for d in hard_probes) + sum(ask(d) for d in easy_probes)
    except ProviderError as exc:
        logger.warning("probing failed for %r: %s", q.text, exc)
        return None
    p_neg = len(hard_probes) + len(easy_probes)
    return ProbeOutcome(pos_yes=pos_yes, neg_yes=neg_yes,
                        p_p=len(pos_probes), p_neg=p_neg,
                        quality=quality_score(pos_yes, len(pos_probes), neg_yes, p_neg))


def _is_duplicate(candidate_vec: np.ndarray, admitted: list[np.ndarray], theta: float) -> bool:
    # duplicate iff similarity strictly exceeds theta; equality admits
    for vec in admitted:
        denom = float(np.linalg.norm(candidate_vec) * np.linalg.norm(vec))
        sim = float(candidate_vec @ vec) / denom if denom else 0.0
        if sim > theta:
            return True
    return False


def select_question_bank(candidates: list[ScoredQuestion], encoder: Encoder,
                         theta: float, t: int) -> QuestionBank:
    """Greedy bank selection: clusters in ascending order, best quality first within
    a cluster (ties by list ordinal), admitting a question only if it is no
    duplicate of anything already admitted and its cluster still has room.
    """
    by_cluster: dict[int, list[ScoredQuestion]] = {}
    for cand in candidates:
        by_cluster.setdefault(cand.question.origin_cluster, []).append(cand)

    ordered: list[ScoredQuestion] = []
    for cluster in sorted(by_cluster):
        group = sorted(by_cluster[cluster],
                       key=lambda s: (-s.quality, s.question.ordinal))
        ordered.extend(group)

    embeddings = encoder.encode([s.question.text for s in ordered]) if ordered else \
        np.zeros((0, encoder.dim))
    admitted: list[BankQuestion] = []
    admitted_vecs: list[np.ndarray] = []
    per_cluster: dict[int, int] = {}
    for cand, vec in zip(ordered, embeddings):
        cluster = cand.question.origin_cluster
        if per_cluster.get(cluster, 0) >= t:
            continue
        norm = float(np.linalg.norm(vec))
        unit = vec / norm if norm else vec
        if _is_duplicate(unit, admitted_vecs, theta):
            continue
        admitted.append(BankQuestion(id=len(admitted), text=cand.question.text,
                                     origin_cluster=cluster, quality=cand.quality,
                                     embedding=unit))
        admitted_vecs.append(unit)
        per_cluster[cluster] = per_cluster.get(cluster, 0) + 1

    if not admitted:
        logger.warning("selection produced an empty question bank")
    return QuestionBank(questions=admitted, theta=theta, t=t,
                        encoder_fingerprint=encoder.fingerprint())


def generate_example_bank(corpus_texts: list[str], example_questions: list[str],
                          llm: LLMProvider, encoder: Encoder, rng: np.random.Generator,
                          theta: float = 0.925, num_prompts: int = 5,
                          refs_per_prompt: int = 2) -> QuestionBank:
    """Example-guided baseline generator: no contrast, no probing, dedup only.

    Each prompt shows randomly drawn reference articles plus the example
    questions; parsed questions are deduplicated at theta in arrival order.
    Quality is recorded as absent and origin_cluster as -1 throughout.
    """
    if not example_questions:
        raise ValueError("example questions must be non-empty")
    if not corpus_texts:
        raise ValueError("corpus is empty")
    parsed: list[str] = []
    for _ in range(num_prompts):
        refs = _draw(corpus_texts, refs_per_prompt, rng, "reference articles",
                     allow_short=True)
        try:
            raw = llm.complete(render_example_based_prompt(refs, example_questions))
            parsed.extend(q.text for q in parse_questions(raw))
        except (ProviderError, QuestionParseError) as exc:
            logger.warning("example-based generation prompt failed: %s", exc)

    admitted: list[BankQuestion] = []
    admitted_vecs: list[np.ndarray] = []
    if parsed:
        embeddings = encoder.encode(parsed)
        for text, vec in zip(parsed, embeddings):
            norm = float(np.linalg.norm(vec))
            unit = vec / norm if norm else vec
            if _is_duplicate(unit, admitted_vecs, theta):
                continue
            admitted.append(BankQuestion(id=len(admitted), text=text, origin_cluster=-1,
                                         quality=None, embedding=unit))
            admitted_vecs.append(unit)
    if not admitted:
        logger.warning("example-based generation produced an empty bank")
    return QuestionBank(questions=admitted, theta=theta, t=0,
                        encoder_fingerprint=encoder.fingerprint())


def save_question_bank(bank: QuestionBank, path: str | Path) -> None:
    """Header record {theta, t, m, encoder_fingerprint} then one record per question."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"theta": bank.theta, "t": bank.t, "m": bank.m,
                             "encoder_fingerprint": bank.encoder_fingerprint}) + "\n")
        for q in bank.questions:
            fh.write(json.dumps({"id": q.id, "text": q.text,
                                 "origin_cluster": q.origin_cluster,
                                 "quality": q.quality,
                                 "embedding": [float(x) for x in q.embedding]},
                                ensure_ascii=False) + "\n")


def load_question_bank(path: str | Path) -> QuestionBank:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty question bank file: {path}")
    header = json.loads(lines[0])
    questions = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        questions.append(BankQuestion(
            id=int(rec["id"]), text=rec["text"],
            origin_cluster=int(rec["origin_cluster"]),
            quality=None if rec["quality"] is None else float(rec["quality"]),
            embedding=np.asarray(rec["embedding"], dtype=np.float64)))
    if len(questions) != header["m"]:
        raise ValueError(f"bank file {path} claims m={header['m']}, has {len(questions)}")
    return QuestionBank(questions=questions, theta=float(header["theta"]),
                        t=int(header["t"]),
                        encoder_fingerprint=header["encoder_fingerprint"])
