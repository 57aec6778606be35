"""Per-question binary classifier heads over frozen text embeddings.

One tiny MLP (d -> h -> 1) per bank question, trained jointly on cached LLM
answers with class-weighted binary cross-entropy and per-parameter Adam.
Everything is numpy float64 with explicit gradients so training is
bit-reproducible and finite-difference checkable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binary import BinaryMatrix
from .providers import Encoder
from .question_gen import QuestionBank

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingError(RuntimeError):
    """Raised on invalid training data or a diverging loss."""


@dataclass(frozen=True)
class TrainingExample:
    document_id: str
    answers: dict[int, int]  # question id -> 1 yes / 0 no

    def __post_init__(self):
        if not self.answers:
            raise TrainingError(f"example {self.document_id} has no answers")


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-4
    steps: int = 100_000
    pos_weight: float | None = None  # None: computed from the data
    hidden: int = 128
    seed: int = 0
    tau: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainingError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.tau < 1.0:
            raise TrainingError(f"tau must be in (0, 1), got {self.tau}")


@dataclass
class QuestionHeads:
    """Stacked parameters: W1 (m,h,d), b1 (m,h), w2 (m,h), b2 (m,)."""
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    seed: int
    tau_default: float
    bank_fingerprint: str

    @property
    def m(self) -> int:
        return int(self.W1.shape[0])

    @property
    def h(self) -> int:
        return int(self.W1.shape[1])

    @property
    def d(self) -> int:
        return int(self.W1.shape[2])

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def init_heads(m: int, d: int, h: int, seed: int, tau: float = 0.5,
               bank_fingerprint: str = "") -> QuestionHeads:
    """Seeded uniform init in +-1/sqrt(fan_in) per layer."""
    rng = np.random.Generator(np.random.PCG64(seed))
    lim1 = 1.0 / np.sqrt(d)
    lim2 = 1.0 / np.sqrt(h)
    return QuestionHeads(
        W1=rng.uniform(-lim1, lim1, size=(m, h, d)),
        b1=rng.uniform(-lim1, lim1, size=(m, h)),
        w2=rng.uniform(-lim2, lim2, size=(m, h)),
        b2=rng.uniform(-lim2, lim2, size=(m,)),
        seed=seed, tau_default=tau, bank_fingerprint=bank_fingerprint)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def head_forward(heads: QuestionHeads, e: np.ndarray, i: int) -> float:
    """Logit of head i: w2 . relu(W1 e + b1) + b2."""
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (heads.d,):
        raise TrainingError(f"embedding shape {e.shape} does not match d={heads.d}")
    hidden = np.maximum(heads.W1[i] @ e + heads.b1[i], 0.0)
    return float(heads.w2[i] @ hidden + heads.b2[i])


def forward_logits(heads: QuestionHeads, e: np.ndarray,
                   question_ids: np.ndarray | None = None) -> np.ndarray:
    """Logits for all heads (or a subset) on one embedding."""
    e = np.asarray(e, dtype=np.float64)
    if question_ids is None:
        W1, b1, w2, b2 = heads.W1, heads.b1, heads.w2, heads.b2
    else:
        W1, b1 = heads.W1[question_ids], heads.b1[question_ids]
        w2, b2 = heads.w2[question_ids], heads.b2[question_ids]
    hidden = np.maximum(W1 @ e + b1, 0.0)
    return np.einsum("qh,qh->q", w2, hidden) + b2


def document_loss(heads: QuestionHeads, e: np.ndarray, question_ids: np.ndarray,
                  labels: np.ndarray, pos_weight: float) -> float:
    """Weighted BCE averaged over the document's answered questions."""
    z = forward_logits(heads, e, question_ids)
    y = np.asarray(labels, dtype=np.float64)
    terms = pos_weight * y * _softplus(-z) + (1.0 - y) * _softplus(z)
    return float(terms.mean())


def document_loss_and_grads(heads: QuestionHeads, e: np.ndarray, question_ids: np.ndarray,
                            labels: np.ndarray, pos_weight: float):
    """Loss plus analytic gradients for the touched heads only.

    Returns (loss, grads) with grads = {W1: (q,h,d), b1: (q,h), w2: (q,h), b2: (q,)}
    indexed parallel to question_ids.
    """
    e = np.asarray(e, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    W1 = heads.W1[question_ids]
    b1 = heads.b1[question_ids]
    w2 = heads.w2[question_ids]
    b2 = heads.b2[question_ids]

    a1 = W1 @ e + b1           # (q, h)
    hidden = np.maximum(a1, 0.0)
    z = np.einsum("qh,qh->q", w2, hidden) + b2
    q = len(question_ids)

    terms = pos_weight * y * _softplus(-z) + (1.0 - y) * _softplus(z)
    loss = float(terms.mean())

    sig = sigmoid(z)
    dz = (pos_weight * y * (sig - 1.0) + (1.0 - y) * sig) / q  # (q,)
    d_w2 = dz[:, None] * hidden
    d_b2 = dz
    d_hidden = dz[:, None] * w2
    d_a1 = d_hidden * (a1 > 0.0)
    d_W1 = d_a1[:, :, None] * e[None, None, :]
    d_b1 = d_a1
    return loss, {"W1": d_W1, "b1": d_b1, "w2": d_w2, "b2": d_b2}


def compute_pos_weight(examples: list[TrainingExample]) -> float:
    """Class-imbalance weight for yes terms: (# no answers) / (# yes answers)."""
    yes = sum(a for ex in examples for a in ex.answers.values())
    total = sum(len(ex.answers) for ex in examples)
    no = total - yes
    if yes == 0 or no == 0:
        raise TrainingError(f"need both classes present, got {yes} yes / {no} no")
    return no / yes


@dataclass
class _AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    steps: np.ndarray  # per-head update counts, drives bias correction

    @classmethod
    def for_heads(cls, heads: QuestionHeads) -> "_AdamState":
        params = heads.parameter_arrays()
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()},
                   steps=np.zeros(heads.m, dtype=np.int64))


def train_heads(examples: list[TrainingExample], texts: dict[str, str], encoder: Encoder,
                bank: QuestionBank, cfg: TrainingConfig) -> QuestionHeads:
    """Train all heads: one document per step, loss over its answered questions only.

    Documents cycle through a fresh seeded permutation each epoch, embeddings
    are computed once up front (the encoder stays frozen), and Adam state plus
    bias-correction step counts are tracked per head so untouched heads stay
    bit-identical. Deterministic for a fixed cfg.seed.
    """
    if not examples:
        raise TrainingError("no training examples")
    for ex in examples:
        bad = [qid for qid in ex.answers if not 0 <= qid < bank.m]
        if bad:
            raise TrainingError(f"example {ex.document_id} answers unknown question {bad[0]}")
        if ex.document_id not in texts:
            raise TrainingError(f"no text for document {ex.document_id}")

    doc_ids = [ex.document_id for ex in examples]
    embeddings = encoder.encode([texts[d] for d in doc_ids])
    pos_weight = cfg.pos_weight if cfg.pos_weight is not None else compute_pos_weight(examples)

    heads = init_heads(bank.m, embeddings.shape[1], cfg.hidden, cfg.seed,
                       tau=cfg.tau, bank_fingerprint=bank.fingerprint())
    state = _AdamState.for_heads(heads)
    params = heads.parameter_arrays()

    qids_per_doc = [np.asarray(sorted(ex.answers), dtype=np.int64) for ex in examples]
    labels_per_doc = [np.asarray([ex.answers[q] for q in sorted(ex.answers)],
                                 dtype=np.float64) for ex in examples]

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = len(examples)
    order = rng.permutation(n)
    lr = cfg.learning_rate
    for step in range(cfg.steps):
        pos = step % n
        if pos == 0 and step > 0:
            order = rng.permutation(n)
        doc = int(order[pos])
        qids = qids_per_doc[doc]
        loss, grads = document_loss_and_grads(heads, embeddings[doc], qids,
                                              labels_per_doc[doc], pos_weight)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}, "
                                f"question ids {qids.tolist()}")

        state.steps[qids] += 1
        t = state.steps[qids].astype(np.float64)
        for name, grad in grads.items():
            extra = (slice(None),) + (None,) * (grad.ndim - 1)
            m = state.m[name][qids]
            v = state.v[name][qids]
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad * grad
            state.m[name][qids] = m
            state.v[name][qids] = v
            m_hat = m / (1.0 - ADAM_BETA1 ** t)[extra]
            v_hat = v / (1.0 - ADAM_BETA2 ** t)[extra]
            params[name][qids] -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return heads


def binarize(probabilities: np.ndarray, tau: float) -> np.ndarray:
    """Bit i is 1 iff probability i strictly exceeds tau."""
    if not 0.0 < tau < 1.0:
        raise TrainingError(f"tau must be in (0, 1), got {tau}")
    return (np.asarray(probabilities) > tau).astype(np.uint8)


def embed_documents(doc_texts: list[str], encoder: Encoder, heads: QuestionHeads,
                    tau: float | None = None,
                    row_ids: list[str] | None = None) -> BinaryMatrix:
    """Binary embeddings for documents, one encoder pass, columns in bank id order."""
    tau = heads.tau_default if tau is None else tau
    if heads.m == 0:
        raise TrainingError("heads are empty")
    if not doc_texts:
        return BinaryMatrix.from_dense(np.zeros((0, heads.m), dtype=np.uint8),
                                       row_ids or [])
    embeddings = encoder.encode(doc_texts)
    dense = np.zeros((len(doc_texts), heads.m), dtype=np.uint8)
    for i in range(len(doc_texts)):
        probs = sigmoid(forward_logits(heads, embeddings[i]))
        dense[i] = binarize(probs, tau)
    return BinaryMatrix.from_dense(dense, row_ids)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ClassificationReport:
    no: ClassMetrics
    yes: ClassMetrics
    accuracy: float
    macro: tuple[float, float, float]
    weighted: tuple[float, float, float]
    total: int

    def render_text(self) -> str:
        lines = [f"{'':>14}{'precision':>10}{'recall':>10}{'f1-score':>10}{'support':>10}",
                 ""]
        for name, cm in (("No", self.no), ("Yes", self.yes)):
            lines.append(f"{name:>14}{cm.precision:>10.4f}{cm.recall:>10.4f}"
                         f"{cm.f1:>10.4f}{cm.support:>10d}")
        lines.append("")
        lines.append(f"{'accuracy':>14}{'':>20}{self.accuracy:>10.4f}{self.total:>10d}")
        for name, (p, r, f1) in (("macro avg", self.macro), ("weighted avg", self.weighted)):
            lines.append(f"{name:>14}{p:>10.4f}{r:>10.4f}{f1:>10.4f}{self.total:>10d}")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "no": vars(self.no), "yes": vars(self.yes), "accuracy": self.accuracy,
            "macro": list(self.macro), "weighted": list(self.weighted), "total": self.total,
        }


def classification_report(y_true: np.ndarray, y_pred: np.ndarray) -> ClassificationReport:
    """Binary yes(1)/no(0) report; zero-denominator rates are 0 by convention."""
    y_true = np.asarray(y_true).astype(np.int64)
    y_pred = np.asarray(y_pred).astype(np.int64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise TrainingError("need equal-length non-empty label arrays")

    def rate(num: int, den: int) -> float:
        return num / den if den else 0.0

    per_class = {}
    for cls in (0, 1):
        tp = int(np.sum((y_pred == cls) & (y_true == cls)))
        precision = rate(tp, int(np.sum(y_pred == cls)))
        recall = rate(tp, int(np.sum(y_true == cls)))
        f1 = rate(2 * precision * recall, precision + recall) if precision + recall else 0.0
        per_class[cls] = ClassMetrics(precision=precision, recall=recall, f1=f1,
                                      support=int(np.sum(y_true == cls)))
    total = int(y_true.size)
    accuracy = float(np.mean(y_true == y_pred))
    macro = tuple(
        (getattr(per_class[0], f) + getattr(per_class[1], f)) / 2.0
        for f in ("precision", "recall", "f1"))
    weighted = tuple(
        (getattr(per_class[0], f) * per_class[0].support
         + getattr(per_class[1], f) * per_class[1].support) / total
        for f in ("precision", "recall", "f1"))
    return ClassificationReport(no=per_class[0], yes=per_class[1], accuracy=accuracy,
                                macro=macro, weighted=weighted, total=total)


def evaluate_heldout(heads: QuestionHeads, encoder: Encoder,
                     examples: list[TrainingExample], texts: dict[str, str],
                     tau: float = 0.5) -> ClassificationReport:
    """Held-out answer agreement: predicted bits vs LLM answers over all pairs."""
    if not examples:
        raise TrainingError("held-out set is empty")
    embeddings = encoder.encode([texts[ex.document_id] for ex in examples])
    trues, preds = [], []
    for i, ex in enumerate(examples):
        qids = np.asarray(sorted(ex.answers), dtype=np.int64)
        probs = sigmoid(forward_logits(heads, embeddings[i], qids))
        bits = binarize(probs, tau)
        trues.extend(ex.answers[int(q)] for q in qids)
        preds.extend(int(b) for b in bits)
    return classification_report(np.asarray(trues), np.asarray(preds))


def save_heads(heads: QuestionHeads, path: str | Path) -> None:
    """Header json line + per-head contiguous float32 blocks [W1, b1, w2, b2]."""
    header = {"m": heads.m, "d": heads.d, "h": heads.h, "seed": heads.seed,
              "tau_default": heads.tau_default, "bank_fingerprint": heads.bank_fingerprint}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        for i in range(heads.m):
            block = np.concatenate([heads.W1[i].ravel(), heads.b1[i],
                                    heads.w2[i], heads.b2[i:i + 1]])
            fh.write(block.astype(np.float32).tobytes())


def load_heads(path: str | Path) -> QuestionHeads:
    blob = Path(path).read_bytes()
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl].decode("utf-8"))
    m, d, h = header["m"], header["d"], header["h"]
    per_head = h * d + h + h + 1
    data = np.frombuffer(blob[nl + 1:], dtype=np.float32)
    if data.size != m * per_head:
        raise TrainingError(f"heads file {path} has {data.size} floats, "
                            f"expected {m * per_head}")
    data = data.reshape(m, per_head).astype(np.float64)
    W1 = data[:, :h * d].reshape(m, h, d)
    b1 = data[:, h * d:h * d + h]
    w2 = data[:, h * d + h:h * d + 2 * h]
    b2 = data[:, -1]
    return QuestionHeads(W1=W1, b1=b1, w2=w2, b2=b2, seed=header["seed"],
                         tau_default=header["tau_default"],
                         bank_fingerprint=header["bank_fingerprint"])
