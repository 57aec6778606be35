"""From raw texts to a deduplicated question bank.

Clusters a small synthetic corpus, asks a deterministic rule-based LLM for
contrastive yes/no questions per cluster, scores each question against
sampled probe texts, and keeps the best non-duplicate questions per cluster.
"""

import numpy as np

from qembed.cluster import kmeans_fit
from qembed.providers import MockEncoder
from qembed.question_gen import (ScoredQuestion, generate_cluster_questions,
                                 probe_question, sample_contrastive,
                                 select_question_bank)
from qembed.synthetic import TopicOracleLLM, synthetic_corpus


def main() -> None:
    corpus = synthetic_corpus(n_per_topic=16, seed=0)
    print(f"corpus: {len(corpus)} documents across 4 latent topics\n")

    encoder = MockEncoder(dim=64, seed=0)
    texts = {doc.id: doc.text for doc in corpus}
    embeddings = encoder.encode([doc.text for doc in corpus])
    model = kmeans_fit(embeddings, k=4, seed=0, doc_ids=[d.id for d in corpus])

    llm = TopicOracleLLM()
    rng = np.random.Generator(np.random.PCG64(0))
    scored: list[ScoredQuestion] = []
    for cluster_id in range(model.k):
        # 6 positives vs 12 hard + 12 easy negatives per cluster
        sample = sample_contrastive(model, cluster_id, n_p=6, n_h=12, n_e=12,
                                    rng=rng, hard_from=2)
        candidates = generate_cluster_questions(sample, texts, llm)
        print(f"cluster {cluster_id}: LLM proposed {len(candidates)} questions, e.g.")
        print(f"  {candidates[0].text}")
        for cand in candidates:
            outcome = probe_question(cand, model, texts, llm, p_p=5, p_h=3,
                                     p_e=2, rng=rng, neighbor_from=2)
            if outcome is not None:
                scored.append(ScoredQuestion(cand, outcome))

    bank = select_question_bank(scored, encoder, theta=0.8, t=4)
    print(f"\nselected bank: {bank.m} questions "
          f"(max 4 per cluster, pairwise cosine <= 0.8)")
    for q in bank.questions:
        print(f"  [{q.id:2}] cluster {q.origin_cluster}  "
              f"quality {q.quality:+.2f}  {q.text}")


if __name__ == "__main__":
    main()
