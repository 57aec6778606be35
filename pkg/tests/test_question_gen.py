import itertools
import json

import numpy as np
import pytest

from qembed.cluster import ClusterModel
from qembed.prompts import CandidateQuestion
from qembed.providers import MockEncoder
from qembed.question_gen import (
    BankQuestion,
    ProbeOutcome,
    QuestionBank,
    SamplingError,
    ScoredQuestion,
    generate_cluster_questions,
    generate_example_bank,
    load_question_bank,
    probe_question,
    quality_score,
    sample_contrastive,
    save_question_bank,
    select_question_bank,
)


def make_model(sizes, positions):
    """Line-shaped cluster model with given member counts per cluster."""
    centroids = np.array([[p, 0.0] for p in positions])
    doc_ids, labels = [], []
    for c, size in enumerate(sizes):
        for i in range(size):
            doc_ids.append(f"c{c}d{i}")
            labels.append(c)
    return ClusterModel(centroids=centroids, doc_ids=doc_ids,
                        labels=np.asarray(labels, dtype=np.int64), seed=0, inertia=0.0)


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


class QueueLLM:
    """Test double: returns canned responses in order, recording prompts."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        if not self.responses:
            raise AssertionError("QueueLLM exhausted")
        return self.responses.pop(0)


class RuleLLM:
    """Test double: parses the text chunk out of an answer prompt and applies a rule."""

    def __init__(self, rule):
        self.rule = rule

    def complete(self, prompt):
        chunk = prompt.split("Text Chunk:\n", 1)[1].split("\n\nQuestions:", 1)[0]
        question = prompt.split("Questions:\n1. ", 1)[1].split("\n", 1)[0]
        return "1. yes" if self.rule(chunk, question) else "1. no"


class TestQualityScore:
    def test_perfect_split_is_one(self):
        assert quality_score(5, 5, 0, 5) == 1.0

    def test_all_yes_and_all_no_are_zero(self):
        assert quality_score(5, 5, 5, 5) == 0.0
        assert quality_score(0, 5, 0, 5) == 0.0

    def test_hand_arithmetic(self):
        assert quality_score(4, 5, 1, 5) == pytest.approx(0.6, abs=1e-12)

    def test_range_validation(self):
        with pytest.raises(ValueError):
            quality_score(6, 5, 0, 5)
        with pytest.raises(ValueError):
            quality_score(0, 5, 6, 5)

    def test_bounds_over_full_grid(self):
        for pos in range(6):
            for neg in range(6):
                q = quality_score(pos, 5, neg, 5)
                assert -1.0 <= q <= 1.0
                assert (q == 1.0) == (pos == 5 and neg == 0)


class TestSampleContrastive:
    def default_model(self):
        return make_model(sizes=[8, 7, 7, 7, 10, 10],
                          positions=[0.0, 1.0, 1.05, 1.1, 5.0, 5.1])

    def test_default_counts_and_disjointness(self):
        model = self.default_model()
        sample = sample_contrastive(model, 0, n_p=6, n_h=18, n_e=18, rng=rng(1))
        assert len(sample.positives) == 6
        assert len(sample.hard_negatives) == 18
        assert len(sample.easy_negatives) == 18
        groups = [set(sample.positives), set(sample.hard_negatives),
                  set(sample.easy_negatives)]
        assert not (groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2])
        assignments = model.assignments
        assert all(assignments[d] == 0 for d in sample.positives)
        assert all(assignments[d] in (1, 2, 3) for d in sample.hard_negatives)
        assert all(assignments[d] in (4, 5) for d in sample.easy_negatives)

    def test_small_cluster_takes_all_members_with_warning(self, caplog):
        model = make_model(sizes=[4, 10, 10, 10, 20, 20],
                           positions=[0.0, 1.0, 1.05, 1.1, 5.0, 5.1])
        with caplog.at_level("WARNING"):
            sample = sample_contrastive(model, 0, n_p=6, n_h=18, n_e=18, rng=rng(2))
        assert sorted(sample.positives) == [f"c0d{i}" for i in range(4)]
        assert any("taking all" in r.message for r in caplog.records)

    def test_deficient_negative_pool_is_an_error_naming_the_pool(self):
        model = make_model(sizes=[8, 2, 2, 2, 10, 10],
                           positions=[0.0, 1.0, 1.05, 1.1, 5.0, 5.1])
        with pytest.raises(SamplingError, match="hard negative pool"):
            sample_contrastive(model, 0, n_p=6, n_h=18, n_e=18, rng=rng(3))
        model2 = make_model(sizes=[8, 7, 7, 7, 2, 2],
                            positions=[0.0, 1.0, 1.05, 1.1, 5.0, 5.1])
        with pytest.raises(SamplingError, match="easy negative pool"):
            sample_contrastive(model2, 0, n_p=6, n_h=18, n_e=18, rng=rng(3))

    def test_fixed_seed_reproduces_sample(self):
        model = self.default_model()
        a = sample_contrastive(model, 0, n_p=6, n_h=18, n_e=18, rng=rng(7))
        b = sample_contrastive(model, 0, n_p=6, n_h=18, n_e=18, rng=rng(7))
        assert a == b


class TestGenerateClusterQuestions:
    def sample(self):
        return __import__("qembed.question_gen", fromlist=["ContrastiveSample"]) \
            .ContrastiveSample(cluster_id=2, positives=["p1"], hard_negatives=["h1"],
                               easy_negatives=["e1"])

    def texts(self):
        return {"p1": "stars and planets", "h1": "cooking with basil", "e1": "goal scored"}

    def test_parses_questions_with_origin_cluster(self):
        llm = QueueLLM(["1. Is it about space?\n2. Does it mention stars?"])
        out = generate_cluster_questions(self.sample(), self.texts(), llm)
        assert [q.text for q in out] == ["Is it about space?", "Does it mention stars?"]
        assert all(q.origin_cluster == 2 for q in out)
        assert "Positive 1. stars and planets" in llm.prompts[0]

    def test_truncates_beyond_ten(self, caplog):
        response = "\n".join(f"{i}. Is it question {i}?" for i in range(1, 14))
        with caplog.at_level("WARNING"):
            out = generate_cluster_questions(self.sample(), self.texts(), QueueLLM([response]))
        assert len(out) == 10

    def test_unparseable_output_gives_empty_list(self, caplog):
        with caplog.at_level("WARNING"):
            out = generate_cluster_questions(self.sample(), self.texts(),
                                             QueueLLM(["I refuse."]))
        assert out == []


class TestProbeQuestion:
    def probe_model(self):
        # cluster 0: 5 members (positives); 1,2,3: one member each (hard); 4: two (easy)
        return make_model(sizes=[5, 1, 1, 1, 2],
                          positions=[0.0, 1.0, 1.1, 1.2, 10.0])

    def texts(self, model):
        return {d: f"text of {d}" for d in model.doc_ids}

    def outcome(self, yes_docs):
        model = self.probe_model()
        texts = self.texts(model)
        llm = RuleLLM(lambda chunk, q: any(d in chunk for d in yes_docs))
        q = CandidateQuestion(text="Is it in the yes set?", origin_cluster=0, ordinal=0)
        return probe_question(q, model, texts, llm, p_p=5, p_h=3, p_e=2, rng=rng(4))

    def test_perfect_question_scores_one(self):
        out = self.outcome(yes_docs=[f"c0d{i}" for i in range(5)])
        assert out.quality == 1.0
        assert (out.pos_yes, out.neg_yes) == (5, 0)

    def test_all_no_and_all_yes_score_zero(self):
        assert self.outcome(yes_docs=[]).quality == 0.0
        model = self.probe_model()
        assert self.outcome(yes_docs=list(model.doc_ids)).quality == 0.0

    def test_hand_arithmetic_four_fifths_minus_one_fifth(self):
        yes = [f"c0d{i}" for i in range(4)] + ["c1d0"]
        out = self.outcome(yes_docs=yes)
        assert (out.pos_yes, out.neg_yes) == (4, 1)
        assert out.quality == pytest.approx(0.6, abs=1e-12)

    def test_provider_failure_returns_none(self):
        from qembed.providers import ProviderError

        class FailingLLM:
            def complete(self, prompt):
                raise ProviderError("boom")

        model = self.probe_model()
        q = CandidateQuestion(text="Is it anything?", origin_cluster=0, ordinal=0)
        assert probe_question(q, model, self.texts(model), FailingLLM(),
                              p_p=5, p_h=3, p_e=2, rng=rng(5)) is None

    def test_quality_matches_brute_force_over_all_probe_combinations(self):
        # every assignment of yes/no to the 10 probes, scored through the full path
        model = self.probe_model()
        texts = self.texts(model)
        pos_docs = [f"c0d{i}" for i in range(5)]
        neg_docs = ["c1d0", "c2d0", "c3d0", "c4d0", "c4d1"]
        question = CandidateQuestion(text="Is it marked yes?", origin_cluster=0, ordinal=0)
        for bits in itertools.product((0, 1), repeat=10):
            yes_set = {d for d, b in zip(pos_docs + neg_docs, bits) if b}
            llm = RuleLLM(lambda chunk, q: any(d in chunk for d in yes_set))
            out = probe_question(question, model, texts, llm,
                                 p_p=5, p_h=3, p_e=2, rng=rng(6))
            pos_yes = sum(bits[:5])
            neg_yes = sum(bits[5:])
            assert out.pos_yes == pos_yes and out.neg_yes == neg_yes
            assert out.quality == pos_yes / 5 - neg_yes / 5  # exact


def scored(text, cluster, quality, ordinal=0):
    return ScoredQuestion(
        question=CandidateQuestion(text=text, origin_cluster=cluster, ordinal=ordinal),
        probe=ProbeOutcome(pos_yes=0, neg_yes=0, p_p=5, p_neg=5, quality=quality))


class TestSelectQuestionBank:
    def test_identical_texts_across_clusters_dedup(self):
        encoder = MockEncoder(dim=32, seed=0)
        candidates = [scored("Is it about space?", 0, 0.9),
                      scored("Is it about space?", 1, 0.8)]
        bank = select_question_bank(candidates, encoder, theta=0.8, t=4)
        assert bank.m == 1
        assert bank.questions[0].origin_cluster == 0

    def test_per_cluster_cap_keeps_top_quality(self):
        encoder = MockEncoder(dim=32, seed=0)
        candidates = [scored(f"Is it unique topic {chr(97 + i)} number {i}?", 0,
                             quality=i / 10, ordinal=i)
                      for i in range(6)]
        bank = select_question_bank(candidates, encoder, theta=0.8, t=4)
        assert bank.m == 4
        kept_quality = sorted(q.quality for q in bank.questions)
        assert kept_quality == [0.2, 0.3, 0.4, 0.5]

    def test_quality_ties_break_by_ordinal(self):
        encoder = MockEncoder(dim=32, seed=0)
        candidates = [scored("Is it alpha wolf?", 0, 0.5, ordinal=1),
                      scored("Is it beta fish?", 0, 0.5, ordinal=0)]
        bank = select_question_bank(candidates, encoder, theta=0.8, t=1)
        assert bank.questions[0].text == "Is it beta fish?"

    def test_ids_dense_in_admission_order(self):
        encoder = MockEncoder(dim=32, seed=0)
        candidates = [scored(f"Is it thing {chr(97 + i)} {i}?", i % 3, quality=1.0 - i / 20,
                             ordinal=i)
                      for i in range(9)]
        bank = select_question_bank(candidates, encoder, theta=0.8, t=4)
        assert [q.id for q in bank.questions] == list(range(bank.m))
        clusters = [q.origin_cluster for q in bank.questions]
        assert clusters == sorted(clusters)  # ascending cluster processing

    def test_cosine_exactly_theta_is_admitted(self, fixed_encoder_factory):
        theta = 0.8
        e1 = np.zeros(4)
        e1[0] = 1.0
        at_theta = np.array([theta, np.sqrt(1 - theta ** 2), 0.0, 0.0])
        encoder = fixed_encoder_factory({"Is it a?": e1, "Is it b?": at_theta})
        candidates = [scored("Is it a?", 0, 0.9, ordinal=0),
                      scored("Is it b?", 0, 0.8, ordinal=1)]
        bank = select_question_bank(candidates, encoder, theta=theta, t=4)
        assert bank.m == 2  # similarity == theta is not "exceeds"

    def test_bank_invariants_on_random_candidates_brute_force(self):
        # acceptance-style check at reduced size; full 500 lives in test_acceptance
        encoder = MockEncoder(dim=48, seed=3)
        generator = np.random.Generator(np.random.PCG64(9))
        words = [f"w{i}" for i in range(60)]
        candidates = []
        for i in range(120):
            picks = generator.choice(60, size=3, replace=False)
            text = f"Is {words[picks[0]]} {words[picks[1]]} {words[picks[2]]} present?"
            candidates.append(scored(text, int(generator.integers(0, 6)),
                                     float(generator.random()), ordinal=i))
        theta, t = 0.8, 4
        bank = select_question_bank(candidates, encoder, theta=theta, t=t)
        vecs = np.stack([q.embedding for q in bank.questions])
        sims = vecs @ vecs.T
        off_diag = sims[~np.eye(bank.m, dtype=bool)]
        assert np.all(off_diag <= theta + 1e-12)
        per_cluster = {}
        for q in bank.questions:
            per_cluster[q.origin_cluster] = per_cluster.get(q.origin_cluster, 0) + 1
        assert all(v <= t for v in per_cluster.values())

    def test_empty_candidates_give_empty_bank(self, caplog):
        with caplog.at_level("WARNING"):
            bank = select_question_bank([], MockEncoder(dim=8, seed=0), theta=0.8, t=4)
        assert bank.m == 0


class TestGenerateExampleBank:
    def test_scripted_ten_questions_make_a_bank_of_ten(self):
        response = "\n".join(f"{i}. Is it topic {chr(96 + i)} number {i}?"
                             for i in range(1, 11))
        bank = generate_example_bank(["some article text"], ["Is it an example?"],
                                     QueueLLM([response]), MockEncoder(dim=32, seed=0),
                                     rng(0), num_prompts=1)
        assert bank.m == 10
        assert all(q.quality is None and q.origin_cluster == -1 for q in bank.questions)

    def test_near_identical_questions_dedup_at_0925(self):
        # same token multiset -> identical mock embedding -> cosine 1 > 0.925
        response = "1. Is it about space?\n2. about it Is space?"
        bank = generate_example_bank(["article"], ["Is it an example?"],
                                     QueueLLM([response]), MockEncoder(dim=32, seed=0),
                                     rng(0), num_prompts=1)
        assert bank.m == 1

    def test_five_prompts_with_twelve_dupes_survive_38(self):
        uniques = [f"Does term t{i} u{i} appear?" for i in range(38)]
        dupes = [uniques[j] for j in (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11)]
        all_questions = uniques + dupes  # 50 = 5 prompts x 10
        responses = []
        for p in range(5):
            chunk = all_questions[p * 10:(p + 1) * 10]
            responses.append("\n".join(f"{i + 1}. {q}" for i, q in enumerate(chunk)))
        encoder = MockEncoder(dim=64, seed=1)
        bank = generate_example_bank(["ref one", "ref two"], ["Is it an example?"],
                                     QueueLLM(responses), encoder, rng(0), num_prompts=5)
        assert bank.m == 38
        # brute-force oracle: greedy first-occurrence dedup over exact duplicates
        assert bank.texts() == uniques


def test_bank_save_load_roundtrip(tmp_path):
    encoder = MockEncoder(dim=16, seed=0)
    candidates = [scored(f"Is it item {chr(97 + i)} {i}?", i % 2, quality=0.5 + i / 10,
                         ordinal=i) for i in range(4)]
    bank = select_question_bank(candidates, encoder, theta=0.8, t=4)
    path = tmp_path / "bank.jsonl"
    save_question_bank(bank, path)
    loaded = load_question_bank(path)
    assert loaded.m == bank.m
    assert loaded.theta == bank.theta and loaded.t == bank.t
    assert loaded.encoder_fingerprint == bank.encoder_fingerprint
    assert loaded.texts() == bank.texts()
    for a, b in zip(loaded.questions, bank.questions):
        np.testing.assert_allclose(a.embedding, b.embedding, atol=1e-12)
    assert loaded.fingerprint() == bank.fingerprint()
    header = json.loads(path.read_text().splitlines()[0])
    assert header == {"theta": 0.8, "t": 4, "m": bank.m,
                      "encoder_fingerprint": "mock-encoder:dim=16:seed=0"}
