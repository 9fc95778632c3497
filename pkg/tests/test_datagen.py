from __future__ import annotations

import random
from collections import Counter
from datetime import date

import pytest

from hybrid_dsl.corpus import Corpus
from hybrid_dsl.datagen import (
    FILTER_FIELDS,
    StructuredFilter,
    TripletConfig,
    TripletFactory,
    build_candidate_pool,
    content_vectors,
    dump_triplets,
    load_triplets,
    mean_doc_length,
    modality_bucket,
    profile_dataset,
    sample_structured_filter,
    semantic_refine,
    structured_candidates,
    synthesize_corpus,
)
from hybrid_dsl.errors import EmptyInput, InsufficientCorpus
from hybrid_dsl.executor import ExecutionContext, execute
from hybrid_dsl.vectors import HashingEmbedder

from conftest import make_record, ts


def test_filter_size_is_uniform(small_corpus):
    rng = random.Random(0)
    counts = Counter(len(sample_structured_filter(rng.choice(small_corpus.records), rng).attributes) for _ in range(10_000))
    for size in (1, 2, 3):
        assert abs(counts[size] / 10_000 - 1 / 3) < 0.02


def test_filter_values_come_from_gold(small_corpus):
    rng = random.Random(1)
    for _ in range(200):
        gold = rng.choice(small_corpus.records)
        flt = sample_structured_filter(gold, rng)
        assert gold.message_id in structured_candidates(small_corpus, flt)
        assert all(a in FILTER_FIELDS for a, _ in flt.attributes)


def test_forced_single_attribute():
    gold = make_record("g")
    flt = sample_structured_filter(gold, random.Random(2), size=1)
    assert len(flt.attributes) == 1


def test_filter_validation():
    with pytest.raises(ValueError):
        StructuredFilter(())
    with pytest.raises(ValueError):
        StructuredFilter((("is_read", True), ("is_read", False)))


def test_filter_json_round_trip():
    flt = StructuredFilter((("received_date", date(2025, 1, 2)), ("is_read", True)))
    assert StructuredFilter.from_json(flt.to_json()) == flt


def test_structured_candidates_match_scan(small_corpus):
    rng = random.Random(3)
    for _ in range(100):
        flt = sample_structured_filter(rng.choice(small_corpus.records), rng)
        expected = set()
        for r in small_corpus.records:
            ok = True
            for a, v in flt.attributes:
                got = r.received_date.date() if a == "received_date" else getattr(r, a)
                ok = ok and got == v
            if ok:
                expected.add(r.message_id)
        assert structured_candidates(small_corpus, flt) == expected


def test_semantic_refine_subset_and_identity(small_corpus, embedder):
    vectors = content_vectors(small_corpus, embedder)
    ids = set(small_corpus.ids[:50])
    assert semantic_refine(ids, "budget review", embedder, -1.0, vectors) == ids
    refined = semantic_refine(ids, "budget review", embedder, 0.1, vectors)
    assert refined <= ids
    assert semantic_refine(set(), "x", embedder, 0.0, vectors) == set()


def test_content_vectors_from_index_agree(small_corpus, small_ctx, embedder):
    a = content_vectors(small_corpus, embedder)
    b = content_vectors(small_corpus, embedder, small_ctx.indexes["content"])
    assert a.keys() == b.keys() and all((a[k] == b[k]).all() for k in a)


def test_pool_prefers_shared_attributes(embedder):
    recs = [make_record("gold", is_starred=True, content="alpha beta")]
    recs += [make_record(f"share{i}", is_starred=True, content="zzz qqq") for i in range(3)]
    recs += [make_record(f"other{i}", is_read=True, content="alpha beta gamma" if i == 0 else "unrelated") for i in range(6)]
    corpus = Corpus(tuple(recs))
    flt = StructuredFilter((("is_starred", True),))
    pool = build_candidate_pool(corpus, recs[0], flt, embedder, pool_size=6)
    assert len(pool) == 6
    assert {"gold", "share0", "share1", "share2"} <= set(pool)
    # remaining two slots go to the most similar content
    assert "other0" in pool
    assert pool == [i for i in corpus.ids if i in pool]


def test_pool_accepts_index_or_map(small_corpus, small_ctx, embedder):
    gold = small_corpus.records[5]
    flt = sample_structured_filter(gold, random.Random(4))
    a = build_candidate_pool(small_corpus, gold, flt, embedder, 16)
    b = build_candidate_pool(small_corpus, gold, flt, embedder, 16, small_ctx.indexes["content"])
    c = build_candidate_pool(small_corpus, gold, flt, embedder, 16, content_vectors(small_corpus, embedder))
    assert a == b == c and gold.message_id in a and len(set(a)) == 16


def test_pool_errors(embedder):
    corpus = Corpus((make_record("a"),))
    flt = StructuredFilter((("is_read", False),))
    with pytest.raises(InsufficientCorpus):
        build_candidate_pool(corpus, corpus.records[0], flt, embedder, 2)
    with pytest.raises(ValueError):
        build_candidate_pool(corpus, corpus.records[0], flt, embedder, 0)


def test_triplets_are_self_consistent(small_ctx, small_triplets):
    assert len(small_triplets) == 40
    for t in small_triplets:
        result = execute(t.program, small_ctx.restricted(t.candidate_pool))
        assert t.gold_id in result.keys
        assert t.gold_id in t.candidate_pool and len(t.candidate_pool) == 16
        assert t.k_str == len(t.structured_filter.attributes) and t.k_uns == len(t.cue_terms)
        assert len(t.program.vector_query_list) == 1
        assert all(term in t.nl_query for term in t.cue_terms)


def test_generation_is_deterministic(small_corpus, embedder, small_ctx):
    a = TripletFactory(small_corpus, embedder, TripletConfig(), small_ctx).generate(10, seed=9)
    b = TripletFactory(small_corpus, embedder).generate(10, seed=9)
    assert dump_triplets(a) == dump_triplets(b)


def test_uniform_shape_config(small_corpus, embedder, small_ctx):
    triplets = TripletFactory(small_corpus, embedder, TripletConfig(modality_mix=None), small_ctx).generate(30, seed=2)
    assert all(1 <= t.k_str <= 3 and 1 <= t.k_uns <= 4 for t in triplets)


def test_serialization_round_trip(small_triplets):
    text = dump_triplets(small_triplets)
    again = load_triplets(text)
    assert again == list(small_triplets)
    assert dump_triplets(again) == text


def test_single_record_corpus(embedder):
    corpus = Corpus((make_record("only", content="quarterly budget forecast for the northwind account"),))
    triplets = TripletFactory(corpus, embedder, TripletConfig(pool_size=1)).generate(3, seed=0)
    assert triplets and all(t.candidate_pool == ("only",) for t in triplets)


def test_empty_corpus_raises(embedder):
    with pytest.raises(EmptyInput):
        TripletFactory(Corpus(), embedder).assemble(random.Random(0))


def test_modality_buckets():
    assert modality_bucket(3, 2) == "structure_dominated"
    assert modality_bucket(1, 4) == "content_dominated"
    assert modality_bucket(2, 2) == "balanced"


def test_profile(small_triplets, small_corpus):
    report = profile_dataset(small_triplets, small_corpus)
    assert report["count"] == 40
    assert abs(sum(report["modality_pct"].values()) - 100.0) < 1e-9
    assert report["avg_k_total"] == report["avg_k_str"] + report["avg_k_uns"]
    with pytest.raises(EmptyInput):
        profile_dataset([])


def test_synthetic_corpus_shape():
    corpus = synthesize_corpus(seed=1, n=2500)
    assert len(corpus) == 2500
    assert abs(mean_doc_length(corpus) - 155) <= 15
    assert synthesize_corpus(seed=1, n=50) == synthesize_corpus(seed=1, n=50)
    drafts = [r for r in corpus.records if r.is_draft]
    assert drafts and all(r.draft_created_date <= r.draft_modified_date for r in drafts)
    assert all(r.received_date <= ts("2025-06-30T12:00:00") for r in corpus.records)


def test_embedder_choice_changes_pool_not_validity(small_corpus):
    other = HashingEmbedder(seed=5)
    ctx = ExecutionContext.build(small_corpus, other)
    triplets = TripletFactory(small_corpus, other, TripletConfig(), ctx).generate(5, seed=1)
    for t in triplets:
        assert t.gold_id in execute(t.program, ctx.restricted(t.candidate_pool)).keys
