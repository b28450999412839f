import json

import numpy as np
import pytest

from gere.corpus import Corpus, Document, Claim, Label, title_from_doc_id
from gere.decoding import (
    DecodeParams, beam_search_titles, collect_candidates, greedy_evidence,
    read_predictions, retrieve, write_predictions, RetrievalResult,
)
from gere.errors import DataError, DecodingError
from gere.model import Seq2SeqModel, SentenceEmbedding
from gere.tokenizer import build_vocab
from gere.trie import TitleTrie

from conftest import small_config
from oracles import exhaustive_title_search


def corpus_with_titles(doc_ids):
    corpus = Corpus()
    for i, doc_id in enumerate(doc_ids):
        title = title_from_doc_id(doc_id)
        corpus.add(Document(doc_id, title, ((0, f"key{i} about {title} ."),)))
    return corpus


def setup(doc_ids, seed=0, **cfg_overrides):
    corpus = corpus_with_titles(doc_ids)
    vocab = build_vocab(corpus, [], 500)
    trie = TitleTrie.build(corpus.titles(), vocab)
    cfg = small_config(len(vocab), seed=seed, **cfg_overrides)
    model = Seq2SeqModel(cfg, vocab_checksum=vocab.checksum())
    return corpus, vocab, trie, model


# -- beam search -----------------------------------------------------------------


def test_single_title_trie_fully_constrained():
    corpus, vocab, trie, model = setup(["Only_page"])
    enc = model.encode_claim(vocab.encode("whatever claim"))
    docs, log_prob, tokens = beam_search_titles(model, enc, trie, beam_size=5, max_titles=3)
    assert docs == ["Only_page"]
    assert log_prob <= 0.0


def test_outputs_are_always_corpus_titles(rng):
    corpus, vocab, trie, model = setup(["Alpha", "Alpha_beta", "Gamma_delta", "Beta"])
    valid = set(corpus.documents)
    for seed in range(10):
        m = Seq2SeqModel(small_config(len(vocab), seed=seed))
        enc = m.encode_claim(vocab.encode("some claim text here"))
        docs, _, _ = beam_search_titles(m, enc, trie, beam_size=3, max_titles=3)
        assert docs and set(docs) <= valid
        assert len(set(docs)) == len(docs)


def test_beam_matches_exhaustive_enumeration():
    doc_ids = ["Alpha", "Alpha_beta", "Gamma", "Beta_gamma"]
    corpus, vocab, trie, model = setup(doc_ids)
    titles = [(vocab.encode(title), doc_id) for title, doc_id in corpus.titles()]
    for seed in range(8):
        m = Seq2SeqModel(small_config(len(vocab), seed=seed))
        enc = m.encode_claim(vocab.encode("pick some pages"))
        docs, log_prob, _ = beam_search_titles(m, enc, trie, beam_size=16, max_titles=2)
        ranked = exhaustive_title_search(m, enc, titles, max_titles=2)
        best_score, _, best_docs = ranked[0]
        assert docs == best_docs
        np.testing.assert_allclose(log_prob, best_score, rtol=0, atol=0)


def test_beam_score_monotone_in_beam_size():
    corpus, vocab, trie, model = setup(["Alpha", "Alpha_beta", "Gamma", "Beta_gamma",
                                        "Delta", "Beta"])
    enc = model.encode_claim(vocab.encode("claim for monotonicity"))
    scores = []
    for beam_size in range(1, 7):
        _, log_prob, _ = beam_search_titles(model, enc, trie, beam_size=beam_size,
                                            max_titles=2)
        scores.append(log_prob)
    assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))


def test_beam_respects_max_titles():
    corpus, vocab, trie, model = setup(["A_b", "C_d", "E_f"])
    enc = model.encode_claim(vocab.encode("claim"))
    for max_titles in (1, 2):
        docs, _, _ = beam_search_titles(model, enc, trie, beam_size=8,
                                        max_titles=max_titles)
        assert 1 <= len(docs) <= max_titles


def test_beam_rejects_empty_trie_and_bad_beam():
    corpus, vocab, trie, model = setup(["Alpha"])
    enc = model.encode_claim(vocab.encode("x"))
    with pytest.raises(ValueError):
        beam_search_titles(model, enc, trie, beam_size=0)
    empty = TitleTrie()
    with pytest.raises(DecodingError):
        beam_search_titles(model, enc, empty, beam_size=5)


def test_beam_error_carries_partial_beams():
    # max_positions too small for any title to reach EOS: every hypothesis
    # dies mid-title and the error reports the last alive beams.
    corpus, vocab, trie, model = setup(["Quite_long_title_here_indeed"],
                                       max_positions=3)
    enc = model.encode_claim(vocab.encode("x"))
    with pytest.raises(DecodingError) as err:
        beam_search_titles(model, enc, trie, beam_size=4, max_titles=2)
    assert err.value.partial_beams
    assert all(not h.finished for h in err.value.partial_beams)


def test_length_normalized_ranking_matches_oracle_rule():
    corpus, vocab, trie, _ = setup(["Alpha", "Gamma_delta_hill", "Beta"])
    titles = [(vocab.encode(title), doc_id) for title, doc_id in corpus.titles()]
    for seed in range(6):
        model = Seq2SeqModel(small_config(len(vocab), seed=seed))
        enc = model.encode_claim(vocab.encode("rank these pages"))
        ranked = exhaustive_title_search(model, enc, titles, max_titles=2)
        plain_docs, plain_lp, _ = beam_search_titles(model, enc, trie, beam_size=32,
                                                     max_titles=2)
        norm_docs, norm_lp, _ = beam_search_titles(model, enc, trie, beam_size=32,
                                                   max_titles=2, length_normalize=True)
        assert plain_docs == ranked[0][2]
        best_norm = min(ranked, key=lambda item: (-(item[0] / len(item[1])), item[1]))
        assert norm_docs == best_norm[2]
        assert norm_lp == best_norm[0]  # reported score stays the raw sum


def test_beam_accepts_raw_token_ids():
    corpus, vocab, trie, model = setup(["Alpha", "Beta"])
    ids = vocab.encode("a claim")
    d1, lp1, t1 = beam_search_titles(model, ids, trie, beam_size=4, max_titles=2)
    d2, lp2, t2 = beam_search_titles(model, model.encode_claim(ids), trie,
                                     beam_size=4, max_titles=2)
    assert (d1, lp1, t1) == (d2, lp2, t2)


# -- greedy evidence ---------------------------------------------------------------


def crafted_candidates(model, vectors):
    return [SentenceEmbedding(vector=np.asarray(v, dtype=np.float32), source=("D", i))
            for i, v in enumerate(vectors)]


def test_greedy_single_candidate_then_eoe():
    corpus, vocab, trie, model = setup(["Alpha"])
    enc = model.encode_claim(vocab.encode("alpha claim"))
    cands = collect_candidates(model, vocab, ["Alpha"], corpus)
    pairs, log_probs = greedy_evidence(model, enc, cands, max_evidence_steps=5)
    assert len(pairs) <= 1
    assert len(log_probs) == len(pairs)


def test_greedy_empty_when_eoe_wins_immediately():
    corpus, vocab, trie, model = setup(["Alpha"])
    enc = model.encode_claim(vocab.encode("alpha claim"))
    # Candidates orthogonal-ish to the decoder state, EOE strongly aligned:
    # rig the EOE embedding to dominate every dot product.
    state = model._evidence_states(enc, [])[-1]
    model.params["evid_dec.eoe"].data[:] = (10.0 * state / np.linalg.norm(state) ** 2 * 50)
    cands = crafted_candidates(model, [np.zeros(model.config.d_model)] * 3)
    pairs, log_probs = greedy_evidence(model, enc, cands, max_evidence_steps=5)
    assert pairs == [] and log_probs == []


def test_greedy_no_repeats_and_step_cap():
    corpus, vocab, trie, model = setup(["Alpha", "Beta"])
    enc = model.encode_claim(vocab.encode("claim"))
    # EOE pushed far down so decoding keeps picking candidates.
    model.params["evid_dec.eoe"].data[:] = -1000.0
    cands = collect_candidates(model, vocab, ["Alpha", "Beta"], corpus)
    pairs, _ = greedy_evidence(model, enc, cands, max_evidence_steps=10)
    assert len(pairs) == len(set(pairs)) == 2  # all candidates, no repeats
    pairs1, _ = greedy_evidence(model, enc, cands, max_evidence_steps=1)
    assert len(pairs1) == 1


def test_greedy_requires_candidates():
    corpus, vocab, trie, model = setup(["Alpha"])
    enc = model.encode_claim(vocab.encode("claim"))
    with pytest.raises(DecodingError):
        greedy_evidence(model, enc, [], max_evidence_steps=3)


def test_greedy_tie_breaks_by_source_order():
    corpus, vocab, trie, model = setup(["Alpha"])
    enc = model.encode_claim(vocab.encode("claim"))
    v = np.ones(model.config.d_model) * 0.1
    model.params["evid_dec.eoe"].data[:] = -1000.0
    cands = [SentenceEmbedding(vector=v.copy(), source=("A", 0)),
             SentenceEmbedding(vector=v.copy(), source=("A", 1))]
    pairs, _ = greedy_evidence(model, enc, cands, max_evidence_steps=1)
    assert pairs == [("A", 0)]


# -- retrieve -----------------------------------------------------------------------


def test_retrieve_contract_and_determinism():
    corpus, vocab, trie, model = setup(["Alpha", "Alpha_beta", "Gamma"])
    claim = Claim(41, "some claim about alpha", Label.SUPPORTS, ((("Alpha", 0),),))
    params = DecodeParams(beam_size=4, max_titles=2, max_evidence_steps=4)
    r1 = retrieve(model, vocab, claim, trie, corpus, params)
    r2 = retrieve(model, vocab, claim, trie, corpus, params)
    assert r1 == r2
    assert r1.claim_id == 41
    assert len(set(r1.titles)) == len(r1.titles)
    assert set(d for d, _ in r1.evidence) <= set(r1.titles)
    assert len(r1.evidence) <= 4
    assert len(r1.evidence_log_probs) == len(r1.evidence)


def test_retrieve_handles_sentence_free_documents():
    corpus = Corpus()
    corpus.add(Document("Empty_doc", "Empty doc", ()))
    vocab = build_vocab(corpus, [], 100)
    trie = TitleTrie.build(corpus.titles(), vocab)
    model = Seq2SeqModel(small_config(len(vocab)))
    claim = Claim(1, "anything", Label.SUPPORTS, ((("Empty_doc", 0),),))
    result = retrieve(model, vocab, claim, trie, corpus, DecodeParams(beam_size=2))
    assert result.titles == ["Empty_doc"]
    assert result.evidence == []


# -- prediction file io ---------------------------------------------------------------


def test_prediction_round_trip(tmp_path):
    results = [
        RetrievalResult(claim_id=2, titles=["B"], evidence=[("B", 1)],
                        title_log_prob=-1.5, evidence_log_probs=[-0.3]),
        RetrievalResult(claim_id=1, titles=["A", "B"], evidence=[("A", 0), ("B", 2)],
                        title_log_prob=-2.0, evidence_log_probs=[-0.1, -0.9]),
    ]
    path = tmp_path / "pred.jsonl"
    write_predictions(results, path)
    records = read_predictions(path)
    assert [r["claim_id"] for r in records] == [1, 2]  # sorted by claim_id
    assert records[0]["predicted_evidence"] == [["A", 0], ["B", 2]]
    assert records[0]["scores"]["title_log_prob"] == -2.0


def test_read_predictions_rejects_bad_lines(tmp_path):
    path = tmp_path / "pred.jsonl"
    path.write_text('{"claim_id": 1}\nnot json\n')
    with pytest.raises(DataError):
        read_predictions(path)
    path.write_text('{"no_id": 1}\n')
    with pytest.raises(DataError):
        read_predictions(path)
