import numpy as np
import pytest

from gere import nn
from gere.errors import DataError
from gere.model import ModelConfig, Seq2SeqModel, SentenceEmbedding
from gere.tokenizer import BOS, EOS, EOT, SEP, UNK

from conftest import small_config


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=100, d_model=30, n_heads=4)
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=100, label_smoothing=1.0)
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=3)
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=100, dropout_rate=-0.1)


def test_config_kv_round_trip():
    cfg = ModelConfig(vocab_size=123, d_model=32, n_heads=4, seed=9, dropout_rate=0.25)
    assert ModelConfig.from_kv(cfg.to_kv()) == cfg


def test_config_kv_file(tmp_path):
    path = tmp_path / "model.cfg"
    path.write_text("# comment line\nvocab_size=64\nd_model=32\nn_heads=4\n")
    cfg = ModelConfig.from_kv_file(path)
    assert cfg.vocab_size == 64 and cfg.d_model == 32


def test_config_kv_rejects_garbage():
    with pytest.raises(DataError):
        ModelConfig.from_kv("vocab_size=10\nnot a line\n")
    with pytest.raises(DataError):
        ModelConfig.from_kv("vocab_size=10\nwidgets=4\n")


def test_same_seed_same_params(tiny_vocab):
    cfg = small_config(len(tiny_vocab))
    m1, m2 = Seq2SeqModel(cfg), Seq2SeqModel(cfg)
    for name in m1.params:
        np.testing.assert_array_equal(m1.params[name].data, m2.params[name].data)
    m3 = Seq2SeqModel(small_config(len(tiny_vocab), seed=99))
    assert any(not np.array_equal(m1.params[n].data, m3.params[n].data) for n in m1.params)


# -- encode_claim ---------------------------------------------------------------


def test_encode_claim_deterministic(tiny_model, tiny_vocab):
    ids = tiny_vocab.encode("alpha hill rises early")
    e1 = tiny_model.encode_claim(ids)
    e2 = tiny_model.encode_claim(ids)
    np.testing.assert_array_equal(e1.states, e2.states)
    assert not e1.truncated


def test_encode_claim_position_sensitive(tiny_model, tiny_vocab):
    a = tiny_model.encode_claim(tiny_vocab.encode("alpha hill"))
    b = tiny_model.encode_claim(tiny_vocab.encode("hill alpha"))
    assert not np.array_equal(a.states, b.states)


def test_encode_claim_shapes_and_truncation(tiny_model, tiny_vocab):
    e = tiny_model.encode_claim([tiny_vocab.ids["alpha"]])
    assert e.states.shape == (1, tiny_model.config.d_model)
    long_ids = [tiny_vocab.ids["alpha"]] * (tiny_model.config.max_positions + 5)
    e = tiny_model.encode_claim(long_ids)
    assert e.truncated
    assert e.states.shape == (tiny_model.config.max_positions, tiny_model.config.d_model)
    with pytest.raises(ValueError):
        tiny_model.encode_claim([])


# -- decode_step_title ----------------------------------------------------------


def test_decode_step_title_contract(tiny_model, tiny_vocab):
    enc = tiny_model.encode_claim(tiny_vocab.encode("alpha hill"))
    logits = tiny_model.decode_step_title(enc, [BOS])
    assert logits.shape == (len(tiny_vocab),)
    assert np.isfinite(logits).all()
    with pytest.raises(ValueError):
        tiny_model.decode_step_title(enc, [])
    with pytest.raises(ValueError):
        tiny_model.decode_step_title(enc, [EOS, BOS])


def test_decode_step_title_softmax_normalizes(tiny_model, tiny_vocab):
    enc = tiny_model.encode_claim(tiny_vocab.encode("beta ridge"))
    logits = tiny_model.decode_step_title(enc, [BOS, tiny_vocab.ids["beta"]])
    probs = np.exp(nn.log_softmax64(logits))
    assert abs(probs.sum() - 1.0) < 1e-6


def test_decoder_causality(tiny_model, tiny_vocab):
    enc = tiny_model.encode_claim(tiny_vocab.encode("alpha hill"))
    a = tiny_vocab.ids["alpha"]
    b = tiny_vocab.ids["beta"]
    full_a = tiny_model.title_logits_all(enc, [BOS, a, a, b])
    full_b = tiny_model.title_logits_all(enc, [BOS, a, b, a])
    # Positions 0 and 1 see identical prefixes; later tokens must not leak back.
    np.testing.assert_array_equal(full_a[0], full_b[0])
    np.testing.assert_array_equal(full_a[1], full_b[1])
    assert not np.array_equal(full_a[2], full_b[2])


def test_step_decode_matches_full_sequence_logits(tiny_vocab):
    model = Seq2SeqModel(small_config(len(tiny_vocab)), dtype=np.float64)
    enc = model.encode_claim(tiny_vocab.encode("alpha hill rises"))
    seq = [BOS, tiny_vocab.ids["alpha"], EOT, EOS]
    full = model.title_logits_all(enc, seq)
    for t in range(1, len(seq)):
        step = model.decode_step_title(enc, seq[:t])
        np.testing.assert_allclose(step, full[t - 1], rtol=1e-9, atol=1e-12)


# -- encode_sentence ------------------------------------------------------------


def test_encode_sentence_contract(tiny_model, tiny_vocab):
    ids = tiny_vocab.encode("beta ridge faces north")
    e1 = tiny_model.encode_sentence(ids, source=("Beta_ridge", 0))
    e2 = tiny_model.encode_sentence(ids, source=("Beta_ridge", 0))
    np.testing.assert_array_equal(e1.vector, e2.vector)
    assert e1.vector.shape == (tiny_model.config.d_model,)
    assert np.isfinite(e1.vector).all()
    assert e1.source == ("Beta_ridge", 0)


def test_encode_sentence_empty_falls_back_to_eos(tiny_model):
    empty = tiny_model.encode_sentence([])
    eos = tiny_model.encode_sentence([EOS])
    np.testing.assert_array_equal(empty.vector, eos.vector)


def test_different_sentences_not_identical(tiny_model, tiny_vocab):
    a = tiny_model.encode_sentence(tiny_vocab.encode("alpha hill rises early"))
    b = tiny_model.encode_sentence(tiny_vocab.encode("beta ridge faces north"))
    cos = a.vector @ b.vector / (np.linalg.norm(a.vector) * np.linalg.norm(b.vector))
    assert cos < 1.0 - 1e-6


# -- decode_step_evidence --------------------------------------------------------


def embeddings(model, vocab, texts):
    return [model.encode_sentence(vocab.encode(t), source=("D", i))
            for i, t in enumerate(texts)]


def test_decode_step_evidence_shape(tiny_model, tiny_vocab):
    enc = tiny_model.encode_claim(tiny_vocab.encode("alpha"))
    cands = embeddings(tiny_model, tiny_vocab, ["alpha hill rises early ."])
    scores = tiny_model.decode_step_evidence(enc, [], cands)
    assert scores.shape == (2,)  # one candidate + EOE
    with pytest.raises(ValueError):
        tiny_model.decode_step_evidence(enc, [], [])


def test_duplicated_candidate_duplicates_score(tiny_model, tiny_vocab):
    enc = tiny_model.encode_claim(tiny_vocab.encode("alpha"))
    cands = embeddings(tiny_model, tiny_vocab,
                       ["alpha hill rises early .", "beta ridge faces north ."])
    doubled = [cands[0], cands[1], cands[0]]
    scores = tiny_model.decode_step_evidence(enc, [], doubled)
    assert scores[0] == scores[2]


def test_evidence_softmax_normalizes(tiny_model, tiny_vocab):
    enc = tiny_model.encode_claim(tiny_vocab.encode("alpha"))
    cands = embeddings(tiny_model, tiny_vocab,
                       ["alpha hill rises early .", "beta ridge faces north .",
                        "key2 alpha hill was mapped late ."])
    scores = tiny_model.decode_step_evidence(enc, [cands[0]], cands)
    probs = np.exp(nn.log_softmax64(scores))
    assert probs.shape == (4,)
    assert abs(probs.sum() - 1.0) < 1e-6


# -- losses ----------------------------------------------------------------------


def test_loss_title_uniform_model_is_log_v(tiny_vocab):
    model = Seq2SeqModel(small_config(len(tiny_vocab)), dtype=np.float64)
    model.params["title_dec.out_w"].data[:] = 0.0
    model.params["title_dec.out_b"].data[:] = 0.0
    enc = model.encode_claim(tiny_vocab.encode("anything alpha"))
    target = [BOS] + tiny_vocab.encode("alpha hill") + [EOT, EOS]
    loss = model.loss_title(enc, target)
    assert abs(loss - np.log(len(tiny_vocab))) < 1e-9


def test_loss_title_matches_stepwise_cross_entropy(tiny_vocab):
    """Batched full-sequence loss equals smoothed CE accumulated step by step."""
    model = Seq2SeqModel(small_config(len(tiny_vocab)), dtype=np.float64)
    enc = model.encode_claim(tiny_vocab.encode("alpha hill rises"))
    target = [BOS] + tiny_vocab.encode("alpha hill") + [EOT, SEP] \
        + tiny_vocab.encode("beta ridge") + [EOT, EOS]
    eps = model.config.label_smoothing
    v = len(tiny_vocab)
    expected = 0.0
    for t in range(1, len(target)):
        logp = nn.log_softmax64(model.decode_step_title(enc, target[:t]))
        q = np.full(v, eps / v)
        q[target[t]] += 1 - eps
        expected += -(q * logp).sum()
    expected /= len(target) - 1
    got = model.loss_title(enc, target)
    np.testing.assert_allclose(got, expected, rtol=1e-9)


def test_loss_evidence_uniform_when_scores_equal(tiny_vocab):
    model = Seq2SeqModel(small_config(len(tiny_vocab)), dtype=np.float64)
    vec = np.full(model.config.d_model, 0.37)
    model.params["evid_dec.eoe"].data[:] = vec
    cands = [SentenceEmbedding(vector=vec.copy(), source=("D", i)) for i in range(3)]
    enc = model.encode_claim(tiny_vocab.encode("alpha"))
    loss = model.loss_evidence(enc, [("D", 1)], cands)
    assert abs(loss - np.log(4)) < 1e-9  # both steps uniform over 3 + EOE


def test_loss_evidence_matches_stepwise_scores(tiny_vocab):
    model = Seq2SeqModel(small_config(len(tiny_vocab)), dtype=np.float64)
    enc = model.encode_claim(tiny_vocab.encode("alpha hill"))
    cands = embeddings(model, tiny_vocab,
                       ["alpha hill rises early .", "key1 alpha hill holds two peaks .",
                        "beta ridge faces north ."])
    gold = [("D", 1), ("D", 0)]
    expected = 0.0
    slots = [1, 0]
    for g in range(3):
        prev = [cands[s] for s in slots[:g]]
        scores = model.decode_step_evidence(enc, prev, cands)
        target = slots[g] if g < 2 else len(cands)
        expected += -nn.log_softmax64(scores)[target]
    expected /= 3
    got = model.loss_evidence(enc, gold, cands)
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_loss_evidence_rejects_missing_gold(tiny_model, tiny_vocab):
    enc = tiny_model.encode_claim(tiny_vocab.encode("alpha"))
    cands = embeddings(tiny_model, tiny_vocab, ["alpha hill rises early ."])
    with pytest.raises(DataError):
        tiny_model.loss_evidence(enc, [("elsewhere", 7)], cands)


def test_unk_tokens_still_encode(tiny_model, tiny_vocab):
    ids = tiny_vocab.encode("completely unknowable words")
    assert UNK in ids
    enc = tiny_model.encode_claim(ids)
    assert np.isfinite(enc.states).all()
