"""Inference-time generation.

Title decoding is beam search over the token vocabulary with per-step masks:
inside a title only the trie's continuations are legal; right after EOT only
SEP or EOS; after SEP the trie resets to the root and any already-emitted
title has its final EOT masked (duplicate suppression). Hypothesis scores are
sums of full-softmax token log-probs (no renormalization over the mask and,
by default, no length normalization), which keeps exhaustive-search oracle
comparisons exact. Evidence decoding is greedy over the remaining candidate
sentences plus EOE.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import nn
from .corpus import Claim, Corpus
from .errors import DataError, DecodingError
from .model import ClaimEncoding, Seq2SeqModel, SentenceEmbedding
from .tokenizer import BOS, EOS, EOT, SEP, Vocab
from .trie import TitleTrie


@dataclass
class DecodeParams:
    beam_size: int = 5
    max_titles: int = 10
    max_evidence_steps: int = 10
    length_normalize: bool = False  # rank finished hypotheses by log_prob / length


@dataclass
class BeamHypothesis:
    tokens: list[int]
    log_prob: float
    finished: bool = False
    titles_emitted: int = 0
    doc_ids: tuple[str, ...] = ()
    node: Optional[int] = None  # trie node while inside a title, else None


@dataclass
class RetrievalResult:
    claim_id: int
    titles: list[str]  # ordered doc_ids
    evidence: list[tuple[str, int]]
    title_log_prob: float
    evidence_log_probs: list[float] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "predicted_titles": list(self.titles),
            "predicted_evidence": [[doc_id, index] for doc_id, index in self.evidence],
            "scores": {
                "title_log_prob": self.title_log_prob,
                "evidence_log_probs": list(self.evidence_log_probs),
            },
        }


def _allowed_tokens(hyp: BeamHypothesis, trie: TitleTrie, max_titles: int) -> list[int]:
    if hyp.node is not None:
        children = trie.children_of(hyp.node)
        tokens = sorted(children)
        if EOT in children and trie.terminal_doc(children[EOT]) in hyp.doc_ids:
            tokens.remove(EOT)  # duplicate-title suppression
        return tokens
    if hyp.titles_emitted < max_titles:
        return [SEP, EOS]
    return [EOS]


def _extend(hyp: BeamHypothesis, token: int, log_prob: float, trie: TitleTrie) -> BeamHypothesis:
    tokens = hyp.tokens + [token]
    if token == EOS:
        return BeamHypothesis(tokens, log_prob, finished=True,
                              titles_emitted=hyp.titles_emitted, doc_ids=hyp.doc_ids)
    if token == SEP:
        return BeamHypothesis(tokens, log_prob, titles_emitted=hyp.titles_emitted,
                              doc_ids=hyp.doc_ids, node=trie.root)
    child = trie.children_of(hyp.node)[token]
    if token == EOT:
        doc_id = trie.terminal_doc(child)
        return BeamHypothesis(tokens, log_prob, titles_emitted=hyp.titles_emitted + 1,
                              doc_ids=hyp.doc_ids + (doc_id,), node=None)
    return BeamHypothesis(tokens, log_prob, titles_emitted=hyp.titles_emitted,
                          doc_ids=hyp.doc_ids, node=child)


def beam_search_titles(
    model: Seq2SeqModel,
    claim: Union[ClaimEncoding, Sequence[int]],
    trie: TitleTrie,
    beam_size: int = 5,
    max_titles: int = 10,
    length_normalize: bool = False,
) -> tuple[list[str], float, list[int]]:
    """Constrained beam search; returns (doc_ids, log_prob, token sequence).

    Ties in score break on the lexicographically smaller token sequence.
    Finished hypotheses do not occupy alive-beam slots, so with beam_size at
    least the number of legal hypotheses the search is exhaustive.
    """
    if trie.title_count == 0:
        raise DecodingError("cannot decode titles against an empty trie")
    if beam_size < 1:
        raise ValueError("beam_size must be positive")
    enc = claim if isinstance(claim, ClaimEncoding) else model.encode_claim(claim)
    alive = [BeamHypothesis(tokens=[BOS], log_prob=0.0, node=trie.root)]
    finished: list[BeamHypothesis] = []
    last_alive = alive
    max_len = model.config.max_positions
    while alive:
        last_alive = alive
        pool: list[tuple[float, list[int], BeamHypothesis, int]] = []
        for hyp in alive:
            if len(hyp.tokens) >= max_len:
                continue  # cannot extend further; hypothesis dies
            log_probs = nn.log_softmax64(model.decode_step_title(enc, hyp.tokens))
            for token in _allowed_tokens(hyp, trie, max_titles):
                pool.append((hyp.log_prob + float(log_probs[token]),
                             hyp.tokens + [token], hyp, token))
        pool.sort(key=lambda item: (-item[0], item[1]))
        alive = []
        for score, _, hyp, token in pool:
            if token == EOS:
                finished.append(_extend(hyp, token, score, trie))
            elif len(alive) < beam_size:
                alive.append(_extend(hyp, token, score, trie))
    if not finished:
        raise DecodingError("no beam hypothesis could finish",
                            partial_beams=last_alive)

    def rank(h: BeamHypothesis):
        score = h.log_prob / len(h.tokens) if length_normalize else h.log_prob
        return (-score, h.tokens)

    best = min(finished, key=rank)
    return list(best.doc_ids), best.log_prob, best.tokens


def collect_candidates(model: Seq2SeqModel, vocab: Vocab, doc_ids: Sequence[str],
                       corpus: Corpus) -> list[SentenceEmbedding]:
    """Embed every sentence of the given documents, ordered by (doc_id, index)."""
    out = []
    for doc_id in sorted(set(doc_ids)):
        doc = corpus.documents.get(doc_id)
        if doc is None:
            raise DataError(f"doc_id {doc_id!r} not in corpus")
        for index, text in doc.sentences:
            out.append(model.encode_sentence(vocab.encode(text), source=(doc_id, index)))
    return out


def greedy_evidence(
    model: Seq2SeqModel,
    claim: Union[ClaimEncoding, Sequence[int]],
    candidates: Sequence[SentenceEmbedding],
    max_evidence_steps: int = 10,
) -> tuple[list[tuple[str, int]], list[float]]:
    """Greedy argmax decoding over the dynamic candidate vocabulary.

    A chosen candidate is removed from later steps; decoding stops at EOE, at
    max_evidence_steps, or when candidates run out. Score ties prefer the
    earliest candidate in (doc_id, sentence_index) order, then EOE last.
    """
    if not candidates:
        raise DecodingError("evidence decoding requires a non-empty candidate set")
    enc = claim if isinstance(claim, ClaimEncoding) else model.encode_claim(claim)
    remaining = list(candidates)
    chosen: list[SentenceEmbedding] = []
    pairs: list[tuple[str, int]] = []
    log_probs: list[float] = []
    for _ in range(max_evidence_steps):
        if not remaining:
            break
        if 1 + len(chosen) >= model.config.max_positions:
            break
        scores = model.decode_step_evidence(enc, chosen, remaining)
        step_log_probs = nn.log_softmax64(scores)
        pick = int(np.argmax(scores))
        if pick == len(remaining):  # EOE
            break
        selected = remaining.pop(pick)
        chosen.append(selected)
        pairs.append(selected.source)
        log_probs.append(float(step_log_probs[pick]))
    return pairs, log_probs


def retrieve(model: Seq2SeqModel, vocab: Vocab, claim: Claim, trie: TitleTrie,
             corpus: Corpus, params: Optional[DecodeParams] = None) -> RetrievalResult:
    """Claim encoding -> constrained title beam -> candidates -> greedy evidence."""
    params = params or DecodeParams()
    enc = model.encode_claim(vocab.encode(claim.text))
    doc_ids, title_lp, _ = beam_search_titles(
        model, enc, trie, beam_size=params.beam_size, max_titles=params.max_titles,
        length_normalize=params.length_normalize)
    candidates = collect_candidates(model, vocab, doc_ids, corpus)
    if candidates:
        evidence, ev_lps = greedy_evidence(model, enc, candidates,
                                           max_evidence_steps=params.max_evidence_steps)
    else:
        evidence, ev_lps = [], []  # retrieved documents may all be sentence-free
    return RetrievalResult(claim_id=claim.claim_id, titles=doc_ids, evidence=evidence,
                           title_log_prob=title_lp, evidence_log_probs=ev_lps)


# -- prediction file io -------------------------------------------------------


def write_predictions(results: Sequence[Union[RetrievalResult, dict]], path) -> None:
    records = [r.to_record() if isinstance(r, RetrievalResult) else r for r in results]
    records.sort(key=lambda rec: rec["claim_id"])
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_predictions(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from exc
            if "claim_id" not in rec:
                raise DataError(f"{path}:{line_no}: prediction record lacks claim_id")
            records.append(rec)
    return records
