"""Joint teacher-forced training of the title and evidence objectives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .corpus import Claim, Corpus, GoldTargets, Label
from .errors import DataError
from .model import NEG_INF, Seq2SeqModel
from .tokenizer import BOS, EOS, EOT, PAD, SEP, Vocab


@dataclass
class TrainStats:
    step: int
    loss_title: float
    loss_evidence: float
    loss_total: float
    grad_norm: float
    learning_rate: float

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "loss_title": self.loss_title,
            "loss_evidence": self.loss_evidence,
            "loss_total": self.loss_total,
            "grad_norm": self.grad_norm,
            "learning_rate": self.learning_rate,
        }


def learning_rate(step: int, total_updates: int, peak_lr: float, warmup_frac: float) -> float:
    """Linear warmup to the peak over the first warmup_frac of updates, then
    linear decay; exactly peak_lr at the warmup boundary and 0.0 at the end.
    Steps are 1-based."""
    if not 0.0 < warmup_frac < 1.0:
        raise ValueError(f"warmup_frac must be in (0, 1), got {warmup_frac}")
    if step < 1 or total_updates < 1:
        raise ValueError("step and total_updates must be positive")
    warmup = max(1, round(total_updates * warmup_frac))
    if step <= warmup:
        return peak_lr * (step / warmup)
    if step >= total_updates:
        return 0.0
    return peak_lr * ((total_updates - step) / (total_updates - warmup))


def linearize_titles(vocab: Vocab, titles: Sequence[str]) -> list[int]:
    """Target layout: BOS t1 EOT SEP t2 EOT ... EOS."""
    ids = [BOS]
    for i, title in enumerate(titles):
        if i:
            ids.append(SEP)
        ids.extend(vocab.encode(title))
        ids.append(EOT)
    ids.append(EOS)
    return ids


@dataclass
class _Example:
    claim_ids: list[int]
    title_target: list[int]
    cand_ids: list[list[int]]  # per candidate, ordered by (doc_id, sentence_index)
    gold_slots: list[int]  # candidate indices in gold order

    @property
    def cost(self) -> int:
        return len(self.claim_ids) + len(self.title_target)


def candidate_sentences(doc_ids: Sequence[str], corpus: Corpus) -> list[tuple[str, int, str]]:
    """All sentences of the given documents, ordered by (doc_id, sentence_index)."""
    out = []
    for doc_id in sorted(set(doc_ids)):
        doc = corpus.documents.get(doc_id)
        if doc is None:
            raise DataError(f"doc_id {doc_id!r} not in corpus")
        out.extend((doc_id, index, text) for index, text in doc.sentences)
    return out


def encode_example(claim: Claim, targets: GoldTargets, corpus: Corpus, vocab: Vocab,
                   max_positions: int) -> _Example:
    claim_ids = vocab.encode(claim.text)[:max_positions]
    if not claim_ids:
        raise DataError(f"claim {claim.claim_id} has no tokens")
    title_target = linearize_titles(vocab, targets.title_sequence)
    if len(title_target) - 1 > max_positions:
        raise DataError(f"claim {claim.claim_id}: title target longer than max_positions")
    doc_ids = [doc_id for doc_id, _ in targets.evidence_sequence]
    cands = candidate_sentences(doc_ids, corpus)
    slot_of = {(doc_id, index): i for i, (doc_id, index, _) in enumerate(cands)}
    gold_slots = []
    for pair in targets.evidence_sequence:
        if pair not in slot_of:
            raise DataError(f"claim {claim.claim_id}: gold evidence {pair!r} unresolvable")
        gold_slots.append(slot_of[pair])
    # Blank FEVER lines stay addressable: empty sentences encode as EOS.
    cand_ids = [vocab.encode(text)[:max_positions] or [EOS] for _, _, text in cands]
    return _Example(claim_ids, title_target, cand_ids, gold_slots)


def make_batches(examples: Sequence[_Example], max_tokens: int) -> list[list[_Example]]:
    """Greedy dynamic batching by claim+target token budget, order-preserving."""
    batches: list[list[_Example]] = []
    current: list[_Example] = []
    used = 0
    for ex in examples:
        if current and used + ex.cost > max_tokens:
            batches.append(current)
            current, used = [], 0
        current.append(ex)
        used += ex.cost
    if current:
        batches.append(current)
    return batches


def _pad_ids(seqs: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), PAD, dtype=np.int64)
    valid = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        valid[i, : len(s)] = True
    return ids, valid


class Trainer:
    """One optimizer step at a time; all randomness is a pure function of
    (seed, step), so resuming from a checkpoint continues bit-identically."""

    def __init__(self, model: Seq2SeqModel, vocab: Vocab, total_updates: int,
                 peak_lr: float = 3e-5, warmup_frac: float = 0.10, clip_norm: float = 1.0,
                 beta1: float = 0.9, beta2: float = 0.999, adam_eps: float = 1e-8):
        if total_updates < 1:
            raise ValueError("total_updates must be positive")
        self.model = model
        self.vocab = vocab
        self.total_updates = total_updates
        self.peak_lr = peak_lr
        self.warmup_frac = warmup_frac
        self.clip_norm = clip_norm
        self.optimizer = nn.Adam(model.params, beta1, beta2, adam_eps)
        self.step_count = 0

    def _dropout_rng(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self.model.config.seed, 1, self.step_count]))

    def shuffle_order(self, n_examples: int, epoch: int) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.model.config.seed, 2, epoch]))
        return rng.permutation(n_examples)

    def train_step(self, batch: Sequence[tuple[Claim, GoldTargets]], corpus: Corpus) -> TrainStats:
        """One Adam update on the joint loss over a teacher-forced batch."""
        if not batch:
            raise ValueError("empty training batch")
        for claim, _ in batch:
            if claim.label is Label.NOT_ENOUGH_INFO:
                raise ValueError(f"claim {claim.claim_id} is NOT ENOUGH INFO; "
                                 "it cannot appear in a retrieval training batch")
        max_pos = self.model.config.max_positions
        examples = [encode_example(claim, targets, corpus, self.vocab, max_pos)
                    for claim, targets in batch]
        return self.train_step_encoded(examples)

    def loss_graph(self, examples: Sequence[_Example]) -> tuple[nn.Tensor, nn.Tensor]:
        """Build the joint forward graph (training mode) for a prepared batch;
        pure given parameters and step_count."""
        model = self.model
        rng = self._dropout_rng()
        n_batch = len(examples)

        claim_ids, claim_valid = _pad_ids([ex.claim_ids for ex in examples])
        title_in, _ = _pad_ids([ex.title_target[:-1] for ex in examples])
        title_tgt, _ = _pad_ids([ex.title_target[1:] for ex in examples])

        flat_sents: list[list[int]] = []
        offsets = []
        for ex in examples:
            offsets.append(len(flat_sents))
            flat_sents.extend(ex.cand_ids)
        sent_ids, sent_valid = _pad_ids(flat_sents)

        n_slots = 1 + max(len(ex.cand_ids) for ex in examples)
        batch_idx = np.concatenate(
            [np.full(len(ex.cand_ids), b, dtype=np.int64) for b, ex in enumerate(examples)])
        slot_idx = np.concatenate(
            [1 + np.arange(len(ex.cand_ids), dtype=np.int64) for ex in examples])
        slot_mask = np.full((n_batch, 1, n_slots), NEG_INF, dtype=model.dtype)
        slot_mask[:, 0, 0] = 0.0
        for b, ex in enumerate(examples):
            slot_mask[b, 0, 1 : 1 + len(ex.cand_ids)] = 0.0

        n_steps = 1 + max(len(ex.gold_slots) for ex in examples)
        input_map = np.full((n_batch, n_steps), -2, dtype=np.int64)
        ev_targets = np.zeros((n_batch, n_steps), dtype=np.int64)
        step_valid = np.zeros((n_batch, n_steps), dtype=bool)
        for b, ex in enumerate(examples):
            input_map[b, 0] = -1
            for s, slot in enumerate(ex.gold_slots):
                input_map[b, s + 1] = offsets[b] + slot
                ev_targets[b, s] = 1 + slot
            ev_targets[b, len(ex.gold_slots)] = 0  # EOE closes the sequence
            step_valid[b, : len(ex.gold_slots) + 1] = True

        # Forward: claim encoder feeds both decoders; sentence encoder feeds
        # the dynamic candidate vocabulary and the evidence decoder inputs.
        enc_out = model.encoder_forward("claim_enc", claim_ids, claim_valid, True, rng)

        x = model.embed_title_inputs(title_in)
        states = model.decoder_forward("title_dec", x, enc_out, claim_valid, True, rng)
        logits = model.title_output_logits(states)
        flat_logits = nn.reshape(logits, (-1, model.config.vocab_size))
        keep = np.flatnonzero(title_tgt.ravel() != PAD)
        loss_title = nn.cross_entropy(nn.gather(flat_logits, keep),
                                      title_tgt.ravel()[keep],
                                      model.config.label_smoothing)

        sent_out = model.encoder_forward("sent_enc", sent_ids, sent_valid, True, rng)
        pooled = nn.masked_mean(sent_out, sent_valid.astype(model.dtype))
        cand_table = nn.assemble_candidates(pooled, model.params["evid_dec.eoe"],
                                            batch_idx, slot_idx, n_batch, n_slots)
        ev_in = nn.assemble_inputs(pooled, model.params["evid_dec.start"], input_map)
        ev_in = nn.add(ev_in, model._positions("evid_dec", n_steps))
        ev_states = model.decoder_forward("evid_dec", ev_in, enc_out, claim_valid, True, rng)
        scores = nn.add(nn.matmul(ev_states, nn.transpose(cand_table, (0, 2, 1))),
                        nn.constant(slot_mask))
        flat_scores = nn.reshape(scores, (-1, n_slots))
        keep_steps = np.flatnonzero(step_valid.ravel())
        loss_evidence = nn.cross_entropy(nn.gather(flat_scores, keep_steps),
                                         ev_targets.ravel()[keep_steps])
        return loss_title, loss_evidence

    def train_step_encoded(self, examples: Sequence[_Example]) -> TrainStats:
        model = self.model
        loss_title, loss_evidence = self.loss_graph(examples)
        total = nn.add(loss_title, loss_evidence)
        nn.zero_grads(model.params)
        nn.backward(total)
        grad_norm = nn.clip_gradients(model.params, self.clip_norm)
        lr = learning_rate(self.step_count + 1, self.total_updates,
                           self.peak_lr, self.warmup_frac)
        self.optimizer.step(lr)
        self.step_count += 1

        lt = float(loss_title.data)
        le = float(loss_evidence.data)
        return TrainStats(step=self.step_count, loss_title=lt, loss_evidence=le,
                          loss_total=lt + le, grad_norm=grad_norm, learning_rate=lr)
