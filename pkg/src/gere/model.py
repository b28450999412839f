"""Compact encoder-decoder transformer trained from scratch.

Four parameter stacks with no sharing: a claim encoder producing the hidden
sequence every decoder cross-attends to, a title decoder over the token
vocabulary, a sentence encoder whose mean-pooled states form the dynamic
evidence vocabulary, and an evidence decoder that scores decoder states
against candidate sentence embeddings plus one learned end-of-evidence (EOE)
embedding. Pre-norm residual blocks with a final layer norm per stack.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import nn
from .errors import DataError
from .tokenizer import BOS, EOS

NEG_INF = -1e9  # additive mask; exp(NEG_INF - max) underflows to exactly 0


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    d_ff: int = 256
    max_positions: int = 256
    dropout_rate: float = 0.0
    label_smoothing: float = 0.1
    seed: int = 0
    init_std: float = 0.02  # scale of the Gaussian weight init

    def __post_init__(self):
        if self.init_std <= 0:
            raise ValueError(f"init_std must be positive, got {self.init_std}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.vocab_size < 6:
            raise ValueError("vocab_size must cover the six special tokens")
        if self.max_positions < 2:
            raise ValueError("max_positions must be at least 2")

    def to_kv(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "ModelConfig":
        values: dict = {}
        casts = {f.name: f.type for f in fields(cls)}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"model config line {line_no}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in casts:
                raise DataError(f"model config line {line_no}: unknown key {key!r}")
            values[key] = float(value) if "float" in str(casts[key]) else int(value)
        missing = [f.name for f in fields(cls) if f.name not in values and f.name == "vocab_size"]
        if missing:
            raise DataError(f"model config missing required keys: {missing}")
        return cls(**values)

    @classmethod
    def from_kv_file(cls, path) -> "ModelConfig":
        return cls.from_kv(Path(path).read_text(encoding="utf-8"))


@dataclass
class ClaimEncoding:
    """Hidden states for one claim; `truncated` flags over-length inputs."""

    states: np.ndarray  # (length, d_model)
    mask: np.ndarray  # (length,) bool, all True (claims are never padded here)
    truncated: bool = False


@dataclass
class SentenceEmbedding:
    vector: np.ndarray  # (d_model,)
    source: Optional[tuple[str, int]] = None


def _causal_mask(n: int, dtype) -> np.ndarray:
    return np.triu(np.full((n, n), NEG_INF, dtype=dtype), k=1)[None, None]


def _key_mask(valid: np.ndarray, dtype) -> Optional[np.ndarray]:
    if valid.all():
        return None
    add = np.where(valid, 0.0, NEG_INF).astype(dtype)
    return add[:, None, None, :]


class Seq2SeqModel:
    """Parameter container plus forward graphs for all four stacks."""

    ENCODERS = ("claim_enc", "sent_enc")
    DECODERS = ("title_dec", "evid_dec")

    def __init__(self, config: ModelConfig, vocab_checksum: int = 0, dtype=np.float32):
        self.config = config
        self.vocab_checksum = vocab_checksum
        self.dtype = np.dtype(dtype)
        self.params: dict[str, nn.Tensor] = {}
        self._init_params()

    # -- parameters ----------------------------------------------------------

    def _add_param(self, name: str, array: np.ndarray) -> None:
        self.params[name] = nn.Tensor(array.astype(self.dtype), requires_grad=True)

    def _init_params(self) -> None:
        cfg = self.config
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))

        def normal(*shape):
            return rng.standard_normal(shape) * cfg.init_std

        def attn_block(prefix):
            for w in ("wq", "wk", "wv", "wo"):
                self._add_param(f"{prefix}.{w}", normal(cfg.d_model, cfg.d_model))
            for b in ("bq", "bk", "bv", "bo"):
                self._add_param(f"{prefix}.{b}", np.zeros(cfg.d_model))

        def ln_block(prefix):
            self._add_param(f"{prefix}.g", np.ones(cfg.d_model))
            self._add_param(f"{prefix}.b", np.zeros(cfg.d_model))

        def ffn_block(prefix):
            self._add_param(f"{prefix}.w1", normal(cfg.d_model, cfg.d_ff))
            self._add_param(f"{prefix}.b1", np.zeros(cfg.d_ff))
            self._add_param(f"{prefix}.w2", normal(cfg.d_ff, cfg.d_model))
            self._add_param(f"{prefix}.b2", np.zeros(cfg.d_model))

        for name in self.ENCODERS:
            self._add_param(f"{name}.tok_emb", normal(cfg.vocab_size, cfg.d_model))
            self._add_param(f"{name}.pos_emb", normal(cfg.max_positions, cfg.d_model))
            for i in range(cfg.n_layers_enc):
                ln_block(f"{name}.l{i}.ln1")
                attn_block(f"{name}.l{i}.attn")
                ln_block(f"{name}.l{i}.ln2")
                ffn_block(f"{name}.l{i}.ffn")
            ln_block(f"{name}.ln_f")

        for name in self.DECODERS:
            if name == "title_dec":
                self._add_param(f"{name}.tok_emb", normal(cfg.vocab_size, cfg.d_model))
            self._add_param(f"{name}.pos_emb", normal(cfg.max_positions, cfg.d_model))
            for i in range(cfg.n_layers_dec):
                ln_block(f"{name}.l{i}.ln1")
                attn_block(f"{name}.l{i}.self_attn")
                ln_block(f"{name}.l{i}.ln2")
                attn_block(f"{name}.l{i}.cross_attn")
                ln_block(f"{name}.l{i}.ln3")
                ffn_block(f"{name}.l{i}.ffn")
            ln_block(f"{name}.ln_f")
        self._add_param("title_dec.out_w", normal(cfg.d_model, cfg.vocab_size))
        self._add_param("title_dec.out_b", np.zeros(cfg.vocab_size))
        self._add_param("evid_dec.start", normal(cfg.d_model))
        self._add_param("evid_dec.eoe", normal(cfg.d_model))

    @property
    def num_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    # -- shared blocks ---------------------------------------------------------

    def _linear(self, x, w_name, b_name):
        return nn.add(nn.matmul(x, self.params[w_name]), self.params[b_name])

    def _attention(self, prefix, x, kv, add_mask, training, rng):
        cfg = self.config
        n_batch, n_q = x.data.shape[0], x.data.shape[1]
        n_k = kv.data.shape[1]
        heads, d_head = cfg.n_heads, cfg.d_model // cfg.n_heads

        def split(t, n_pos):
            t = nn.reshape(t, (n_batch, n_pos, heads, d_head))
            return nn.transpose(t, (0, 2, 1, 3))

        q = split(self._linear(x, f"{prefix}.wq", f"{prefix}.bq"), n_q)
        k = split(self._linear(kv, f"{prefix}.wk", f"{prefix}.bk"), n_k)
        v = split(self._linear(kv, f"{prefix}.wv", f"{prefix}.bv"), n_k)
        scores = nn.mul(nn.matmul(q, nn.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d_head))
        if add_mask is not None:
            scores = nn.add(scores, nn.constant(add_mask))
        weights = nn.softmax_last(scores)
        if training and cfg.dropout_rate > 0:
            weights = nn.dropout(weights, cfg.dropout_rate, rng)
        ctx = nn.matmul(weights, v)
        ctx = nn.reshape(nn.transpose(ctx, (0, 2, 1, 3)), (n_batch, n_q, cfg.d_model))
        return self._linear(ctx, f"{prefix}.wo", f"{prefix}.bo")

    def _ffn(self, prefix, x):
        h = nn.gelu(self._linear(x, f"{prefix}.w1", f"{prefix}.b1"))
        return self._linear(h, f"{prefix}.w2", f"{prefix}.b2")

    def _ln(self, prefix, x):
        return nn.layer_norm(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _maybe_dropout(self, x, training, rng):
        if training and self.config.dropout_rate > 0:
            return nn.dropout(x, self.config.dropout_rate, rng)
        return x

    def _positions(self, name, n_pos):
        if n_pos > self.config.max_positions:
            raise ValueError(f"sequence length {n_pos} exceeds max_positions "
                             f"{self.config.max_positions}")
        return nn.gather(self.params[f"{name}.pos_emb"], np.arange(n_pos))

    # -- encoder / decoder forward ------------------------------------------

    def encoder_forward(self, name, ids: np.ndarray, valid: np.ndarray,
                        training=False, rng=None) -> nn.Tensor:
        """Run an encoder stack over right-padded token ids (B, T)."""
        x = nn.add(nn.gather(self.params[f"{name}.tok_emb"], ids),
                   self._positions(name, ids.shape[1]))
        x = self._maybe_dropout(x, training, rng)
        add_mask = _key_mask(valid, self.dtype)
        for i in range(self.config.n_layers_enc):
            p = f"{name}.l{i}"
            normed = self._ln(f"{p}.ln1", x)
            attn = self._attention(f"{p}.attn", normed, normed, add_mask, training, rng)
            x = nn.add(x, self._maybe_dropout(attn, training, rng))
            x = nn.add(x, self._maybe_dropout(self._ffn(f"{p}.ffn", self._ln(f"{p}.ln2", x)),
                                              training, rng))
        return self._ln(f"{name}.ln_f", x)

    def decoder_forward(self, name, x: nn.Tensor, enc_out: nn.Tensor,
                        enc_valid: Optional[np.ndarray], training=False, rng=None) -> nn.Tensor:
        """Run a decoder stack over embedded inputs (B, T, d) with causal masking."""
        n_q = x.data.shape[1]
        causal = _causal_mask(n_q, self.dtype)
        cross = None if enc_valid is None else _key_mask(enc_valid, self.dtype)
        x = self._maybe_dropout(x, training, rng)
        for i in range(self.config.n_layers_dec):
            p = f"{name}.l{i}"
            normed = self._ln(f"{p}.ln1", x)
            attn = self._attention(f"{p}.self_attn", normed, normed, causal, training, rng)
            x = nn.add(x, self._maybe_dropout(attn, training, rng))
            attn = self._attention(f"{p}.cross_attn", self._ln(f"{p}.ln2", x),
                                   enc_out, cross, training, rng)
            x = nn.add(x, self._maybe_dropout(attn, training, rng))
            x = nn.add(x, self._maybe_dropout(self._ffn(f"{p}.ffn", self._ln(f"{p}.ln3", x)),
                                              training, rng))
        return self._ln(f"{name}.ln_f", x)

    def embed_title_inputs(self, ids: np.ndarray) -> nn.Tensor:
        return nn.add(nn.gather(self.params["title_dec.tok_emb"], ids),
                      self._positions("title_dec", ids.shape[1]))

    def title_output_logits(self, states: nn.Tensor) -> nn.Tensor:
        return nn.add(nn.matmul(states, self.params["title_dec.out_w"]),
                      self.params["title_dec.out_b"])

    # -- public operations (inference mode) ----------------------------------

    def encode_claim(self, token_ids: Sequence[int]) -> ClaimEncoding:
        """Deterministic claim encoding; over-length input is truncated and flagged."""
        ids = list(token_ids)
        if not ids:
            raise ValueError("cannot encode an empty claim")
        truncated = len(ids) > self.config.max_positions
        ids = ids[: self.config.max_positions]
        with nn.no_grad():
            out = self.encoder_forward(
                "claim_enc", np.array([ids]), np.ones((1, len(ids)), dtype=bool))
        return ClaimEncoding(states=out.data[0], mask=np.ones(len(ids), dtype=bool),
                             truncated=truncated)

    def _enc_tensor(self, enc: ClaimEncoding) -> nn.Tensor:
        return nn.constant(enc.states[None])

    def decode_step_title(self, enc: ClaimEncoding, prefix: Sequence[int]) -> np.ndarray:
        """Next-token logits over the vocabulary after `prefix` (must start with BOS)."""
        prefix = list(prefix)
        if not prefix:
            raise ValueError("title decoder prefix must not be empty")
        if prefix[0] != BOS:
            raise ValueError("title decoder prefix must begin with BOS")
        with nn.no_grad():
            x = self.embed_title_inputs(np.array([prefix]))
            states = self.decoder_forward("title_dec", x, self._enc_tensor(enc), None)
        last = states.data[0, -1]
        return last @ self.params["title_dec.out_w"].data + self.params["title_dec.out_b"].data

    def title_logits_all(self, enc: ClaimEncoding, ids: Sequence[int]) -> np.ndarray:
        """Logits at every position of a full decoder input (causality checks)."""
        with nn.no_grad():
            x = self.embed_title_inputs(np.array([list(ids)]))
            states = self.decoder_forward("title_dec", x, self._enc_tensor(enc), None)
            logits = self.title_output_logits(states)
        return logits.data[0]

    def encode_sentence(self, token_ids: Sequence[int],
                        source: Optional[tuple[str, int]] = None) -> SentenceEmbedding:
        """Mean-pooled sentence-encoder states; empty input falls back to EOS."""
        ids = list(token_ids)[: self.config.max_positions]
        if not ids:
            ids = [EOS]
        with nn.no_grad():
            out = self.encoder_forward(
                "sent_enc", np.array([ids]), np.ones((1, len(ids)), dtype=bool))
        return SentenceEmbedding(vector=out.data[0].mean(axis=0), source=source)

    def _evidence_states(self, enc: ClaimEncoding,
                         previous: Sequence[SentenceEmbedding]) -> np.ndarray:
        vectors = [self.params["evid_dec.start"].data]
        vectors += [p.vector for p in previous]
        x = nn.constant(np.stack(vectors)[None].astype(self.dtype))
        with nn.no_grad():
            x = nn.add(x, self._positions("evid_dec", x.data.shape[1]))
            states = self.decoder_forward("evid_dec", x, self._enc_tensor(enc), None)
        return states.data[0]

    def decode_step_evidence(self, enc: ClaimEncoding,
                             previous: Sequence[SentenceEmbedding],
                             candidates: Sequence[SentenceEmbedding]) -> np.ndarray:
        """Dot-product scores over candidates plus the EOE embedding (last entry)."""
        if not candidates:
            raise ValueError("evidence decoder requires at least one candidate")
        h = self._evidence_states(enc, previous)[-1]
        table = np.stack([c.vector for c in candidates] + [self.params["evid_dec.eoe"].data])
        return table.astype(h.dtype) @ h

    # -- single-example losses (inference-mode floats) ------------------------

    def loss_title(self, enc: ClaimEncoding, target_ids: Sequence[int]) -> float:
        """Label-smoothed mean token cross-entropy of one linearized title sequence."""
        target_ids = list(target_ids)
        if len(target_ids) < 2 or target_ids[0] != BOS:
            raise ValueError("title target must be BOS ... EOS")
        with nn.no_grad():
            x = self.embed_title_inputs(np.array([target_ids[:-1]]))
            states = self.decoder_forward("title_dec", x, self._enc_tensor(enc), None)
            logits = self.title_output_logits(states)
            flat = nn.reshape(logits, (len(target_ids) - 1, self.config.vocab_size))
            loss = nn.cross_entropy(flat, np.array(target_ids[1:]),
                                    self.config.label_smoothing)
        return float(loss.data)

    def loss_evidence(self, enc: ClaimEncoding, gold_sources: Sequence[tuple[str, int]],
                      candidates: Sequence[SentenceEmbedding]) -> float:
        """Mean step cross-entropy of the gold identifier sequence, EOE-terminated."""
        index = {c.source: i for i, c in enumerate(candidates)}
        gold_slots = []
        for source in gold_sources:
            if source not in index:
                raise DataError(f"gold evidence {source!r} missing from candidates")
            gold_slots.append(index[source])
        total = 0.0
        n_cands = len(candidates)
        for step in range(len(gold_slots) + 1):
            previous = [candidates[i] for i in gold_slots[:step]]
            scores = self.decode_step_evidence(enc, previous, candidates)
            target = gold_slots[step] if step < len(gold_slots) else n_cands
            total += -nn.log_softmax64(scores)[target]
        return float(total / (len(gold_slots) + 1))
