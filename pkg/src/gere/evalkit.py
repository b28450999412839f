"""Retrieval and verification metrics over prediction and gold files.

Document/sentence precision and recall are macro-averaged over verifiable
claims (NOT ENOUGH INFO claims carry no gold evidence and are excluded); F1
is computed from the averaged P and R. FEVER credit requires a correct label
and, for verifiable claims, one full gold evidence group inside the first
max_evidence predicted sentence pairs. Label accuracy ignores evidence.

Everything here is a pure function over loaded records; claims are scored
independently and reduced in claim_id order, so results never depend on
input ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .corpus import Claim, Label
from .errors import DataError

Pair = tuple[str, int]


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "PRF":
        if precision + recall == 0.0:
            return cls(precision, recall, 0.0)
        return cls(precision, recall, 2 * precision * recall / (precision + recall))

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class VerificationScores:
    label_accuracy: float
    fever: float
    n_claims: int


def _prediction_map(predictions: Union[Sequence[dict], Mapping[int, dict]]) -> dict[int, dict]:
    if isinstance(predictions, Mapping):
        return dict(predictions)
    out: dict[int, dict] = {}
    for rec in predictions:
        cid = rec["claim_id"]
        if cid in out:
            raise DataError(f"duplicate prediction for claim_id {cid}")
        out[cid] = rec
    return out


def _predicted_docs(rec: Optional[dict]) -> list[str]:
    if rec is None:
        return []
    return list(rec.get("predicted_titles", []))


def _predicted_pairs(rec: Optional[dict]) -> list[Pair]:
    if rec is None:
        return []
    return [(doc_id, int(index)) for doc_id, index in rec.get("predicted_evidence", [])]


def _gold_docs(claim: Claim) -> set[str]:
    return {doc_id for group in claim.evidence_groups for doc_id, _ in group}


def _gold_pairs(claim: Claim) -> set[Pair]:
    return {pair for group in claim.evidence_groups for pair in group}


def _verifiable_sorted(golds: Iterable[Claim]) -> list[Claim]:
    return sorted((c for c in golds if c.label is not Label.NOT_ENOUGH_INFO),
                  key=lambda c: c.claim_id)


def _macro_prf(per_claim: list[tuple[float, float]]) -> PRF:
    if not per_claim:
        return PRF(0.0, 0.0, 0.0)
    precision = sum(p for p, _ in per_claim) / len(per_claim)
    recall = sum(r for _, r in per_claim) / len(per_claim)
    return PRF.from_pr(precision, recall)


def doc_prf(predictions, golds: Iterable[Claim]) -> PRF:
    """Macro P/R over verifiable claims against the union of gold doc_ids;
    a claim missing from predictions counts as an empty prediction."""
    pred_map = _prediction_map(predictions)
    per_claim = []
    for claim in _verifiable_sorted(golds):
        predicted = set(_predicted_docs(pred_map.get(claim.claim_id)))
        gold = _gold_docs(claim)
        hits = len(predicted & gold)
        precision = hits / len(predicted) if predicted else 0.0
        recall = hits / len(gold) if gold else 0.0
        per_claim.append((precision, recall))
    return _macro_prf(per_claim)


def sent_prf(predictions, golds: Iterable[Claim], max_evidence: int = 5) -> PRF:
    """As doc_prf over (doc_id, sentence_index) pairs; only the first
    max_evidence predicted pairs are scored."""
    pred_map = _prediction_map(predictions)
    per_claim = []
    for claim in _verifiable_sorted(golds):
        # Truncate to the first max_evidence pairs, then score set-wise.
        predicted = set(_predicted_pairs(pred_map.get(claim.claim_id))[:max_evidence])
        gold = _gold_pairs(claim)
        hits = len(predicted & gold)
        precision = hits / len(predicted) if predicted else 0.0
        recall = hits / len(gold) if gold else 0.0
        per_claim.append((precision, recall))
    return _macro_prf(per_claim)


def fever_scores(predictions, golds: Iterable[Claim], max_evidence: int = 5
                 ) -> VerificationScores:
    """Label accuracy and FEVER score over all claims.

    FEVER credit needs a correct label and either a gold NEI label or some
    gold evidence group fully contained in the first max_evidence predicted
    pairs. Predictions present in the file must carry `predicted_label`.
    """
    pred_map = _prediction_map(predictions)
    golds = sorted(golds, key=lambda c: c.claim_id)
    if not golds:
        raise DataError("fever_scores needs at least one gold claim")
    la_hits = 0
    fever_hits = 0
    for claim in golds:
        rec = pred_map.get(claim.claim_id)
        if rec is None:
            continue  # empty-prediction rule: no label, no credit
        raw = rec.get("predicted_label")
        if raw is None:
            raise DataError(f"prediction for claim {claim.claim_id} lacks predicted_label")
        try:
            predicted = Label(raw)
        except ValueError:
            raise DataError(f"claim {claim.claim_id}: unknown predicted_label {raw!r}") from None
        if predicted is not claim.label:
            continue
        la_hits += 1
        if claim.label is Label.NOT_ENOUGH_INFO:
            fever_hits += 1
            continue
        predicted_pairs = set(_predicted_pairs(rec)[:max_evidence])
        if any(all(pair in predicted_pairs for pair in group)
               for group in claim.evidence_groups):
            fever_hits += 1
    n = len(golds)
    return VerificationScores(label_accuracy=la_hits / n, fever=fever_hits / n, n_claims=n)


def with_oracle_labels(predictions, golds: Iterable[Claim]) -> list[dict]:
    """Copy gold labels onto prediction records (pipeline testing only; this
    package retrieves evidence, it does not verify claims)."""
    by_id = {c.claim_id: c for c in golds}
    out = []
    for rec in _prediction_map(predictions).values():
        rec = dict(rec)
        claim = by_id.get(rec["claim_id"])
        if claim is not None:
            rec["predicted_label"] = claim.label.value
        out.append(rec)
    return out


def evaluate(predictions, golds: Sequence[Claim], max_evidence: int = 5,
             oracle_labels: bool = False) -> dict:
    """Full metrics report; LA/FEVER are null when predictions carry no labels."""
    predictions = _prediction_map(predictions)
    if oracle_labels:
        predictions = _prediction_map(with_oracle_labels(predictions, golds))
    doc = doc_prf(predictions, golds)
    sent = sent_prf(predictions, golds, max_evidence)
    has_labels = predictions and all(
        "predicted_label" in rec for rec in predictions.values())
    la = fever = None
    if has_labels and golds:
        scores = fever_scores(predictions, golds, max_evidence)
        la, fever = scores.label_accuracy, scores.fever
    n_verifiable = sum(1 for c in golds if c.label is not Label.NOT_ENOUGH_INFO)
    return {
        "doc": doc.as_dict(),
        "sent": sent.as_dict(),
        "la": la,
        "fever": fever,
        "n": {"claims": len(golds), "verifiable": n_verifiable,
              "predicted": len(predictions)},
        "settings": {"max_evidence": max_evidence, "averaging": "macro",
                     "oracle_labels": oracle_labels},
    }


def write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
