"""The evaluation kit: document/sentence PRF, label accuracy and FEVER score.

Shows the scoring rules on hand-made predictions: macro averaging over
verifiable claims, the first-5-sentences truncation, and the full-group
coverage requirement behind the FEVER score.
"""

import json

from gere import Claim, Label, doc_prf, evaluate, fever_scores, sent_prf


def gold(cid, label, groups):
    return Claim(cid, f"claim {cid}", Label(label),
                 tuple(tuple(g) for g in groups))


golds = [
    gold(1, "SUPPORTS", [[("Alpha", 0), ("Alpha", 1)]]),
    gold(2, "REFUTES", [[("Beta", 2)], [("Gamma", 0), ("Gamma", 1)]]),
    gold(3, "NOT ENOUGH INFO", []),
]

predictions = [
    {  # full first group covered -> FEVER credit
        "claim_id": 1, "predicted_titles": ["Alpha"],
        "predicted_evidence": [["Alpha", 0], ["Alpha", 1]],
        "predicted_label": "SUPPORTS",
    },
    {  # covers half of each gold group -> label accuracy only
        "claim_id": 2, "predicted_titles": ["Beta", "Gamma", "Delta"],
        "predicted_evidence": [["Gamma", 0], ["Beta", 9]],
        "predicted_label": "REFUTES",
    },
    {  # NEI needs no evidence
        "claim_id": 3, "predicted_titles": [], "predicted_evidence": [],
        "predicted_label": "NOT ENOUGH INFO",
    },
]

doc = doc_prf(predictions, golds)
sent = sent_prf(predictions, golds, max_evidence=5)
ver = fever_scores(predictions, golds, max_evidence=5)

print("document retrieval (macro over the 2 verifiable claims):")
print(f"  P={doc.precision:.4f} R={doc.recall:.4f} F1={doc.f1:.4f}")
print("sentence retrieval (first 5 predicted pairs scored):")
print(f"  P={sent.precision:.4f} R={sent.recall:.4f} F1={sent.f1:.4f}")
print(f"label accuracy {ver.label_accuracy:.4f}  FEVER {ver.fever:.4f} "
      f"(claim 2 lost FEVER credit: no gold group fully covered)")

print("\nfull report (the `gere eval` output):")
print(json.dumps(evaluate(predictions, golds, max_evidence=5), indent=2, sort_keys=True))
