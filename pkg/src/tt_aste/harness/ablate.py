"""Train the ablation variants on identical data and seed and compare them."""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .config import RunConfig
from .train import Splits, evaluate_model, load_splits, train

# name -> RunConfig overrides; "full" is the reference
VARIANTS: dict[str, dict] = {
    "full": {},
    "no_loop_shift": {"loop_shift": False},
    "no_stripe_attention": {"attention": "full"},
    "normal_layers": {"attention": "full", "loop_shift": False},
    "no_relation_encoder": {"relation_encoder": False},
}

ABLATION_COLUMNS = (
    "variant", "num_params", "best_epoch", "test_precision", "test_recall", "test_f1",
    "test_exact", "delta_f1", "train_score_macs",
)


def ablate(cfg: RunConfig, variants: Sequence[str] | None = None, splits: Splits | None = None) -> list[dict]:
    """Rows per variant with the F1 delta against the full model.

    ``train_score_macs`` is the attention score MAC count of the last
    training epoch. Test metrics fall back to the dev split when the corpus
    has no test records.
    """
    names = list(variants or VARIANTS)
    if "full" not in names:
        names.insert(0, "full")
    splits = splits or load_splits(cfg)
    held_out = splits.test or splits.dev
    rows = []
    for name in names:
        vcfg = cfg.replace(**VARIANTS[name])
        res = train(vcfg, splits)
        rep = evaluate_model(res.model, res.vocab, held_out)
        rows.append({
            "variant": name,
            "num_params": res.model.store.num_values(),
            "best_epoch": res.best_epoch,
            "test_precision": rep.triplet_precision,
            "test_recall": rep.triplet_recall,
            "test_f1": rep.triplet_f1,
            "test_exact": rep.sentence_exact_match_rate,
            "train_score_macs": res.log[-1]["score_macs"] if res.log else 0,
        })
    base = next(r["test_f1"] for r in rows if r["variant"] == "full")
    for row in rows:
        row["delta_f1"] = row["test_f1"] - base
    return rows


def ablation_csv(rows: Sequence[dict], fh=None) -> str:
    out = fh or io.StringIO()
    writer = csv.DictWriter(out, fieldnames=ABLATION_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue() if fh is None else ""
