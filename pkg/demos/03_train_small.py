"""Train a small model on a synthetic corpus and look at what it extracts.

Takes under two minutes on one core. Small batches and a higher learning
rate give enough optimizer steps on a small corpus. The full-size run is
``tt-aste train`` with the default configuration.
"""

import time

from tt_aste.harness import RunConfig, evaluate_model, train
from tt_aste.harness.train import predict_corpus

cfg = RunConfig(synth_sentences=600, epochs=9, batch_size=4, lr=2e-3, seed=0)
t0 = time.time()
res = train(cfg)
print(f"trained in {time.time() - t0:.0f}s, best dev epoch {res.best_epoch}")
for row in res.log:
    print(f"epoch {row['epoch']:2d}  loss {row['loss']:.4f}  dev F1 {row['dev_f1']:.3f}")

rep = evaluate_model(res.model, res.vocab, res.splits.test)
print(f"test P {rep.triplet_precision:.3f}  R {rep.triplet_recall:.3f}  F1 {rep.triplet_f1:.3f}")
print("sentence exact match", round(rep.sentence_exact_match_rate, 3))
print("by distance", {k: round(v, 3) for k, v in rep.bucket_f1.items()})

# a few sentences side by side with the predictions
test = res.splits.test[:3]
for rec, pred in zip(test, predict_corpus(res.model, res.vocab, test)):
    print()
    print(" ".join(rec.tokens))
    span = lambda s: " ".join(rec.tokens[s.start : s.end + 1])  # noqa: E731
    for t in rec.triplets:
        print("  gold", span(t.aspect), "|", span(t.opinion), "|", t.polarity.value)
    for t in pred:
        print("  pred", span(t.aspect), "|", span(t.opinion), "|", t.polarity.value)
