import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tt_aste.data import generate_synthetic, write_jsonl
from tt_aste.errors import ConfigError
from tt_aste.harness import (
    DEFAULT_SWEEP,
    VARIANTS,
    Checkpoint,
    CheckpointError,
    RunConfig,
    ablate,
    ablation_csv,
    apply_env,
    bench,
    build_model,
    evaluate,
    evaluate_predictions,
    load_splits,
    long_distance_overrides,
    model_from_checkpoint,
    parse_sweep,
    prf,
    rows_to_csv,
    train,
)
from tt_aste.harness.bench import CSV_COLUMNS
from tt_aste.harness.cli import build_parser, main, resolve_config
from tt_aste.model import make_batch
from tt_aste.stripe_attention import FlopLedger
from tt_aste.table_encoder import Vocab
from tt_aste.tagging import Pair, make_triplet

TINY = dict(d=8, d_prime=8, heads=2, synth_sentences=40, synth_vocab=40, synth_max_len=10, epochs=1, batch_size=8)


def tiny(**kw):
    return RunConfig(**{**TINY, **kw})


T1 = make_triplet((0, 0), (2, 2), "POS")
T2 = make_triplet((1, 1), (3, 4), "NEG")
T3 = make_triplet((0, 1), (5, 5), "NEU")


# --- metrics -----------------------------------------------------------------------


def test_perfect_predictions_score_one():
    gold = [[T1, T2], [T3], []]
    rep = evaluate_predictions(gold, gold)
    assert rep.triplet_precision == rep.triplet_recall == rep.triplet_f1 == 1.0
    assert rep.sentence_exact_match_rate == 1.0


def test_empty_predictions_score_zero():
    rep = evaluate_predictions([[T1], [T2]], [[], []])
    assert (rep.triplet_precision, rep.triplet_recall, rep.triplet_f1) == (0.0, 0.0, 0.0)
    assert rep.sentence_exact_match_rate == 0.0


def test_half_right():
    rep = evaluate_predictions([[T1, T2]], [[T1, T3]])
    assert (rep.triplet_precision, rep.triplet_recall, rep.triplet_f1) == (0.5, 0.5, 0.5)
    assert rep.sentence_exact_match_rate == 0.0


def test_wrong_polarity_is_a_miss_unless_pairs_only():
    flipped = make_triplet((0, 0), (2, 2), "NEG")
    assert evaluate_predictions([[T1]], [[flipped]]).triplet_f1 == 0.0
    assert evaluate_predictions([[T1]], [[flipped]], pairs_only=True).triplet_f1 == 1.0
    assert evaluate_predictions([[T1]], [[Pair(T1.aspect, T1.opinion)]], pairs_only=True).triplet_f1 == 1.0


def test_breakdowns():
    far = make_triplet((0, 0), (12, 12), "POS")
    rep = evaluate_predictions([[T1, far]], [[T1]])
    assert rep.bucket_f1["1-3"] == 1.0 and rep.bucket_f1["10+"] == 0.0
    assert rep.span_type_f1["single"] == prf(1, 1, 2)[2]
    assert rep.span_type_f1["multi_aspect"] == 0.0


def test_sentence_count_mismatch():
    with pytest.raises(ValueError):
        evaluate_predictions([[T1]], [])


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_f1_identities(tp, extra_pred, extra_gold):
    p, r, f = prf(tp, tp + extra_pred, tp + extra_gold)
    assert all(0.0 <= v <= 1.0 for v in (p, r, f))
    if p > 0 and r > 0:
        assert f == pytest.approx(2 * p * r / (p + r), abs=0, rel=1e-15)
        assert min(p, r) - 1e-15 <= f <= max(p, r) + 1e-15


# --- config ------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(w=2)
    with pytest.raises(ConfigError):
        RunConfig(num_layers=3)
    with pytest.raises(ConfigError):
        RunConfig(lr=0)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"nonsense": 1})


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"epochs": 3, "lr": 0.01}))
    cfg = RunConfig.from_file(p, {"lr": 0.5})
    assert cfg.epochs == 3 and cfg.lr == 0.5
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_tt_seed_env(monkeypatch):
    monkeypatch.setenv("TT_SEED", "17")
    assert apply_env(RunConfig(seed=3)).seed == 17
    monkeypatch.setenv("TT_SEED", "x")
    with pytest.raises(ConfigError):
        apply_env(RunConfig())
    monkeypatch.delenv("TT_SEED")
    assert apply_env(RunConfig(seed=3)).seed == 3


def test_long_distance_preset():
    cfg = RunConfig(**long_distance_overrides(b=2, num_sentences=60))
    for rec in load_splits(cfg).train:
        assert len(rec.tokens) >= 8
        for t in rec.triplets:
            gap = min(abs(i - j) for i in range(t.aspect.start, t.aspect.end + 1)
                      for j in range(t.opinion.start, t.opinion.end + 1))
            assert 7 <= gap <= 9


# --- checkpoints and training ---------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    cfg = tiny()
    model = build_model(cfg, Vocab(["a", "b"]))
    ck = Checkpoint(cfg.to_dict(), ["a", "b"], model.store.state_dict(), {"best_epoch": 0})
    path = tmp_path / "m.ckpt"
    ck.save(path)
    assert path.read_bytes()[:8] == b"TTCKPT1\n"
    back = Checkpoint.load(path)
    assert back.to_bytes() == ck.to_bytes()
    for k in ck.params:
        np.testing.assert_array_equal(back.params[k], ck.params[k])


@pytest.mark.parametrize("raw", [b"nope", b"TTCKPT1\n" + (5).to_bytes(8, "little") + b"{bad}"])
def test_corrupt_checkpoint(raw):
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(raw)


def test_truncated_checkpoint():
    cfg = tiny()
    raw = Checkpoint(cfg.to_dict(), [], build_model(cfg, Vocab([])).store.state_dict()).to_bytes()
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(raw[:-8])


def test_zero_epochs_returns_initialization():
    cfg = tiny(epochs=0)
    res = train(cfg)
    init = build_model(cfg, res.vocab).store.state_dict()
    assert res.log == [] and res.best_epoch == 0
    for k, v in init.items():
        np.testing.assert_array_equal(res.checkpoint.params[k], v)


def test_training_is_deterministic():
    a, b = train(tiny(epochs=2)), train(tiny(epochs=2))
    assert a.checkpoint.to_bytes() == b.checkpoint.to_bytes()
    strip = lambda log: [{k: v for k, v in r.items() if k != "wall_s"} for r in log]  # noqa: E731
    assert strip(a.log) == strip(b.log)
    assert set(a.log[0]) >= {"epoch", "loss", "score_macs", "value_macs", "dev_f1", "wall_s"}


def test_evaluation_is_pure():
    res = train(tiny())
    test = res.splits.test
    assert evaluate(res.checkpoint, test) == evaluate(res.checkpoint, test)


@pytest.mark.slow
def test_loss_falls_over_five_epochs():
    res = train(RunConfig(synth_sentences=150, epochs=5))
    assert res.log[4]["loss"] < res.log[0]["loss"]


def test_checkpoint_config_mismatch():
    res = train(tiny(epochs=0))
    with pytest.raises(ConfigError):
        model_from_checkpoint(res.checkpoint, tiny(d_prime=12))
    with pytest.raises(ConfigError):
        model_from_checkpoint(res.checkpoint, tiny(relation_encoder=False))


def test_empty_training_split_rejected(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text("")
    with pytest.raises(ConfigError):
        train(tiny(train_path=str(p)))


# --- bench ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def bench_rows():
    return bench(DEFAULT_SWEEP, heads=4, d_prime=8, reps=1)


def test_bench_ratio_formula(bench_rows):
    assert len(DEFAULT_SWEEP) == 12
    for row in bench_rows:
        if row["mode"] == "stripe":
            assert row["ratio"] == Fraction(row["w"] ** 2 * row["b"] ** 2, row["n"] ** 2)
        else:
            assert row["ratio"] == 1
    by = {(r["mode"], r["n"], r["b"], r["w"]): r for r in bench_rows}
    assert by[("stripe", 16, 4, 3)]["ratio"] == Fraction(9, 16)


def test_bench_scaling(bench_rows):
    by = {(r["mode"], r["n"], r["b"], r["w"]): r["score_macs"] for r in bench_rows}
    assert by[("stripe", 16, 4, 3)] == 4 * by[("stripe", 16, 2, 3)]
    assert by[("stripe", 8, 2, 1)] == 4 * by[("stripe", 8, 1, 1)]
    assert by[("full", 16, 2, 3)] == 16 * by[("full", 8, 2, 3)]
    assert by[("full", 32, 4, 3)] == 16 * by[("full", 16, 4, 3)]


def test_bench_macs_reproducible(bench_rows):
    again = bench(DEFAULT_SWEEP[:4], heads=4, d_prime=8, reps=2)
    strip = lambda rs: [(r["mode"], r["n"], r["score_macs"], r["value_macs"]) for r in rs]  # noqa: E731
    assert strip(again) == strip(bench_rows[:8])


def test_bench_csv(bench_rows):
    text = rows_to_csv(bench_rows[:2])
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3


def test_sweep_parsing():
    assert parse_sweep("16:4:3, 8:2:1") == [(16, 4, 3), (8, 2, 1)]
    for bad in ("", "16:4", "a:b:c"):
        with pytest.raises(ConfigError):
            parse_sweep(bad)
    with pytest.raises(ConfigError):
        bench([(8, 4, 3)])


# --- ablation --------------------------------------------------------------------------


def test_variant_parameter_counts():
    vocab = Vocab(["a"])
    counts = {name: build_model(tiny(**ov), vocab).store.num_values() for name, ov in VARIANTS.items()}
    assert counts["no_relation_encoder"] < counts["full"]
    for name in ("no_loop_shift", "no_stripe_attention", "normal_layers"):
        assert counts[name] == counts["full"]


def test_full_attention_variant_mac_ratio():
    recs = generate_synthetic(tiny(synth_min_len=16, synth_max_len=16).synth_config()).records[:2]
    vocab = Vocab.from_records(recs)
    macs = {}
    for name in ("full", "no_stripe_attention"):
        cfg = tiny(b=2, w=3, **VARIANTS[name])
        led = FlopLedger()
        build_model(cfg, vocab).table(make_batch(recs, vocab, 2).ids, led)
        macs[name] = led.score_macs
    n, b, w = 16, 2, 3
    assert Fraction(macs["no_stripe_attention"], macs["full"]) == Fraction(n * n, w * w * b * b)


def test_no_loop_shift_differs_only_in_shifts():
    vocab = Vocab(["a", "b", "c"])
    full = build_model(tiny(), vocab)
    off = build_model(tiny(loop_shift=False), vocab)
    ids = np.array([[2, 3, 4, 2, 3, 4, 2, 3]])
    # same seed, same parameters
    for pa, pb in zip(full.store, off.store):
        np.testing.assert_array_equal(pa.data, pb.data)
    assert not np.allclose(full.table(ids).data, off.table(ids).data)
    # with the stack frozen to zero the layer pairs cancel their shifts
    for m in (full, off):
        for lp in m.tt.layers:
            for p in (lp.attn.q_w, lp.attn.k_w, lp.attn.v_w, lp.attn.o_w, lp.ffn1_w, lp.ffn2_w):
                p.value.data[:] = 0.0
    np.testing.assert_array_equal(full.table(ids).data, off.table(ids).data)


def test_ablate_rows():
    rows = ablate(tiny(), ["no_loop_shift", "no_relation_encoder"])
    assert [r["variant"] for r in rows] == ["full", "no_loop_shift", "no_relation_encoder"]
    assert rows[0]["delta_f1"] == 0.0
    text = ablation_csv(rows)
    assert text.splitlines()[0].startswith("variant,num_params")


# --- CLI ----------------------------------------------------------------------------


def test_cli_flags_are_kebab_case():
    args = build_parser().parse_args(["train", "--d-prime", "12", "--no-loop-shift", "--synth-buckets", "[[1,3,1.0]]"])
    cfg = resolve_config(args)
    assert cfg.d_prime == 12 and cfg.loop_shift is False and cfg.synth_buckets == [[1, 3, 1.0]]


def test_cli_flags_override_file(tmp_path, monkeypatch):
    monkeypatch.delenv("TT_SEED", raising=False)
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"epochs": 4, "seed": 5}))
    cfg = resolve_config(build_parser().parse_args(["train", "--config", str(p), "--epochs", "2"]))
    assert cfg.epochs == 2 and cfg.seed == 5
    monkeypatch.setenv("TT_SEED", "9")
    assert resolve_config(build_parser().parse_args(["train", "--config", str(p)])).seed == 9


def test_cli_end_to_end(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    assert main(["gen-data", "--out", str(corpus), "--synth-sentences", "30", "--synth-vocab", "40",
                 "--synth-max-len", "10"]) == 0
    ck = tmp_path / "m.ckpt"
    flags = ["--d", "8", "--d-prime", "8", "--heads", "2", "--epochs", "1"]
    assert main(["train", "--corpus-path", str(corpus), "--output", str(ck), *flags]) == 0
    assert ck.exists() and (tmp_path / "m.log.jsonl").exists()
    out = tmp_path / "r.json"
    assert main(["eval", "--checkpoint", str(ck), "--corpus", str(corpus), "--output", str(out)]) == 0
    assert 0.0 <= json.loads(out.read_text())["triplet_f1"] <= 1.0
    csv_path = tmp_path / "b.csv"
    assert main(["bench", "--sweep", "8:2:1", "--reps", "1", "--d-prime", "8", "--csv", str(csv_path)]) == 0
    assert csv_path.read_text().startswith("mode,n,b,w")


def test_cli_gen_data_hash_and_preset(tmp_path):
    out = tmp_path / "c.txt"
    assert main(["gen-data", "--out", str(out), "--format", "hash", "--preset", "long-distance",
                 "--synth-sentences", "10"]) == 0
    assert len(out.read_text().splitlines()) == 10


def test_cli_config_errors_exit_2(tmp_path, capsys):
    assert main(["train", "--w", "2"]) == 2
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert main(["train", "--config", str(bad)]) == 2
    assert main(["bench", "--sweep", "8:4:3"]) == 2
    assert main(["ablate", "--variants", "nope"]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_data_errors_exit_3(tmp_path, capsys):
    assert main(["train", "--corpus-path", str(tmp_path / "missing.jsonl")]) == 3
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"tokens": ["a"], "triplets": [{"aspect": [0, 0], "opinion": [0, 4], "polarity": "POS"}]}\n')
    assert main(["train", "--corpus-path", str(bad)]) == 3
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"junk")
    assert main(["eval", "--checkpoint", str(junk)]) == 3
    assert "data error" in capsys.readouterr().err


def test_write_then_train_from_explicit_files(tmp_path):
    corpus = generate_synthetic(tiny().synth_config())
    write_jsonl(corpus.records[:30], tmp_path / "tr.jsonl")
    write_jsonl(corpus.records[30:], tmp_path / "dv.jsonl")
    res = train(tiny(train_path=str(tmp_path / "tr.jsonl"), dev_path=str(tmp_path / "dv.jsonl")))
    assert len(res.splits.train) == 30 and len(res.splits.dev) == 10 and res.splits.test == []
