"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the verdict lines
together with the measured numbers.
"""

import json
import re
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tone_silence_tone
from dialogic.audio import AudioBuffer, write_wav
from dialogic.cli import main
from dialogic.corpus import InstructionType
from dialogic.embeddings import train_skipgram
from dialogic.evaluation import auc_pairwise, auc_trapezoid, roc_curve
from dialogic.vad import VadConfig, detect_segments
from test_embeddings import cooccurrence_corpus, cosine

HIGH_VARIATION = ("note_taking", "commending", "repeating")
BASELINES = ("logreg", "svm", "gbdt")


@pytest.fixture
def verdict(capsys):
    def report(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        assert ok, detail

    return report


def test_c1_gradient_fidelity(capsys, verdict):
    start = time.perf_counter()
    code = main(["gradcheck"])
    elapsed = time.perf_counter() - start
    out = capsys.readouterr().out
    m = re.search(r"instances=(\d+) max_relative_error=(\S+)", out)
    n, worst = int(m.group(1)), float(m.group(2))
    ok = code == 0 and n >= 20 and worst < 1e-4 and elapsed < 10
    verdict(1, ok, f"{n} instances, max rel error {worst:.2e}, {elapsed:.1f}s")


def test_c2_auc_oracle_equivalence(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, with_ties = 0.0, 0
    for k in range(1000):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[rng.choice(n, 2, replace=False)] = [0, 1]
        scores = rng.normal(size=n)
        if k % 2 == 0:
            # coarse rounding ties many scores within and across classes
            scores = np.round(scores * rng.integers(1, 4)) / 2
        # and copy a few scores onto other positions so every set has ties
        src = rng.integers(0, n, size=1 + n // 10)
        dst = rng.integers(0, n, size=src.size)
        dst[0] = (src[0] + 1) % n
        scores[dst] = scores[src]
        with_ties += len(np.unique(scores)) < n
        diff = abs(auc_trapezoid(roc_curve(scores, labels)) - auc_pairwise(scores, labels))
        worst = max(worst, diff)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and with_ties == 1000 and elapsed < 30
    verdict(2, ok, f"1000 sets ({with_ties} with ties), max |diff| {worst:.1e}, {elapsed:.1f}s")


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance") / "run"
    start = time.perf_counter()
    for command in ("gen-data", "train", "evaluate"):
        assert main([command, "--out", str(out)]) == 0
    elapsed = time.perf_counter() - start
    table = {}
    with open(out / "reports" / "auc.csv") as fh:
        next(fh)
        for line in fh:
            instruction, model, value, _, _ = line.strip().split(",")
            table[(instruction, model)] = float(value)
    return out, table, elapsed


def test_c3_synthetic_reenactment(full_run, verdict):
    out, table, elapsed = full_run
    sizes = {}
    for name in ("greeting", "commending"):
        sizes[name] = len((out / "data" / f"{name}.jsonl").read_text().splitlines())
    lines = []
    low_ok = all(table[(t, "lstm")] >= 0.95 for t in ("greeting", "summarization"))
    parity_ok, margins = True, {}
    for t in (i.value for i in InstructionType):
        best = max(table[(t, b)] for b in BASELINES)
        parity_ok &= table[(t, "lstm")] >= best - 0.01
        margins[t] = table[(t, "lstm")] - best
        lines.append(f"{t}: lstm {table[(t, 'lstm')]:.3f} best baseline {best:.3f}")
    wins = sum(margins[t] >= 0.02 for t in HIGH_VARIATION)
    ok = (low_ok and parity_ok and wins >= 2 and elapsed < 300
          and set(sizes.values()) == {2940})
    detail = (f"(a) {low_ok} (b) parity {parity_ok}, margin >= 0.02 on {wins}/3 high-variation "
              f"types, {elapsed:.0f}s; " + "; ".join(lines))
    verdict(3, ok, detail)


def test_c3_greeting_model_behaviour(full_run, capsys, verdict):
    out, _, _ = full_run
    assert main(["predict", "--out", str(out), "--text", "can you hear me",
                 "--text", "the weather is nice today"]) == 0
    greet, other = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    ok = (greet["probs"]["greeting"] > other["probs"]["greeting"]
          and "greeting" in greet["tags"])
    verdict("3/greeting", ok, f"p(greeting | can you hear me) = {greet['probs']['greeting']:.3f}, "
                              f"distractor {other['probs']['greeting']:.3f}, tags {greet['tags']}")


def test_c4_vad_boundaries(verdict):
    start = time.perf_counter()
    buffer = tone_silence_tone()
    segments = detect_segments(buffer, VadConfig(pad_ms=0))
    truth = [(0, 500), (1500, 2000)]
    errors = [abs(a - b) for s, (ts, te) in zip(segments, truth)
              for a, b in ((s.start_ms, ts), (s.end_ms, te))]
    silent = detect_segments(AudioBuffer(np.zeros(32000), 16000))
    elapsed = time.perf_counter() - start
    ok = len(segments) == 2 and max(errors) <= 10 and silent == [] and elapsed < 1
    verdict(4, ok, f"boundaries {[(s.start_ms, s.end_ms) for s in segments]}, "
                   f"max error {max(errors)} ms, silence -> {len(silent)} segments, {elapsed:.2f}s")


def test_c5_determinism(full_run, tmp_path, verdict):
    out, _, _ = full_run
    wav = tmp_path / "lesson.wav"
    buffer = tone_silence_tone()
    wav.write_bytes(write_wav(buffer.samples, buffer.sample_rate))
    transcripts = tmp_path / "t.jsonl"
    transcripts.write_text(
        '{"source_id": "lesson", "segment_index": 0, "text": "can you hear me"}\n'
        '{"source_id": "lesson", "segment_index": 1, "text": "please write this down"}\n'
    )
    timelines = []
    for k in range(2):
        target = tmp_path / f"timeline{k}.jsonl"
        assert main(["e2e", "--out", str(out), "--audio", str(wav), "--mode", "offline",
                     "--transcripts", str(transcripts), "--output", str(target)]) == 0
        timelines.append(target.read_bytes())
    e2e_same = timelines[0] == timelines[1] and len(timelines[0].splitlines()) == 2

    again = tmp_path / "again"
    assert main(["gen-data", "--out", str(again)]) == 0
    assert main(["train", "--out", str(again)]) == 0
    files = sorted(out.glob("models/*/*.json"))
    differing = [str(p.relative_to(out)) for p in files
                 if (again / p.relative_to(out)).read_bytes() != p.read_bytes()]
    ok = e2e_same and len(files) == 30 and not differing
    verdict(5, ok, f"e2e identical {e2e_same}; {len(files) - len(differing)}/{len(files)} "
                   "model files identical after retraining")


def test_c6_roc_invariants(verdict):
    seen = []

    @settings(max_examples=500, deadline=None, derandomize=True, database=None)
    @given(st.integers(2, 120).flatmap(lambda n: st.tuples(
        st.lists(st.integers(-6, 6).map(float) | st.floats(-50, 50), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )).filter(lambda t: 0 < sum(t[1]) < len(t[1])))
    def check(data):
        scores, labels = data
        curve = roc_curve(scores, labels)
        assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
        assert np.all(np.diff(curve.tpr) >= 0) and np.all(np.diff(curve.fpr) >= 0)
        s = np.asarray(scores)
        t = np.arctan(s) * 10 + s  # strictly increasing
        if len(np.unique(t)) == len(np.unique(s)):
            assert roc_curve(t, labels).points == curve.points
            assert auc_trapezoid(roc_curve(t, labels)) == auc_trapezoid(curve)
        seen.append(len(scores))

    failure = None
    try:
        check()
    except AssertionError as exc:
        failure = exc
    ok = failure is None and len(seen) >= 500
    verdict(6, ok, f"{len(seen)} generated inputs checked"
                   + ("" if failure is None else f"; counterexample: {failure}"))


def test_c7_skipgram_cooccurrence(verdict):
    start = time.perf_counter()
    results = []
    for seed in range(3):
        table = train_skipgram(cooccurrence_corpus(seed), dim=16, epochs=20, seed=seed)
        results.append((cosine(table, "x", "y"), cosine(table, "x", "z")))
    elapsed = time.perf_counter() - start
    wins = sum(a > b for a, b in results)
    ok = wins == 3 and elapsed < 30
    verdict(7, ok, f"{wins}/3 seeds, cos(x,y)/cos(x,z) = "
                   + ", ".join(f"{a:.2f}/{b:.2f}" for a, b in results) + f", {elapsed:.1f}s")
