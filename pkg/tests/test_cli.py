import json
import socket

import pytest

from conftest import MockAsr, tone_silence_tone
from dialogic.audio import read_wav, write_wav
from dialogic.cli import main
from dialogic.config import ConfigError, PipelineConfig
from dialogic.corpus import INSTRUCTIONS
from dialogic.vad import VadConfig, detect_segments

SMALL = {
    "data": {"sentences_per_type": 120},
    "embeddings": {"dim": 8, "epochs": 2},
    "train": {"hidden_size": 8, "ff_size": 4, "max_epochs": 3, "learning_rate": 0.01},
    "baselines": {"logreg": {"epochs": 50}, "svm": {"epochs": 50}, "gbdt": {"n_trees": 5}},
}


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def write_recording(directory, name="lesson", amplitude=0.5):
    directory.mkdir(parents=True, exist_ok=True)
    buffer = tone_silence_tone(amplitude=amplitude)
    path = directory / f"{name}.wav"
    path.write_bytes(write_wav(buffer.samples, buffer.sample_rate))
    return path


def closed_port_url():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}/asr"


def lines(path):
    return [json.loads(x) for x in path.read_text().splitlines()]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    config = write_config(root / "config.json", SMALL)
    out = root / "out"
    assert main(["gen-data", "--config", config, "--out", str(out)]) == 0
    assert main(["train", "--config", config, "--out", str(out)]) == 0
    return root, config, out


# --- vad / transcribe -------------------------------------------------------


def test_vad_empty_directory_is_usage_error(tmp_path):
    (tmp_path / "audio").mkdir()
    code = main(["vad", "--audio-dir", str(tmp_path / "audio"), "--out", str(tmp_path / "o")])
    assert code == 1


def test_vad_silent_file_gives_empty_segment_file(tmp_path):
    audio = tmp_path / "audio"
    audio.mkdir()
    (audio / "quiet.wav").write_bytes(write_wav([0.0] * 16000, 16000))
    code = main(["vad", "--audio-dir", str(audio), "--out", str(tmp_path / "o")])
    assert code == 0
    assert (tmp_path / "o" / "segments" / "quiet.tsv").read_text() == ""


def test_vad_skips_corrupt_file(tmp_path, caplog):
    audio = tmp_path / "audio"
    write_recording(audio, "good")
    (audio / "broken.wav").write_bytes(b"RIFF\x00\x00\x00\x00WAVEjunk")
    code = main(["vad", "--audio-dir", str(audio), "--out", str(tmp_path / "o")])
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "o" / "segments").iterdir()) == ["good.tsv"]
    assert "broken.wav" in caplog.text


def test_vad_all_files_corrupt_is_runtime_error(tmp_path):
    audio = tmp_path / "audio"
    audio.mkdir()
    (audio / "broken.wav").write_bytes(b"not audio")
    assert main(["vad", "--audio-dir", str(audio), "--out", str(tmp_path / "o")]) == 2


def test_transcribe_offline_and_unreachable(tmp_path):
    audio = tmp_path / "audio"
    write_recording(audio)
    out = str(tmp_path / "o")
    assert main(["vad", "--audio-dir", str(audio), "--out", out]) == 0
    transcripts = tmp_path / "t.jsonl"
    transcripts.write_text(
        '{"source_id": "lesson", "segment_index": 0, "text": "good morning class"}\n'
        '{"source_id": "lesson", "segment_index": 1, "text": "well done"}\n'
    )
    args = ["transcribe", "--audio-dir", str(audio), "--out", out]
    assert main(args + ["--transcripts", str(transcripts)]) == 0
    got = lines(tmp_path / "o" / "utterances" / "lesson.jsonl")
    assert [u["text"] for u in got] == ["good morning class", "well done"]
    code = main(args + ["--mode", "remote", "--endpoint", closed_port_url(),
                        "--set", "asr.timeout_ms=200", "--set", "asr.backoff_ms=1"])
    assert code == 2


def test_transcribe_mixed_success_marks_skipped(tmp_path):
    audio = tmp_path / "audio"
    write_recording(audio)
    out = str(tmp_path / "o")
    assert main(["vad", "--audio-dir", str(audio), "--out", out]) == 0

    def behaviour(idx, attempt):
        return (500, b"{}") if idx == 0 else (200, b'{"text": "well done", "confidence": 0.8}')

    with MockAsr(behaviour) as srv:
        code = main(["transcribe", "--audio-dir", str(audio), "--out", out, "--mode", "remote",
                     "--endpoint", srv.url, "--set", "asr.backoff_ms=1"])
    assert code == 0
    got = lines(tmp_path / "o" / "utterances" / "lesson.jsonl")
    assert [u["skipped"] for u in got] == [True, False]
    assert got[1]["text"] == "well done"


def test_transcribe_without_segments_is_usage_error(tmp_path):
    assert main(["transcribe", "--out", str(tmp_path / "o")]) == 1


# --- training products ------------------------------------------------------


def test_train_writes_every_model(trained):
    _, _, out = trained
    for instruction in INSTRUCTIONS:
        names = sorted(p.name for p in (out / "models" / instruction.value).iterdir())
        assert names == ["gbdt.json", "history.json", "logreg.json", "lstm.json", "svm.json"]
    assert len((out / "data" / "greeting.jsonl").read_text().splitlines()) == 120


def test_evaluate_writes_report(trained, capsys):
    _, config, out = trained
    assert main(["evaluate", "--config", config, "--out", str(out)]) == 0
    rows = (out / "reports" / "auc.csv").read_text().splitlines()
    assert len(rows) == 25
    assert len(list((out / "reports").glob("roc_*.svg"))) == 6
    assert len(capsys.readouterr().out.splitlines()) == 24


def test_train_is_byte_identical_across_runs(trained, tmp_path):
    _, config, out = trained
    again = tmp_path / "again"
    assert main(["gen-data", "--config", config, "--out", str(again)]) == 0
    assert main(["train", "--config", config, "--out", str(again)]) == 0
    for path in sorted(out.glob("models/*/*.json")) + [out / "embeddings.txt"]:
        twin = again / path.relative_to(out)
        assert twin.read_bytes() == path.read_bytes(), path


def test_seed_changes_outputs(trained, tmp_path):
    _, config, out = trained
    other = tmp_path / "other"
    assert main(["gen-data", "--config", config, "--out", str(other), "--seed", "1"]) == 0
    assert (other / "data" / "greeting.jsonl").read_bytes() != (
        out / "data" / "greeting.jsonl").read_bytes()


# --- predict ------------------------------------------------------------------


def predict(trained, capsys, *extra):
    _, config, out = trained
    code = main(["predict", "--config", config, "--out", str(out), *extra])
    assert code == 0
    return [json.loads(x) for x in capsys.readouterr().out.splitlines()]


def test_predict_threshold_zero_tags_everything(trained, capsys):
    recs = predict(trained, capsys, "--text", "good morning", "--text", "open your books",
                   "--threshold", "0")
    assert len(recs) == 2
    for r in recs:
        assert r["tags"] == [t.value for t in INSTRUCTIONS]
        assert all(0 < p < 1 for p in r["probs"].values())


def test_predict_threshold_one_tags_nothing(trained, capsys):
    recs = predict(trained, capsys, "--text", "good morning", "--threshold", "1")
    assert recs[0]["tags"] == []


def test_predict_per_type_thresholds(trained, capsys):
    args = []
    for t in INSTRUCTIONS:
        args += ["--set", f"thresholds.{t.value}=0.999999"]
    recs = predict(trained, capsys, "--text", "the weather is nice", *args)
    assert recs[0]["tags"] == []
    args[-1] = "thresholds.summarization=0"
    recs = predict(trained, capsys, "--text", "the weather is nice", *args)
    assert recs[0]["tags"] == ["summarization"]


def test_predict_from_utterance_file(trained, tmp_path, capsys):
    src = tmp_path / "u.jsonl"
    src.write_text(json.dumps({"segment_index": 0, "start_ms": 0, "end_ms": 500,
                               "text": "well done"}) + "\n")
    recs = predict(trained, capsys, "--input", str(src))
    assert [r["text"] for r in recs] == ["well done"]


def test_predict_rejects_unknown_model_format(trained, tmp_path, capsys):
    root, config, out = trained
    broken = tmp_path / "broken"
    for path in out.glob("models/*/lstm.json"):
        target = broken / path.relative_to(out)
        target.parent.mkdir(parents=True, exist_ok=True)
        doc = json.loads(path.read_text())
        doc["format_version"] = 999
        target.write_text(json.dumps(doc))
    (broken / "embeddings.txt").write_bytes((out / "embeddings.txt").read_bytes())
    code = main(["predict", "--config", config, "--out", str(broken), "--text", "hi"])
    assert code == 2
    assert "format_version" in capsys.readouterr().err


def test_predict_needs_trained_models(tmp_path):
    assert main(["predict", "--out", str(tmp_path), "--text", "hi"]) == 1


# --- e2e -----------------------------------------------------------------------


def test_e2e_spans_match_vad_and_rerun_is_identical(trained, tmp_path):
    _, config, out = trained
    wav = write_recording(tmp_path / "audio")
    transcripts = tmp_path / "t.jsonl"
    transcripts.write_text(
        '{"source_id": "lesson", "segment_index": 0, "text": "can you hear me"}\n'
        '{"source_id": "lesson", "segment_index": 1, "text": ""}\n'
    )
    outputs = []
    for k in range(2):
        target = tmp_path / f"timeline{k}.jsonl"
        code = main(["e2e", "--config", config, "--out", str(out), "--audio", str(wav),
                     "--transcripts", str(transcripts), "--output", str(target)])
        assert code == 0
        outputs.append(target.read_bytes())
    assert outputs[0] == outputs[1]
    segments = detect_segments(read_wav(wav), VadConfig())
    recs = lines(tmp_path / "timeline0.jsonl")
    assert [(r["start_ms"], r["end_ms"]) for r in recs] == [(s.start_ms, s.end_ms) for s in segments]
    assert recs[0]["text"] == "can you hear me" and set(recs[0]["probs"]) == {
        t.value for t in INSTRUCTIONS}
    assert recs[1] == {"start_ms": segments[1].start_ms, "end_ms": segments[1].end_ms,
                       "text": "", "tags": [], "probs": {}}


def test_e2e_missing_transcript_is_runtime_error(trained, tmp_path):
    _, config, out = trained
    wav = write_recording(tmp_path / "audio")
    transcripts = tmp_path / "t.jsonl"
    transcripts.write_text('{"source_id": "other", "segment_index": 0, "text": "x"}\n')
    code = main(["e2e", "--config", config, "--out", str(out), "--audio", str(wav),
                 "--transcripts", str(transcripts), "--output", str(tmp_path / "t.out")])
    assert code == 2


# --- gradcheck and config -------------------------------------------------------


def test_gradcheck_exit_codes(tmp_path, capsys):
    assert main(["gradcheck", "--set", "gradcheck.instances=3"]) == 0
    assert "max_relative_error" in capsys.readouterr().out
    assert main(["gradcheck", "--set", "gradcheck.instances=3",
                 "--set", "gradcheck.tolerance=0"]) == 2


def test_config_precedence(tmp_path):
    path = write_config(tmp_path / "c.json", {"seed": 5, "train": {"max_epochs": 4},
                                              "vad": {"threshold_factor": 2.0}})
    cfg = PipelineConfig.load(path)
    assert cfg.seed == 5 and cfg.train.max_epochs == 4 and cfg.vad.threshold_factor == 2.0
    assert cfg.vad.min_speech_ms == VadConfig().min_speech_ms
    cfg = PipelineConfig.load(path, ["train.max_epochs=9"], seed=7)
    assert cfg.seed == 7 and cfg.train.max_epochs == 9
    assert cfg.stage_seed("train") != PipelineConfig.load(path).stage_seed("train")
    assert cfg.stage_seed("train") != cfg.stage_seed("split")


@pytest.mark.parametrize("overrides, doc", [
    (["nope.key=1"], {}),
    (["train.max_epochs"], {}),
    ([], {"unknown": 1}),
    ([], {"split": {"ratios": [0.5, 0.5, 0.5]}}),
    (["train.hidden_size=0"], {}),
])
def test_config_errors(tmp_path, overrides, doc):
    path = write_config(tmp_path / "c.json", doc)
    with pytest.raises(ConfigError):
        PipelineConfig.load(path, overrides)


def test_bad_config_exits_with_usage_code(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path), "--set", "bogus=1"]) == 1
    assert main(["gen-data", "--config", str(tmp_path / "missing.json")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1
