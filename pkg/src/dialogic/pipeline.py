"""Stage functions behind the command-line interface.

Every stage reads and writes plain files so it can be rerun in isolation.
Outputs carry no timestamps and are written in a fixed order, which keeps
reruns with the same configuration byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path

import numpy as np

from dialogic.audio import read_wav
from dialogic.corpus import (
    INSTRUCTIONS,
    generate_corpus,
    load_dataset,
    save_dataset,
    split_dataset,
    tokenize,
)
from dialogic.embeddings import load_embeddings, train_skipgram
from dialogic.errors import DialogicError
from dialogic.evaluation import evaluate_models, render_report
from dialogic.models.baselines import (
    GradientBoostedTrees,
    LinearSVM,
    LogisticRegressionGD,
    MeanEmbedding,
    text_pipeline,
)
from dialogic.models.io import load_baseline, load_lstm, save_baseline, save_lstm
from dialogic.models.lstm import gradient_check, train_classifier
from dialogic.transcription import (
    Utterance,
    read_utterances,
    summarize,
    transcribe_segments,
    write_utterances,
)
from dialogic.vad import cut_segments, detect_segments, read_segments, write_segments

logger = logging.getLogger(__name__)

BASELINES = {"logreg": LogisticRegressionGD, "svm": LinearSVM, "gbdt": GradientBoostedTrees}
MODEL_NAMES = ("lstm", "logreg", "svm", "gbdt")


class StageError(DialogicError):
    """A stage could not produce any output."""


class InputError(DialogicError):
    """Missing or unusable inputs; maps to the usage exit code."""


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


# -- audio -----------------------------------------------------------------


def run_vad(cfg) -> list[Path]:
    audio_dir = cfg.path("audio_dir")
    wavs = sorted(audio_dir.glob("*.wav")) if audio_dir.is_dir() else []
    if not wavs:
        raise InputError(f"no .wav files in {audio_dir}")
    out_dir = cfg.path("segments_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for wav in wavs:
        try:
            buffer = read_wav(wav)
            segments = detect_segments(buffer, cfg.vad)
        except DialogicError as exc:
            logger.warning("skipping %s: %s", wav.name, exc)
            continue
        target = out_dir / f"{wav.stem}.tsv"
        with open(target, "w", encoding="utf-8", newline="") as fh:
            write_segments(segments, fh)
        logger.info("%s: %d segments", wav.name, len(segments))
        written.append(target)
    if not written:
        raise StageError("every recording failed voice activity detection")
    return written


def _segment_pairs(cfg, segments, source_id):
    audio_path = cfg.path("audio_dir") / f"{source_id}.wav"
    if not segments:
        return []
    if audio_path.exists():
        buffer = read_wav(audio_path, source_id)
        return list(zip(segments, cut_segments(buffer, segments)))
    return [(s, None) for s in segments]


def run_transcribe(cfg, asr=None) -> list[Path]:
    asr = asr or cfg.asr()
    seg_dir = cfg.path("segments_dir")
    files = sorted(seg_dir.glob("*.tsv")) if seg_dir.is_dir() else []
    if not files:
        raise InputError(f"no segment files in {seg_dir}")
    out_dir = cfg.path("utterances_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    totals = {"total": 0, "skipped": 0, "transcribed": 0}
    for path in files:
        with open(path, encoding="utf-8") as fh:
            segments = read_segments(fh)
        pairs = _segment_pairs(cfg, segments, path.stem)
        if asr.mode == "remote" and any(a is None for _, a in pairs):
            raise InputError(f"remote transcription needs audio for {path.stem}")
        utterances = transcribe_segments(pairs, asr) if pairs else []
        for k, v in summarize(utterances).items():
            totals[k] += v
        target = out_dir / f"{path.stem}.jsonl"
        write_utterances(utterances, target)
        written.append(target)
    logger.info("transcribed %(transcribed)d of %(total)d segments, %(skipped)d skipped", totals)
    return written


# -- data and models -------------------------------------------------------


def run_gen_data(cfg) -> list[Path]:
    data = cfg.section("data")
    n = int(data["sentences_per_type"])
    n_pos = int(round(n * float(data["positive_fraction"])))
    out_dir = cfg.path("datasets_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for instruction in INSTRUCTIONS:
        corpus = generate_corpus(instruction, n_pos, n - n_pos, cfg.stage_seed("gen-data"))
        path = out_dir / f"{instruction.value}.jsonl"
        save_dataset(corpus, path)
        written.append(path)
    return written


def load_splits(cfg) -> dict:
    splits = {}
    for instruction in INSTRUCTIONS:
        path = cfg.path("datasets_dir") / f"{instruction.value}.jsonl"
        if not path.exists():
            raise InputError(f"missing dataset {path}; run gen-data first")
        splits[instruction] = split_dataset(
            load_dataset(path), cfg.stage_seed("split"), tuple(cfg.section("split")["ratios"])
        )
    return splits


def run_train_embeddings(cfg, splits=None) -> Path:
    splits = splits or load_splits(cfg)
    opts = cfg.section("embeddings")
    sentences = [tokenize(s.text) for i in INSTRUCTIONS for s in splits[i].train]
    table = train_skipgram(
        sentences, dim=opts["dim"], window=opts["window"], negatives=opts["negatives"],
        epochs=opts["epochs"], learning_rate=opts["learning_rate"],
        seed=cfg.stage_seed("embeddings"), min_count=opts["min_count"],
    )
    path = cfg.path("embeddings")
    path.parent.mkdir(parents=True, exist_ok=True)
    table.save(path)
    return path


def load_table(cfg):
    path = cfg.path("embeddings")
    if not path.exists():
        raise InputError(f"missing embeddings {path}; run train-embeddings first")
    return load_embeddings(path)


def run_train(cfg) -> list[Path]:
    splits = load_splits(cfg)
    if not cfg.path("embeddings").exists():
        run_train_embeddings(cfg, splits)
    table = load_table(cfg)
    written = []
    for k, instruction in enumerate(INSTRUCTIONS):
        split = splits[instruction]
        model_dir = cfg.path("models_dir") / instruction.value
        model_dir.mkdir(parents=True, exist_ok=True)
        train_cfg = dataclasses.replace(cfg.train, seed=cfg.stage_seed("train", k))
        model, history = train_classifier(split.train, split.validation, table, train_cfg,
                                          instruction)
        save_lstm(model, model_dir / "lstm.json")
        written.append(model_dir / "lstm.json")

        features = MeanEmbedding(table).transform(split.train)
        labels = [s.label for s in split.train]
        for name, cls in BASELINES.items():
            est = cls(seed=cfg.stage_seed(name, k), **cfg.section("baselines")[name])
            est.fit(features, labels)
            save_baseline(est, model_dir / f"{name}.json", instruction.value)
            written.append(model_dir / f"{name}.json")
        _write_json(model_dir / "history.json", history)
        logger.info("%s: best validation AUC %.4f after %d epochs",
                    instruction.value, model.best_val_auc_, model.epochs_run_)
    return written


def load_models(cfg, table, names=MODEL_NAMES) -> dict:
    models = {name: {} for name in names}
    for instruction in INSTRUCTIONS:
        model_dir = cfg.path("models_dir") / instruction.value
        for name in names:
            path = model_dir / f"{name}.json"
            if not path.exists():
                raise InputError(f"missing model {path}; run train first")
            if name == "lstm":
                models[name][instruction] = load_lstm(path, table)
            else:
                models[name][instruction] = text_pipeline(table, load_baseline(path))
    return models


def run_evaluate(cfg):
    splits = load_splits(cfg)
    table = load_table(cfg)
    models = load_models(cfg, table)
    report = evaluate_models(models, {i: splits[i].test for i in INSTRUCTIONS})
    render_report(report, cfg.path("reports_dir"))
    return report


# -- inference -------------------------------------------------------------


def tag_sentences(texts, lstms: dict, thresholds: dict) -> list[dict]:
    """Multi-label tagging: every type whose probability reaches its threshold."""
    probs = {
        instruction: lstms[instruction].predict_proba(texts)[:, 1] if texts else np.zeros(0)
        for instruction in INSTRUCTIONS
    }
    out = []
    for k, text in enumerate(texts):
        p = {i.value: float(probs[i][k]) for i in INSTRUCTIONS}
        tags = [i.value for i in INSTRUCTIONS if p[i.value] >= float(thresholds[i.value])]
        out.append({"text": text, "tags": tags, "probs": p})
    return out


def thresholds_for(cfg, override=None) -> dict:
    th = {k: float(v) for k, v in cfg.section("thresholds").items()}
    if override is not None:
        th = {k: float(override) for k in th}
    return th


def run_predict(cfg, texts=None, utterance_file=None, threshold=None) -> list[dict]:
    table = load_table(cfg)
    lstms = load_models(cfg, table, ("lstm",))["lstm"]
    if utterance_file is not None:
        texts = [u.text for u in read_utterances(utterance_file)]
    return tag_sentences(list(texts or []), lstms, thresholds_for(cfg, threshold))


def run_e2e(cfg, audio_path, asr=None, threshold=None, output=None) -> Path:
    """VAD, transcription and tagging of one recording into a timeline file.

    Every VAD segment yields exactly one timeline record; skipped
    transcriptions keep their span with empty text and no tags.
    """
    audio_path = Path(audio_path)
    buffer = read_wav(audio_path)
    segments = detect_segments(buffer, cfg.vad)
    asr = asr or cfg.asr()
    utterances: list[Utterance] = (
        transcribe_segments(list(zip(segments, cut_segments(buffer, segments))), asr)
        if segments else []
    )
    table = load_table(cfg)
    lstms = load_models(cfg, table, ("lstm",))["lstm"]
    spoken = [u for u in utterances if not u.skipped]
    tagged = iter(tag_sentences([u.text for u in spoken], lstms, thresholds_for(cfg, threshold)))
    lines = []
    for u in utterances:
        if u.skipped:
            rec = {"start_ms": u.start_ms, "end_ms": u.end_ms, "text": "", "tags": [], "probs": {}}
        else:
            t = next(tagged)
            rec = {"start_ms": u.start_ms, "end_ms": u.end_ms, "text": u.text,
                   "tags": t["tags"], "probs": t["probs"]}
        lines.append(json.dumps(rec, sort_keys=True, ensure_ascii=False))
    if output is None:
        out_dir = cfg.path("timeline_dir")
        out_dir.mkdir(parents=True, exist_ok=True)
        output = out_dir / f"{audio_path.stem}.jsonl"
    output = Path(output)
    output.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return output


def run_gradcheck(cfg) -> list[float]:
    opts = cfg.section("gradcheck")
    rng = np.random.default_rng(cfg.stage_seed("gradcheck"))
    errors = []
    for k in range(int(opts["instances"])):
        d = int(rng.integers(1, opts["max_dim"] + 1))
        h = int(rng.integers(1, opts["max_hidden"] + 1))
        length = int(rng.integers(1, opts["max_len"] + 1))
        errors.append(
            gradient_check(d=d, h=h, length=length, seed=int(rng.integers(2**31)),
                           epsilon=float(opts["epsilon"]))
        )
    return errors
