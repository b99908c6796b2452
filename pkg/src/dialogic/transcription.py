"""Pluggable speech recognition: an HTTP wire client and an offline reader.

Remote protocol: each segment is POSTed as JSON
``{"source_id", "segment_index", "sample_rate", "pcm16"}`` where ``pcm16`` is
base64 of little-endian int16 samples; the server answers ``{"text",
"confidence"}``.
"""

from __future__ import annotations

import base64
import json
import logging
import socket
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from dialogic.audio import AudioBuffer, to_pcm16
from dialogic.errors import BackendUnreachable, MalformedResponse, TranscriptKeyMissing
from dialogic.vad import AudioSegment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Utterance:
    segment_index: int
    start_ms: int
    end_ms: int
    text: str
    confidence: float = 1.0
    source_id: str = ""
    skipped: bool = False

    def __post_init__(self):
        if self.start_ms >= self.end_ms:
            raise ValueError("utterance needs start_ms < end_ms")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if not self.text.strip() and not self.skipped:
            raise ValueError("empty text is only allowed on skipped utterances")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d):
        return cls(
            segment_index=int(d["segment_index"]),
            start_ms=int(d["start_ms"]),
            end_ms=int(d["end_ms"]),
            text=d.get("text", ""),
            confidence=float(d.get("confidence", 1.0)),
            source_id=d.get("source_id", ""),
            skipped=bool(d.get("skipped", False)),
        )


@dataclass(frozen=True)
class AsrBackendConfig:
    mode: str = "offline"
    endpoint: str | None = None
    transcript_path: str | None = None
    timeout_ms: int = 5000
    max_retries: int = 2
    max_in_flight: int = 4
    backoff_ms: int = 100

    def __post_init__(self):
        if self.mode == "remote":
            if not self.endpoint:
                raise ValueError("remote mode requires an endpoint")
        elif self.mode == "offline":
            if not self.transcript_path:
                raise ValueError("offline mode requires a transcript_path")
        else:
            raise ValueError(f"unknown ASR mode {self.mode!r}")
        if self.timeout_ms <= 0 or self.max_retries < 0 or self.max_in_flight < 1:
            raise ValueError("timeout_ms > 0, max_retries >= 0 and max_in_flight >= 1 required")


def encode_request(segment: AudioSegment, audio: AudioBuffer) -> bytes:
    body = {
        "source_id": segment.source_id,
        "segment_index": segment.index,
        "sample_rate": audio.sample_rate,
        "pcm16": base64.b64encode(to_pcm16(audio.samples)).decode("ascii"),
    }
    return json.dumps(body, sort_keys=True).encode("utf-8")


def parse_response(payload: bytes) -> tuple[str, float]:
    try:
        obj = json.loads(payload)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedResponse(f"response is not JSON: {exc}") from exc
    if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
        raise MalformedResponse("response lacks a string 'text' field")
    conf = obj.get("confidence", 1.0)
    if conf is None:
        conf = 1.0
    if not isinstance(conf, (int, float)) or not 0.0 <= conf <= 1.0:
        raise MalformedResponse(f"confidence {conf!r} outside [0, 1]")
    return obj["text"], float(conf)


def load_transcripts(path) -> dict:
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                key = (str(rec["source_id"]), int(rec["segment_index"]))
                table[key] = (rec["text"], float(rec.get("confidence", 1.0)))
            except (KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad transcript record") from exc
    return table


def _offline(pairs, config):
    table = load_transcripts(config.transcript_path)
    out = []
    for seg, _ in pairs:
        key = (seg.source_id, seg.index)
        if key not in table:
            raise TranscriptKeyMissing(f"no transcript for {key}")
        text, conf = table[key]
        out.append(_utterance(seg, text, conf))
    return out


def _utterance(seg, text, conf):
    skipped = not text.strip()
    return Utterance(seg.index, seg.start_ms, seg.end_ms, text, conf, seg.source_id, skipped)


class _Unreachable(Exception):
    pass


def _post(endpoint, body, timeout_s):
    req = urllib.request.Request(
        endpoint, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout_s) as resp:
            return resp.read()
    except urllib.error.HTTPError:
        raise
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (ConnectionRefusedError, socket.gaierror)):
            raise _Unreachable(str(exc.reason)) from exc
        raise


def _remote_one(seg, audio, config):
    """Transcribe one segment; the whole call stays within the retry budget."""
    budget = (config.max_retries + 1) * config.timeout_ms / 1000.0
    deadline = time.monotonic() + budget
    body = encode_request(seg, audio)
    unreachable = 0
    attempts = 0
    for attempt in range(config.max_retries + 1):
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        attempts += 1
        try:
            payload = _post(config.endpoint, body, min(config.timeout_ms / 1000.0, remaining))
            text, conf = parse_response(payload)
            return _utterance(seg, text, conf)
        except _Unreachable:
            unreachable += 1
        except (urllib.error.URLError, OSError, MalformedResponse) as exc:
            logger.debug("segment %s attempt %d failed: %s", seg.index, attempt, exc)
        if attempt < config.max_retries:
            pause = config.backoff_ms / 1000.0 * 2**attempt
            time.sleep(max(0.0, min(pause, deadline - time.monotonic())))
    if attempts and unreachable == attempts:
        raise BackendUnreachable(f"{config.endpoint} refused {attempts} connection attempts")
    return Utterance(seg.index, seg.start_ms, seg.end_ms, "", 0.0, seg.source_id, skipped=True)


def transcribe_segments(pairs, config: AsrBackendConfig) -> list[Utterance]:
    """Produce one :class:`Utterance` per ``(AudioSegment, AudioBuffer)`` pair.

    Output order follows input order. Segments whose transcription fails or
    comes back empty are flagged ``skipped`` rather than dropped.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no segments to transcribe")
    if config.mode == "offline":
        out = _offline(pairs, config)
    else:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            out = list(pool.map(lambda p: _remote_one(p[0], p[1], config), pairs))
    summary = summarize(out)
    if summary["skipped"]:
        logger.warning("%d of %d segments skipped", summary["skipped"], summary["total"])
    return out


def summarize(utterances) -> dict:
    skipped = sum(u.skipped for u in utterances)
    return {"total": len(utterances), "skipped": skipped, "transcribed": len(utterances) - skipped}


def write_utterances(utterances, path) -> None:
    Path(path).write_text("".join(u.to_json() + "\n" for u in utterances), encoding="utf-8")


def read_utterances(path) -> list[Utterance]:
    with open(path, encoding="utf-8") as fh:
        return [Utterance.from_dict(json.loads(line)) for line in fh if line.strip()]
