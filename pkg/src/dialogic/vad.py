"""Adaptive energy voice activity detection and segment cutting."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from dialogic.audio import AudioBuffer, frame_energies
from dialogic.errors import SegmentOutOfRange


@dataclass(frozen=True)
class VadConfig:
    frame_ms: int = 30
    hop_ms: int = 10
    noise_percentile: float = 0.10
    threshold_factor: float = 3.0
    min_speech_ms: int = 200
    max_gap_ms: int = 300
    pad_ms: int = 100

    def __post_init__(self):
        if not 1 <= self.hop_ms <= self.frame_ms:
            raise ValueError("need frame_ms >= hop_ms >= 1")
        if self.min_speech_ms < self.frame_ms:
            raise ValueError("min_speech_ms must be >= frame_ms")
        if not 0.0 < self.noise_percentile < 1.0:
            raise ValueError("noise_percentile must lie in (0, 1)")
        if self.threshold_factor <= 1.0:
            raise ValueError("threshold_factor must exceed 1")
        if self.max_gap_ms < 0 or self.pad_ms < 0:
            raise ValueError("max_gap_ms and pad_ms must be non-negative")


@dataclass(frozen=True, order=True)
class AudioSegment:
    index: int
    start_ms: int
    end_ms: int
    source_id: str = ""

    def __post_init__(self):
        if not 0 <= self.start_ms < self.end_ms:
            raise ValueError(f"invalid segment span ({self.start_ms}, {self.end_ms})")

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


def _frame_edges(n_frames: int, frame_ms: int, hop_ms: int, duration_ms: float):
    # Frame k owns the hop-wide slice around its centre; the outer frames are
    # stretched to the buffer edges so the slices tile the whole recording.
    starts = np.arange(n_frames) * hop_ms + (frame_ms - hop_ms) / 2.0
    ends = starts + hop_ms
    starts[0] = 0.0
    ends[-1] = duration_ms
    return starts, ends


def _merge(spans, max_gap):
    merged = []
    for start, end in spans:
        if merged and start - merged[-1][1] <= max_gap:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return merged


@dataclass
class VadTrace:
    """Intermediate VAD state, before padding.

    ``candidates`` are the gap-merged active spans; ``runs`` are the candidates
    that last at least ``min_speech_ms``. Spans are ``(start_ms, end_ms)``.
    """

    runs: list
    candidates: list
    threshold: float
    energies: np.ndarray


def speech_runs(buffer: AudioBuffer, config: VadConfig = VadConfig()) -> VadTrace:
    series = frame_energies(buffer, config.frame_ms, config.hop_ms)
    energies = series.energies
    threshold = config.threshold_factor * float(
        np.quantile(energies, config.noise_percentile, method="linear")
    )
    active = energies > threshold
    starts, ends = _frame_edges(len(energies), config.frame_ms, config.hop_ms, buffer.duration_ms)

    spans = []
    k = 0
    n = len(active)
    while k < n:
        if not active[k]:
            k += 1
            continue
        j = k
        while j + 1 < n and active[j + 1]:
            j += 1
        spans.append((float(starts[k]), float(ends[j])))
        k = j + 1

    candidates = [tuple(span) for span in _merge(spans, config.max_gap_ms)]
    runs = [(s, e) for s, e in candidates if e - s >= config.min_speech_ms]
    return VadTrace(runs, candidates, threshold, energies)


def detect_segments(buffer: AudioBuffer, config: VadConfig = VadConfig()) -> list[AudioSegment]:
    """Find speech spans in ``buffer``.

    Runs of frames whose RMS exceeds ``threshold_factor`` times the
    ``noise_percentile`` quantile of all frame energies are merged across short
    gaps, filtered by minimum duration and only then padded, so padding can
    never rescue a sub-minimum blip.
    """
    runs = speech_runs(buffer, config).runs
    duration = buffer.duration_ms
    padded = [
        (max(0.0, s - config.pad_ms), min(duration, e + config.pad_ms)) for s, e in runs
    ]
    merged = _merge(padded, 0.0)
    segments = []
    for s, e in merged:
        start, end = int(round(s)), int(round(e))
        end = min(end, int(np.floor(duration)))
        if end > start:
            segments.append(AudioSegment(len(segments), start, end, buffer.source_id))
    return segments


def cut_segments(buffer: AudioBuffer, segments) -> list[AudioBuffer]:
    """Slice ``buffer`` into one buffer per segment, samples in [start, end)."""
    out = []
    n = len(buffer)
    for seg in segments:
        lo = buffer.ms_to_samples(seg.start_ms)
        hi = buffer.ms_to_samples(seg.end_ms)
        if seg.start_ms < 0 or hi > n or lo >= hi:
            raise SegmentOutOfRange(
                f"segment {seg.index} ({seg.start_ms}-{seg.end_ms} ms) outside "
                f"{buffer.duration_ms:.1f} ms buffer"
            )
        out.append(
            AudioBuffer(buffer.samples[lo:hi], buffer.sample_rate, f"{buffer.source_id}:{seg.index}")
        )
    return out


def write_segments(segments, fh) -> None:
    writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
    for seg in segments:
        writer.writerow([seg.index, seg.start_ms, seg.end_ms, seg.source_id])


def read_segments(fh) -> list[AudioSegment]:
    segments = []
    for row in csv.reader(fh, delimiter="\t"):
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"segment record needs 4 fields, got {len(row)}")
        segments.append(AudioSegment(int(row[0]), int(row[1]), int(row[2]), row[3]))
    return segments
