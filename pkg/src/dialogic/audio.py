"""WAV ingestion and frame energy computation."""

from __future__ import annotations

import io
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dialogic.errors import (
    BufferTooShort,
    MalformedHeader,
    TruncatedData,
    UnsupportedEncoding,
)

PCM16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono audio normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise ValueError("samples must lie in [-1, 1]")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_ms(self) -> float:
        return 1000.0 * len(self) / self.sample_rate

    def ms_to_samples(self, ms: float) -> int:
        return int(round(ms * self.sample_rate / 1000.0))

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.source_id == other.source_id
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class FrameEnergySeries:
    energies: np.ndarray
    frame_ms: int
    hop_ms: int
    sample_rate: int = field(default=0, compare=False)

    def __len__(self):
        return self.energies.shape[0]


def load_wav(data: bytes, source_id: str = "") -> AudioBuffer:
    """Decode a 16-bit PCM RIFF/WAVE blob into a mono :class:`AudioBuffer`.

    Stereo input is mixed down by averaging the two channels of each frame.
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeader("not a RIFF/WAVE container")
    try:
        reader = wave.open(io.BytesIO(data), "rb")
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedEncoding(msg) from exc
        raise MalformedHeader(msg) from exc
    except Exception as exc:  # EOFError / struct.error on a mangled fmt chunk
        raise MalformedHeader(str(exc)) from exc

    with reader:
        channels = reader.getnchannels()
        width = reader.getsampwidth()
        rate = reader.getframerate()
        n_frames = reader.getnframes()
        if width != 2:
            raise UnsupportedEncoding(f"expected 16-bit samples, got {8 * width}-bit")
        if channels not in (1, 2):
            raise UnsupportedEncoding(f"expected 1 or 2 channels, got {channels}")
        if rate <= 0:
            raise MalformedHeader(f"invalid sample rate {rate}")
        raw = reader.readframes(n_frames)

    if len(raw) < n_frames * channels * width:
        raise TruncatedData(
            f"data chunk declares {n_frames * channels * width} bytes, found {len(raw)}"
        )
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM16_SCALE
    if channels == 2:
        pcm = pcm.reshape(-1, 2).mean(axis=1)
    return AudioBuffer(pcm, rate, source_id)


def read_wav(path, source_id: str | None = None) -> AudioBuffer:
    path = Path(path)
    return load_wav(path.read_bytes(), path.stem if source_id is None else source_id)


def to_pcm16(samples) -> bytes:
    """Quantize normalized samples to little-endian int16 bytes."""
    scaled = np.round(np.asarray(samples, dtype=np.float64) * PCM16_SCALE)
    return np.clip(scaled, -32768, 32767).astype("<i2").tobytes()


def write_wav(samples, sample_rate: int, channels: int = 1) -> bytes:
    """Encode samples (interleaved when ``channels == 2``) as a PCM16 WAV blob."""
    out = io.BytesIO()
    with wave.open(out, "wb") as writer:
        writer.setnchannels(channels)
        writer.setsampwidth(2)
        writer.setframerate(sample_rate)
        writer.writeframes(to_pcm16(samples))
    return out.getvalue()


def frame_energies(buffer: AudioBuffer, frame_ms: int = 30, hop_ms: int = 10) -> FrameEnergySeries:
    """RMS energy of each frame; frame k starts at sample ``k * hop``."""
    if not 1 <= hop_ms <= frame_ms:
        raise ValueError("need frame_ms >= hop_ms >= 1")
    frame_len = buffer.ms_to_samples(frame_ms)
    hop = max(1, buffer.ms_to_samples(hop_ms))
    if frame_len < 1 or len(buffer) < frame_len:
        raise BufferTooShort(
            f"buffer of {buffer.duration_ms:.1f} ms is shorter than a {frame_ms} ms frame"
        )
    windows = np.lib.stride_tricks.sliding_window_view(buffer.samples, frame_len)[::hop]
    energies = np.sqrt(np.mean(windows * windows, axis=1))
    return FrameEnergySeries(energies, frame_ms, hop_ms, buffer.sample_rate)
