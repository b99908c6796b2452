import json
import struct
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from dialogic.audio import AudioBuffer
from dialogic.embeddings import EmbeddingTable


def pcm16_wav(frames, sample_rate=16000, channels=1, fmt_tag=1, bits=16, truncate=0):
    """Hand-assemble a RIFF/WAVE blob from int16 frames (interleaved if stereo)."""
    data = struct.pack("<%dh" % len(frames), *frames)
    declared = len(data)
    data = data[: len(data) - truncate]
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, channels, sample_rate, sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", declared) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def tone_silence_tone(sample_rate=16000, amplitude=0.5):
    """500 ms tone, 1000 ms silence, 500 ms tone."""
    n = sample_rate // 2
    t = np.arange(n) / sample_rate
    tone = amplitude * np.sin(2 * np.pi * 220.0 * t)
    samples = np.concatenate([tone, np.zeros(2 * n), tone])
    return AudioBuffer(samples, sample_rate, "fixture")


@pytest.fixture
def tst_buffer():
    return tone_silence_tone()


@pytest.fixture
def tiny_table():
    rng = np.random.default_rng(0)
    tokens = ["well", "done", "good", "job", "can", "you", "hear", "me", "hello"]
    return EmbeddingTable.from_rows(tokens, rng.normal(size=(len(tokens), 4)))


class MockAsr:
    """Scripted HTTP backend; ``behaviour(index, attempt)`` returns (status, body)."""

    def __init__(self, behaviour):
        self.behaviour = behaviour
        self.attempts = {}
        self.requests = []
        lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with lock:
                    idx = body["segment_index"]
                    n = outer.attempts.get(idx, 0)
                    outer.attempts[idx] = n + 1
                    outer.requests.append(body)
                status, payload = outer.behaviour(idx, n)
                if status is None:
                    time.sleep(payload)
                    status, payload = 200, b'{"text": "late"}'
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self):
        return f"http://127.0.0.1:{self.server.server_address[1]}/asr"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
