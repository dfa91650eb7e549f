"""Marker transport: GB/1 line codec, clock mapping, ordered sender, TCP receiver.

Goosebump edges and once-per-second SYNC beats travel as newline-delimited
ASCII lines over a TCP byte stream. The receiver logs every line with its
local arrival time; SYNC lines later become (sender, receiver) pairs for a
least-squares clock fit that places detector timestamps on the EEG clock.
"""
from __future__ import annotations

import heapq
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"GB/1"
KINDS = ("ON", "OFF", "SYNC")
SYNC_INTERVAL_US = 1_000_000


class MarkerParseError(ValueError):
    """A marker line failed to parse; ``code`` and ``offset`` locate the fault."""

    def __init__(self, code: str, offset: int, message: str):
        self.code = code
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class ClockFitError(ValueError):
    """Clock pairs are insufficient or imply an implausible drift."""


class ProtocolError(RuntimeError):
    """Sender-side ordering guarantee was violated."""


@dataclass(frozen=True)
class MarkerMessage:
    """One wire record: an ON/OFF edge or a SYNC beat.

    ``severity`` carries the running peak for ON and the final severity for
    OFF, with three decimals on the wire; SYNC uses 0.0.
    """

    kind: str
    seq: int
    t_us: int
    severity: float = 0.0


def encode_marker(m: MarkerMessage) -> bytes:
    """Render a message as its canonical ``GB/1 <seq> <t_us> <KIND> <sev>\\n`` line."""
    return f"GB/1 {m.seq} {m.t_us} {m.kind} {m.severity:.3f}\n".encode("ascii")


def decode_marker(line: bytes) -> MarkerMessage:
    """Parse one marker line; inverse of ``encode_marker`` on valid lines.

    Never raises anything but MarkerParseError, whatever the bytes; the error
    carries a code (bad-magic, unsupported-version, field-count, bad-seq,
    bad-timestamp, bad-kind, bad-severity) and the byte offset of the fault.
    """
    if not isinstance(line, (bytes, bytearray)):
        raise TypeError("decode_marker expects bytes")
    body = bytes(line)
    if body.endswith(b"\n"):
        body = body[:-1]
    fields = body.split(b" ")
    offsets = []
    pos = 0
    for f in fields:
        offsets.append(pos)
        pos += len(f) + 1

    if fields[0] != MAGIC:
        if fields[0].startswith(b"GB/"):
            raise MarkerParseError(
                "unsupported-version", 0, f"unsupported protocol version {fields[0]!r}"
            )
        raise MarkerParseError("bad-magic", 0, f"unknown magic {fields[0][:8]!r}")
    if len(fields) != 5:
        at = len(body) if len(fields) < 5 else offsets[5]
        raise MarkerParseError(
            "field-count", at, f"expected 5 fields, got {len(fields)}"
        )

    def ascii_field(i: int, code: str) -> str:
        try:
            return fields[i].decode("ascii")
        except UnicodeDecodeError:
            raise MarkerParseError(code, offsets[i], "non-ASCII bytes") from None

    seq_text = ascii_field(1, "bad-seq")
    if not seq_text.isdigit():
        raise MarkerParseError("bad-seq", offsets[1], f"bad seq {seq_text!r}")
    t_text = ascii_field(2, "bad-timestamp")
    if not t_text.isdigit():
        raise MarkerParseError(
            "bad-timestamp", offsets[2], f"bad timestamp {t_text!r}"
        )
    kind = ascii_field(3, "bad-kind")
    if kind not in KINDS:
        raise MarkerParseError("bad-kind", offsets[3], f"unknown kind {kind!r}")
    sev_text = ascii_field(4, "bad-severity")
    try:
        severity = float(sev_text)
    except ValueError:
        raise MarkerParseError(
            "bad-severity", offsets[4], f"bad severity {sev_text!r}"
        ) from None
    return MarkerMessage(kind=kind, seq=int(seq_text), t_us=int(t_text), severity=severity)


# ---------------------------------------------------------------------------
# Clock mapping

@dataclass(frozen=True)
class ClockMap:
    """Linear map receiver = alpha + beta * sender, both in microseconds."""

    alpha_us: float
    beta: float
    residual_rms_us: float
    n_points: int


def fit_clock_map(pairs: list[tuple[int, int]]) -> ClockMap:
    """Ordinary least squares of receiver time against sender time.

    Requires >= 2 pairs with distinct sender timestamps; a fitted drift ratio
    outside (0.9, 1.1) is rejected as implausible.
    """
    if len(pairs) < 2:
        raise ClockFitError(f"need at least 2 sync pairs, got {len(pairs)}")
    s = np.array([p[0] for p in pairs], dtype=np.float64)
    r = np.array([p[1] for p in pairs], dtype=np.float64)
    s0, r0 = s.mean(), r.mean()
    ds, dr = s - s0, r - r0
    var = float(np.dot(ds, ds))
    if var == 0.0:
        raise ClockFitError("degenerate fit: all sender timestamps are equal")
    beta = float(np.dot(ds, dr)) / var
    alpha = r0 - beta * s0
    resid = r - (alpha + beta * s)
    residual_rms = float(np.sqrt(np.mean(resid * resid)))
    if not 0.9 < beta < 1.1:
        raise ClockFitError(f"implausible drift ratio beta={beta:.6g}")
    return ClockMap(
        alpha_us=alpha, beta=beta, residual_rms_us=residual_rms, n_points=len(pairs)
    )


def map_time(clock_map: ClockMap, t_us: int) -> int:
    """Sender microseconds -> receiver microseconds."""
    return int(round(clock_map.alpha_us + clock_map.beta * t_us))


def unmap_time(clock_map: ClockMap, t_us: int) -> int:
    """Receiver microseconds -> sender microseconds (inverse of map_time)."""
    return int(round((t_us - clock_map.alpha_us) / clock_map.beta))


# ---------------------------------------------------------------------------
# Ordered sender

class MarkerScheduler:
    """Orders outgoing markers so wire timestamps never decrease.

    Edge timestamps point at event onsets/offsets, which the detector only
    decides after min_duration resp. merge_gap of latency; every message
    (SYNC beats included) is therefore held until stream time passes its
    timestamp plus ``delay_s``, then released in timestamp order with seq
    numbers assigned at release. SYNC beats are generated at every whole
    second of stream time.
    """

    def __init__(self, config=None, delay_s: float | None = None):
        if delay_s is None:
            if config is not None:
                delay_s = config.min_duration + config.merge_gap + 0.5
            else:
                delay_s = 2.0
        self._delay_us = int(round(delay_s * 1e6))
        self._heap: list[tuple[int, int, str, float]] = []
        self._counter = 0
        self._next_sync_us = 0
        self._next_seq = 0
        self._last_released_us: int | None = None

    def _enqueue(self, kind: str, t_us: int, severity: float) -> None:
        if self._last_released_us is not None and t_us < self._last_released_us:
            raise ProtocolError(
                f"{kind} marker at {t_us} arrived after {self._last_released_us} "
                f"was already released; increase the scheduler delay"
            )
        heapq.heappush(self._heap, (t_us, self._counter, kind, severity))
        self._counter += 1

    def _release_due(self, t_us: int) -> list[MarkerMessage]:
        out = []
        while self._heap and self._heap[0][0] + self._delay_us <= t_us:
            ts, _, kind, severity = heapq.heappop(self._heap)
            out.append(
                MarkerMessage(kind=kind, seq=self._next_seq, t_us=ts, severity=severity)
            )
            self._next_seq += 1
            self._last_released_us = ts
        return out

    def add_edge(self, kind: str, t_us: int, severity: float) -> None:
        self._enqueue(kind, t_us, severity)

    def advance(self, t_us: int) -> list[MarkerMessage]:
        """Move stream time forward; returns messages now due for the wire."""
        while self._next_sync_us <= t_us:
            self._enqueue("SYNC", self._next_sync_us, 0.0)
            self._next_sync_us += SYNC_INTERVAL_US
        return self._release_due(t_us)

    def finish(self, final_t_us: int) -> list[MarkerMessage]:
        """Flush every queued message in timestamp order at end of stream."""
        while self._next_sync_us <= final_t_us:
            self._enqueue("SYNC", self._next_sync_us, 0.0)
            self._next_sync_us += SYNC_INTERVAL_US
        out = []
        while self._heap:
            ts, _, kind, severity = heapq.heappop(self._heap)
            out.append(
                MarkerMessage(kind=kind, seq=self._next_seq, t_us=ts, severity=severity)
            )
            self._next_seq += 1
            self._last_released_us = ts
        return out


class MarkerSender:
    """TCP client writing marker lines; keeps a local copy of what was sent."""

    def __init__(self, address: tuple[str, int], timeout: float = 10.0):
        self.sent_lines: list[bytes] = []
        self._sock = socket.create_connection(address, timeout=timeout)

    def send(self, message: MarkerMessage) -> None:
        line = encode_marker(message)
        self._sock.sendall(line)
        self.sent_lines.append(line)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        self._sock.close()

    def __enter__(self) -> "MarkerSender":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# ---------------------------------------------------------------------------
# Receiver

def wall_clock_us(_line: bytes | None = None) -> int:
    return time.time_ns() // 1000


class SimulatedArrivalClock:
    """Replay-mode arrival clock: alpha + beta * decoded sender time + jitter.

    Replayed sessions run much faster than real time, so wall-clock arrival
    stamps would imply an absurd drift; this clock derives arrivals from the
    line's own sender timestamp instead, with seeded Gaussian jitter.
    """

    def __init__(self, alpha_us: float, beta: float, jitter_us: float = 0.0,
                 seed: int = 0):
        self.alpha_us = alpha_us
        self.beta = beta
        self.jitter_us = jitter_us
        self._rng = np.random.default_rng(seed)

    def __call__(self, line: bytes) -> int:
        t = decode_marker(line).t_us
        jitter = self.jitter_us * self._rng.standard_normal() if self.jitter_us else 0.0
        return int(round(self.alpha_us + self.beta * t + jitter))


class MarkerReceiver:
    """TCP listener logging one marker session as ``<arrival_t_us> <raw line>``.

    ``arrival_clock`` maps each raw line to a receiver-clock microsecond
    stamp; the default is the wall clock.
    """

    def __init__(
        self,
        log_path: str | Path,
        host: str = "127.0.0.1",
        port: int = 0,
        arrival_clock=None,
    ):
        self.log_path = Path(log_path)
        self.arrival_clock = arrival_clock or wall_clock_us
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(1)
        self._thread: threading.Thread | None = None
        self.error: Exception | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._listener.getsockname()

    def serve_once(self, timeout: float = 30.0) -> None:
        """Accept one connection and log its lines until the sender closes."""
        self._listener.settimeout(timeout)
        conn, _ = self._listener.accept()
        conn.settimeout(timeout)
        try:
            with open(self.log_path, "w") as log, conn.makefile("rb") as stream:
                for raw in stream:
                    arrival = self.arrival_clock(raw)
                    log.write(f"{arrival} {raw.decode('ascii', 'replace')}")
                    if not raw.endswith(b"\n"):
                        log.write("\n")
        finally:
            conn.close()

    def start(self, timeout: float = 30.0) -> "MarkerReceiver":
        def run():
            try:
                self.serve_once(timeout)
            except Exception as exc:  # surfaced by join()
                self.error = exc

        self._thread = threading.Thread(target=run, daemon=True)
        self._thread.start()
        return self

    def join(self, timeout: float = 30.0) -> None:
        if self._thread is not None:
            self._thread.join(timeout)
        self._listener.close()
        if self.error is not None:
            raise self.error


# ---------------------------------------------------------------------------
# Log handling

def parse_marker_log(path: str | Path) -> list[tuple[int, MarkerMessage]]:
    """Read a receiver log into (arrival_us, message) pairs."""
    out = []
    for lineno, text in enumerate(Path(path).read_text().splitlines(), start=1):
        if not text.strip():
            continue
        try:
            arrival_text, raw = text.split(" ", 1)
            arrival = int(arrival_text)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed log line") from None
        out.append((arrival, decode_marker(raw.encode("ascii") + b"\n")))
    return out


def sync_pairs(entries: list[tuple[int, MarkerMessage]]) -> list[tuple[int, int]]:
    """(sender t_us, receiver arrival_us) pairs from the SYNC lines of a log."""
    return [(m.t_us, arrival) for arrival, m in entries if m.kind == "SYNC"]


def clock_map_from_log(path: str | Path) -> ClockMap:
    return fit_clock_map(sync_pairs(parse_marker_log(path)))


def edge_events_from_log(
    entries: list[tuple[int, MarkerMessage]],
) -> list[tuple[int, int, float]]:
    """(onset_us, offset_us, severity) triples from a log's ON/OFF lines."""
    out = []
    pending: MarkerMessage | None = None
    for _, m in entries:
        if m.kind == "ON":
            if pending is not None:
                raise ValueError("two ON markers without an OFF between them")
            pending = m
        elif m.kind == "OFF":
            if pending is None:
                raise ValueError("OFF marker without a preceding ON")
            out.append((pending.t_us, m.t_us, m.severity))
            pending = None
    if pending is not None:
        raise ValueError("log ended with an unmatched ON marker")
    return out
