"""Wire protocol: framing, message vocabulary, transports and event logs.

Frame layout, bit-exact::

    [length: u32 LE][kind: u8][body]      length = len(body) + 1

Frames longer than the configured maximum (default 32 MiB) are rejected
before transmission. Messages use the `compact` codec below by default; the
`baseline` codec (pickle) exists for the serialization ablation and must be
configured identically on both ends.

Compact message bodies (strings are u8-length-prefixed UTF-8, integers LE)::

    HELLO                 [collab_id pstr][shard_size u64][num_classes u32]
    SPEC_BROADCAST        [round u32][family pstr][n u8] n*([key pstr][value f64])
    TASK_POLL             [collab_id pstr][round u32]
    TASK_ASSIGN           [task pstr][round u32]
    WAIT / PROCEED / HOLD / ACK      (empty)
    MODEL_UPLOAD          [round u32][envelope*]
    HYPOTHESIS_BROADCAST  [round u32][count u32] count*[envelope*]
    ERROR_UPLOAD          [round u32][errors u64-count + f64s][weight_norm f64]
                          [nbits u64] J*[packed bitmap, little bit order]
    DECISION_BROADCAST    [round u32][best u32][alpha f64][global_error f64]
                          [global_norm f64]
    SYNCH                 [collab_id pstr][task pstr][round u32]
    METRIC_UPLOAD         [round u32][name pstr][value f64]
    BYE                   [collab_id pstr]

    envelope* = [origin_id pstr][round u32][canonical envelope bytes]
"""
from __future__ import annotations

import pickle
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np

from .codec import Reader, Writer
from .core import ErrorReport, RoundDecision, WeakModelEnvelope, envelope_from_reader
from .errors import ConnectionClosed, FrameTooLarge, MalformedFrame

MAX_FRAME_SIZE = 32 * 1024 * 1024
BASELINE_FRAME_SIZE = 2 * 1024 * 1024


class Kind(IntEnum):
    HELLO = 1
    SPEC_BROADCAST = 2
    TASK_POLL = 3
    TASK_ASSIGN = 4
    WAIT = 5
    MODEL_UPLOAD = 6
    HYPOTHESIS_BROADCAST = 7
    ERROR_UPLOAD = 8
    DECISION_BROADCAST = 9
    SYNCH = 10
    PROCEED = 11
    HOLD = 12
    METRIC_UPLOAD = 13
    BYE = 14
    ACK = 15


# --- message vocabulary -------------------------------------------------------


@dataclass(frozen=True)
class Hello:
    collab_id: str
    shard_size: int
    num_classes: int


@dataclass(frozen=True)
class SpecBroadcast:
    round: int
    family_id: str
    hyperparameters: Mapping[str, float]


@dataclass(frozen=True)
class TaskPoll:
    collab_id: str
    round: int


@dataclass(frozen=True)
class TaskAssign:
    task: str
    round: int


@dataclass(frozen=True)
class Wait:
    pass


@dataclass(frozen=True)
class ModelUpload:
    round: int
    envelope: WeakModelEnvelope


@dataclass(frozen=True)
class HypothesisBroadcast:
    round: int
    envelopes: tuple[WeakModelEnvelope, ...]


@dataclass(frozen=True, eq=False)
class ErrorUpload:
    round: int
    report: ErrorReport

    def __eq__(self, other):
        if not isinstance(other, ErrorUpload):
            return NotImplemented
        return self.round == other.round and self.report == other.report


@dataclass(frozen=True)
class DecisionBroadcast:
    decision: RoundDecision


@dataclass(frozen=True)
class Synch:
    collab_id: str
    task: str
    round: int


@dataclass(frozen=True)
class Proceed:
    pass


@dataclass(frozen=True)
class Hold:
    pass


@dataclass(frozen=True)
class MetricUpload:
    round: int
    name: str
    value: float


@dataclass(frozen=True)
class Bye:
    collab_id: str


@dataclass(frozen=True)
class Ack:
    pass


Message = (
    Hello | SpecBroadcast | TaskPoll | TaskAssign | Wait | ModelUpload
    | HypothesisBroadcast | ErrorUpload | DecisionBroadcast | Synch
    | Proceed | Hold | MetricUpload | Bye | Ack
)

_KIND_OF = {
    Hello: Kind.HELLO,
    SpecBroadcast: Kind.SPEC_BROADCAST,
    TaskPoll: Kind.TASK_POLL,
    TaskAssign: Kind.TASK_ASSIGN,
    Wait: Kind.WAIT,
    ModelUpload: Kind.MODEL_UPLOAD,
    HypothesisBroadcast: Kind.HYPOTHESIS_BROADCAST,
    ErrorUpload: Kind.ERROR_UPLOAD,
    DecisionBroadcast: Kind.DECISION_BROADCAST,
    Synch: Kind.SYNCH,
    Proceed: Kind.PROCEED,
    Hold: Kind.HOLD,
    MetricUpload: Kind.METRIC_UPLOAD,
    Bye: Kind.BYE,
    Ack: Kind.ACK,
}


def _write_envelope(w: Writer, env: WeakModelEnvelope) -> None:
    w.pstr(env.origin_id)
    w.u32(env.round)
    w.raw(env.to_bytes())


def _read_envelope(r: Reader) -> WeakModelEnvelope:
    origin = r.pstr()
    round_no = r.u32()
    return envelope_from_reader(r, origin_id=origin, round_no=round_no)


def encode_message(msg: Message) -> tuple[int, bytes]:
    kind = _KIND_OF[type(msg)]
    w = Writer()
    if isinstance(msg, Hello):
        w.pstr(msg.collab_id).u64(msg.shard_size).u32(msg.num_classes)
    elif isinstance(msg, SpecBroadcast):
        w.u32(msg.round).pstr(msg.family_id).u8(len(msg.hyperparameters))
        for key in sorted(msg.hyperparameters):
            w.pstr(key).f64(float(msg.hyperparameters[key]))
    elif isinstance(msg, TaskPoll):
        w.pstr(msg.collab_id).u32(msg.round)
    elif isinstance(msg, TaskAssign):
        w.pstr(msg.task).u32(msg.round)
    elif isinstance(msg, ModelUpload):
        w.u32(msg.round)
        _write_envelope(w, msg.envelope)
    elif isinstance(msg, HypothesisBroadcast):
        w.u32(msg.round).u32(len(msg.envelopes))
        for env in msg.envelopes:
            _write_envelope(w, env)
    elif isinstance(msg, ErrorUpload):
        report = msg.report
        w.u32(msg.round)
        w.f64_array(report.errors)
        w.f64(report.weight_norm)
        n = report.mispredictions.shape[1] if report.mispredictions.ndim == 2 else 0
        w.u64(n)
        for j in range(report.mispredictions.shape[0]):
            w.raw(np.packbits(report.mispredictions[j], bitorder="little").tobytes())
    elif isinstance(msg, DecisionBroadcast):
        d = msg.decision
        w.u32(d.round).u32(d.best_index).f64(d.alpha).f64(d.global_error).f64(d.global_norm)
    elif isinstance(msg, Synch):
        w.pstr(msg.collab_id).pstr(msg.task).u32(msg.round)
    elif isinstance(msg, MetricUpload):
        w.u32(msg.round).pstr(msg.name).f64(msg.value)
    elif isinstance(msg, Bye):
        w.pstr(msg.collab_id)
    elif isinstance(msg, (Wait, Proceed, Hold, Ack)):
        pass
    else:
        raise MalformedFrame(f"cannot encode {type(msg).__name__}")
    return int(kind), w.getvalue()


def decode_message(kind: int, body: bytes) -> Message:
    r = Reader(body, MalformedFrame)
    try:
        tag = Kind(kind)
    except ValueError:
        raise MalformedFrame(f"unknown message kind {kind}") from None
    if tag == Kind.HELLO:
        msg = Hello(r.pstr(), r.u64(), r.u32())
    elif tag == Kind.SPEC_BROADCAST:
        round_no = r.u32()
        family = r.pstr()
        hp = {}
        for _ in range(r.u8()):
            key = r.pstr()
            hp[key] = r.f64()
        msg = SpecBroadcast(round_no, family, hp)
    elif tag == Kind.TASK_POLL:
        msg = TaskPoll(r.pstr(), r.u32())
    elif tag == Kind.TASK_ASSIGN:
        msg = TaskAssign(r.pstr(), r.u32())
    elif tag == Kind.WAIT:
        msg = Wait()
    elif tag == Kind.MODEL_UPLOAD:
        msg = ModelUpload(r.u32(), _read_envelope(r))
    elif tag == Kind.HYPOTHESIS_BROADCAST:
        round_no = r.u32()
        count = r.u32()
        msg = HypothesisBroadcast(round_no, tuple(_read_envelope(r) for _ in range(count)))
    elif tag == Kind.ERROR_UPLOAD:
        round_no = r.u32()
        errors = r.f64_array()
        weight_norm = r.f64()
        n = r.u64()
        nbytes = (n + 7) // 8
        rows = []
        for _ in range(len(errors)):
            packed = np.frombuffer(r.raw(nbytes), dtype=np.uint8)
            rows.append(np.unpackbits(packed, count=n, bitorder="little").astype(bool))
        bitmap = np.array(rows, dtype=bool).reshape(len(errors), n)
        msg = ErrorUpload(round_no, ErrorReport(errors, weight_norm, bitmap, round_no))
    elif tag == Kind.DECISION_BROADCAST:
        round_no = r.u32()
        msg = DecisionBroadcast(RoundDecision(r.u32(), r.f64(), r.f64(), r.f64(), round_no))
    elif tag == Kind.SYNCH:
        msg = Synch(r.pstr(), r.pstr(), r.u32())
    elif tag == Kind.PROCEED:
        msg = Proceed()
    elif tag == Kind.HOLD:
        msg = Hold()
    elif tag == Kind.METRIC_UPLOAD:
        msg = MetricUpload(r.u32(), r.pstr(), r.f64())
    elif tag == Kind.BYE:
        msg = Bye(r.pstr())
    elif tag == Kind.ACK:
        msg = Ack()
    else:  # pragma: no cover - exhaustive above
        raise MalformedFrame(f"unhandled kind {tag}")
    r.expect_end()
    return msg


# --- framing -------------------------------------------------------------------


def send_frame(conn, kind: int, body: bytes, max_frame_size: int = MAX_FRAME_SIZE) -> None:
    length = len(body) + 1
    if length > max_frame_size:
        raise FrameTooLarge(f"frame of {length} bytes exceeds limit {max_frame_size}")
    conn.send_all(struct.pack("<I", length) + bytes([kind]) + body)


def recv_frame(conn, max_frame_size: int = MAX_FRAME_SIZE) -> tuple[int, bytes]:
    header = conn.recv_exact(4)
    (length,) = struct.unpack("<I", header)
    if length < 1:
        raise MalformedFrame("frame with empty kind byte")
    if length > max_frame_size:
        raise FrameTooLarge(f"incoming frame of {length} bytes exceeds limit {max_frame_size}")
    data = conn.recv_exact(length)
    return data[0], data[1:]


class FrameChannel:
    """A message pipe over any reliable ordered byte connection."""

    def __init__(self, conn, max_frame_size: int = MAX_FRAME_SIZE, codec: str = "compact"):
        if codec not in ("compact", "baseline"):
            raise MalformedFrame(f"unknown codec {codec!r}")
        self.conn = conn
        self.max_frame_size = max_frame_size
        self.codec = codec

    def send(self, msg: Message) -> None:
        if self.codec == "compact":
            kind, body = encode_message(msg)
        else:
            kind = int(_KIND_OF[type(msg)])
            body = pickle.dumps(msg, protocol=pickle.HIGHEST_PROTOCOL)
        send_frame(self.conn, kind, body, self.max_frame_size)

    def recv(self) -> Message:
        kind, body = recv_frame(self.conn, self.max_frame_size)
        if self.codec == "compact":
            return decode_message(kind, body)
        try:
            msg = pickle.loads(body)
        except Exception as exc:
            raise MalformedFrame(f"baseline codec failed to decode: {exc}") from exc
        if _KIND_OF.get(type(msg)) != kind:
            raise MalformedFrame("baseline codec payload disagrees with frame kind")
        return msg

    def close(self) -> None:
        self.conn.close()


# --- transports -------------------------------------------------------------------


class SocketConn:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        try:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            pass

    def send_all(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise ConnectionClosed(str(exc)) from exc

    def recv_exact(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self.sock.recv(n - got)
            except OSError as exc:
                raise ConnectionClosed(str(exc)) from exc
            if not chunk:
                raise ConnectionClosed("peer closed the connection")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def connect_tcp(host: str, port: int, timeout: float = 30.0) -> SocketConn:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(None)
    return SocketConn(sock)


class TcpListener:
    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(128)

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()[:2]

    def accept(self) -> SocketConn:
        try:
            conn, _ = self.sock.accept()
        except OSError as exc:
            raise ConnectionClosed(str(exc)) from exc
        return SocketConn(conn)

    def close(self) -> None:
        try:
            # closing alone does not wake a blocked accept(); shutdown does
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class _ByteQueue:
    def __init__(self):
        self._buf = bytearray()
        self._cond = threading.Condition()
        self._closed = False

    def write(self, data: bytes) -> None:
        with self._cond:
            if self._closed:
                raise ConnectionClosed("pipe closed")
            self._buf += data
            self._cond.notify_all()

    def read_exact(self, n: int) -> bytes:
        with self._cond:
            while len(self._buf) < n:
                if self._closed:
                    raise ConnectionClosed("pipe closed")
                self._cond.wait()
            out = bytes(self._buf[:n])
            del self._buf[:n]
            return out

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class MemoryConn:
    """One end of an in-process duplex byte pipe."""

    def __init__(self, read_q: _ByteQueue, write_q: _ByteQueue):
        self._read_q = read_q
        self._write_q = write_q

    def send_all(self, data: bytes) -> None:
        self._write_q.write(data)

    def recv_exact(self, n: int) -> bytes:
        return self._read_q.read_exact(n)

    def close(self) -> None:
        self._read_q.close()
        self._write_q.close()


def memory_pair() -> tuple[MemoryConn, MemoryConn]:
    a, b = _ByteQueue(), _ByteQueue()
    return MemoryConn(a, b), MemoryConn(b, a)


class MemoryListener:
    """Accept side of in-process connections, mirroring TcpListener."""

    def __init__(self):
        self._pending: deque[MemoryConn] = deque()
        self._cond = threading.Condition()
        self._closed = False

    def connect(self) -> MemoryConn:
        client, server = memory_pair()
        with self._cond:
            if self._closed:
                raise ConnectionClosed("listener closed")
            self._pending.append(server)
            self._cond.notify_all()
        return client

    def accept(self) -> MemoryConn:
        with self._cond:
            while not self._pending:
                if self._closed:
                    raise ConnectionClosed("listener closed")
                self._cond.wait()
            return self._pending.popleft()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            pending = list(self._pending)
            self._pending.clear()
            self._cond.notify_all()
        for conn in pending:  # unblock clients whose connect was never accepted
            conn.close()


# --- protocol event log ------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    """One aggregator-side protocol observation, in coordinator order."""

    seq: int
    kind: str       # "recv:HELLO", "send:PROCEED", "broadcast:...", "barrier"
    collab: str
    round: int
    detail: str = ""


def verify_event_log(
    events: Sequence[Event],
    *,
    n: int,
    rounds: int,
    tasks: Sequence[str],
    mode: str = "adaboost_f",
) -> list[str]:
    """Check the barrier and counting invariants on a recorded event log.

    Returns a list of human-readable violations; an empty list means the
    run kept every protocol promise: nobody enters task k+1 of a round
    before all n collaborators synched task k, PROCEED is never sent early,
    uploads precede their barrier's release, rounds never regress, and each
    round carries exactly one decision broadcast (adaboost mode).
    """
    violations: list[str] = []
    first_synch: dict[tuple[str, int], dict[str, int]] = {}
    assigns: dict[tuple[str, int], dict[str, int]] = {}
    uploads: dict[tuple[str, int], list[int]] = {}
    decision_broadcasts: dict[int, int] = {}
    last_round: dict[str, int] = {}

    upload_kind = {"train": "recv:MODEL_UPLOAD", "weak_learners_validate": "recv:ERROR_UPLOAD",
                   "adaboost_validate": "recv:METRIC_UPLOAD"}

    for ev in events:
        if ev.kind == "recv:SYNCH":
            first_synch.setdefault((ev.detail, ev.round), {}).setdefault(ev.collab, ev.seq)
        elif ev.kind == "send:TASK_ASSIGN":
            assigns.setdefault((ev.detail, ev.round), {}).setdefault(ev.collab, ev.seq)
        elif ev.kind in ("recv:MODEL_UPLOAD", "recv:ERROR_UPLOAD", "recv:METRIC_UPLOAD"):
            uploads.setdefault((ev.kind, ev.round), []).append(ev.seq)
        elif ev.kind == "broadcast:DECISION_BROADCAST":
            decision_broadcasts[ev.round] = decision_broadcasts.get(ev.round, 0) + 1
        if ev.kind.startswith("recv:") and ev.kind not in ("recv:HELLO", "recv:BYE"):
            prev = last_round.get(ev.collab, 0)
            if ev.round < prev:
                violations.append(
                    f"collaborator {ev.collab} regressed from round {prev} to {ev.round} at seq {ev.seq}"
                )
            last_round[ev.collab] = max(prev, ev.round)

    def barrier_release(task: str, round_no: int) -> int | None:
        done = first_synch.get((task, round_no))
        if done is None or len(done) < n:
            return None
        return max(done.values())

    for t in range(1, rounds + 1):
        for i, task in enumerate(tasks):
            release = barrier_release(task, t)
            if release is None:
                violations.append(f"round {t}: barrier for {task} never completed")
                continue
            # nobody may be assigned the next task before this release
            if i + 1 < len(tasks):
                nxt = (tasks[i + 1], t)
            elif t < rounds:
                nxt = (tasks[0], t + 1)
            else:
                nxt = None
            if nxt is not None:
                for collab, seq in assigns.get(nxt, {}).items():
                    if seq < release:
                        violations.append(
                            f"round {t}: {collab} assigned {nxt[0]} (round {nxt[1]}, seq {seq}) "
                            f"before the {task} barrier released at seq {release}"
                        )
            kind = upload_kind.get(task)
            if kind is not None:
                seqs = uploads.get((kind, t), [])
                early = [s for s in seqs if s <= release]
                if len(early) < n:
                    violations.append(
                        f"round {t}: only {len(early)}/{n} {kind} arrived before the "
                        f"{task} barrier released"
                    )
        if mode == "adaboost_f" and decision_broadcasts.get(t, 0) != 1:
            violations.append(
                f"round {t}: {decision_broadcasts.get(t, 0)} decision broadcasts (expected 1)"
            )
    return violations
