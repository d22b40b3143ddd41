"""External sorting that exploits a known partial order of its input.

Two executable sorts over typed-key records:

* sort_srs - standard replacement selection: heap-based run formation,
  spill to length-prefixed block files, loser-tree k-way merge.
* sort_mrs - modified replacement selection: the input is already sorted on
  a prefix of the target order, so records are grouped into partial sort
  segments (maximal runs sharing one prefix value) and each segment is
  sorted independently on the remaining suffix with the same machinery.
  Segments that fit in memory spill nothing and are emitted as soon as the
  next segment starts, which keeps the operator pipelined.

Both report comparison counts, spill blocks, run counts and how much input
was consumed before the first output record.
"""

from __future__ import annotations

import math
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .orders import SortOrder, subsumes

# A record is (key values tuple, payload bytes); key values are ints or strs
# arranged positionally in target-order sequence.
Record = tuple


class SortEngineError(Exception):
    pass


class InputNotSortedError(SortEngineError):
    """The input violated the declared known prefix order."""

    def __init__(self, position: int):
        super().__init__(f"input record {position} regresses on the known prefix")
        self.position = position


@dataclass(frozen=True)
class SortSpec:
    """Target order, the prefix known to hold, and the memory budget."""

    target: SortOrder
    known_prefix: SortOrder = SortOrder()
    memory_records: int = 4096
    memory_blocks: int = 64
    block_size: int = 4096

    def __post_init__(self) -> None:
        if not self.target:
            raise SortEngineError("target order must be non-empty")
        if not subsumes(self.target, self.known_prefix):
            raise SortEngineError("known prefix must be a prefix of the target order")
        if self.memory_records < 1 or self.memory_blocks < 3 or self.block_size < 16:
            raise SortEngineError("memory budget too small")

    @property
    def prefix_len(self) -> int:
        return len(self.known_prefix)


@dataclass
class SortMetrics:
    comparisons: int = 0
    blocks_written: int = 0
    blocks_read: int = 0
    runs_generated: int = 0
    first_output_index: int = 0
    segments_seen: int = 0

    def to_dict(self) -> dict:
        return {
            "comparisons": self.comparisons,
            "blocks_written": self.blocks_written,
            "blocks_read": self.blocks_read,
            "runs_generated": self.runs_generated,
            "first_output_index": self.first_output_index,
            "segments_seen": self.segments_seen,
        }


# -- spill files ---------------------------------------------------------------


def _encode_record(record: Record) -> bytes:
    keys, payload = record
    parts = [struct.pack(">I", len(keys))]
    for value in keys:
        if isinstance(value, int):
            parts.append(b"i" + struct.pack(">q", value))
        elif isinstance(value, str):
            raw = value.encode("utf-8")
            parts.append(b"s" + struct.pack(">I", len(raw)) + raw)
        else:
            raise SortEngineError(f"unsupported key type {type(value).__name__}")
    parts.append(struct.pack(">I", len(payload)))
    parts.append(payload)
    body = b"".join(parts)
    return struct.pack(">I", len(body)) + body


def _decode_records(blob: bytes) -> Iterator[Record]:
    offset = 0
    while offset < len(blob):
        (length,) = struct.unpack_from(">I", blob, offset)
        offset += 4
        end = offset + length
        (arity,) = struct.unpack_from(">I", blob, offset)
        offset += 4
        keys = []
        for _ in range(arity):
            tag = blob[offset:offset + 1]
            offset += 1
            if tag == b"i":
                (value,) = struct.unpack_from(">q", blob, offset)
                offset += 8
                keys.append(value)
            else:
                (slen,) = struct.unpack_from(">I", blob, offset)
                offset += 4
                keys.append(blob[offset:offset + slen].decode("utf-8"))
                offset += slen
        (plen,) = struct.unpack_from(">I", blob, offset)
        offset += 4
        payload = blob[offset:offset + plen]
        offset += plen
        assert offset == end
        yield (tuple(keys), payload)


class _SpillArea:
    """Scratch directory holding run files; tracks block I/O in the metrics."""

    def __init__(self, block_size: int, metrics: SortMetrics):
        self.block_size = block_size
        self.metrics = metrics
        self._dir = tempfile.TemporaryDirectory(prefix="ordsel-sort-")
        self._count = 0

    def open_run(self) -> "_RunWriter":
        path = Path(self._dir.name) / f"run-{self._count:06d}.bin"
        self._count += 1
        return _RunWriter(path, self)

    def write_run(self, records: Iterable[Record]) -> Path:
        writer = self.open_run()
        for record in records:
            writer.write(record)
        return writer.close()

    def read_run(self, path: Path) -> Iterator[Record]:
        blob = path.read_bytes()
        if blob:
            self.metrics.blocks_read += math.ceil(len(blob) / self.block_size)
        path.unlink()
        return _decode_records(blob)

    def close(self) -> None:
        self._dir.cleanup()


class _RunWriter:
    """Streams one sorted run to disk; never buffers more than one record."""

    def __init__(self, path: Path, area: _SpillArea):
        self.path = path
        self.area = area
        self.bytes_written = 0
        self._fh = open(path, "wb")

    def write(self, record: Record) -> None:
        blob = _encode_record(record)
        self._fh.write(blob)
        self.bytes_written += len(blob)

    def close(self) -> Path:
        self._fh.close()
        if self.bytes_written:
            self.area.metrics.blocks_written += math.ceil(
                self.bytes_written / self.area.block_size
            )
        return self.path


# -- counted comparisons ---------------------------------------------------------


class _RunHeap:
    """Binary min-heap over (run, key, seq) entries with counted comparisons."""

    def __init__(self, metrics: SortMetrics):
        self.metrics = metrics
        self.items: list = []

    def __len__(self) -> int:
        return len(self.items)

    def _less(self, a, b) -> bool:
        self.metrics.comparisons += 1
        return a < b

    def push(self, entry) -> None:
        items = self.items
        items.append(entry)
        i = len(items) - 1
        while i > 0:
            parent = (i - 1) // 2
            if self._less(items[i], items[parent]):
                items[i], items[parent] = items[parent], items[i]
                i = parent
            else:
                break

    def pop(self):
        items = self.items
        top = items[0]
        last = items.pop()
        if items:
            items[0] = last
            self._sift_down(0)
        return top

    def _sift_down(self, i: int) -> None:
        items = self.items
        n = len(items)
        while True:
            left, right = 2 * i + 1, 2 * i + 2
            smallest = i
            if left < n and self._less(items[left], items[smallest]):
                smallest = left
            if right < n and self._less(items[right], items[smallest]):
                smallest = right
            if smallest == i:
                return
            items[i], items[smallest] = items[smallest], items[i]
            i = smallest


class _LoserTree:
    """K-way merge by tournament tree; one counted comparison per match."""

    def __init__(self, sources: list[Iterator[Record]], key_slice: slice, metrics: SortMetrics):
        self.metrics = metrics
        self.key_slice = key_slice
        self.sources = sources
        self.k = len(sources)
        self.heads: list = [next(src, None) for src in sources]
        self.tree = [-1] * max(self.k, 1)
        for i in range(self.k):
            self._play(i)

    def _rank(self, i: int):
        head = self.heads[i]
        return (1, i) if head is None else (0, head[0][self.key_slice], i)

    def _less(self, i: int, j: int) -> bool:
        a, b = self._rank(i), self._rank(j)
        if a[0] == 1 or b[0] == 1:  # exhausted sources lose without a comparison
            return a < b
        self.metrics.comparisons += 1
        return a < b

    def _play(self, leaf: int) -> None:
        node = (leaf + self.k) // 2
        winner = leaf
        while node > 0:
            loser = self.tree[node]
            if loser == -1:
                self.tree[node] = winner
                return
            if self._less(loser, winner):
                self.tree[node], winner = winner, loser
            node //= 2
        self.tree[0] = winner

    def __iter__(self) -> Iterator[Record]:
        if self.k == 0:
            return
        while True:
            winner = self.tree[0]
            head = self.heads[winner]
            if head is None:
                return
            yield head
            self.heads[winner] = next(self.sources[winner], None)
            self._play(winner)


# -- run formation ----------------------------------------------------------------


class _ReplacementSelection:
    """Replacement-selection run formation over one record stream.

    Records compare on key[key_slice].  While the heap is below the memory
    budget nothing spills; once full, each arrival evicts the minimum of the
    current run to the open run file, and an arrival smaller than the record
    just evicted is tagged for the next run.  finish() returns the spilled
    run files plus the in-memory tails (which are never written) for merging.
    """

    def __init__(self, spec: SortSpec, key_slice: slice, spill: _SpillArea, metrics: SortMetrics):
        self.spec = spec
        self.key_slice = key_slice
        self.spill = spill
        self.metrics = metrics
        self.heap = _RunHeap(metrics)
        self.seq = 0
        self.current_run = 1
        self.writer: _RunWriter | None = None
        self.run_paths: list[Path] = []
        self.spilled = False

    def _entry(self, run: int, record: Record):
        self.seq += 1
        return (run, record[0][self.key_slice], self.seq, record)

    def add(self, record: Record) -> None:
        if len(self.heap) < self.spec.memory_records:
            self.heap.push(self._entry(self.current_run, record))
            return
        self.spilled = True
        run, key, _, evicted = self.heap.pop()
        if run != self.current_run:
            self._close_run()
            self.current_run = run
        if self.writer is None:
            self.writer = self.spill.open_run()
        self.writer.write(evicted)
        self.metrics.comparisons += 1
        tag = run if record[0][self.key_slice] >= key else run + 1
        self.heap.push(self._entry(tag, record))

    def _close_run(self) -> None:
        if self.writer is not None:
            self.run_paths.append(self.writer.close())
            self.writer = None

    def finish(self) -> tuple[list[Path], list[list[Record]], int]:
        """Drain: (disk runs, in-memory sorted run tails, runs formed)."""
        tails: dict[int, list[Record]] = {}
        max_run = self.current_run if self.spilled else 0
        while len(self.heap):
            run, _, _, record = self.heap.pop()
            tails.setdefault(run, []).append(record)
            if self.spilled:
                max_run = max(max_run, run)
        self._close_run()
        memory_runs = [tails[r] for r in sorted(tails)]
        return self.run_paths, memory_runs, max_run


def _sorted_stream(
    engine: _ReplacementSelection,
    spec: SortSpec,
    spill: _SpillArea,
    metrics: SortMetrics,
) -> Iterator[Record]:
    """Merge whatever the run formation produced into one sorted stream."""
    run_paths, memory_runs, runs = engine.finish()
    metrics.runs_generated += runs
    if not run_paths:
        for run in memory_runs:
            yield from run
        return
    sources: list[Iterator[Record]] = [spill.read_run(p) for p in run_paths]
    sources.extend(iter(run) for run in memory_runs)
    fan_in = max(2, spec.memory_blocks - 1)
    while len(sources) > fan_in:
        merged = _LoserTree(sources[:fan_in], engine.key_slice, metrics)
        path = spill.write_run(merged)
        sources = [spill.read_run(path)] + sources[fan_in:]
    yield from _LoserTree(sources, engine.key_slice, metrics)


# -- the two sorts ------------------------------------------------------------------


def sort_srs(records: Iterable[Record], spec: SortSpec) -> tuple[Iterator[Record], SortMetrics]:
    """Standard replacement selection; any known input prefix is ignored."""
    metrics = SortMetrics()

    def stream() -> Iterator[Record]:
        spill = _SpillArea(spec.block_size, metrics)
        try:
            engine = _ReplacementSelection(spec, slice(0, len(spec.target)), spill, metrics)
            consumed = 0
            for record in records:
                engine.add(record)
                consumed += 1
            first = True
            for out in _sorted_stream(engine, spec, spill, metrics):
                if first:
                    metrics.first_output_index = consumed
                    first = False
                yield out
        finally:
            spill.close()

    return stream(), metrics


def sort_mrs(records: Iterable[Record], spec: SortSpec) -> tuple[Iterator[Record], SortMetrics]:
    """Partial-order-aware sort: one independent suffix sort per segment.

    The input must already be ordered on spec.known_prefix; a regression
    raises InputNotSortedError with the offending 1-based position.  With
    the full order known (k = n) the sort degenerates to a validated
    pass-through that emits each record as it arrives.
    """
    metrics = SortMetrics()
    k = spec.prefix_len
    suffix = slice(k, len(spec.target))
    passthrough = k == len(spec.target)

    def stream() -> Iterator[Record]:
        spill = _SpillArea(spec.block_size, metrics)
        try:
            current_prefix = None
            engine: _ReplacementSelection | None = None
            consumed = 0
            emitted = False
            position = 0
            for record in records:
                position += 1
                prefix = record[0][:k]
                if current_prefix is None or prefix != current_prefix:
                    if current_prefix is not None and prefix < current_prefix:
                        raise InputNotSortedError(position)
                    if engine is not None:
                        for out in _sorted_stream(engine, spec, spill, metrics):
                            if not emitted:
                                metrics.first_output_index = consumed
                                emitted = True
                            yield out
                        engine = None
                    metrics.segments_seen += 1
                    current_prefix = prefix
                if passthrough:
                    consumed += 1
                    if not emitted:
                        metrics.first_output_index = consumed
                        emitted = True
                    yield record
                    continue
                if engine is None:
                    engine = _ReplacementSelection(spec, suffix, spill, metrics)
                engine.add(record)
                consumed += 1
            if engine is not None:
                for out in _sorted_stream(engine, spec, spill, metrics):
                    if not emitted:
                        metrics.first_output_index = consumed
                        emitted = True
                    yield out
        finally:
            spill.close()

    return stream(), metrics


def compare_sorts(records: list[Record], spec: SortSpec) -> list[dict]:
    """Run both sorts on the same input and report their metrics side by side.

    Asserts that the two outputs carry identical key sequences and are
    permutations of the input.
    """
    mrs_stream, mrs_metrics = sort_mrs(iter(records), spec)
    mrs_out = list(mrs_stream)
    srs_stream, srs_metrics = sort_srs(iter(records), spec)
    srs_out = list(srs_stream)

    if [r[0] for r in mrs_out] != [r[0] for r in srs_out]:
        raise SortEngineError("MRS and SRS key sequences differ")
    if sorted(mrs_out) != sorted(records):
        raise SortEngineError("MRS output is not a permutation of the input")

    segment_size = max(
        (len(seg) for seg in iter_segments(records, spec.prefix_len)), default=0
    )
    rows = []
    for alg, metrics in (("mrs", mrs_metrics), ("srs", srs_metrics)):
        rows.append(
            {
                "rows": len(records),
                "segment_size": segment_size,
                "alg": alg,
                **metrics.to_dict(),
            }
        )
    return rows


def iter_segments(records: Iterable[Record], k: int):
    """Group records into partial-sort segments by their k-attribute prefix."""
    current = None
    bucket: list[Record] = []
    for record in records:
        prefix = record[0][:k]
        if bucket and prefix != current:
            yield bucket
            bucket = []
        current = prefix
        bucket.append(record)
    if bucket:
        yield bucket
