from __future__ import annotations

import threading
import time

from ..protocol import MemoryRecord, RemoteError


class MemoryStore:
    """Node-local memories.

    Writes replace payload, eval and sample_id atomically under one lock.
    Every change bumps a node-wide sequence number, which lets readers block
    until any record they care about changes.
    """

    def __init__(self):
        self._records: dict[str, MemoryRecord] = {}
        self._seqs: dict[str, int] = {}
        self._seq = 0
        self._cond = threading.Condition()

    def __contains__(self, name):
        return name in self._records

    def __len__(self):
        return len(self._records)

    def names(self):
        return list(self._records)

    def add(self, record: MemoryRecord):
        with self._cond:
            if record.name in self._records:
                raise ValueError(f"memory {record.name!r} already exists")
            self._seq += 1
            self._records[record.name] = record
            self._seqs[record.name] = self._seq
            self._cond.notify_all()

    def _require(self, name):
        rec = self._records.get(name)
        if rec is None:
            raise RemoteError("not_found", f"no memory named {name!r}")
        return rec

    def _snapshot(self, name):
        d = self._records[name].to_dict()
        d["seq"] = self._seqs[name]
        return d

    def get(self, name) -> dict:
        with self._cond:
            self._require(name)
            return self._snapshot(name)

    def write(self, name, payload, eval=0.0, sample_id=0) -> int:
        eval = float(eval)
        sample_id = int(sample_id)
        if not 0.0 <= eval <= 1.0:
            raise RemoteError("bad_request", f"eval {eval} outside [0, 1]")
        if sample_id < 0:
            raise RemoteError("bad_request", "sample_id must be non-negative")
        with self._cond:
            rec = self._require(name)
            if sample_id < rec.sample_id:
                raise RemoteError("stale_write",
                                  f"{name}: sample_id {sample_id} older than {rec.sample_id}")
            self._seq += 1
            self._records[name] = MemoryRecord(rec.name, rec.address, rec.mem_type,
                                               payload, eval, sample_id)
            self._seqs[name] = self._seq
            self._cond.notify_all()
            return self._seq

    def update_payload(self, name, fn) -> dict:
        """Read-modify-write of a payload under the store lock."""
        with self._cond:
            rec = self._require(name)
            self._seq += 1
            self._records[name] = MemoryRecord(rec.name, rec.address, rec.mem_type,
                                               fn(rec.payload), rec.eval, rec.sample_id)
            self._seqs[name] = self._seq
            self._cond.notify_all()
            return self._snapshot(name)

    def clear(self, names):
        """Empty the payloads and reset sample ids; all names are checked first."""
        with self._cond:
            for name in names:
                self._require(name)
            for name in names:
                rec = self._records[name]
                self._seq += 1
                self._records[name] = MemoryRecord(rec.name, rec.address, rec.mem_type,
                                                   None, 0.0, 0)
                self._seqs[name] = self._seq
            self._cond.notify_all()

    def wait_read(self, names, after_seq=0, timeout=0.0, changed_only=False):
        """Block until a named record changed after ``after_seq`` (or timeout).

        Returns ``(records, seq)`` where ``seq`` is the node sequence at read
        time; with ``changed_only`` only records newer than ``after_seq`` come back.
        """
        deadline = time.monotonic() + max(0.0, float(timeout))
        with self._cond:
            for name in names:
                self._require(name)
            while True:
                changed = [n for n in names if self._seqs[n] > after_seq]
                remaining = deadline - time.monotonic()
                if changed or remaining <= 0:
                    break
                self._cond.wait(remaining)
            chosen = changed if changed_only else names
            return [self._snapshot(n) for n in chosen], self._seq
