"""The Node Master: memory store, node Interface server and codelet supervisor.

Two listeners share one handler. The public Interface only exposes the
exported memories; codelets launched by this node talk to an internal
loopback listener with full access to local memories.
"""
from __future__ import annotations

import logging
import os
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from ..protocol import MemoryRecord, MessageServer, RemoteError
from .config import CONTROL_SUFFIXES, CodeletConfig, NodeConfig, control_memory, write_fields
from .memory import MemoryStore

log = logging.getLogger(__name__)

MAX_RELAUNCH_FAILURES = 5
RECONFIGURE_TIMEOUT = 10.0


class StartupError(RuntimeError):
    pass


@dataclass
class ChildEntry:
    config: CodeletConfig
    proc: subprocess.Popen | None = None
    restarts: int = 0
    failures: int = 0          # consecutive launches that died before a health check saw them
    state: str = "stopped"     # live | backoff | failed | stopped
    seen_alive: bool = False
    next_attempt: float = 0.0
    revision: int = 0

    @property
    def pid(self):
        return self.proc.pid if self.proc is not None else None

    def summary(self):
        return {"pid": self.pid, "restarts": self.restarts, "state": self.state,
                "group": self.config.group, "failures": self.failures,
                "revision": self.revision}


def program_exists(program):
    return program is None or Path(program).exists()


class NodeMaster:
    def __init__(self, cfg: NodeConfig, workdir=None, internal_host="127.0.0.1"):
        self.cfg = cfg
        self.workdir = Path(workdir or tempfile.mkdtemp(prefix=f"node-{cfg.node_name}-"))
        self.internal_host = internal_host
        self.store = MemoryStore()
        self.children: dict[str, ChildEntry] = {
            c.name: ChildEntry(c) for c in cfg.codelets
        }
        self.exported = set(cfg.exported_memories)
        self._lock = threading.RLock()
        self._stop = threading.Event()
        self._stopped = threading.Event()
        self._shutting_down = False
        self.server = None
        self.internal_server = None
        self._supervisor = None

    # -- lifecycle ------------------------------------------------------------

    @property
    def address(self):
        return self.server.address if self.server else self.cfg.listen_address

    @property
    def internal_address(self):
        return self.internal_server.address

    def fields_path(self, name):
        return self.workdir / "codelets" / name / "fields.json"

    def start(self):
        missing = [c.name for c in self.cfg.codelets if not program_exists(c.program)]
        if missing:
            raise StartupError(f"codelet program missing for: {', '.join(missing)}")
        for m in self.cfg.memories:
            self.store.add(MemoryRecord(m.name, m.address or self.cfg.listen_address,
                                        m.mem_type, m.payload, m.eval, m.sample_id))
        for c in self.cfg.codelets:
            for kind in CONTROL_SUFFIXES:
                name = control_memory(c.name, kind)
                if name not in self.store:
                    self.store.add(MemoryRecord(name, self.cfg.listen_address, "control"))
        try:
            self.server = MessageServer(self.cfg.listen_address, lambda m: self.handle(m, True))
        except OSError as exc:
            raise StartupError(f"cannot listen on {self.cfg.listen_address}: {exc}") from exc
        self.internal_server = MessageServer(f"{self.internal_host}:0",
                                             lambda m: self.handle(m, False))
        self.server.start()
        self.internal_server.start()
        (self.workdir / "logs").mkdir(parents=True, exist_ok=True)
        for entry in self.children.values():
            write_fields(self.fields_path(entry.config.name), entry.config, entry.revision)
            self._launch(entry)
        self._supervisor = threading.Thread(target=self._supervise_loop, daemon=True,
                                            name=f"supervisor-{self.cfg.node_name}")
        self._supervisor.start()
        log.info("node %s listening on %s with %d codelets", self.cfg.node_name,
                 self.address, len(self.children))
        return self

    def _command(self, cfg: CodeletConfig):
        args = ["--fields", str(self.fields_path(cfg.name)), "--name", cfg.name,
                "--node", self.address, "--internal", self.internal_address]
        if cfg.program is None:
            return [sys.executable, "-m", "cogtwin.codelets.runner"] + args
        if cfg.program.endswith(".py"):
            return [sys.executable, cfg.program] + args
        return [cfg.program] + args

    def _launch(self, entry: ChildEntry):
        logfile = open(self.workdir / "logs" / f"{entry.config.name}.log", "ab")
        try:
            entry.proc = subprocess.Popen(self._command(entry.config), stdout=logfile,
                                          stderr=subprocess.STDOUT, stdin=subprocess.DEVNULL)
        except OSError as exc:
            log.warning("launch of %s failed: %s", entry.config.name, exc)
            entry.proc = None
            return False
        finally:
            logfile.close()
        entry.state = "live"
        entry.seen_alive = False
        return True

    # -- supervision ----------------------------------------------------------

    def _supervise_loop(self):
        while not self._stop.wait(self.cfg.health_period):
            try:
                self.supervise_tick()
            except Exception:  # noqa: BLE001 - the supervisor must keep running
                log.exception("supervise tick failed")

    def _record_failure(self, entry, now):
        entry.failures += 1
        if entry.failures >= MAX_RELAUNCH_FAILURES:
            entry.state = "failed"
            log.error("codelet %s failed %d consecutive launches", entry.config.name,
                      entry.failures)
        else:
            entry.state = "backoff"
            entry.next_attempt = now + self.cfg.health_period * 2 ** (entry.failures - 1)

    def supervise_tick(self, now=None):
        """Relaunch dead children; a child that dies before any check saw it alive counts as a failed launch."""
        now = time.monotonic() if now is None else now
        with self._lock:
            if self._shutting_down:
                return self.process_table()
            for entry in self.children.values():
                if entry.state == "live":
                    if entry.proc is not None and entry.proc.poll() is None:
                        entry.seen_alive = True
                        entry.failures = 0
                        continue
                    if entry.seen_alive:
                        # healthy process that died: relaunch right away
                        log.warning("codelet %s died (exit %s), restarting", entry.config.name,
                                    entry.proc.returncode if entry.proc else None)
                        self._relaunch(entry, now)
                    else:
                        self._record_failure(entry, now)
                elif entry.state == "backoff" and now >= entry.next_attempt:
                    self._relaunch(entry, now)
            return self.process_table()

    def _relaunch(self, entry, now):
        entry.restarts += 1
        if not self._launch(entry):
            self._record_failure(entry, now)

    def process_table(self):
        return {name: e.summary() for name, e in self.children.items()}

    # -- request handling -----------------------------------------------------

    def handle(self, msg, external=True):
        op = getattr(self, f"_op_{msg.op}", None)
        if op is None:
            raise RemoteError("unsupported", f"node does not serve {msg.op!r}")
        return op(msg, external)

    def _check_access(self, name, external):
        if name not in self.store:
            raise RemoteError("not_found", f"no memory named {name!r}")
        if external and name not in self.exported:
            raise RemoteError("access_denied", f"memory {name!r} is not exported")

    def _op_read(self, msg, external):
        body = msg.body or {}
        if msg.target:
            self._check_access(msg.target, external)
            if not body:
                return self.store.get(msg.target)
            names = [msg.target]
        else:
            names = list(body.get("names", []))
        for n in names:
            self._check_access(n, external)
        records, seq = self.store.wait_read(names, int(body.get("after_seq", 0)),
                                            float(body.get("timeout", 0.0)),
                                            bool(body.get("changed_only", False)))
        return {"records": records, "seq": seq}

    def _op_write(self, msg, external):
        self._check_access(msg.target, external)
        body = msg.body or {}
        seq = self.store.write(msg.target, body.get("payload"), body.get("eval", 0.0),
                               body.get("sample_id", 0))
        return {"seq": seq}

    def _op_reset(self, msg, external):
        names = list((msg.body or {}).get("names", [])) or ([msg.target] if msg.target else [])
        for n in names:
            self._check_access(n, external)
        self.store.clear(names)
        return {"cleared": names}

    def _codelet(self, name, groups=None):
        entry = self.children.get(name)
        if entry is None:
            raise RemoteError("not_found", f"no codelet named {name!r}")
        if groups and entry.config.group not in groups:
            raise RemoteError("bad_request", f"{name} is a {entry.config.group} codelet")
        return entry

    def _op_train(self, msg, external):
        self._codelet(msg.target, ("perceptual", "behavioral"))
        data = msg.body or {}

        def bump(old):
            train_id = (old or {}).get("train_id", 0) + 1
            return dict(data, train_id=train_id)

        rec = self.store.update_payload(control_memory(msg.target, "train"), bump)
        return {"train_id": rec["payload"]["train_id"]}

    def _wait_payload(self, name, ready, timeout):
        deadline = time.monotonic() + timeout
        seq = 0
        while True:
            records, seq = self.store.wait_read([name], seq, max(0.0, deadline - time.monotonic()))
            payload = records[0]["payload"]
            if ready(payload) or time.monotonic() >= deadline:
                return payload

    def _op_get_model(self, msg, external):
        self._codelet(msg.target, ("perceptual", "behavioral", "motor"))
        body = msg.body or {}
        after = int(body.get("after_train_id", 0))
        return self._wait_payload(
            control_memory(msg.target, "model"),
            lambda p: p is not None and p.get("train_id", 0) >= after,
            float(body.get("timeout", 0.0)))

    def _op_get_io_set(self, msg, external):
        self._codelet(msg.target, ("motor",))
        timeout = float((msg.body or {}).get("timeout", 5.0))
        payload = self._wait_payload(control_memory(msg.target, "model"),
                                     lambda p: p is not None and "io_set" in p, timeout)
        if payload is None or "io_set" not in payload:
            raise RemoteError("unavailable", f"{msg.target} has not published its io set")
        return {"io_set": payload["io_set"]}

    def _op_reconfigure(self, msg, external):
        entry = self._codelet(msg.target)
        body = dict(msg.body or {})
        wait = float(body.pop("wait_timeout", RECONFIGURE_TIMEOUT))
        try:
            cfg = CodeletConfig.from_fields(body, program=entry.config.program)
        except (KeyError, ValueError, TypeError) as exc:
            raise RemoteError("bad_request", f"invalid codelet config: {exc}") from None
        if cfg.name != msg.target or cfg.group != entry.config.group:
            raise RemoteError("bad_request", "reconfigure cannot change a codelet's name or group")
        with self._lock:
            entry.config = cfg
            entry.revision += 1
            revision = entry.revision
            write_fields(self.fields_path(cfg.name), cfg, revision)
        self.store.update_payload(control_memory(cfg.name, "ctl"),
                                  lambda old: dict(old or {}, revision=revision))
        status = self._wait_payload(control_memory(cfg.name, "status"),
                                    lambda p: p is not None and p.get("revision", -1) >= revision,
                                    wait)
        applied = status is not None and status.get("revision", -1) >= revision
        return {"revision": revision, "applied": applied}

    def _op_health(self, msg, external):
        with self._lock:
            table = self.process_table()
        for name, row in table.items():
            status = self.store.get(control_memory(name, "status"))["payload"]
            row["applied"] = status.get("revision") if status else None
        return {"node_name": self.cfg.node_name, "address": self.address,
                "codelets": table, "n_memories": len(self.store),
                "failed": sorted(n for n, e in table.items() if e["state"] == "failed"),
                "stopping": self._shutting_down}

    def _op_shutdown(self, msg, external):
        with self._lock:
            already = self._shutting_down
            self._shutting_down = True
        if not already:
            threading.Thread(target=self.stop, daemon=True).start()
        return {"stopping": True}

    # -- teardown -------------------------------------------------------------

    def stop_children(self, grace=2.0):
        self._stop.set()
        procs = [e.proc for e in self.children.values() if e.proc is not None]
        for p in procs:
            if p.poll() is None:
                p.send_signal(signal.SIGTERM)
        deadline = time.monotonic() + grace
        for p in procs:
            try:
                p.wait(max(0.0, deadline - time.monotonic()))
            except subprocess.TimeoutExpired:
                p.kill()
                p.wait()
        for e in self.children.values():
            if e.state != "failed":
                e.state = "stopped"

    def stop(self):
        with self._lock:
            self._shutting_down = True
        if self._stopped.is_set():
            return
        self.stop_children()
        # children first, then the Interface
        for srv in (self.server, self.internal_server):
            if srv is not None:
                srv.shutdown()
                srv.server_close()
        self._stopped.set()

    def wait_stopped(self, timeout=None):
        return self._stopped.wait(timeout)

    def kill_child(self, name, sig=signal.SIGKILL):
        """Fault injection helper: kill one codelet process from outside."""
        entry = self.children[name]
        os.kill(entry.pid, sig)
        return entry.pid


def start_node(cfg: NodeConfig, workdir=None) -> NodeMaster:
    return NodeMaster(cfg, workdir).start()
