"""Codelet process: ``python -m cogtwin.codelets.runner --fields F --name N --node A --internal B``.

A codelet holds no state that matters across restarts. Its configuration
comes from ``fields.json`` (re-read whenever the file is replaced), and its
trained model lives in the node's ``<name>-model`` memory.
"""
from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import time

from ..node.config import control_memory, read_fields
from ..protocol import Client, RemoteError, split_memory_address
from .procs import (IDENTITY_IO_SET, BehavioralOutput, behavioral_proc, calculate_activation,
                    identity_motor_tree, motor_resolve, perceptual_proc, should_run)
from .tokenizer import TokenTable, tokenize_fit
from .tree import DecisionTree

log = logging.getLogger("cogtwin.codelet")

LOCAL_WAIT = 1.0
REMOTE_WAIT = 0.05
ERROR_BACKOFF = 0.1


class Codelet:
    def __init__(self, fields_path, name, node_address, internal_address):
        self.fields_path = fields_path
        self.name = name
        self.node_address = node_address
        self.internal = Client(internal_address)
        self.clients = {}
        self.cfg = None
        self.revision = -1
        self._file_id = None
        self.model = None
        self.train_id = 0
        self.cache = {}            # input address -> latest record
        self.after = {}            # node address -> last sequence seen
        self.last_emitted = 0
        self.env = None
        self.running = True
        self.ctl_names = [control_memory(name, "ctl"), control_memory(name, "train")]

    # -- plumbing -------------------------------------------------------------

    def client_for(self, node):
        if node == self.node_address:
            return self.internal
        if node not in self.clients:
            self.clients[node] = Client(node)
        return self.clients[node]

    def write_own(self, name, payload, eval=0.0, sample_id=0):
        self.internal.request("write", name, {"payload": payload, "eval": eval,
                                              "sample_id": sample_id})

    def write_output(self, payload, sample_id, eval=1.0):
        for addr in self.cfg.outputs:
            node, mem = split_memory_address(addr)
            try:
                self.client_for(node).request("write", mem, {"payload": payload, "eval": eval,
                                                             "sample_id": sample_id})
            except RemoteError as exc:
                if exc.code != "stale_write":
                    raise
        self.last_emitted = max(self.last_emitted, sample_id)

    def maybe_reload(self):
        try:
            st = os.stat(self.fields_path)
        except FileNotFoundError:
            return
        file_id = (st.st_ino, st.st_mtime_ns, st.st_size)
        if file_id == self._file_id:
            return
        cfg, revision = read_fields(self.fields_path)
        self._file_id = file_id
        if self.cfg is None or cfg.inputs != self.cfg.inputs:
            self.cache = {}
            self.after = {}
        self.cfg = cfg
        self.revision = revision
        if cfg.group in ("sensory", "motor") and self.env is None:
            self.env = Client(cfg.params["env"], timeout=5.0)
        self.write_own(control_memory(self.name, "status"),
                       {"revision": revision, "pid": os.getpid()})
        log.info("%s loaded config revision %d", self.name, revision)

    def load_model(self):
        rec = self.internal.request("read", control_memory(self.name, "model"))
        payload = rec["payload"]
        if payload is not None:
            self.install_model(payload)

    def install_model(self, payload):
        group = self.cfg.group
        if group == "perceptual":
            self.model = TokenTable.from_dict(payload)
        elif group == "behavioral":
            self.model = (DecisionTree.from_dict(payload["tree"]), payload["radices"],
                          payload["targets"])
        elif group == "motor":
            self.model = DecisionTree.from_dict(payload["tree"])
        self.train_id = payload.get("train_id", 0)

    def poll(self):
        """Refresh cached input records; block briefly when nothing changed."""
        by_node = {}
        for addr in self.cfg.inputs:
            node, mem = split_memory_address(addr)
            by_node.setdefault(node, []).append(mem)
        own = list(self.ctl_names) + by_node.pop(self.node_address, [])
        remote = list(by_node.items())
        changed = self._read(self.node_address, own, 0.0 if remote else LOCAL_WAIT)
        for i, (node, mems) in enumerate(remote):
            wait = REMOTE_WAIT if (i == 0 and not changed) else 0.0
            changed |= self._read(node, mems, wait)
        return changed

    def _read(self, node, mems, wait):
        after = self.after.get(node, 0)
        body = self.client_for(node).request(
            "read", "", {"names": mems, "after_seq": after, "timeout": wait,
                         "changed_only": True}, timeout=wait + 10.0)
        for rec in body["records"]:
            self.cache[f"{node}/{rec['name']}"] = rec
            if node == self.node_address:
                self.cache[rec["name"]] = rec
        self.after[node] = body["seq"]
        return bool(body["records"])

    def fresh_inputs(self):
        """Input records if every one carries the same (newest) sample id, else None."""
        recs = [self.cache.get(a) for a in self.cfg.inputs]
        if not recs or any(r is None or r["payload"] is None for r in recs):
            return None
        sids = [r["sample_id"] for r in recs]
        current = max(sids)
        if current <= self.last_emitted or current == 0:
            return None
        if not should_run(calculate_activation(sids, current), self.cfg.activation_threshold):
            return None
        return recs, current

    # -- training -------------------------------------------------------------

    def maybe_train(self):
        rec = self.cache.get(control_memory(self.name, "train"))
        if rec is None or rec["payload"] is None:
            return
        data = rec["payload"]
        if data.get("train_id", 0) <= self.train_id:
            return
        # pick up a config change that raced with the train request
        self.maybe_reload()
        if self.cfg.group == "perceptual":
            table = tokenize_fit(data["rows"])
            model = dict(table.to_dict(), mask=list(self.cfg.params["mask"]),
                         train_id=data["train_id"])
        elif self.cfg.group == "behavioral":
            from .tree import tree_fit

            tree = tree_fit(data["rows"], data["labels"])
            model = {"tree": tree.to_dict(), "radices": data["radices"],
                     "targets": data["targets"], "train_id": data["train_id"]}
        else:
            return
        self.write_own(control_memory(self.name, "model"), model)
        self.install_model(model)
        log.info("%s trained (train_id %d)", self.name, self.train_id)

    # -- group behaviours -----------------------------------------------------

    def step_sensory(self):
        self.poll_control_only()
        device = self.cfg.params["device"]
        body = self.env.request("read_device", device,
                                {"after_sample_id": self.last_emitted, "timeout": LOCAL_WAIT},
                                timeout=LOCAL_WAIT + 10.0)
        sid = body["sample_id"]
        if sid > self.last_emitted:
            self.write_output(body["value"], sid)

    def poll_control_only(self):
        self._read(self.node_address, self.ctl_names, 0.0)

    def step_perceptual(self):
        self.poll()
        self.maybe_train()
        ready = self.fresh_inputs()
        if ready is None or self.model is None:
            return
        recs, current = ready
        values = [r["payload"] for r in recs]
        token = perceptual_proc(range(len(values)), values, self.model)
        if token is not None:
            self.write_output(token, current)

    def step_behavioral(self):
        self.poll()
        self.maybe_train()
        ready = self.fresh_inputs()
        if ready is None:
            return
        recs, current = ready
        targets = self.cfg.params.get("targets", [])
        if self.model is None:
            outs = behavioral_proc([], None, targets)
        else:
            tree, radices, trained_targets = self.model
            outs = behavioral_proc([r["payload"] for r in recs], tree, trained_targets, radices)
        payload = {"source": self.name,
                   "outputs": {m: {"command": o.command, "activation": o.activation}
                               for m, o in outs.items()}}
        activation = max((o.activation for o in outs.values()), default=0.0)
        self.write_output(payload, current, eval=activation)

    def step_motor(self):
        if self.model is None:
            tree = identity_motor_tree()
            io_set = self.cfg.params.get("io_set", IDENTITY_IO_SET)
            payload = {"tree": tree.to_dict(), "io_set": io_set, "train_id": 0}
            self.write_own(control_memory(self.name, "model"), payload)
            self.install_model(payload)
        device = self.cfg.params["device"]
        if self.cfg.inputs:
            self.poll()
            ready = self.fresh_inputs()
            if ready is None:
                return
            recs, current = ready
            inputs = []
            for r in recs:
                out = r["payload"]["outputs"].get(self.name)
                if out is not None:
                    inputs.append((r["payload"]["source"],
                                   BehavioralOutput(out["command"], out["activation"])))
        else:
            # nothing feeds this motor: emit the default once per environment sample
            self.poll_control_only()
            body = self.env.request("read_device", device,
                                    {"after_sample_id": self.last_emitted,
                                     "timeout": LOCAL_WAIT}, timeout=LOCAL_WAIT + 10.0)
            current = body["sample_id"]
            if current <= self.last_emitted:
                return
            inputs = []
        value = motor_resolve(inputs, self.model)
        self.env.request("set_device", device, {"value": value})
        self.write_output(value, current)

    # -- main loop ------------------------------------------------------------

    def run(self):
        self.maybe_reload()
        if self.cfg is None:
            raise SystemExit(f"cannot read {self.fields_path}")
        if self.cfg.group != "sensory":
            self.load_model()
        step = getattr(self, f"step_{self.cfg.group}")
        while self.running:
            try:
                self.maybe_reload()
                step()
            except (OSError, RemoteError) as exc:
                # peer unreachable or refusing: memory untouched, retry next cycle
                log.warning("%s cycle failed: %s", self.name, exc)
                time.sleep(ERROR_BACKOFF)


def main(argv=None):
    parser = argparse.ArgumentParser(description="run one codelet under a node master")
    parser.add_argument("--fields", required=True)
    parser.add_argument("--name", required=True)
    parser.add_argument("--node", required=True, help="public address of the owning node")
    parser.add_argument("--internal", required=True, help="node's internal codelet listener")
    parser.add_argument("--log-level", default=os.environ.get("COGTWIN_CODELET_LOG", "WARNING"))
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(name)s %(message)s")
    codelet = Codelet(args.fields, args.name, args.node, args.internal)

    def _term(signum, frame):
        codelet.running = False
        sys.exit(0)

    signal.signal(signal.SIGTERM, _term)
    codelet.run()


if __name__ == "__main__":
    main()
