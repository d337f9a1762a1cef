"""Trainer side of the live agent: configure, train and score one genome over the wire."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor

from ..codelets.tokenizer import TokenTable
from ..protocol import Client, RemoteError
from ..smarthome.house import ACTUATOR_INDEX
from ..smarthome.sim import Dataset
from .inprocess import hamming
from .layout import env_address_of, locate, output_memory, wiring
from .pool import CodeletPool
from .topology import Topology, behavioral_labels, conjoined_perception, mask_rows, plan_topology

log = logging.getLogger(__name__)

PROPAGATION_TIMEOUT = 2.0
MODEL_TIMEOUT = 30.0
FANOUT = 8


class ConfigurationError(RuntimeError):
    def __init__(self, failures):
        self.failures = failures       # node address -> error text
        nodes = ", ".join(sorted(failures))
        super().__init__(f"configuration failed on node(s) {nodes}: "
                         + "; ".join(f"{n}: {e}" for n, e in sorted(failures.items())))


class EvaluationError(RuntimeError):
    pass


class DistributedAgent:
    def __init__(self, pool: CodeletPool, dataset: Dataset, nodes, env_address=None,
                 timeout=PROPAGATION_TIMEOUT):
        self.pool = pool
        self.dataset = dataset
        self.nodes = list(nodes)
        self.env_address = env_address or env_address_of(self.nodes)
        self.timeout = timeout
        self.codelet_node, self.memory_node = locate(self.nodes)
        self.homes = self.memory_node
        self.env = Client(self.env_address)
        self._clients = {}
        self.topology: Topology | None = None
        self.timeouts = 0
        self._scores = {}

    def client(self, address):
        if address not in self._clients:
            self._clients[address] = Client(address, timeout=MODEL_TIMEOUT + 10.0)
        return self._clients[address]

    def _fanout(self, jobs):
        """Run ``(address, fn)`` jobs concurrently, one fresh connection each.

        Returns results in order; errors are collected per node.
        """
        def run(job):
            address, fn = job
            with Client(address, timeout=MODEL_TIMEOUT + 10.0) as c:
                try:
                    return True, fn(c)
                except (OSError, RemoteError) as exc:
                    return False, f"{type(exc).__name__}: {exc}"

        with ThreadPoolExecutor(max_workers=FANOUT) as ex:
            results = list(ex.map(run, jobs))
        failures = {}
        for (address, _), (ok, value) in zip(jobs, results):
            if not ok:
                failures.setdefault(address, value)
        if failures:
            raise ConfigurationError(failures)
        return [v for _, v in results]

    # -- phases ---------------------------------------------------------------

    def configure(self, genes):
        """Push the wiring of ``genes`` to every internal codelet, then clear their memories."""
        topo = plan_topology(self.pool, genes)
        cfgs = wiring(self.pool, topo, self.homes, self.env_address)
        jobs = []
        for name, cfg in cfgs.items():
            if cfg.group == "sensory":
                continue     # sensory wiring never depends on the genome
            jobs.append((self.codelet_node[name],
                         lambda c, cfg=cfg: c.request("reconfigure", cfg.name, cfg.to_fields())))
        acks = self._fanout(jobs)
        stuck = [(addr, f"codelet did not apply revision {a['revision']}")
                 for (addr, _), a in zip(jobs, acks) if not a["applied"]]
        if stuck:
            raise ConfigurationError(dict(stuck))
        by_node = {}
        for name, cfg in cfgs.items():
            if cfg.group != "sensory":
                mem = output_memory(name)
                by_node.setdefault(self.homes[mem], []).append(mem)
        self._fanout([(addr, lambda c, names=names: c.request("reset", "", {"names": names}))
                      for addr, names in by_node.items()])
        self.topology = topo
        return topo

    def train(self):
        topo = self.topology
        if topo is None:
            raise RuntimeError("configure before training")
        train_rows = self.dataset.train_sensors
        perc = {p.name: p for p in self.pool.perceptual}

        def fit_perceptual(c, name):
            ack = c.request("train", name, {"rows": mask_rows(perc[name].mask, train_rows)})
            return c.request("get_model", name, {"after_train_id": ack["train_id"],
                                                 "timeout": MODEL_TIMEOUT},
                             timeout=MODEL_TIMEOUT + 10.0)

        models = self._fanout([(self.codelet_node[n], lambda c, n=n: fit_perceptual(c, n))
                               for n in topo.perceptual])
        if any(m is None or "observations" not in m for m in models):
            raise EvaluationError("a perceptual codelet did not publish its model in time")
        tables = [TokenTable.from_dict(m) for m in models]
        masks = [m["mask"] for m in models]
        perception = conjoined_perception(tables, masks, train_rows)

        io = self._fanout([(self.codelet_node[m.name],
                            lambda c, m=m: c.request("get_io_set", m.name, {"timeout": 10.0},
                                                     timeout=20.0))
                           for m in self.pool.motor])
        io_sets = {m.name: r["io_set"] for m, r in zip(self.pool.motor, io)}

        behav = {b.name: b for b in self.pool.behavioral}

        def fit_behavioral(c, name):
            targets = list(behav[name].targets)
            labels, radices = behavioral_labels(self.pool, targets, self.dataset.train_actuators,
                                                io_sets)
            ack = c.request("train", name, {"rows": perception, "labels": labels,
                                            "radices": radices, "targets": targets})
            return c.request("get_model", name, {"after_train_id": ack["train_id"],
                                                 "timeout": MODEL_TIMEOUT},
                             timeout=MODEL_TIMEOUT + 10.0)

        trees = self._fanout([(self.codelet_node[n], lambda c, n=n: fit_behavioral(c, n))
                              for n in topo.behavioral])
        if any(t is None or "tree" not in t for t in trees):
            raise EvaluationError("a behavioural codelet did not publish its model in time")
        if topo.dormant_behavioral:
            log.info("no active perceptual: behaviourals %s left untrained",
                     ", ".join(topo.dormant_behavioral))
        return {"perception": perception, "io_sets": io_sets}

    def wait_motors(self, sample_id):
        """Motor outputs for ``sample_id``; a motor that misses the deadline reads as 0."""
        by_node = {}
        for m in self.pool.motor:
            mem = output_memory(m.name)
            by_node.setdefault(self.homes[mem], []).append(mem)
        values = {}
        deadline = time.monotonic() + self.timeout
        for addr, names in by_node.items():
            after = 0
            pending = set(names)
            while pending:
                remaining = deadline - time.monotonic()
                body = self.client(addr).request(
                    "read", "", {"names": sorted(pending), "after_seq": after,
                                 "timeout": max(0.0, remaining), "changed_only": True},
                    timeout=max(0.0, remaining) + 10.0)
                after = body["seq"]
                for rec in body["records"]:
                    if rec["sample_id"] == sample_id:
                        values[rec["name"]] = rec["payload"]
                        pending.discard(rec["name"])
                if remaining <= 0:
                    break
            for name in pending:
                self.timeouts += 1
                log.warning("motor memory %s missed sample %d; scored as 0", name, sample_id)
        row = [0] * len(self.pool.motor)
        for m in self.pool.motor:
            row[ACTUATOR_INDEX[m.device]] = int(values.get(output_memory(m.name)) or 0)
        return row

    def evaluate(self):
        score = 0
        try:
            for sensors, expected in zip(self.dataset.test_sensors, self.dataset.test_actuators):
                sid = self.env.request("set_state", "", {"sensors": list(sensors)})["sample_id"]
                score += hamming(expected, self.wait_motors(sid))
        except OSError as exc:
            raise EvaluationError(f"environment {self.env_address} unreachable: {exc}") from exc
        return score

    def evaluate_genome(self, genes) -> int:
        genes = tuple(int(g) for g in genes)
        if genes not in self._scores:
            self.configure(genes)
            self.train()
            self._scores[genes] = self.evaluate()
        return self._scores[genes]

    # run_evolution expects a plain callable
    __call__ = evaluate_genome

    def close(self):
        for c in self._clients.values():
            c.close()
        self.env.close()
