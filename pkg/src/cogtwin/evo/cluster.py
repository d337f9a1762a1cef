"""Bring up a whole live agent on this host: environment, node masters and codelets."""
from __future__ import annotations

import json
import logging
import socket
import subprocess
import sys
import tempfile
import time
from pathlib import Path

from ..node.config import load_nodes_file, save_nodes_file
from ..node.master import NodeMaster
from ..protocol import Client
from ..smarthome.server import EnvServer
from .distributed import DistributedAgent
from .layout import build_layout, env_address_of

log = logging.getLogger(__name__)

READY_TIMEOUT = 60.0


def free_port(host="127.0.0.1"):
    with socket.socket() as s:
        s.bind((host, 0))
        return s.getsockname()[1]


def wait_ready(address, timeout=READY_TIMEOUT):
    """Block until the node at ``address`` answers and every codelet has loaded its config."""
    deadline = time.monotonic() + timeout
    last = None
    while time.monotonic() < deadline:
        try:
            with Client(address, timeout=2.0) as c:
                h = c.request("health")
            rows = h["codelets"].values()
            if all(r["state"] == "live" and r["applied"] is not None for r in rows):
                return h
            last = h
        except OSError as exc:
            last = exc
        time.sleep(0.05)
    raise TimeoutError(f"node {address} not ready after {timeout}s (last: {last})")


class StaticCluster:
    """Nodes and environment that somebody else started (``--nodes`` / ``--env``)."""

    def __init__(self, nodes_file, env_address=None):
        self.nodes = load_nodes_file(nodes_file)
        self.env_address = env_address or env_address_of(self.nodes)

    def agent(self, pool, dataset, **kwargs) -> DistributedAgent:
        return DistributedAgent(pool, dataset, self.nodes, self.env_address, **kwargs)


class LocalCluster:
    """Environment in a thread plus one node master per codelet group (or one for all).

    With ``processes=True`` each node master runs as its own ``cogtwin node``
    process; otherwise the masters run as threads of the caller while their
    codelets are still separate processes.
    """

    def __init__(self, pool, prefs=None, split=True, health_period=0.2, workdir=None,
                 processes=False, host="127.0.0.1", env_seed=0):
        self.pool = pool
        self.prefs = prefs
        self.split = split
        self.health_period = health_period
        self.workdir = Path(workdir or tempfile.mkdtemp(prefix="cogtwin-cluster-"))
        self.processes = processes
        self.host = host
        self.env_seed = env_seed
        self.env = None
        self.nodes = []
        self.masters = []
        self.procs = []

    def start(self):
        self.env = EnvServer(f"{self.host}:0", prefs=self.prefs, seed=self.env_seed).start()
        if self.split:
            addresses = {g: f"{self.host}:{free_port(self.host)}"
                         for g in ("sensory", "perceptual", "behavioral", "motor")}
        else:
            addresses = f"{self.host}:{free_port(self.host)}"
        self.nodes = build_layout(self.pool, self.env.address, addresses, self.health_period)
        save_nodes_file(self.workdir / "nodes.json", self.nodes)
        try:
            for cfg in self.nodes:
                nodedir = self.workdir / cfg.node_name
                if self.processes:
                    nodedir.mkdir(parents=True, exist_ok=True)
                    cfg.save(nodedir / "node.json")
                    log_fh = open(nodedir / "master.log", "ab")
                    self.procs.append(subprocess.Popen(
                        [sys.executable, "-m", "cogtwin", "node", "--config",
                         str(nodedir / "node.json"), "--workdir", str(nodedir)],
                        stdout=log_fh, stderr=subprocess.STDOUT, stdin=subprocess.DEVNULL))
                    log_fh.close()
                else:
                    self.masters.append(NodeMaster(cfg, nodedir).start())
            for cfg in self.nodes:
                wait_ready(cfg.listen_address)
        except BaseException:
            self.stop()
            raise
        return self

    @property
    def env_address(self):
        return self.env.address

    @property
    def nodes_file(self):
        return self.workdir / "nodes.json"

    def master(self, node_name):
        for m in self.masters:
            if m.cfg.node_name == node_name:
                return m
        raise KeyError(node_name)

    def node_of(self, codelet):
        for cfg in self.nodes:
            if any(c.name == codelet for c in cfg.codelets):
                return cfg
        raise KeyError(codelet)

    def health(self, codelet):
        """Health report of the node hosting ``codelet``."""
        with Client(self.node_of(codelet).listen_address) as c:
            return c.request("health")

    def agent(self, dataset, **kwargs) -> DistributedAgent:
        return DistributedAgent(self.pool, dataset, self.nodes, self.env.address, **kwargs)

    def stop(self):
        for m in self.masters:
            m.stop()
        for cfg, proc in zip(self.nodes, self.procs):
            try:
                with Client(cfg.listen_address, timeout=5.0) as c:
                    c.request("shutdown")
            except OSError:
                pass
            try:
                proc.wait(15)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
        self.masters, self.procs = [], []
        if self.env is not None:
            self.env.stop()
            self.env = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def describe(self):
        return json.dumps({"env": self.env.address if self.env else None,
                           "nodes": {n.node_name: n.listen_address for n in self.nodes}})
