"""Node and codelet configuration documents (``fields.json`` is the codelet one)."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..protocol import MemoryRecord, split_memory_address

GROUPS = ("sensory", "perceptual", "behavioral", "motor")
FIELDS_KEYS = ("name", "group", "inputs", "outputs", "broadcast", "params",
               "activation_threshold")

# per-codelet memories every node creates on its own
CONTROL_SUFFIXES = ("ctl", "train", "model", "status")


def control_memory(codelet, kind):
    return f"{codelet}-{kind}"


@dataclass
class CodeletConfig:
    name: str
    group: str
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    broadcast: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    activation_threshold: float = 0.5
    # launch override, never written to fields.json
    program: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.group not in GROUPS:
            raise ValueError(f"{self.name}: unknown group {self.group!r}")
        if not 0.0 <= self.activation_threshold <= 1.0:
            raise ValueError(f"{self.name}: activation_threshold must lie in [0, 1]")
        if set(self.inputs) & set(self.outputs):
            raise ValueError(f"{self.name}: inputs and outputs overlap")
        for addr in list(self.inputs) + list(self.outputs) + list(self.broadcast):
            split_memory_address(addr)
        if self.group == "perceptual" and not self.params.get("mask"):
            raise ValueError(f"{self.name}: perceptual codelets need a non-empty sensor mask")
        if self.group in ("sensory", "motor"):
            device = self.params.get("device")
            if not isinstance(device, str) or not device:
                raise ValueError(f"{self.name}: {self.group} codelets need exactly one device id")

    def to_fields(self):
        return {k: getattr(self, k) for k in FIELDS_KEYS}

    @classmethod
    def from_fields(cls, d, program=None):
        unknown = set(d) - set(FIELDS_KEYS) - {"revision", "program"}
        if unknown:
            raise ValueError(f"unknown fields.json keys: {sorted(unknown)}")
        return cls(
            name=d["name"], group=d["group"], inputs=list(d.get("inputs", [])),
            outputs=list(d.get("outputs", [])), broadcast=list(d.get("broadcast", [])),
            params=dict(d.get("params", {})),
            activation_threshold=float(d.get("activation_threshold", 0.5)),
            program=d.get("program", program),
        )


def write_fields(path, cfg: CodeletConfig, revision=0):
    """Atomically replace ``fields.json`` so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(cfg.to_fields(), revision=revision)
    tmp = path.with_suffix(f".tmp{os.getpid()}")
    tmp.write_text(json.dumps(doc, sort_keys=True, indent=1))
    os.replace(tmp, path)


def read_fields(path):
    doc = json.loads(Path(path).read_text())
    return CodeletConfig.from_fields(doc), int(doc.get("revision", 0))


@dataclass
class NodeConfig:
    node_name: str
    listen_address: str
    codelets: list = field(default_factory=list)
    memories: list = field(default_factory=list)
    exported_memories: list = field(default_factory=list)
    health_period: float = 0.5     # seconds

    def __post_init__(self):
        self.validate()

    def validate(self):
        names = [c.name for c in self.codelets]
        if len(names) != len(set(names)):
            raise ValueError(f"{self.node_name}: duplicate codelet names")
        mem_names = [m.name for m in self.memories]
        if len(mem_names) != len(set(mem_names)):
            raise ValueError(f"{self.node_name}: duplicate memory names")
        missing = set(self.exported_memories) - set(mem_names)
        if missing:
            raise ValueError(f"{self.node_name}: exported memories not defined: {sorted(missing)}")
        if self.health_period <= 0:
            raise ValueError("health_period must be positive")

    def to_dict(self):
        return {
            "node_name": self.node_name,
            "listen_address": self.listen_address,
            "codelets": [dict(c.to_fields(), **({"program": c.program} if c.program else {}))
                         for c in self.codelets],
            "memories": [m.to_dict() for m in self.memories],
            "exported_memories": list(self.exported_memories),
            "health_period": self.health_period,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            node_name=d["node_name"], listen_address=d["listen_address"],
            codelets=[CodeletConfig.from_fields(c) for c in d.get("codelets", [])],
            memories=[MemoryRecord.from_dict(m) for m in d.get("memories", [])],
            exported_memories=list(d.get("exported_memories", [])),
            health_period=float(d.get("health_period", 0.5)),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_nodes_file(path):
    """A nodes file is a JSON list of node config documents."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("nodes", [data])
    return [NodeConfig.from_dict(d) for d in data]


def save_nodes_file(path, nodes):
    Path(path).write_text(json.dumps([n.to_dict() for n in nodes], indent=1, sort_keys=True))
