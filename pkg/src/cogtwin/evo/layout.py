"""Where codelets and memories live, and the ``fields.json`` wiring for a topology.

Data memories are hosted on the node of their consumers, so codelets block on
local reads and only writes cross node boundaries:

    sensory node      20 sensory codelets
    perceptual node   perceptual codelets + sXX-out
    behavioral node   behavioral codelets + pXX-out
    motor node        motor codelets + bXX-out + mXX-out

Giving all four groups the same address collapses the layout to one node.
"""
from __future__ import annotations

from ..node.config import GROUPS, CodeletConfig, NodeConfig
from ..protocol import MemoryRecord
from ..smarthome.house import SENSORS
from .pool import CodeletPool
from .topology import Topology, plan_topology

# group of a codelet -> group whose node hosts that codelet's output memory
MEMORY_HOST = {"sensory": "perceptual", "perceptual": "behavioral",
               "behavioral": "motor", "motor": "motor"}


def sensory_names():
    return [f"s{i:02d}" for i in range(len(SENSORS))]


def output_memory(codelet):
    return f"{codelet}-out"


def pool_groups(pool: CodeletPool):
    """codelet name -> group, for every codelet of the agent."""
    groups = {n: "sensory" for n in sensory_names()}
    groups.update({p.name: "perceptual" for p in pool.perceptual})
    groups.update({b.name: "behavioral" for b in pool.behavioral})
    groups.update({m.name: "motor" for m in pool.motor})
    return groups


def memory_homes(pool: CodeletPool, addresses):
    """output memory name -> address of the node that hosts it."""
    return {output_memory(n): addresses[MEMORY_HOST[g]] for n, g in pool_groups(pool).items()}


def wiring(pool: CodeletPool, topo: Topology, homes, env_address):
    """The CodeletConfig of every codelet under ``topo``.

    Inactive perceptuals and behaviourals get no inputs, so their activation
    gate never opens.
    """
    def addr(codelet):
        mem = output_memory(codelet)
        return f"{homes[mem]}/{mem}"

    cfgs = {}
    for i, name in enumerate(sensory_names()):
        cfgs[name] = CodeletConfig(name, "sensory", outputs=[addr(name)],
                                   params={"device": SENSORS[i], "env": env_address})
    sensor_names = sensory_names()
    active_p = set(topo.perceptual)
    for p in pool.perceptual:
        inputs = [addr(sensor_names[i]) for i in p.mask] if p.name in active_p else []
        cfgs[p.name] = CodeletConfig(p.name, "perceptual", inputs=inputs, outputs=[addr(p.name)],
                                     params={"mask": list(p.mask)})
    wired = set(topo.behavioral)
    for b in pool.behavioral:
        inputs = [addr(n) for n in topo.perceptual] if b.name in wired else []
        cfgs[b.name] = CodeletConfig(b.name, "behavioral", inputs=inputs, outputs=[addr(b.name)],
                                     params={"targets": list(b.targets)})
    for m in pool.motor:
        cfgs[m.name] = CodeletConfig(m.name, "motor",
                                     inputs=[addr(b) for b in topo.motor_inputs[m.name]],
                                     outputs=[addr(m.name)],
                                     params={"device": m.device, "env": env_address})
    return cfgs


def normalize_addresses(addresses):
    if isinstance(addresses, str):
        return {g: addresses for g in GROUPS}
    missing = set(GROUPS) - set(addresses)
    if missing:
        raise ValueError(f"no address for groups: {sorted(missing)}")
    return dict(addresses)


def build_layout(pool: CodeletPool, env_address, addresses, health_period=0.5):
    """Node configs for the whole agent, wired as the all-zero (dormant) genome."""
    addresses = normalize_addresses(addresses)
    homes = memory_homes(pool, addresses)
    groups = pool_groups(pool)
    cfgs = wiring(pool, plan_topology(pool, [0] * pool.genome_length), homes, env_address)
    # groups sharing an address share a node
    by_address = {}
    for g in GROUPS:
        by_address.setdefault(addresses[g], []).append(g)
    nodes = []
    for address, gs in by_address.items():
        node_name = gs[0] if len(gs) == 1 else "agent"
        codelets = [c for n, c in cfgs.items() if groups[n] in gs]
        mems = [MemoryRecord(m, address, groups[m[:-len("-out")]])
                for m, home in homes.items() if home == address]
        nodes.append(NodeConfig(node_name, address, codelets, mems,
                                exported_memories=[m.name for m in mems],
                                health_period=health_period))
    return nodes


def locate(nodes):
    """(codelet -> node address, memory -> node address) from node configs."""
    codelets, memories = {}, {}
    for n in nodes:
        for c in n.codelets:
            codelets[c.name] = n.listen_address
        for m in n.memories:
            memories[m.name] = n.listen_address
    return codelets, memories


def env_address_of(nodes):
    for n in nodes:
        for c in n.codelets:
            if c.group in ("sensory", "motor"):
                return c.params["env"]
    raise ValueError("layout has no sensory or motor codelet")
