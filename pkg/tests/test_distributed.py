import numpy as np
import pytest

from cogtwin.evo.cluster import LocalCluster, free_port
from cogtwin.evo.distributed import ConfigurationError
from cogtwin.evo.inprocess import InProcessAgent
from cogtwin.evo.layout import build_layout, memory_homes, output_memory
from cogtwin.evo.run import EvoConfig, make_problem

CFG = EvoConfig(pool_seed=2, data_seed=2, n_samples=160)


@pytest.fixture(scope="module")
def problem():
    return make_problem(CFG)


@pytest.fixture(scope="module")
def cluster(problem):
    pool, prefs, _ = problem
    with LocalCluster(pool, prefs, health_period=0.2) as c:
        yield c


@pytest.fixture(scope="module")
def agents(cluster, problem):
    pool, _, ds = problem
    agent = cluster.agent(ds)
    yield agent, InProcessAgent(pool, ds)
    agent.close()


def _genomes(n, seed):
    rng = np.random.default_rng(seed)
    return [tuple(int(g) for g in rng.random(28) < 0.35) for _ in range(n)]


def test_layout_hosts_memories_with_their_consumers(problem):
    pool = problem[0]
    addrs = {g: f"h{i}:1" for i, g in enumerate(("sensory", "perceptual", "behavioral", "motor"))}
    homes = memory_homes(pool, addrs)
    assert homes[output_memory("s00")] == "h1:1"
    assert homes[output_memory("p00")] == "h2:1"
    assert homes[output_memory("b00")] == "h3:1"
    assert homes[output_memory("m00")] == "h3:1"
    nodes = build_layout(pool, "env:1", addrs)
    assert [n.node_name for n in nodes] == ["sensory", "perceptual", "behavioral", "motor"]
    assert [len(n.codelets) for n in nodes] == [20, 15, 13, 13]
    (single,) = build_layout(pool, "env:1", "h:1")
    assert single.node_name == "agent" and len(single.codelets) == 61


def test_modes_agree(agents):
    dist, local = agents
    for genes in _genomes(3, 0):
        assert dist.evaluate_genome(genes) == local.evaluate(genes), genes
    assert dist.timeouts == 0


def test_all_zero_genome_gives_default_outputs(agents, problem):
    dist, _ = agents
    ds = problem[2]
    assert dist.evaluate_genome((0,) * 28) == sum(map(sum, ds.test_actuators))


def test_reconfiguration_leaves_no_residue(agents):
    dist, local = agents
    a, b = _genomes(2, 1)
    for genes in (a, b):
        dist.configure(genes)
        dist.train()
        score = dist.evaluate()
    assert score == local.evaluate(b)


def test_unreachable_node_names_it(cluster, problem):
    pool, _, ds = problem
    agent = cluster.agent(ds)
    dead = f"127.0.0.1:{free_port()}"
    try:
        agent.codelet_node["b03"] = dead
        with pytest.raises(ConfigurationError) as e:
            agent.configure((1,) * 28)
        assert dead in str(e.value)
    finally:
        agent.close()


@pytest.mark.slow
def test_single_node_and_process_masters_agree(problem):
    pool, prefs, ds = problem
    genes = _genomes(1, 5)[0]
    expected = InProcessAgent(pool, ds).evaluate(genes)
    with LocalCluster(pool, prefs, split=False, processes=True) as c:
        agent = c.agent(ds)
        try:
            assert agent.evaluate_genome(genes) == expected
        finally:
            agent.close()
