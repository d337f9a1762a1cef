from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..smarthome.house import DEFAULT_ADJACENCY, build_transition_matrix
from ..smarthome.sim import generate_dataset, sample_preferences
from .es import Individual, init_population, next_generation
from .pool import build_pool

log = logging.getLogger(__name__)


@dataclass
class EvoConfig:
    pool_seed: int = 0
    data_seed: int = 0
    prefs_seed: int | None = None     # defaults to data_seed
    es_seed: int = 0
    pop_size: int = 20
    max_generations: int = 20
    mut_p: float = 0.5
    ind_m: float = 0.05
    p_one: float = 0.2
    n_samples: int = 400
    n_test: int = 20
    n_perceptual: int = 15
    n_behavioral: int = 13
    assignment: str = "identity"
    update_scope: str = "occupied"
    comfort_rule_direction: str = "lower"
    adjacency: list | None = None


@dataclass
class FitnessReport:
    score: int
    generations_used: int
    n_perceptual_active: int
    n_behavioral_active: int
    genome: str
    trace: list = field(default_factory=list)    # best score after each generation

    @property
    def n_internal(self):
        return self.n_perceptual_active + self.n_behavioral_active

    def to_dict(self):
        d = asdict(self)
        d["n_internal"] = self.n_internal
        return d


def make_problem(cfg: EvoConfig):
    """Pool and dataset fully determined by the seeds in ``cfg``."""
    pool = build_pool(cfg.pool_seed, P=cfg.n_perceptual, B=cfg.n_behavioral,
                      assignment=cfg.assignment)
    prefs = sample_preferences(cfg.data_seed if cfg.prefs_seed is None else cfg.prefs_seed)
    adj = DEFAULT_ADJACENCY if cfg.adjacency is None else cfg.adjacency
    dataset = generate_dataset(cfg.n_samples, prefs, build_transition_matrix(adj),
                               seed=cfg.data_seed, n_test=cfg.n_test,
                               update_scope=cfg.update_scope,
                               direction=cfg.comfort_rule_direction)
    return pool, prefs, dataset


def report_for(ind: Individual, n_perceptual, generations) -> FitnessReport:
    perc, behav = ind.split(n_perceptual)
    return FitnessReport(score=ind.fitness, generations_used=generations,
                         n_perceptual_active=sum(perc), n_behavioral_active=sum(behav),
                         genome=ind.key)


def run_evolution(evaluate, genome_length, n_perceptual, cfg: EvoConfig) -> FitnessReport:
    """Evaluate -> select -> mutate until a perfect score or ``max_generations``.

    ``evaluate`` maps a gene tuple to its Hamming score. Individuals that come
    through selection unchanged keep their score and are not re-evaluated.
    """
    rng = np.random.default_rng(cfg.es_seed)
    pop = init_population(rng, genome_length, cfg.pop_size, cfg.p_one)

    def score_all(p):
        p.individuals = [ind if ind.fitness is not None
                         else Individual(ind.genes, int(evaluate(ind.genes)))
                         for ind in p.individuals]
        p.observe()

    score_all(pop)
    while pop.best_ever.fitness > 0 and pop.generation < cfg.max_generations:
        pop = next_generation(pop, rng, cfg.mut_p, cfg.ind_m)
        score_all(pop)
        log.debug("generation %d best %d", pop.generation, pop.best_ever.fitness)
    report = report_for(pop.best_ever, n_perceptual, pop.generation)
    report.trace = list(pop.history)
    return report


def evolve_inprocess(cfg: EvoConfig) -> FitnessReport:
    from .inprocess import InProcessAgent

    pool, _, dataset = make_problem(cfg)
    agent = InProcessAgent(pool, dataset)
    return run_evolution(agent.evaluate, pool.genome_length, len(pool.perceptual), cfg)
