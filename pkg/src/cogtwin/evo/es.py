"""Elitist bit-flip evolution strategy over codelet-selection genomes (no crossover)."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

N_ELITES = 5
POP_SIZE = 20


class ContractError(RuntimeError):
    pass


@dataclass(frozen=True)
class Individual:
    genes: tuple
    fitness: int | None = None

    @property
    def key(self):
        return "".join(str(g) for g in self.genes)

    def split(self, n_perceptual):
        return self.genes[:n_perceptual], self.genes[n_perceptual:]


@dataclass
class Population:
    individuals: list
    generation: int = 0
    best_ever: Individual | None = None
    history: list = field(default_factory=list)   # best_ever fitness after each generation

    def observe(self):
        """Fold this generation's evaluated individuals into ``best_ever``."""
        for ind in self.individuals:
            if ind.fitness is None:
                raise ContractError("population has unevaluated individuals")
            if self.best_ever is None or _rank(ind) < _rank(self.best_ever):
                self.best_ever = ind
        self.history.append(self.best_ever.fitness)


def _rank(ind):
    return (ind.fitness, ind.genes)


def init_population(seed_or_rng, length, size=POP_SIZE, p_one=0.2) -> Population:
    rng = np.random.default_rng(seed_or_rng)
    genomes = rng.random((size, length)) < p_one
    return Population([Individual(tuple(int(g) for g in row)) for row in genomes])


def mutate(ind: Individual, mut_p, ind_m, rng) -> Individual:
    """With probability ``mut_p`` flip each gene independently with probability ``ind_m``."""
    if not (0 <= mut_p <= 1 and 0 <= ind_m <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if rng.random() >= mut_p:
        return ind
    flips = rng.random(len(ind.genes)) < ind_m
    if not flips.any():
        return ind
    genes = tuple(g ^ int(f) for g, f in zip(ind.genes, flips))
    return Individual(genes)


def select_elites(individuals, k=N_ELITES):
    if any(ind.fitness is None for ind in individuals):
        raise ContractError("cannot select among unevaluated individuals")
    return sorted(individuals, key=_rank)[:k]


def next_generation(pop: Population, rng, mut_p=0.5, ind_m=0.05, n_elites=N_ELITES) -> Population:
    """Elites + a clone of the all-time best + mutated copies of random elites."""
    elites = select_elites(pop.individuals, n_elites)
    if pop.best_ever is None:
        raise ContractError("population has not been observed")
    new = list(elites) + [replace(pop.best_ever)]
    while len(new) < len(pop.individuals):
        parent = elites[int(rng.integers(len(elites)))]
        new.append(mutate(parent, mut_p, ind_m, rng))
    return Population(new, pop.generation + 1, pop.best_ever, list(pop.history))
