"""Synchronous in-process agent: the four codelet stages run as plain function calls.

Results are memoised on what actually determines them (perceptual tables on the
perceptual, behavioural trees and outputs on the set of active perceptuals),
so repeated genomes and shared sub-topologies cost nothing extra.
"""
from __future__ import annotations

from ..codelets.procs import (IDENTITY_IO_SET, BehavioralOutput, behavioral_proc,
                              identity_motor_tree, motor_resolve, perceptual_proc)
from ..codelets.tokenizer import tokenize_fit
from ..codelets.tree import tree_fit
from ..smarthome.house import ACTUATOR_INDEX
from ..smarthome.sim import Dataset
from .pool import CodeletPool
from .topology import Topology, behavioral_labels, mask_rows, plan_topology


def hamming(expected, actual) -> int:
    return sum(int(a != b) for a, b in zip(expected, actual))


class InProcessAgent:
    def __init__(self, pool: CodeletPool, dataset: Dataset):
        self.pool = pool
        self.dataset = dataset
        self._perc = {p.name: p for p in pool.perceptual}
        self._behav = {b.name: b for b in pool.behavioral}
        self.motor_tree = identity_motor_tree()
        self.io_sets = {m.name: IDENTITY_IO_SET for m in pool.motor}
        self._tables = {}
        self._train_tokens = {}
        self._trees = {}
        self._outputs = {}
        self._scores = {}
        self.topology: Topology | None = None

    # -- stages ---------------------------------------------------------------

    def configure(self, genes):
        self.topology = plan_topology(self.pool, genes)
        return self.topology

    def table(self, name):
        if name not in self._tables:
            mask = self._perc[name].mask
            self._tables[name] = tokenize_fit(mask_rows(mask, self.dataset.train_sensors))
        return self._tables[name]

    def train_tokens(self, name):
        if name not in self._train_tokens:
            p = self._perc[name]
            t = self.table(name)
            self._train_tokens[name] = [perceptual_proc(p.mask, row, t)
                                        for row in self.dataset.train_sensors]
        return self._train_tokens[name]

    def perception_matrix(self, perceptual):
        cols = [self.train_tokens(n) for n in perceptual]
        return [list(r) for r in zip(*cols)]

    def behavioral_tree(self, perceptual, name):
        key = (perceptual, name)
        if key not in self._trees:
            b = self._behav[name]
            labels, radices = behavioral_labels(self.pool, b.targets,
                                                self.dataset.train_actuators, self.io_sets)
            tree = tree_fit(self.perception_matrix(perceptual), labels)
            self._trees[key] = (tree, radices)
        return self._trees[key]

    def behavioral_outputs(self, perceptual, name):
        """One ``{motor: BehavioralOutput}`` per test sample."""
        key = (perceptual, name)
        if key not in self._outputs:
            b = self._behav[name]
            tree, radices = self.behavioral_tree(perceptual, name)
            outs = []
            for row in self.dataset.test_sensors:
                tokens = [perceptual_proc(self._perc[p].mask, row, self.table(p))
                          for p in perceptual]
                outs.append(behavioral_proc(tokens, tree, b.targets, radices))
            self._outputs[key] = outs
        return self._outputs[key]

    def predict(self, topo: Topology):
        n = len(self.dataset.test_idx)
        per_b = {b: self.behavioral_outputs(topo.perceptual, b) for b in topo.behavioral}
        rows = []
        for k in range(n):
            row = [0] * len(self.pool.motor)
            for m in self.pool.motor:
                inputs = [(b, per_b[b][k][m.name]) for b in topo.motor_inputs[m.name]]
                row[ACTUATOR_INDEX[m.device]] = motor_resolve(inputs, self.motor_tree)
            rows.append(row)
        return rows

    def evaluate(self, genes) -> int:
        genes = tuple(genes)
        if genes not in self._scores:
            topo = self.configure(genes)
            predicted = self.predict(topo)
            self._scores[genes] = sum(hamming(e, a) for e, a in
                                      zip(self.dataset.test_actuators, predicted))
        return self._scores[genes]


__all__ = ["InProcessAgent", "hamming", "BehavioralOutput"]
