"""Genome -> wiring plan, and the training-set construction both agent modes share."""
from __future__ import annotations

from dataclasses import dataclass

from ..codelets.encoding import pack
from ..codelets.tokenizer import TokenTable, tokenize_apply
from ..smarthome.house import ACTUATOR_INDEX
from .pool import CodeletPool


@dataclass(frozen=True)
class Topology:
    perceptual: tuple     # active perceptual names, sorted
    behavioral: tuple     # active behaviourals that have at least one perception input
    dormant_behavioral: tuple   # active but starved of perception, hence untrained
    motor_inputs: dict    # motor name -> tuple of feeding behavioural names


def plan_topology(pool: CodeletPool, genes) -> Topology:
    if len(genes) != pool.genome_length:
        raise ValueError(f"genome length {len(genes)} != {pool.genome_length}")
    n_p = len(pool.perceptual)
    perceptual = tuple(sorted(p.name for p, g in zip(pool.perceptual, genes[:n_p]) if g))
    active_b = [b for b, g in zip(pool.behavioral, genes[n_p:]) if g]
    if perceptual:
        wired, dormant = active_b, []
    else:
        wired, dormant = [], active_b
    motor_inputs = {
        m.name: tuple(sorted(b.name for b in wired if m.name in b.targets)) for m in pool.motor
    }
    return Topology(perceptual, tuple(sorted(b.name for b in wired)),
                    tuple(sorted(b.name for b in dormant)), motor_inputs)


def mask_rows(mask, rows):
    return [[row[i] for i in mask] for row in rows]


def conjoined_perception(tables, masks, sensor_rows):
    """Token of every perceptual (in the given order) for every sensor row."""
    out = []
    for row in sensor_rows:
        out.append([tokenize_apply(t, [row[i] for i in m]) for t, m in zip(tables, masks)])
    return out


def invert_io_set(io_set):
    """desired motor output -> motor input that produces it (first match wins)."""
    inverse = {}
    for x, y in io_set:
        inverse.setdefault(y, x)
    return inverse


def io_radix(io_set):
    return len({x for x, _ in io_set})


def behavioral_labels(pool: CodeletPool, targets, actuator_rows, io_sets):
    """Composite labels a behavioural must learn so its motors emit the recorded actuator values."""
    devices = {m.name: m.device for m in pool.motor}
    inverses = {t: invert_io_set(io_sets[t]) for t in targets}
    radices = [io_radix(io_sets[t]) for t in targets]
    labels = []
    for row in actuator_rows:
        cmds = [inverses[t][row[ACTUATOR_INDEX[devices[t]]]] for t in targets]
        labels.append(pack(cmds, radices))
    return labels, radices


def fitted_table_token_columns(table: TokenTable, mask, rows):
    return [tokenize_apply(table, [r[i] for i in mask]) for r in rows]
