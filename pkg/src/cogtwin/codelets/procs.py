"""The System-1 codelet behaviours as pure functions.

The codelet processes (:mod:`cogtwin.codelets.runner`) and the in-process
pipeline both call these, which is what keeps the two evaluation modes equal.
"""
from __future__ import annotations

from dataclasses import dataclass

from .encoding import unpack
from .tokenizer import TokenTable, tokenize_apply
from .tree import DecisionTree, tree_predict

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class BehavioralOutput:
    command: int = 0
    activation: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.activation <= 1.0:
            raise ValueError(f"activation must lie in [0, 1], got {self.activation}")


def calculate_activation(sample_ids, current=None) -> float:
    """1.0 iff every input carries the current sample id.

    ``current`` defaults to the newest id among the inputs. No inputs means
    there is nothing to react to, so the result is 0.0.
    """
    ids = list(sample_ids)
    if not ids:
        return 0.0
    if current is None:
        current = max(ids)
    return 1.0 if all(s == current for s in ids) else 0.0


def should_run(activation, threshold=DEFAULT_THRESHOLD) -> bool:
    return activation > threshold


def perceptual_proc(mask, sensors, table: TokenTable | None):
    """Token of the masked sensor readings, or None while untrained.

    ``sensors`` is indexed by sensor number, so a list or a dict both work.
    """
    if table is None or not table.observations:
        return None
    return tokenize_apply(table, [sensors[i] for i in mask])


def behavioral_proc(perception, tree: DecisionTree | None, targets, radices=None):
    """Commands for each target motor from one composite prediction.

    Returns ``{motor: BehavioralOutput}``.
    """
    radices = list(radices) if radices is not None else [2] * len(targets)
    if tree is None or not perception:
        return {t: BehavioralOutput(0, 0.0) for t in targets}
    composite = tree_predict(tree, perception)
    commands = unpack(composite, radices)
    return {t: BehavioralOutput(c, 1.0) for t, c in zip(targets, commands)}


def identity_motor_tree() -> DecisionTree:
    """The tree ``tree_fit([[0], [1]], [0, 1])`` yields, built without numpy."""
    return DecisionTree.from_dict(_IDENTITY)


_IDENTITY = {"n_features": 1, "nodes": [{"f": 0, "t": 0}, {"leaf": 0}, {"leaf": 1}]}


IDENTITY_IO_SET = [[0, 0], [1, 1]]


def motor_resolve(inputs, tree: DecisionTree | None = None) -> int:
    """Pick the strongest behavioural command and map it through the motor tree.

    ``inputs`` is a sequence of ``(source_name, BehavioralOutput)``; equal
    activations go to the lexicographically smallest source.
    """
    inputs = list(inputs)
    if not inputs:
        return 0
    _, winner = min(inputs, key=lambda item: (-item[1].activation, item[0]))
    return tree_predict(tree or _identity_tree, [winner.command])


_identity_tree = identity_motor_tree()
