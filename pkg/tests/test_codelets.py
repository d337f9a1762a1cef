import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogtwin.codelets import (BehavioralOutput, DecisionTree, FitError, ShapeError,
                              TokenTable, behavioral_proc, calculate_activation,
                              identity_motor_tree, motor_resolve, pack, perceptual_proc,
                              tokenize_apply, tokenize_fit, tree_fit, tree_predict, unpack)
from cogtwin.codelets.procs import IDENTITY_IO_SET, should_run


# -- reference tree -------------------------------------------------------------
# A second, deliberately naive implementation of the documented induction rules:
# exact Fraction Gini, candidate thresholds scanned in (feature, threshold) order,
# zero-gain splits allowed, majority leaves with ties to the smallest label.


def _gini(labels):
    n = len(labels)
    counts = {}
    for y in labels:
        counts[y] = counts.get(y, 0) + 1
    return 1 - sum(Fraction(c * c, n * n) for c in counts.values())


def _oracle_split(X, y):
    best = None
    for f in range(len(X[0])):
        values = sorted({row[f] for row in X})
        for t in values[:-1]:
            left = [lab for row, lab in zip(X, y) if row[f] <= t]
            right = [lab for row, lab in zip(X, y) if row[f] > t]
            impurity = (len(left) * _gini(left) + len(right) * _gini(right)) / len(y)
            if best is None or impurity < best[0]:
                best = (impurity, f, t)
    return best


def _oracle_tree(X, y):
    if len(set(y)) == 1:
        return [{"leaf": y[0]}]
    split = _oracle_split(X, y)
    if split is None:
        counts = {}
        for lab in y:
            counts[lab] = counts.get(lab, 0) + 1
        top = max(counts.values())
        return [{"leaf": min(lab for lab, c in counts.items() if c == top)}]
    _, f, t = split
    li = [i for i, row in enumerate(X) if row[f] <= t]
    ri = [i for i, row in enumerate(X) if row[f] > t]
    return ([{"f": f, "t": t}] + _oracle_tree([X[i] for i in li], [y[i] for i in li])
            + _oracle_tree([X[i] for i in ri], [y[i] for i in ri]))


def _random_dataset(rng, consistent=True):
    n = rng.randint(1, 40)
    k = rng.randint(1, 4)
    X = [[rng.randint(0, 4) for _ in range(k)] for _ in range(n)]
    if consistent:
        table = {}
        y = [table.setdefault(tuple(r), rng.randint(0, 3)) for r in X]
    else:
        y = [rng.randint(0, 3) for _ in X]
    return X, y


# -- tree -------------------------------------------------------------------------


def test_single_sample_one_leaf():
    t = tree_fit([[5]], [1])
    assert t.to_dict() == {"n_features": 1, "nodes": [{"leaf": 1}]}
    assert all(tree_predict(t, [v]) == 1 for v in range(-3, 10))


def test_xor_fitted_exactly():
    X = [[0, 0], [0, 1], [1, 0], [1, 1]]
    y = [0, 1, 1, 0]
    t = tree_fit(X, y)
    lookup = dict(zip(map(tuple, X), y))
    assert all(tree_predict(t, x) == lookup[tuple(x)] for x in X)
    # every root split has zero gain; the lowest (feature, threshold) is taken
    assert t.to_dict()["nodes"] == [{"f": 0, "t": 0}, {"f": 1, "t": 0}, {"leaf": 0},
                                    {"leaf": 1}, {"f": 1, "t": 0}, {"leaf": 1}, {"leaf": 0}]


def test_contradiction_tie_goes_to_smallest_label():
    t = tree_fit([[0], [0]], [1, 0])
    assert t.to_dict()["nodes"] == [{"leaf": 0}]
    t = tree_fit([[0], [0], [0]], [2, 1, 2])
    assert tree_predict(t, [0]) == 2


def test_ties_between_splits_take_lowest_feature_then_threshold():
    # features 0 and 1 separate the labels equally well
    X = [[0, 0], [1, 1], [2, 2]]
    t = tree_fit(X, [0, 1, 1])
    assert t.to_dict()["nodes"][0] == {"f": 0, "t": 0}


@pytest.mark.parametrize("seed", range(60))
def test_matches_reference_tree(seed):
    rng = random.Random(seed)
    X, y = _random_dataset(rng, consistent=seed % 3 != 0)
    assert tree_fit(X, y).to_dict()["nodes"] == _oracle_tree(X, y)


def test_fit_errors():
    with pytest.raises(FitError):
        tree_fit([], [])
    with pytest.raises(ShapeError):
        tree_fit([[1, 2], [1]], [0, 1])
    with pytest.raises(ShapeError):
        tree_fit([[1], [2]], [0])
    with pytest.raises(ShapeError):
        tree_predict(tree_fit([[1, 2]], [0]), [1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.integers(0, 10), min_size=3, max_size=3), min_size=1, max_size=60),
       st.data())
def test_consistent_data_fitted_exactly(X, data):
    table = {}
    y = [table.setdefault(tuple(r), data.draw(st.integers(0, 5))) for r in X]
    t = tree_fit(X, y)
    assert all(tree_predict(t, x) == table[tuple(x)] for x in X)


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6), st.integers(0, 2)),
                min_size=1, max_size=40))
def test_deterministic_and_serializable(rows):
    X = [[a, b] for a, b, _ in rows]
    y = [c for _, _, c in rows]
    a, b = tree_fit(X, y), tree_fit(X, y)
    assert a.dumps() == b.dumps()
    back = DecisionTree.from_dict(a.to_dict())
    assert back.to_dict() == a.to_dict()
    labels = set(y)
    for x in itertools.product(range(-1, 8), repeat=2):
        assert tree_predict(back, list(x)) == tree_predict(a, list(x)) in labels


@pytest.mark.parametrize("nodes", [[], [{"f": 0, "t": 1}, {"leaf": 0}],
                                   [{"leaf": 0}, {"leaf": 1}]])
def test_malformed_preorder_rejected(nodes):
    with pytest.raises(ValueError):
        DecisionTree.from_dict({"n_features": 1, "nodes": nodes})


# -- tokenizer --------------------------------------------------------------------


def test_tokenizer_worked_example():
    samples = [[0, 1, 0], [0, 1, 1], [0, 1, 0]]
    table = tokenize_fit(samples)
    assert [tokenize_apply(table, s) for s in samples] == [0, 1, 0]


def test_tokenizer_degenerate_cases():
    same = tokenize_fit([[3, 3]] * 5)
    assert [same.apply([3, 3])] * 5 == [0] * 5
    distinct = [[i, 0] for i in range(7)]
    t = tokenize_fit(distinct)
    assert [t.apply(v) for v in distinct] == list(range(7))


def test_sentinel_and_width():
    t = tokenize_fit([[0], [1], [2], [3]])
    assert t.apply([9]) == 4 == t.sentinel
    with pytest.raises(ShapeError):
        t.apply([1, 2])
    with pytest.raises(ShapeError):
        tokenize_fit([[1, 2], [3]])
    with pytest.raises(ValueError):
        tokenize_fit([])


@given(st.lists(st.lists(st.integers(0, 3), min_size=2, max_size=2), min_size=1, max_size=50))
def test_tokens_are_first_occurrence_indices(samples):
    table = tokenize_fit(samples)
    dedup = []
    for s in samples:
        if s not in dedup:
            dedup.append(s)
    assert [list(o) for o in table.observations] == dedup
    assert [table.apply(s) for s in samples] == [dedup.index(s) for s in samples]
    assert TokenTable.from_dict(table.to_dict()).observations == table.observations


# -- packing ----------------------------------------------------------------------


def test_pack_documented_example():
    assert pack([1, 0, 1], [2, 2, 2]) == 5
    assert unpack(5, [2, 2, 2]) == [1, 0, 1]


@given(st.lists(st.integers(2, 4), min_size=1, max_size=6), st.data())
def test_pack_round_trip(radices, data):
    cmds = [data.draw(st.integers(0, r - 1)) for r in radices]
    assert unpack(pack(cmds, radices), radices) == cmds


def test_pack_rejects_out_of_range():
    with pytest.raises(ValueError):
        pack([2], [2])
    with pytest.raises(ValueError):
        pack([0, 1], [2])


# -- codelet procs ----------------------------------------------------------------


def test_activation_gate():
    assert calculate_activation([7, 7, 7]) == 1.0
    assert calculate_activation([7, 6, 7]) == 0.0
    assert calculate_activation([6, 6], current=7) == 0.0
    assert calculate_activation([]) == 0.0
    assert should_run(1.0) and not should_run(0.0) and not should_run(0.5)


def test_perceptual_masking():
    table = tokenize_fit([[7, 3], [1, 1]])
    assert perceptual_proc([0, 2], [7, 9, 3], table) == 0
    assert perceptual_proc([0, 2], [7, 9, 3], table) == 0
    assert perceptual_proc([0, 2], [1, 0, 1], table) == 1
    assert perceptual_proc([0, 2], [1, 0, 1], None) is None


def test_behavioral_defaults_and_prediction():
    assert behavioral_proc([0], None, ["m00"]) == {"m00": BehavioralOutput(0, 0.0)}
    assert behavioral_proc([], tree_fit([[0]], [1]), ["m00"]) == {"m00": BehavioralOutput(0, 0.0)}
    out = behavioral_proc([0], tree_fit([[0]], [1]), ["m00"])
    assert out == {"m00": BehavioralOutput(1, 1.0)}


def test_behavioral_multi_target_against_lookup():
    rng = random.Random(4)
    targets = ["m00", "m03", "m07"]
    rows = [[rng.randint(0, 5), rng.randint(0, 5)] for _ in range(40)]
    desired = {}
    for r in rows:
        desired.setdefault(tuple(r), [rng.randint(0, 1) for _ in targets])
    labels = [pack(desired[tuple(r)], [2, 2, 2]) for r in rows]
    tree = tree_fit(rows, labels)
    for r in rows:
        out = behavioral_proc(r, tree, targets, [2, 2, 2])
        assert [out[t].command for t in targets] == desired[tuple(r)]
        assert all(o.activation == 1.0 for o in out.values())


def test_activation_range_enforced():
    with pytest.raises(ValueError):
        BehavioralOutput(1, 1.2)


def test_motor_resolution():
    assert motor_resolve([("b-light-a", BehavioralOutput(1, 1.0))]) == 1
    assert motor_resolve([("b-light-a", BehavioralOutput(1, 0.4)),
                          ("b-light-b", BehavioralOutput(0, 0.9))]) == 0
    assert motor_resolve([]) == 0
    # equal activations: smallest source name wins
    assert motor_resolve([("b2", BehavioralOutput(0, 1.0)), ("b1", BehavioralOutput(1, 1.0))]) == 1


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(1, 16)), min_size=1, max_size=8),
       st.sampled_from([0.5, 0.25, 0.125]))
def test_argmax_invariant_under_common_scaling(items, factor):
    # dyadic activations and power-of-two factors scale exactly, ties included
    inputs = [(f"b{i:02d}", BehavioralOutput(c, a / 16)) for i, (c, a) in enumerate(items)]
    scaled = [(n, BehavioralOutput(o.command, o.activation * factor)) for n, o in inputs]
    assert motor_resolve(inputs) == motor_resolve(scaled)
    top = max(o.activation for _, o in inputs)
    first = min(n for n, o in inputs if o.activation == top)
    assert motor_resolve(inputs) == dict(inputs)[first].command


def test_identity_motor_tree_matches_fitted_tree():
    assert identity_motor_tree().to_dict() == tree_fit([[0], [1]], [0, 1]).to_dict()
    assert [x for x, _ in IDENTITY_IO_SET] == [0, 1]
