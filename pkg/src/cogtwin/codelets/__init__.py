from .encoding import pack, unpack
from .procs import (BehavioralOutput, behavioral_proc, calculate_activation,
                    identity_motor_tree, motor_resolve, perceptual_proc)
from .tokenizer import TokenTable, tokenize_apply, tokenize_fit
from .tree import DecisionTree, FitError, ShapeError, tree_fit, tree_predict

__all__ = ["BehavioralOutput", "DecisionTree", "FitError", "ShapeError", "TokenTable",
           "behavioral_proc", "calculate_activation", "identity_motor_tree", "motor_resolve",
           "pack", "perceptual_proc", "tokenize_apply", "tokenize_fit", "tree_fit",
           "tree_predict", "unpack"]
