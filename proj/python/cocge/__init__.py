"""Graph-propagated composition embeddings for open-world compositional
zero-shot recognition: synthetic benchmark generation, seeded training with
feasibility margins and a feasibility-weighted graph, and calibrated
seen/unseen evaluation."""

try:  # installed wheel layout
    from cocge import _core as _c
except ImportError:  # in-tree build with the extension on PYTHONPATH
    import _core as _c

__all__ = [
    "Checkpoint",
    "CompositionalGraph",
    "ConfigError",
    "CurvePoint",
    "Dataset",
    "EdgeWeighting",
    "EpochRecord",
    "EvalReport",
    "FeasibilityTable",
    "LossConfig",
    "MixRule",
    "ModelKind",
    "NumericError",
    "SynthSpec",
    "TrainConfig",
    "TrainMode",
    "TrainResult",
    "Vocabulary",
    "WorldMode",
    "alpha_at",
    "build_graph",
    "build_graph_for",
    "compatibility",
    "evaluate",
    "initial_feasibility",
    "load_checkpoint",
    "load_dataset",
    "metrics_log_json",
    "save_checkpoint",
    "save_dataset",
    "select_tau",
    "synthesize",
    "train",
    "train_visual_product",
    "train_word_avg",
]

__version__ = _c.__version__

for _name in __all__:
    globals()[_name] = getattr(_c, _name)
del _name, _c
