"""Heterogeneous-graph node classification with full metapath-instance encoders.

Thin convenience package over the compiled `_hanme` module. The extension
lives inside the package when installed; when running against a build tree it
is importable from the build directory instead.
"""

try:
    from ._hanme import *  # noqa: F401,F403
    from ._hanme import __doc__ as _core_doc
except ImportError:  # build-tree layout: extension on PYTHONPATH
    from _hanme import *  # noqa: F401,F403
    from _hanme import __doc__ as _core_doc

__all__ = [
    "HeteroGraph",
    "InstanceTable",
    "TrainOptions",
    "gen_synthetic",
    "load_graph",
    "save_graph",
    "assign_pooled_features",
    "enumerate_instances",
    "one_hop_scores",
    "multihop_encode",
    "diffusion_series_encode",
    "direct_encode",
    "pacing",
    "select_nodes_lts",
    "f1_scores",
    "train",
    "evaluate",
]
