"""Topology-aware gradient-guided knowledge distillation for point clouds.

Thin wrapper over the C++ core. The heavy lifting (Vietoris-Rips persistence,
diagram distances, the distillation losses) lives in the `_topokd` extension;
this package just re-exports it.
"""

from topokd._topokd import (  # noqa: F401
    __version__,
    bound_check,
    chamfer,
    clamp_topo_gradient,
    fnv1a_64,
    generate_scene,
    grid_sample,
    h0_unionfind,
    importance_weights,
    kld_loss,
    miou,
    saliency_map,
    snapshot_betti,
    topo_loss,
    vr_diagram,
    wasserstein2,
)

__all__ = [
    "__version__",
    "bound_check",
    "chamfer",
    "clamp_topo_gradient",
    "fnv1a_64",
    "generate_scene",
    "grid_sample",
    "h0_unionfind",
    "importance_weights",
    "kld_loss",
    "miou",
    "saliency_map",
    "snapshot_betti",
    "topo_loss",
    "vr_diagram",
    "wasserstein2",
]
