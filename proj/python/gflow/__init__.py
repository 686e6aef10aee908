"""Geometric optimal-transport flow matching for featured point clouds."""

from ._core import (
    Error,
    Geometry,
    LatentGeometry,
    Model,
    OmtSolution,
    PersistenceError,
    PointSet,
    TemplateSpec,
    ValidityRule,
    brute_force_cost,
    eval_pairs,
    generate,
    hungarian,
    is_valid,
    kabsch,
    load_checkpoint,
    load_geometries,
    make_dataset,
    optimal_molecule_cost,
    project_zero_com,
    sample_noise,
    save_checkpoint,
    save_geometries,
    selftest,
    solve_omt,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
