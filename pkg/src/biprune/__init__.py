"""Pruning processes on finite bi-measure R-trees.

The submodules are the working units:

- :mod:`biprune.tree`: rooted R-trees, points, spans and pruning moves
- :mod:`biprune.measure`: measures on trees and bi-measure trees
- :mod:`biprune.generators`: conditioned Galton-Watson trees, contours, standard measures
- :mod:`biprune.pruning`: simulation, semigroup and generator
- :mod:`biprune.statistics`: test-function calculus, Gromov-Prohorov bounds, convergence reports
- :mod:`biprune.cutdown`: separation times and cut counts
- :mod:`biprune.cli`: the ``biprune`` command

The most used names are re-exported here.
"""
from .cutdown import cutdown_count, joint_survival, rayleigh_experiment, theta_moment, theta_simulate
from .generators import OffspringDistribution, contour, glue, gw_bimeasure, gw_conditioned, parse_family
from .measure import BiMeasureTree, TreeMeasure, measure_of_span, restrict
from .prohorov import prohorov_distance
from .pruning import PruningPath, generator_apply, mc_expectation, semigroup_exact, simulate, state_at
from .statistics import (
    PointedSample,
    convergence_report,
    gp_distance_lower,
    gp_distance_upper,
    sample_subtree_vector,
    tau_n,
)
from .testfunctions import PolynomialSpec, TestFunctionSpec, default_suite, psi_exact
from .tree import FiniteRTree, PrunedTree, Span, TreePoint, distance, distance_matrix, prune_at

__version__ = "0.1.0"

__all__ = [
    "BiMeasureTree",
    "FiniteRTree",
    "OffspringDistribution",
    "PointedSample",
    "PolynomialSpec",
    "PrunedTree",
    "PruningPath",
    "Span",
    "TestFunctionSpec",
    "TreeMeasure",
    "TreePoint",
    "contour",
    "convergence_report",
    "cutdown_count",
    "default_suite",
    "distance",
    "distance_matrix",
    "generator_apply",
    "glue",
    "gp_distance_lower",
    "gp_distance_upper",
    "gw_bimeasure",
    "gw_conditioned",
    "joint_survival",
    "mc_expectation",
    "measure_of_span",
    "parse_family",
    "prohorov_distance",
    "prune_at",
    "rayleigh_experiment",
    "restrict",
    "sample_subtree_vector",
    "semigroup_exact",
    "simulate",
    "state_at",
    "tau_n",
    "theta_moment",
    "theta_simulate",
]
