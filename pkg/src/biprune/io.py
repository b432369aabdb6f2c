"""JSON serialization of trees, measures and points.

Trees are written as ``{"root": 0, "nodes": [{"id", "parent", "edge_length"}]}``
with ids relabelled densely in preorder, so parents always precede children
and the output does not depend on the in-memory labelling.
"""
from __future__ import annotations

import json
from typing import Any, Mapping

import numpy as np

from .measure import BiMeasureTree, TreeMeasure
from .tree import FiniteRTree, TreePoint


def dumps(obj: Any) -> str:
    """Deterministic JSON text (sorted keys, fixed separators, trailing newline)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def _relabel(tree: FiniteRTree) -> np.ndarray:
    new = np.empty(tree.n_nodes, dtype=np.int64)
    new[tree.preorder] = np.arange(tree.n_nodes)
    return new


def tree_to_dict(tree: FiniteRTree) -> dict:
    new = _relabel(tree)
    par, ell = tree.parent, tree.lengths
    nodes = []
    for v in tree.preorder:
        v = int(v)
        nodes.append(
            {
                "id": int(new[v]),
                "parent": None if par[v] < 0 else int(new[par[v]]),
                "edge_length": float(ell[v]),
            }
        )
    return {"root": 0, "nodes": nodes}


def tree_from_dict(d: Mapping) -> FiniteRTree:
    nodes = d["nodes"]
    n = len(nodes)
    parents: list[int | None] = [None] * n
    lengths = [0.0] * n
    seen = set()
    for rec in nodes:
        i = int(rec["id"])
        if not 0 <= i < n or i in seen:
            raise ValueError("node ids must be dense integers from 0")
        seen.add(i)
        parents[i] = rec["parent"]
        lengths[i] = float(rec.get("edge_length", 0.0))
    tree = FiniteRTree(parents, lengths)
    if "root" in d and int(d["root"]) != tree.root:
        raise ValueError("declared root does not match the parent structure")
    return tree


def point_to_dict(tree: FiniteRTree, p: TreePoint) -> dict:
    """Point in the preorder labelling used by :func:`tree_to_dict`."""
    new = _relabel(tree)
    if p.offset is None:
        return {"node": int(new[p.node])}
    return {"edge": int(new[p.node]), "offset": float(p.offset)}


def point_from_dict(tree: FiniteRTree, d: Mapping) -> TreePoint:
    """Inverse of :func:`point_to_dict`; ``tree`` must be the deserialized tree."""
    if "node" in d:
        return tree.point(int(d["node"]))
    return tree.point(int(d["edge"]), float(d["offset"]))


def measure_to_dict(m: TreeMeasure) -> dict:
    tree = m.tree
    order = tree.preorder
    out: dict = {"length_coeff": [float(m.length_coeff[v]) for v in order]}
    if np.any(m.extent < tree.lengths):
        out["extent"] = [float(m.extent[v]) for v in order]
    atoms = [{"point": point_to_dict(tree, p), "mass": float(w)} for p, w in m.atoms.items()]
    atoms.sort(key=lambda a: (a["point"].get("node", a["point"].get("edge")), a["point"].get("offset", -1.0)))
    out["atoms"] = atoms
    return out


def measure_from_dict(tree: FiniteRTree, d: Mapping) -> TreeMeasure:
    atoms: dict[TreePoint, float] = {}
    for a in d.get("atoms", []):
        p = point_from_dict(tree, a["point"])
        atoms[p] = atoms.get(p, 0.0) + float(a["mass"])
    return TreeMeasure(tree, d.get("length_coeff"), atoms, d.get("extent"))


def bimeasure_to_dict(x: BiMeasureTree) -> dict:
    if x.cuts:
        x = x.materialize()
    d = tree_to_dict(x.tree)
    d["mu"] = measure_to_dict(x.mu)
    d["nu"] = measure_to_dict(x.nu)
    return d


def bimeasure_from_dict(d: Mapping) -> BiMeasureTree:
    tree = tree_from_dict(d)
    mu = measure_from_dict(tree, d["mu"]) if "mu" in d else TreeMeasure.zero(tree)
    nu = measure_from_dict(tree, d["nu"]) if "nu" in d else TreeMeasure.zero(tree)
    return BiMeasureTree(tree, mu, nu)


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def save_json(path, obj: Any) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj))
