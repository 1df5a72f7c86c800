"""Shared test oracles."""

import numpy as np

from sidefx.smiles import parse_smiles
from sidefx.molgraph import molecule_to_graph

FD_EPS = 1e-5


def numeric_grad(loss, array, eps=FD_EPS):
    """Central finite differences of ``loss()`` w.r.t. every entry of ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = loss()
        flat[i] = old - eps
        down = loss()
        flat[i] = old
        out[i] = (up - down) / (2 * eps)
    return grad


def max_rel_error(analytic, numeric, floor=0.0):
    """Largest elementwise |a - n| / max(|a|, |n|, floor); entries where both are 0 count as 0."""
    a, n = np.asarray(analytic, float).ravel(), np.asarray(numeric, float).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    diff = np.abs(a - n)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(diff == 0, 0.0, diff / denom)
    return float(rel.max()) if rel.size else 0.0


def graph(smiles, num_classes=0, target=None):
    g = molecule_to_graph(parse_smiles(smiles), num_classes, compound_id=smiles)
    return g if target is None else g.with_target(target)


def random_graph(rng, max_nodes=6):
    """Random molecular graph (possibly disconnected) over the grouped elements with random bond kinds."""
    from sidefx.molgraph import ELEMENT_GROUPS
    from sidefx.smiles import Atom, Bond, BondKind, Molecule

    symbols = sorted(ELEMENT_GROUPS)
    n = int(rng.integers(1, max_nodes + 1))
    atoms = tuple(Atom(symbols[i]) for i in rng.integers(0, len(symbols), n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
    kinds = list(BondKind)
    bonds = tuple(Bond(i, j, kinds[int(rng.integers(4))]) for i, j in pairs)
    return molecule_to_graph(Molecule(atoms, bonds))


def kink_distance(params, cache):
    """Smallest |pre-activation| feeding a SELU unit in a GNN forward pass.

    Central differences are only valid when no such value lies within the
    step of zero, where the SELU derivative jumps.
    """
    dist = np.inf
    for mlp, mc in [(params.f_w, c) for c in cache.state_caches] + [(params.g_w, cache.output_cache)]:
        for layer, z in zip(mlp.layers, mc.pre):
            if layer.activation == "selu" and z.size:
                dist = min(dist, float(np.abs(z).min()))
    return dist
