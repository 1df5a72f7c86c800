"""Build the drug / side-effect learning set from SIDER-layout association tables.

Pipeline order: PT-only with de-duplication, rare side-effect removal
(which fixes the vocabulary), optional per-drug side-effect count filter,
structure lookup, removal of compounds without bonds, target construction
and fold assignment.
"""

from __future__ import annotations

import io
import json
import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, TextIO

import numpy as np

from .fileio import atomic_write_text, dumps_records
from .molgraph import ELEMENT_GROUPS, NUM_GROUPS, MolGraph, UnmappedElement, molecule_to_graph
from .pubchem import FetchError
from .smiles import BOND_ORDER, SmilesError, parse_smiles

log = logging.getLogger(__name__)

DATASET_FORMAT = "sidefx-dataset"
DATASET_VERSION = 1
TERM_TYPES = ("LLT", "PT")


class SiderFormatError(ValueError):
    """The association table does not follow the 6-column SIDER layout."""


class DatasetFormatError(ValueError):
    """A dataset file is malformed or of an unsupported version."""


@dataclass(frozen=True)
class RawAssociation:
    stitch_flat_id: str
    stitch_stereo_id: str
    meddra_term_type: str
    side_effect_id: str
    side_effect_name: str


@dataclass(frozen=True)
class VocabEntry:
    id: str
    name: str
    count: int


def parse_sider_tsv(stream: TextIO | str | Path) -> list[RawAssociation]:
    """Read a SIDER ``meddra_all_se``-style table.

    Columns: flat id, stereo id, label concept id, term type (LLT/PT),
    MedDRA concept id, side-effect name. All malformed lines are reported
    together in one :class:`SiderFormatError`.
    """
    if isinstance(stream, (str, Path)):
        with open(stream) as fh:
            return parse_sider_tsv(fh)
    rows, bad = [], []
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 6:
            bad.append(f"line {lineno}: expected 6 columns, got {len(cols)}")
            continue
        flat, stereo, _label, term_type, se_id, name = (c.strip() for c in cols)
        if term_type not in TERM_TYPES:
            bad.append(f"line {lineno}: unknown term type {term_type!r}")
            continue
        rows.append(RawAssociation(flat, stereo, term_type, se_id, name))
    if bad:
        shown = "; ".join(bad[:20]) + (f"; ... ({len(bad)} total)" if len(bad) > 20 else "")
        raise SiderFormatError(shown)
    if not rows:
        raise SiderFormatError("empty association table")
    return rows


def filter_pt_terms(assocs: Iterable[RawAssociation]) -> list[RawAssociation]:
    """Keep PT rows only, one per ``(stereo id, side effect id)``."""
    seen = set()
    out = []
    for a in assocs:
        if a.meddra_term_type != "PT":
            continue
        key = (a.stitch_stereo_id, a.side_effect_id)
        if key not in seen:
            seen.add(key)
            out.append(a)
    if not out:
        log.warning("no PT associations left after filtering")
    return out


def filter_rare_side_effects(
    assocs: Sequence[RawAssociation], min_occ: int = 5
) -> tuple[list[RawAssociation], list[VocabEntry]]:
    """Drop side effects seen in fewer than ``min_occ`` distinct drugs.

    Returns the surviving associations and the vocabulary, ordered by
    concept id.
    """
    drugs_per_se: dict[str, set] = defaultdict(set)
    names: dict[str, str] = {}
    for a in assocs:
        drugs_per_se[a.side_effect_id].add(a.stitch_stereo_id)
        names.setdefault(a.side_effect_id, a.side_effect_name)
    keep = {se for se, drugs in drugs_per_se.items() if len(drugs) >= min_occ}
    vocab = [VocabEntry(se, names[se], len(drugs_per_se[se])) for se in sorted(keep)]
    return [a for a in assocs if a.side_effect_id in keep], vocab


def filter_drugs_by_se_count(
    assocs: Sequence[RawAssociation], min_se: int = 5, max_se: int = 400
) -> list[RawAssociation]:
    """Drop drugs whose number of distinct side effects lies outside ``[min_se, max_se]``."""
    per_drug = Counter({k: len(v) for k, v in _se_sets(assocs).items()})
    return [a for a in assocs if min_se <= per_drug[a.stitch_stereo_id] <= max_se]


def _se_sets(assocs: Iterable[RawAssociation]) -> dict[str, set]:
    out: dict[str, set] = defaultdict(set)
    for a in assocs:
        out[a.stitch_stereo_id].add(a.side_effect_id)
    return out


def remove_bondless_compounds(drugs: Sequence[MolGraph]) -> list[MolGraph]:
    return [g for g in drugs if g.num_edges > 0]


def build_targets(
    assocs: Iterable[RawAssociation], vocab: Sequence[VocabEntry], drugs: Sequence[MolGraph]
) -> tuple[list[MolGraph], list[str]]:
    """Fill each drug's target vector from ``assocs``.

    Returns the drugs with targets and the sorted ids of drugs that have
    associations but no structure (they are skipped, not an error).
    """
    position = {v.id: i for i, v in enumerate(vocab)}
    by_drug = {g.compound_id: g for g in drugs}
    targets = {cid: np.zeros(len(vocab), dtype=np.int8) for cid in by_drug}
    missing = set()
    for a in assocs:
        col = position.get(a.side_effect_id)
        if col is None:
            continue
        t = targets.get(a.stitch_stereo_id)
        if t is None:
            missing.add(a.stitch_stereo_id)
            continue
        t[col] = 1
    return [g.with_target(targets[g.compound_id]) for g in drugs], sorted(missing)


def make_folds(num_drugs: int, k: int = 5, seed: int = 0) -> np.ndarray:
    """Shuffled round-robin fold index for each of ``num_drugs`` drugs."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > num_drugs:
        raise ValueError(f"cannot split {num_drugs} drugs into {k} folds")
    order = np.random.default_rng(seed).permutation(num_drugs)
    folds = np.empty(num_drugs, dtype=np.int64)
    folds[order] = np.arange(num_drugs) % k
    return folds


@dataclass
class SePredDataset:
    drugs: list[MolGraph]
    vocab: list[VocabEntry]
    folds: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.vocab)

    @property
    def k(self) -> int:
        return int(self.folds.max()) + 1 if len(self.folds) else 0

    def targets(self) -> np.ndarray:
        if not self.drugs:
            return np.zeros((0, self.num_classes), dtype=np.int8)
        return np.stack([g.target for g in self.drugs])

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds == fold)

    def validate(self) -> None:
        min_occ = self.params.get("min_se_occ", 1)
        if any(v.count < min_occ for v in self.vocab):
            raise ValueError("vocabulary entry below the occurrence threshold")
        if len(self.folds) != len(self.drugs):
            raise ValueError("fold assignment length differs from drug count")
        sizes = np.bincount(self.folds) if len(self.folds) else np.zeros(0)
        if len(sizes) and sizes.max() - sizes.min() > 1:
            raise ValueError("fold sizes differ by more than one")
        for g in self.drugs:
            if g.num_edges == 0:
                raise ValueError(f"{g.compound_id} has no bonds")
            if len(g.target) != self.num_classes:
                raise ValueError(f"{g.compound_id} target length differs from vocabulary")
            g.validate()


@dataclass
class BuildManifest:
    """What the pipeline dropped and why."""

    counts: dict = field(default_factory=dict)
    unresolved: dict = field(default_factory=dict)
    unparseable: dict = field(default_factory=dict)
    unmapped: dict = field(default_factory=dict)
    bondless: list = field(default_factory=list)
    skipped_associations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "unresolved": self.unresolved,
            "unparseable": self.unparseable,
            "unmapped": self.unmapped,
            "bondless": self.bondless,
            "skipped_associations": self.skipped_associations,
        }


def build_dataset(
    raw: Sequence[RawAssociation],
    resolve_smiles: Callable[[str], str],
    min_se_occ: int = 5,
    drug_se_min: int | None = None,
    drug_se_max: int | None = None,
    k: int = 5,
    seed: int = 0,
    grouping: Mapping[str, int] = ELEMENT_GROUPS,
    workers: int = 1,
) -> tuple[SePredDataset, BuildManifest]:
    """Run the full preprocessing cascade.

    ``resolve_smiles`` maps a stereo id to SMILES and may raise
    :class:`FetchError` or ``KeyError`` for unresolvable compounds, which are
    excluded and listed in the manifest.
    """
    manifest = BuildManifest()
    manifest.counts["raw"] = len(raw)
    assocs = filter_pt_terms(raw)
    manifest.counts["pt_dedup"] = len(assocs)
    assocs, vocab = filter_rare_side_effects(assocs, min_se_occ)
    manifest.counts["frequent_se"] = len(assocs)
    if drug_se_min is not None or drug_se_max is not None:
        assocs = filter_drugs_by_se_count(
            assocs, drug_se_min if drug_se_min is not None else 0,
            drug_se_max if drug_se_max is not None else len(vocab),
        )
        manifest.counts["drug_se_range"] = len(assocs)

    stereo_ids = sorted({a.stitch_stereo_id for a in assocs})

    def lookup(sid: str):
        try:
            return resolve_smiles(sid), None
        except (FetchError, KeyError, ValueError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            resolved = list(pool.map(lookup, stereo_ids))
    else:
        resolved = [lookup(sid) for sid in stereo_ids]

    graphs = []
    for sid, (smiles, err) in zip(stereo_ids, resolved):
        if smiles is None:
            manifest.unresolved[sid] = err
            continue
        try:
            mol = parse_smiles(smiles)
            graphs.append(molecule_to_graph(mol, 0, grouping, compound_id=sid))
        except SmilesError as exc:
            manifest.unparseable[sid] = str(exc)
        except UnmappedElement as exc:
            manifest.unmapped[sid] = exc.symbol
    kept = remove_bondless_compounds(graphs)
    manifest.bondless = sorted({g.compound_id for g in graphs} - {g.compound_id for g in kept})

    drugs, manifest.skipped_associations = build_targets(assocs, vocab, kept)
    present = {g.compound_id for g in drugs}
    manifest.counts["final"] = sum(1 for a in assocs if a.stitch_stereo_id in present)
    manifest.counts["drugs"] = len(drugs)
    for name in ("unresolved", "unparseable", "unmapped"):
        if getattr(manifest, name):
            log.warning("%d compounds excluded as %s", len(getattr(manifest, name)), name)

    params = {
        "min_se_occ": min_se_occ,
        "drug_se_min": drug_se_min,
        "drug_se_max": drug_se_max,
        "k": k,
        "seed": seed,
    }
    folds = make_folds(len(drugs), k, seed) if drugs else np.zeros(0, dtype=np.int64)
    return SePredDataset(drugs, vocab, folds, params), manifest


def dataset_stats(ds: SePredDataset) -> dict:
    """Per-drug side-effect count histogram and summary numbers."""
    targets = ds.targets()
    per_drug = targets.sum(axis=1).astype(int) if len(ds.drugs) else np.zeros(0, dtype=int)
    hist = Counter(per_drug.tolist())
    total = int(per_drug.sum())
    return {
        "num_drugs": len(ds.drugs),
        "vocab_size": ds.num_classes,
        "total_associations": total,
        "mean_se_per_drug": total / len(ds.drugs) if ds.drugs else 0.0,
        "positive_rate": 100.0 * total / targets.size if targets.size else 0.0,
        "histogram": [[n, hist[n]] for n in sorted(hist)],
    }


def save_dataset(ds: SePredDataset, path: str | Path) -> None:
    header = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "params": ds.params,
        "num_groups": NUM_GROUPS,
        "bond_order": [b.value for b in BOND_ORDER],
        "num_classes": ds.num_classes,
    }
    vocab = [{"id": v.id, "name": v.name, "count": v.count} for v in ds.vocab]
    drugs = [
        {
            "id": g.compound_id,
            "fold": int(f),
            "nodes": g.nodes.astype(int).tolist(),
            "edges": g.edges.astype(int).tolist(),
            "target": "".join("1" if t else "0" for t in g.target),
        }
        for g, f in zip(ds.drugs, ds.folds)
    ]
    atomic_write_text(path, dumps_records(header, {"vocab": vocab, "drugs": drugs}))


def load_dataset(path: str | Path) -> SePredDataset:
    with open(path) as fh:
        return _dataset_from_dict(json.load(fh))


def loads_dataset(text: str) -> SePredDataset:
    return _dataset_from_dict(json.load(io.StringIO(text)))


def _dataset_from_dict(doc: dict) -> SePredDataset:
    if doc.get("format") != DATASET_FORMAT:
        raise DatasetFormatError(f"not a {DATASET_FORMAT} file")
    if doc.get("version") != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {doc.get('version')!r}")
    if doc.get("bond_order") != [b.value for b in BOND_ORDER]:
        raise DatasetFormatError("unexpected bond order")
    vocab = [VocabEntry(v["id"], v["name"], int(v["count"])) for v in doc["vocab"]]
    drugs, folds = [], []
    for rec in doc["drugs"]:
        nodes = np.array(rec["nodes"], dtype=np.int8).reshape(-1, NUM_GROUPS)
        edges = np.array(rec["edges"], dtype=np.int64).reshape(-1, 2 + len(BOND_ORDER))
        target = np.frombuffer(rec["target"].encode(), dtype=np.uint8) - ord("0")
        if len(target) != len(vocab):
            raise DatasetFormatError(f"{rec['id']}: target length {len(target)} != {len(vocab)}")
        drugs.append(MolGraph(nodes, edges, target.astype(np.int8), rec["id"]))
        folds.append(int(rec["fold"]))
    return SePredDataset(drugs, vocab, np.array(folds, dtype=np.int64), doc.get("params", {}))
