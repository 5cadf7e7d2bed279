"""Tree reconstruction from pairwise likelihood-ratio similarities.

Pipeline: similarity_matrix -> indicator_matrix -> root_candidates ->
span_ipt per candidate.  The similarity matrix is asymmetric (S[i, j]
scores "i is the original, j the derivative"); everything downstream is a
cheap deterministic pass over small matrices.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basisfit import FAMILIES, IceSettings, model_pair
from .imageops import dump_json
from .likelihood import DensityModel, likelihood_ratio

DEFAULT_TAU = 1.0
DEFAULT_K = 3


@dataclass
class PhylogenyTree:
    """Rooted directed tree: every non-root node has exactly one parent."""

    n: int
    root: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.edges = frozenset((int(u), int(v)) for u, v in self.edges)
        if not (0 <= self.root < self.n):
            raise ValueError(f"root {self.root} outside 0..{self.n - 1}")
        parent = {}
        for u, v in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) outside node range")
            if v in parent:
                raise ValueError(f"node {v} has two parents")
            parent[v] = u
        if self.root in parent:
            raise ValueError("root has a parent")
        # reachability from the root doubles as the acyclicity check: n-1
        # single-parent edges reaching every node cannot contain a cycle
        seen = {self.root}
        frontier = [self.root]
        children = {}
        for u, v in self.edges:
            children.setdefault(u, []).append(v)
        while frontier:
            u = frontier.pop()
            for v in children.get(u, ()):
                if v in seen:
                    raise ValueError("cycle reached from root")
                seen.add(v)
                frontier.append(v)
        if len(seen) != self.n or len(self.edges) != self.n - 1:
            raise ValueError("not a spanning tree of all nodes")

    def parent_of(self, v):
        for u, w in self.edges:
            if w == v:
                return u
        return None


@dataclass
class Reconstruction:
    candidates: list
    trees: list
    similarity: np.ndarray
    indicator: np.ndarray


_PAIR_CTX = {}


def _pair_init(images, family, model, settings):
    _PAIR_CTX["images"] = images
    _PAIR_CTX["family"] = family
    _PAIR_CTX["model"] = model
    _PAIR_CTX["settings"] = settings


def _pair_task(idx):
    i, j = idx
    ctx = _PAIR_CTX
    pv_ij, pv_ji = model_pair(ctx["images"][i], ctx["images"][j],
                              ctx["family"], ctx["settings"])
    return (likelihood_ratio(ctx["model"], pv_ij.alpha),
            likelihood_ratio(ctx["model"], pv_ji.alpha))


def similarity_matrix(images, family, model, settings=None, jobs=None, progress=None):
    """Populate the n x n likelihood-ratio matrix, one fit per ordered pair.

    Each unordered pair is fitted once in both directions (n*(n-1) fits
    total).  The diagonal is left at zero and never read.  jobs > 1 fans the
    pair fits out over processes; results are merged in pair-index order, so
    the output does not depend on scheduling.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family: {family}")
    if not isinstance(model, DensityModel):
        raise ValueError("model must be a DensityModel")
    n = len(images)
    if n < 2:
        raise ValueError("need at least 2 images")
    shape = np.asarray(images[0]).shape
    for im in images[1:]:
        if np.asarray(im).shape != shape:
            raise ValueError("all images must share dimensions")
    settings = settings or IceSettings()
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    S = np.zeros((n, n), dtype=float)
    if jobs is not None and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_pair_init,
                                 initargs=(images, family, model, settings)) as ex:
            results = list(ex.map(_pair_task, pairs))
    else:
        _pair_init(images, family, model, settings)
        results = [_pair_task(p) for p in pairs]
    for (i, j), (s_ij, s_ji) in zip(pairs, results):
        S[i, j] = s_ij
        S[j, i] = s_ji
        if progress is not None:
            progress(i, j)
    return S


def indicator_matrix(S, tau=DEFAULT_TAU):
    """Binarize the similarity matrix into a coarse parent->child relation.

    B[i, j] = 1 iff S[i, j] >= tau and i dominates the pair direction
    (S[i, j] > S[j, i]; exact ties go to the lower index).  The dominance
    conjunct keeps the relation antisymmetric, so no 2-cycles survive.
    """
    S = np.asarray(S, dtype=float)
    if tau <= 0:
        raise ValueError("tau must be positive")
    n = S.shape[0]
    B = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        for j in range(n):
            if i == j or S[i, j] < tau:
                continue
            if S[i, j] > S[j, i] or (S[i, j] == S[j, i] and i < j):
                B[i, j] = 1
    return B


def root_candidates(B, k=DEFAULT_K):
    """Top-k nodes by indicator row sum (descending; ties by ascending id).

    The presumed original relates to every derivative, so the true root
    tends to collect the most outgoing indicator bits.
    """
    B = np.asarray(B)
    n = B.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}")
    sums = B.sum(axis=1)
    order = sorted(range(n), key=lambda u: (-int(sums[u]), u))
    return order[:k]


def span_ipt(B, S, root):
    """Grow a spanning tree from root along the indicator relation.

    Repeatedly attach the unplaced node whose best indicator edge from any
    placed node has the highest similarity, taking that placed node as its
    parent.  Candidates of the most recently placed node are examined first,
    which settles exact similarity ties depth-first.  Nodes the indicator
    relation never reaches are attached to the root at the end, so the
    result is always a spanning tree.
    """
    B = np.asarray(B)
    S = np.asarray(S, dtype=float)
    n = B.shape[0]
    if not 0 <= root < n:
        raise ValueError(f"invalid root: {root}")
    placed = [root]
    placed_set = {root}
    edges = set()
    while len(placed) < n:
        best = None
        for u in reversed(placed):
            for v in range(n):
                if v not in placed_set and B[u, v] and (best is None or S[u, v] > best[0]):
                    best = (S[u, v], u, v)
        if best is None:
            break
        _, u, v = best
        edges.add((u, v))
        placed.append(v)
        placed_set.add(v)
    for v in range(n):
        if v not in placed_set:
            edges.add((root, v))
            placed_set.add(v)
    return PhylogenyTree(n, root, frozenset(edges))


def reconstruct(images, family, model, settings=None, tau=DEFAULT_TAU, k=DEFAULT_K,
                jobs=None, progress=None):
    """Full pipeline: one spanning tree per candidate root."""
    S = similarity_matrix(images, family, model, settings, jobs=jobs, progress=progress)
    B = indicator_matrix(S, tau)
    cands = root_candidates(B, k)
    trees = [span_ipt(B, S, r) for r in cands]
    return Reconstruction(cands, trees, S, B)


def recon_to_doc(recon):
    return {
        "candidates": [int(c) for c in recon.candidates],
        "trees": [{"root": int(t.root), "edges": sorted([int(u), int(v)] for u, v in t.edges)}
                  for t in recon.trees],
        "similarity": [[float(x) for x in row] for row in recon.similarity],
        "indicator": [[int(x) for x in row] for row in recon.indicator],
    }


def validate_recon_doc(doc):
    """Schema check for a reconstruction JSON document; raises ValueError."""
    if not isinstance(doc, dict):
        raise ValueError("reconstruction must be a JSON object")
    for key in ("candidates", "trees", "similarity", "indicator"):
        if key not in doc:
            raise ValueError(f"reconstruction missing key: {key}")
    S = doc["similarity"]
    if not isinstance(S, list) or not S:
        raise ValueError("similarity must be a non-empty matrix")
    n = len(S)
    if any(not isinstance(row, list) or len(row) != n for row in S):
        raise ValueError("similarity must be square")
    B = doc["indicator"]
    if not isinstance(B, list) or len(B) != n or any(len(row) != n for row in B):
        raise ValueError("indicator must be square and match similarity")
    if any(x not in (0, 1) for row in B for x in row):
        raise ValueError("indicator entries must be 0/1")
    cands = doc["candidates"]
    if not isinstance(cands, list) or not cands:
        raise ValueError("candidates must be a non-empty list")
    if any(not isinstance(c, int) or not 0 <= c < n for c in cands):
        raise ValueError("candidates must be node ids")
    trees = doc["trees"]
    if not isinstance(trees, list) or len(trees) != len(cands):
        raise ValueError("need one tree per candidate")
    for c, t in zip(cands, trees):
        if not isinstance(t, dict) or "root" not in t or "edges" not in t:
            raise ValueError("tree must have root and edges")
        if t["root"] != c:
            raise ValueError("tree root must match its candidate")
        PhylogenyTree(n, t["root"], frozenset((u, v) for u, v in t["edges"]))
    return n


def save_recon(recon, path):
    dump_json(recon_to_doc(recon), path)


def load_recon(path):
    with open(path) as f:
        doc = json.load(f)
    n = validate_recon_doc(doc)
    trees = [PhylogenyTree(n, t["root"], frozenset((u, v) for u, v in t["edges"]))
             for t in doc["trees"]]
    return Reconstruction(list(doc["candidates"]), trees,
                          np.asarray(doc["similarity"], dtype=float),
                          np.asarray(doc["indicator"], dtype=np.uint8))


def to_dot(trees, labels=None):
    """One digraph per tree, nodes labelled by image file names."""
    out = []
    for t_idx, tree in enumerate(trees):
        lines = [f"digraph ipt_{t_idx} {{"]
        for v in range(tree.n):
            label = labels[v] if labels is not None else str(v)
            lines.append(f'  n{v} [label="{label}"];')
        for u, v in sorted(tree.edges):
            lines.append(f"  n{u} -> n{v};")
        lines.append("}")
        out.append("\n".join(lines))
    return "\n\n".join(out) + "\n"
