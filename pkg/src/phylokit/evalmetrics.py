"""Reconstruction quality metrics: root-identification rank accuracy,
edge-recall IPT accuracy, and a degree-based von Neumann entropy for
directed graphs."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .imageops import dump_json


def _edges_and_n(graph, n=None):
    """Accept a PhylogenyTree or a bare edge iterable (+ optional n)."""
    if hasattr(graph, "edges") and hasattr(graph, "n"):
        return {(int(u), int(v)) for u, v in graph.edges}, graph.n
    edges = {(int(u), int(v)) for u, v in graph}
    if n is None:
        n = len({u for u, _ in edges} | {v for _, v in edges})
    return edges, n


def root_rank_hit(candidates, true_root, k):
    """True iff the true root appears among the first k candidates."""
    if not 1 <= k <= len(candidates):
        raise ValueError(f"k must be in 1..{len(candidates)}")
    return true_root in list(candidates)[:k]


def ipt_accuracy(recon, truth):
    """Fraction of ground-truth edges present in the reconstruction.

    Extra reconstructed edges never enter the count, so an ancestral
    shortcut (an edge skipping to a deeper descendant) costs nothing;
    only missing true parent-child links lower the score.
    """
    r_edges, r_n = _edges_and_n(recon)
    t_edges, t_n = _edges_and_n(truth)
    if r_n != t_n:
        raise ValueError(f"node-set mismatch: {r_n} vs {t_n}")
    if not t_edges:
        raise ValueError("ground truth has no edges")
    return len(t_edges & r_edges) / len(t_edges)


def von_neumann_entropy(graph, n=None):
    """Degree-based entropy approximation for a directed graph.

    H = 1 - 1/n - (1/(2n^2)) * [ sum over one-way edges (u, v) of
    d_in(u) / (d_in(v) * d_out(u)^2)  +  sum over 2-cycle edges of
    1 / (d_out(u) * d_out(v)) ].  Edges leaving a node with no in-edges
    contribute zero.  Trees and DAGs only exercise the first sum.
    """
    edges, n = _edges_and_n(graph, n)
    if not edges:
        raise ValueError("entropy undefined for an empty graph")
    if n < 2:
        raise ValueError("need at least 2 nodes")
    din = {}
    dout = {}
    for u, v in edges:
        dout[u] = dout.get(u, 0) + 1
        din[v] = din.get(v, 0) + 1
    acc = 0.0
    for u, v in edges:
        if (v, u) in edges:
            acc += 1.0 / (dout[u] * dout[v])
        elif din.get(u, 0) > 0:
            acc += din[u] / (din[v] * dout[u] ** 2)
    return 1.0 - 1.0 / n - acc / (2.0 * n * n)


def entropy_bounds(n):
    """(min, max) entropy over n-node phylogeny configurations."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    return (1.0 - 1.5 / n, 1.0 - 1.0 / n)


def entropy_delta(truth, recon):
    """H(recon) - H(truth); negative when reconstruction loses structure."""
    t_edges, t_n = _edges_and_n(truth)
    r_edges, r_n = _edges_and_n(recon)
    if t_n != r_n:
        raise ValueError(f"node-count mismatch: {t_n} vs {r_n}")
    return von_neumann_entropy(r_edges, r_n) - von_neumann_entropy(t_edges, t_n)


def entropy_delta_stats(deltas):
    """Mean and standard deviation of a batch of entropy deltas."""
    d = np.asarray(list(deltas), dtype=float)
    if d.size == 0:
        raise ValueError("no deltas")
    return float(d.mean()), float(d.std())


@dataclass
class EvalReport:
    root_rank_hits: tuple
    ipt_accuracy: float
    entropy_recon: float
    entropy_truth: float
    entropy_delta: float

    def __post_init__(self):
        h1, h2, h3 = self.root_rank_hits
        if (h1 and not h2) or (h2 and not h3):
            raise ValueError("rank hits must be monotone")
        if not 0.0 <= self.ipt_accuracy <= 1.0:
            raise ValueError("ipt_accuracy outside [0, 1]")


def evaluate_trial(recon, truth):
    """Score one reconstruction against its ground truth.

    Root ranks read the candidate list; accuracy and entropy score the
    first tree (the one spanned from the best-ranked candidate).
    """
    best = recon.trees[0]
    if best.n != truth.n:
        raise ValueError(f"node-count mismatch: {best.n} vs {truth.n}")
    hits = tuple(bool(truth.root in list(recon.candidates)[:k]) for k in (1, 2, 3))
    acc = ipt_accuracy(best, truth)
    h_recon = von_neumann_entropy(best)
    h_truth = von_neumann_entropy(truth)
    return EvalReport(hits, acc, h_recon, h_truth, h_recon - h_truth)


def aggregate(reports):
    """Fold per-trial reports into the summary rates."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    mean_delta, std_delta = entropy_delta_stats(r.entropy_delta for r in reports)
    return {
        "rank1": float(np.mean([r.root_rank_hits[0] for r in reports])),
        "rank2": float(np.mean([r.root_rank_hits[1] for r in reports])),
        "rank3": float(np.mean([r.root_rank_hits[2] for r in reports])),
        "mean_ipt_accuracy": float(np.mean([r.ipt_accuracy for r in reports])),
        "entropy_delta_mean": mean_delta,
        "entropy_delta_stddev": std_delta,
    }


def report_to_doc(reports):
    reports = list(reports)
    return {
        "trials": [
            {
                "rank1": bool(r.root_rank_hits[0]),
                "rank2": bool(r.root_rank_hits[1]),
                "rank3": bool(r.root_rank_hits[2]),
                "ipt_accuracy": float(r.ipt_accuracy),
                "entropy_recon": float(r.entropy_recon),
                "entropy_truth": float(r.entropy_truth),
                "entropy_delta": float(r.entropy_delta),
            }
            for r in reports
        ],
        "aggregate": aggregate(reports),
    }


def save_report(reports, path):
    dump_json(report_to_doc(reports), path)


def write_report_csv(path, reports):
    """Per-trial rows, one line each, for spreadsheet digestion."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["trial", "rank1", "rank2", "rank3", "ipt_accuracy",
                    "entropy_recon", "entropy_truth", "entropy_delta"])
        for i, r in enumerate(reports):
            w.writerow([i, int(r.root_rank_hits[0]), int(r.root_rank_hits[1]),
                        int(r.root_rank_hits[2]), repr(float(r.ipt_accuracy)),
                        repr(float(r.entropy_recon)), repr(float(r.entropy_truth)),
                        repr(float(r.entropy_delta))])
