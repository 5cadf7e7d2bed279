"""Command-line pipeline driver: synthesize near-duplicate trees, train
direction models, reconstruct phylogenies, evaluate them, and export
fitted parameters.

Exit codes: 0 success, 1 usage error, 2 data or numerical error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .basisfit import FAMILIES, IceSettings, model_pair, write_params_csv
from .imageops import (_atomic_write, imread, load_manifest, synth_ipt,
                       write_dataset)
from .likelihood import load_model, save_model, train_model
from .phylogeny import (DEFAULT_K, DEFAULT_TAU, PhylogenyTree, load_recon,
                        reconstruct, save_recon, to_dot)
from .evalmetrics import evaluate_trial, save_report, write_report_csv


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _stderr(msg):
    print(msg, file=sys.stderr, flush=True)


def _resolve_jobs(args):
    """--jobs flag, else PHYLOKIT_JOBS, else the machine's parallelism."""
    if args.jobs is not None:
        if args.jobs < 1:
            raise ValueError("--jobs must be >= 1")
        return args.jobs
    env = os.environ.get("PHYLOKIT_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"PHYLOKIT_JOBS is not an integer: {env!r}")
    return os.cpu_count() or 1


def _ice_settings(args):
    return IceSettings(lam=args.lam, max_iters=args.max_iters, tol=args.tol)


def _add_ice_flags(p):
    p.add_argument("--lam", type=float, default=1e-3, help="ridge weight for the iterative fit")
    p.add_argument("--max-iters", type=int, default=30, help="iteration cap for the iterative fit")
    p.add_argument("--tol", type=float, default=1e-6, help="update-norm convergence threshold")


def _load_image_set(path):
    """Resolve an image set from a dataset dir, manifest path, or image dir.

    Returns (names, images).  A directory containing manifest.json follows
    the manifest's ordering; a bare directory is read in sorted name order.
    """
    if os.path.isdir(path):
        mpath = os.path.join(path, "manifest.json")
        if os.path.exists(mpath):
            doc, images = load_manifest(mpath)
            return list(doc["images"]), images
        names = sorted(f for f in os.listdir(path)
                       if f.lower().endswith((".png", ".pgm")) and not f.startswith("."))
        if not names:
            raise ValueError(f"no images found in {path}")
        return names, [imread(os.path.join(path, f)) for f in names]
    doc, images = load_manifest(path)
    return list(doc["images"]), images


def _cmd_synth(args):
    seed_img = imread(args.input)
    manifest = synth_ipt(seed_img, args.shape, args.klass, args.seed)
    path = write_dataset(manifest, args.out, fmt=args.format)
    _stderr(f"wrote {len(manifest['images'])} images + {path}")
    return 0


def _cmd_train(args):
    settings = _ice_settings(args)
    pairs = []
    for ds in args.datasets:
        mpath = os.path.join(ds, "manifest.json") if os.path.isdir(ds) else ds
        doc, images = load_manifest(mpath)
        for u, v in doc["edges"]:
            pairs.append((images[u], images[v]))
    _stderr(f"training on {len(pairs)} oriented pairs ({args.family})")
    jobs = _resolve_jobs(args)

    def progress(i, n):
        if (i + 1) % 10 == 0 or i + 1 == n:
            _stderr(f"  fitted {i + 1}/{n}")

    model = train_model(pairs, args.family, settings, progress=progress, jobs=jobs)
    save_model(model, args.out)
    _stderr(f"wrote {args.out}")
    return 0


def _cmd_reconstruct(args):
    names, images = _load_image_set(args.images)
    model = load_model(args.model)
    if model.family != args.family:
        raise ValueError(f"model family {model.family!r} does not match --family {args.family!r}")
    settings = _ice_settings(args)
    jobs = _resolve_jobs(args)
    _stderr(f"reconstructing {len(images)} nodes "
            f"({len(images) * (len(images) - 1)} fits, jobs={jobs})")
    recon = reconstruct(images, args.family, model, settings,
                        tau=args.tau, k=args.k, jobs=jobs)
    save_recon(recon, args.out)
    _stderr(f"candidates: {recon.candidates}")
    if args.dot:
        _atomic_write(args.dot, to_dot(recon.trees, labels=names))
        _stderr(f"wrote {args.dot}")
    _stderr(f"wrote {args.out}")
    return 0


def _cmd_evaluate(args):
    recon = load_recon(args.recon)
    doc, _ = load_manifest(args.truth)
    n = len(doc["images"])
    truth = PhylogenyTree(n, doc["root"], frozenset((u, v) for u, v in doc["edges"]))
    report = evaluate_trial(recon, truth)
    save_report([report], args.out)
    if args.csv:
        tmp = args.csv + ".tmp"
        write_report_csv(tmp, [report])
        os.replace(tmp, args.csv)
        _stderr(f"wrote {args.csv}")
    _stderr(f"rank hits {report.root_rank_hits}, "
            f"accuracy {report.ipt_accuracy:.3f}, "
            f"entropy delta {report.entropy_delta:+.4f}")
    _stderr(f"wrote {args.out}")
    return 0


def _cmd_export_params(args):
    names, images = _load_image_set(args.images)
    settings = _ice_settings(args)
    n = len(images)
    rows = []
    for i in range(n):
        for j in range(i + 1, n):
            pv_ij, pv_ji = model_pair(images[i], images[j], args.family, settings)
            rows.append((f"{i}-{j}", "fwd", pv_ij))
            rows.append((f"{i}-{j}", "rev", pv_ji))
            _stderr(f"  fitted pair {i}-{j}")
    tmp = args.out + ".tmp"
    write_params_csv(tmp, rows)
    os.replace(tmp, args.out)
    _stderr(f"wrote {args.out}")
    return 0


def build_parser():
    parser = _Parser(prog="phylokit",
                     description="Reconstruct image phylogeny trees from near-duplicate sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a near-duplicate tree from a seed image")
    p.add_argument("--input", required=True, help="seed (root) grayscale image")
    p.add_argument("--shape", required=True,
                   help="named tree shape (e.g. fig4a) or random:<n>:<seed>")
    p.add_argument("--class", dest="klass", required=True,
                   choices=("photometric", "geometric", "mixed"),
                   help="transform class drawn per edge")
    p.add_argument("--seed", type=int, required=True, help="RNG seed for parameter draws")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--format", choices=("png", "pgm"), default="png")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a direction model from dataset edges")
    p.add_argument("datasets", nargs="+",
                   help="dataset directories (or manifest paths); every edge is a pair")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel pair fits (default: PHYLOKIT_JOBS or all cores)")
    _add_ice_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("reconstruct", help="reconstruct candidate trees for an image set")
    p.add_argument("--images", required=True,
                   help="dataset directory, manifest path, or directory of images")
    p.add_argument("--model", required=True, help="trained model JSON")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU,
                   help="similarity threshold for the indicator matrix")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="number of root candidates")
    p.add_argument("--out", required=True, help="reconstruction JSON path")
    p.add_argument("--dot", default=None, help="optional DOT export path")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel pair fits (default: PHYLOKIT_JOBS or all cores)")
    _add_ice_flags(p)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("evaluate", help="score a reconstruction against its ground truth")
    p.add_argument("--recon", required=True, help="reconstruction JSON")
    p.add_argument("--truth", required=True, help="ground-truth manifest JSON")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", default=None, help="optional per-trial CSV path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("export-params", help="fit all pairs and export the parameter vectors")
    p.add_argument("--images", required=True,
                   help="dataset directory, manifest path, or directory of images")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--out", required=True, help="CSV output path")
    _add_ice_flags(p)
    p.set_defaults(func=_cmd_export_params)

    return parser


def dispatch(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        _stderr(f"usage error: {e}")
        return 1
    except SystemExit as e:   # argparse exits directly for --help
        return 0 if (e.code or 0) == 0 else 1
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, np.linalg.LinAlgError,
            json.JSONDecodeError) as e:
        _stderr(f"error: {e}")
        return 2


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
