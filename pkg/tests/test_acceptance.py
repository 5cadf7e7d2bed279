"""Acceptance gate: one test per published criterion.

Each test prints a single "ACCEPTANCE #n: PASS/FAIL (...)" line before
asserting, so a plain run documents every verdict (use -s to see the
lines under a green suite).  Runtime limits are asserted alongside the
numeric clauses.
"""

import os
import time

import numpy as np
import pytest
from scipy.special import binom as sp_binom
from scipy.stats import rankdata

from phylokit.basisfit import eval_poly, fit_blockwise, model_pair
from phylokit.cli import dispatch
from phylokit.evalmetrics import (aggregate, entropy_bounds, evaluate_trial,
                                  von_neumann_entropy)
from phylokit.imageops import (PHOTOMETRIC_KINDS, apply_photometric, imwrite,
                               quantize, sample_spec, synth_ipt)
from phylokit.likelihood import DensityModel, likelihood_ratio, train_model
from phylokit.phylogeny import PhylogenyTree, reconstruct, span_ipt

from conftest import brightness_base, flat_texture

FIG_10_NODE = [(0, 1), (0, 2), (1, 3), (1, 4), (1, 5), (2, 6), (2, 7), (2, 8), (3, 9)]


def _verdict(num, ok, details):
    print(f"ACCEPTANCE #{num}: {'PASS' if ok else 'FAIL'} ({details})", flush=True)
    assert ok, f"criterion #{num} failed: {details}"


def _flat_photo_pairs(seeds, rng):
    pairs = []
    for s in seeds:
        base = quantize(flat_texture(s)).astype(float)
        spec = sample_spec("photometric", rng)
        pairs.append((base, quantize(apply_photometric(base, spec)).astype(float)))
    return pairs


def _auc(pos, neg):
    scores = np.concatenate([pos, neg])
    ranks = rankdata(scores)
    n_pos, n_neg = len(pos), len(neg)
    return (ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


@pytest.fixture(scope="module")
def direction_models():
    """Legendre + Chebyshev direction models on 200 textured photometric
    pairs, plus 100 held-out pairs; shared by criteria 5 and 6."""
    rng = np.random.default_rng(424)
    train_pairs = _flat_photo_pairs(range(3000, 3200), rng)
    test_pairs = _flat_photo_pairs(range(3300, 3400), rng)
    models = {fam: train_model(train_pairs, fam) for fam in ("legendre", "chebyshev")}
    return models, test_pairs


def test_criterion_1_entropy_reproduction():
    t0 = time.perf_counter()
    fork = {(1, 2), (1, 3)}
    fork_plus = {(1, 2), (1, 3), (2, 3)}
    chain = {(1, 2), (2, 3)}
    vals = [von_neumann_entropy(g) for g in (fork, fork_plus, chain)]
    exact = [2 / 3, 23 / 36, 11 / 18]
    rounded = [0.67, 0.64, 0.61]
    ok = all(abs(v - e) < 1e-9 for v, e in zip(vals, exact))
    ok = ok and all(abs(v - r) <= 0.005 for v, r in zip(vals, rounded))
    fig = von_neumann_entropy(FIG_10_NODE)
    ok = ok and abs(fig - 0.89) <= 0.005
    bounds = entropy_bounds(10)
    ok = ok and bounds == (0.85, 0.90)
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 1.0
    _verdict(1, ok, f"toys={[f'{v:.4f}' for v in vals]}, ten-node={fig:.4f}, "
                    f"bounds={bounds}, {elapsed:.3f}s")


def test_criterion_2_polynomial_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(21)
    xs = rng.uniform(-1.0, 1.0, 2000)
    xs = xs[np.abs(xs) > 1e-9][:1000]
    worst = 0.0
    for n in range(6):
        ref_l = 2.0 ** n * sum(xs ** k * sp_binom(n, k) * sp_binom((n + k - 1) / 2.0, n)
                               for k in range(n + 1))
        ref_c = xs ** n * sum(sp_binom(n, 2 * k) * (1.0 - xs ** -2.0) ** k
                              for k in range(n // 2 + 1))
        worst = max(worst,
                    np.max(np.abs(eval_poly("legendre", n, xs) - ref_l)),
                    np.max(np.abs(eval_poly("chebyshev", n, xs) - ref_c)))
    endpoints = all(eval_poly(fam, n, np.array([1.0]))[0] == 1.0
                    for fam in ("legendre", "chebyshev") for n in range(6))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and endpoints and elapsed < 1.0
    _verdict(2, ok, f"worst |diff|={worst:.2e}, endpoints at 1: {endpoints}, {elapsed:.3f}s")


def test_criterion_3_ice_fit_quality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(31)
    good = 0
    for i in range(100):
        base = quantize(brightness_base(700 + i)).astype(float)
        a = rng.uniform(0.9, 1.5)
        b = rng.uniform(-30.0, 30.0)
        trans = quantize(a * base + b).astype(float)
        pv = model_pair(base, trans, "legendre")[0]
        good += int(pv.residual_pe < 1e-4 and pv.converged and pv.iterations <= 30)
    elapsed = time.perf_counter() - t0
    ok = good >= 95 and elapsed < 60.0
    _verdict(3, ok, f"{good}/100 pairs under 1e-4 residual within 30 iters, {elapsed:.1f}s")


def test_criterion_4_residual_ordering():
    t0 = time.perf_counter()
    rng = np.random.default_rng(41)
    buckets = {k: [] for k in PHOTOMETRIC_KINDS}
    while any(len(v) < 50 for v in buckets.values()):
        spec = sample_spec("photometric", rng)
        if len(buckets[spec["kind"]]) < 50:
            buckets[spec["kind"]].append(spec)
    specs = [s for k in PHOTOMETRIC_KINDS for s in buckets[k]]
    families = ("gaussian_rbf", "bump_rbf", "legendre", "chebyshev", "gabor")
    residuals = {f: [] for f in families}
    for i, spec in enumerate(specs):
        base = quantize(flat_texture(800 + i)).astype(float)
        trans = quantize(apply_photometric(base, spec)).astype(float)
        for fam in families:
            residuals[fam].append(model_pair(base, trans, fam)[0].residual_pe)
    mean = {f: float(np.mean(residuals[f])) for f in families}
    ok = (mean["gaussian_rbf"] <= mean["bump_rbf"]
          and mean["bump_rbf"] < mean["legendre"]
          and mean["bump_rbf"] < mean["chebyshev"]
          and mean["legendre"] < mean["gabor"]
          and mean["chebyshev"] < mean["gabor"])
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 600.0
    order = ", ".join(f"{f}={mean[f]:.2e}" for f in families)
    _verdict(4, ok, f"{order}, {elapsed:.0f}s")


def test_criterion_5_direction_discriminability(direction_models):
    t0 = time.perf_counter()
    models, test_pairs = direction_models
    aucs = {}
    for fam in ("legendre", "chebyshev"):
        fwd, rev = [], []
        for orig, trans in test_pairs:
            pv_f, pv_r = model_pair(orig, trans, fam)
            fwd.append(likelihood_ratio(models[fam], pv_f.alpha))
            rev.append(likelihood_ratio(models[fam], pv_r.alpha))
        aucs[fam] = _auc(fwd, rev)
    elapsed = time.perf_counter() - t0
    ok = all(a >= 0.75 for a in aucs.values()) and elapsed < 600.0
    _verdict(5, ok, f"AUC legendre={aucs['legendre']:.3f}, "
                    f"chebyshev={aucs['chebyshev']:.3f} (need >=0.75), {elapsed:.0f}s")


def test_criterion_6_end_to_end_benchmark(direction_models):
    t0 = time.perf_counter()
    models, _ = direction_models
    model = models["legendre"]
    reports = []
    for t in range(50):
        base = quantize(flat_texture(5000 + t))
        manifest = synth_ipt(base, "fig4a", "photometric", 9000 + t)
        images = [img.astype(float) for img in manifest["images"]]
        truth = PhylogenyTree(len(images), manifest["root"], frozenset(manifest["edges"]))
        recon = reconstruct(images, "legendre", model, tau=1.0, k=3)
        reports.append(evaluate_trial(recon, truth))
    agg = aggregate(reports)
    elapsed = time.perf_counter() - t0
    ok = (agg["rank3"] >= 0.60 and agg["mean_ipt_accuracy"] >= 0.55
          and elapsed < 1800.0)
    _verdict(6, ok, f"rank3={agg['rank3']:.2f} (need >=0.60), "
                    f"mean_acc={agg['mean_ipt_accuracy']:.2f} (need >=0.55), "
                    f"delta={agg['entropy_delta_mean']:+.4f}, {elapsed:.0f}s")


def test_criterion_7_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(71)
    recovered = 0
    for _ in range(100):
        n = int(rng.integers(3, 9))
        edges = [(int(rng.integers(0, v)), v) for v in range(1, n)]
        parent = {v: u for u, v in edges}
        B = np.zeros((n, n), dtype=np.uint8)
        S = np.zeros((n, n))
        for v in range(n):
            u = v
            while u in parent:
                u = parent[u]
                B[u, v] = 1
                band = 3.0 if (u, v) in edges else 1.5
                S[u, v] = band + 0.1 * rng.random()
        recovered += int(span_ipt(B, S, 0).edges == set(edges))

    src = rng.uniform(20, 230, size=(8, 16))
    tgt = np.clip(src * 1.1 - 12.0, 0, 255)
    worst = 0.0
    for fam in ("gaussian_rbf", "bump_rbf"):
        pv = fit_blockwise(src, tgt, fam, block=8)
        alphas = []
        for bx in range(2):
            x = (src[:, bx * 8:(bx + 1) * 8] / 255.0).ravel()
            y = (tgt[:, bx * 8:(bx + 1) * 8] / 255.0).ravel()
            z = x[:, None] - x[None, :]
            if fam == "gaussian_rbf":
                phi = np.exp(-(z ** 2))
            else:
                phi = np.zeros_like(z)
                inside = np.abs(z) < 1.0
                phi[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
            alphas.append(np.linalg.pinv(phi + 1e-6 * np.eye(64)) @ y)
        worst = max(worst, float(np.max(np.abs(pv.alpha - np.mean(alphas, axis=0)))))

    elapsed = time.perf_counter() - t0
    ok = recovered == 100 and worst < 1e-6 and elapsed < 60.0
    _verdict(7, ok, f"span recovery {recovered}/100, blockwise vs pinv "
                    f"max |diff|={worst:.1e}, {elapsed:.1f}s")


def test_criterion_8_likelihood_ratio_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(81)
    worst_recip = 0.0
    for fam, m in (("legendre", 6), ("gaussian_rbf", 256)):
        fwd = rng.normal(size=(15, m))
        rev = rng.normal(loc=0.3, size=(15, m))
        bw = np.maximum(1.06 * np.vstack([fwd, rev]).std(axis=0, ddof=1) * 30 ** -0.2, 1e-3)
        model = DensityModel(fam, fwd, rev, bw)
        swapped = model.swapped()
        for _ in range(20):
            q = rng.normal(size=m)
            prod = likelihood_ratio(model, q) * likelihood_ratio(swapped, q)
            worst_recip = max(worst_recip, abs(prod - 1.0))
    same = rng.normal(size=(10, 6))
    eq_model = DensityModel("legendre", same, same.copy(), np.ones(6))
    unity = all(likelihood_ratio(eq_model, rng.normal(size=6)) == 1.0 for _ in range(10))
    gauss = likelihood_ratio(DensityModel("legendre", [[0.0]], [[4.0]], [1.0]), [0.0])
    gauss_err = abs(gauss - np.e ** 8) / np.e ** 8
    elapsed = time.perf_counter() - t0
    ok = worst_recip < 1e-12 and unity and gauss_err < 1e-6 and elapsed < 1.0
    _verdict(8, ok, f"reciprocal worst={worst_recip:.1e}, equal-sides unity: {unity}, "
                    f"two-sample rel err={gauss_err:.1e}, {elapsed:.3f}s")


def test_criterion_9_pipeline_determinism(tmp_path):
    t0 = time.perf_counter()
    seed_png = str(tmp_path / "seed.png")
    imwrite(seed_png, quantize(flat_texture(7777)))
    runs = []
    for tag in ("a", "b"):
        run = tmp_path / f"run_{tag}"
        run.mkdir()
        ds = str(run / "ds")
        assert dispatch(["synth", "--input", seed_png, "--shape", "fig5-2",
                         "--class", "photometric", "--seed", "11", "--out", ds]) == 0
        assert dispatch(["train", ds, "--family", "legendre",
                         "--out", str(run / "model.json"), "--jobs", "2"]) == 0
        assert dispatch(["reconstruct", "--images", ds, "--model", str(run / "model.json"),
                         "--family", "legendre", "--out", str(run / "recon.json"),
                         "--dot", str(run / "recon.dot"), "--jobs", "2"]) == 0
        assert dispatch(["evaluate", "--recon", str(run / "recon.json"),
                         "--truth", os.path.join(ds, "manifest.json"),
                         "--out", str(run / "report.json"),
                         "--csv", str(run / "report.csv")]) == 0
        runs.append(run)
    files_a = sorted(str(p.relative_to(runs[0])) for p in runs[0].rglob("*") if p.is_file())
    files_b = sorted(str(p.relative_to(runs[1])) for p in runs[1].rglob("*") if p.is_file())
    same_names = files_a == files_b
    diffs = []
    for rel in files_a:
        with open(runs[0] / rel, "rb") as fa, open(runs[1] / rel, "rb") as fb:
            if fa.read() != fb.read():
                diffs.append(rel)
    elapsed = time.perf_counter() - t0
    ok = same_names and not diffs
    _verdict(9, ok, f"{len(files_a)} artifacts byte-compared, "
                    f"mismatches={diffs or 'none'}, {elapsed:.1f}s")
