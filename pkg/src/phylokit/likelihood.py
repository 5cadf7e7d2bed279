"""Parzen density models over fitted parameter vectors and the
likelihood-ratio direction score.

A DensityModel holds the forward-fit and reverse-fit alpha samples from a
training set of oriented pairs plus one per-dimension bandwidth vector
(Silverman's rule over the pooled samples) shared by both sides, so the two
densities are compared in a common metric.  The direction score for a fitted
vector is Lambda = p_f(alpha)/p_b(alpha); values above 1 read as
"more forward-like".
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .basisfit import FAMILIES, RBF_FAMILIES, IceSettings, model_pair
from .imageops import dump_json

BANDWIDTH_FLOOR = 1e-3
DENSITY_FLOOR = 1e-300
_LOG_RATIO_CLIP = 700.0   # keeps exp() finite for the log-space route


def silverman_bandwidth(samples):
    """Per-dimension Silverman bandwidth: 1.06 * sd * N^(-1/5), floored."""
    s = np.asarray(samples, dtype=float)
    n = s.shape[0]
    sd = s.std(axis=0, ddof=1)
    return np.maximum(1.06 * sd * n ** (-0.2), BANDWIDTH_FLOOR)


def fit_parzen(samples):
    """Store a sample set with its Silverman bandwidth.

    Returns (samples as (N, d) array, bandwidth vector).
    """
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.ndim != 2 or s.shape[0] < 2:
        raise ValueError("need at least 2 samples of equal dimension")
    if not np.all(np.isfinite(s)):
        raise ValueError("samples contain non-finite values")
    return s, silverman_bandwidth(s)


def log_density(samples, bandwidth, alpha):
    """Log of the product-Gaussian Parzen estimate at alpha."""
    s = np.asarray(samples, dtype=float)
    h = np.asarray(bandwidth, dtype=float)
    a = np.asarray(alpha, dtype=float).ravel()
    if s.ndim == 1:
        s = s[:, None]
    if a.shape[0] != s.shape[1]:
        raise ValueError(f"dimension mismatch: alpha has {a.shape[0]}, samples have {s.shape[1]}")
    z = (a[None, :] - s) / h[None, :]
    log_kernels = -0.5 * np.sum(z**2, axis=1)
    log_norm = np.sum(np.log(h * np.sqrt(2.0 * np.pi)))
    return float(logsumexp(log_kernels) - np.log(s.shape[0]) - log_norm)


def eval_density(samples, bandwidth, alpha):
    """Product-kernel Parzen density (1/N) sum_k prod_d N(alpha_d; s_kd, h_d)."""
    return float(np.exp(log_density(samples, bandwidth, alpha)))


@dataclass
class DensityModel:
    family: str
    forward: np.ndarray
    reverse: np.ndarray
    bandwidth: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.forward = np.atleast_2d(np.asarray(self.forward, dtype=float))
        self.reverse = np.atleast_2d(np.asarray(self.reverse, dtype=float))
        self.bandwidth = np.asarray(self.bandwidth, dtype=float).ravel()
        if self.forward.size == 0 or self.reverse.size == 0:
            raise ValueError("both sample sets must be non-empty")
        if self.forward.shape[1] != self.reverse.shape[1]:
            raise ValueError("forward/reverse dimension mismatch")
        if self.bandwidth.shape[0] != self.forward.shape[1]:
            raise ValueError("bandwidth dimension mismatch")
        if np.any(self.bandwidth <= 0):
            raise ValueError("bandwidth components must be > 0")

    @property
    def m(self):
        return self.forward.shape[1]

    def swapped(self):
        """Model with forward and reverse sample sets exchanged."""
        return DensityModel(self.family, self.reverse.copy(), self.forward.copy(),
                            self.bandwidth.copy(), dict(self.meta))


def likelihood_ratio(model, alpha):
    """Lambda = p_f(alpha)/p_b(alpha), always positive and finite.

    For the high-dimensional RBF families the ratio is formed in log space
    (both densities underflow to zero there long before the ratio is
    meaningless); the low-dimensional families evaluate the densities
    directly with a 1e-300 floor on each side.
    """
    a = np.asarray(alpha, dtype=float).ravel()
    if a.shape[0] != model.m:
        raise ValueError(f"alpha dimension {a.shape[0]} != model dimension {model.m}")
    lpf = log_density(model.forward, model.bandwidth, a)
    lpb = log_density(model.reverse, model.bandwidth, a)
    if model.family in RBF_FAMILIES:
        return float(np.exp(np.clip(lpf - lpb, -_LOG_RATIO_CLIP, _LOG_RATIO_CLIP)))
    pf = max(float(np.exp(lpf)), DENSITY_FLOOR)
    pb = max(float(np.exp(lpb)), DENSITY_FLOOR)
    return pf / pb


_TRAIN_CTX = {}


def _train_init(family, settings):
    _TRAIN_CTX["family"] = family
    _TRAIN_CTX["settings"] = settings


def _train_task(pair):
    orig, trans = pair
    try:
        pv_f, pv_r = model_pair(orig, trans, _TRAIN_CTX["family"], _TRAIN_CTX["settings"])
    except (np.linalg.LinAlgError, ValueError):
        return None
    return pv_f.alpha, pv_r.alpha


def train_model(pairs, family, settings=None, progress=None, jobs=None):
    """Fit a DensityModel from oriented (original, transformed) image pairs.

    Each pair is fitted in both directions; the (original, transformed)
    argument order populates the forward side, the swapped order the
    reverse side.  Pairs whose fit fails numerically are skipped and counted; more
    than 50% failures aborts.  The shared bandwidth is Silverman's rule over
    the pooled forward+reverse samples.  jobs > 1 fans the pair fits out
    over processes; samples are accumulated in pair order either way.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family: {family}")
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least 2 training pairs")
    settings = settings or IceSettings()
    if jobs is not None and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_train_init,
                                 initargs=(family, settings)) as ex:
            results = list(ex.map(_train_task, pairs, chunksize=4))
    else:
        _train_init(family, settings)
        results = [_train_task(p) for p in pairs]
    fwd, rev = [], []
    failures = 0
    for idx, res in enumerate(results):
        if res is None:
            failures += 1
            continue
        fwd.append(res[0])
        rev.append(res[1])
        if progress is not None:
            progress(idx, len(pairs))
    if failures * 2 > len(pairs):
        raise ValueError(f"training failed: {failures}/{len(pairs)} pairs unusable")
    f = np.asarray(fwd)
    r = np.asarray(rev)
    bandwidth = silverman_bandwidth(np.vstack([f, r]))
    meta = {
        "n_pairs": len(pairs),
        "n_failures": failures,
        "settings": {"lam": settings.lam, "max_iters": settings.max_iters, "tol": settings.tol},
    }
    return DensityModel(family, f, r, bandwidth, meta)


def model_to_doc(model):
    return {
        "family": model.family,
        "m": int(model.m),
        "bandwidth": [float(x) for x in model.bandwidth],
        "forward": [[float(x) for x in row] for row in model.forward],
        "reverse": [[float(x) for x in row] for row in model.reverse],
        "meta": model.meta,
    }


def validate_model_doc(doc):
    """Schema check for a model JSON document; raises ValueError."""
    if not isinstance(doc, dict):
        raise ValueError("model must be a JSON object")
    for key in ("family", "m", "bandwidth", "forward", "reverse"):
        if key not in doc:
            raise ValueError(f"model missing key: {key}")
    if doc["family"] not in FAMILIES:
        raise ValueError(f"unknown family: {doc['family']}")
    m = doc["m"]
    if not isinstance(m, int) or m < 1:
        raise ValueError("model m must be a positive integer")
    if len(doc["bandwidth"]) != m:
        raise ValueError("bandwidth length != m")
    for side in ("forward", "reverse"):
        rows = doc[side]
        if not isinstance(rows, list) or not rows:
            raise ValueError(f"model {side} side must be a non-empty list")
        for row in rows:
            if not isinstance(row, list) or len(row) != m:
                raise ValueError(f"model {side} sample of wrong length")
    return doc


def save_model(model, path):
    dump_json(model_to_doc(model), path)


def load_model(path):
    with open(path) as f:
        doc = json.load(f)
    validate_model_doc(doc)
    return DensityModel(doc["family"], np.asarray(doc["forward"], dtype=float),
                        np.asarray(doc["reverse"], dtype=float),
                        np.asarray(doc["bandwidth"], dtype=float), doc.get("meta", {}))
