"""Basis-function families and transformation-parameter estimation.

Five families model the pixel-intensity relation between two near-duplicate
images: Legendre and Chebyshev polynomials (degrees 0..5), a Gabor wavelet
bank (4 combined responses), and Gaussian / bump radial basis functions
(one kernel per block pixel, fitted blockwise).

Two estimators:

* fit_ice: iterative estimation for the global families.  The coefficient
  vector starts at the projection solve of the cross system J^T M alpha =
  J^T y and is refined by the multiplicative update alpha <- alpha/(1+dalpha)
  with dalpha = (J^T J + lambda I)^-1 J^T E until ||dalpha|| drops below tol.
* fit_blockwise: local least squares per 16x16 block for the RBF families,
  kernels centered at the source block's own pixel intensities, averaged
  over blocks.

Residual_pe is always the mean squared per-pixel residual in the family's
normalized intensity units ([-1,1] for polynomials/Gabor, [0,1] for RBFs).
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imageops import normalize_unit, tessellate

FAMILIES = ("legendre", "chebyshev", "gabor", "gaussian_rbf", "bump_rbf")
FAMILY_DIMS = {"legendre": 6, "chebyshev": 6, "gabor": 4, "gaussian_rbf": 256, "bump_rbf": 256}
POLY_FAMILIES = ("legendre", "chebyshev")
ICE_FAMILIES = ("legendre", "chebyshev", "gabor")
RBF_FAMILIES = ("gaussian_rbf", "bump_rbf")

GABOR_WAVELENGTHS = (2, 3, 4, 5)
GABOR_ORIENTATIONS = (0.0, 45.0, 90.0, 135.0)
GABOR_SIGMA_FACTOR = 0.56   # envelope stddev per wavelength unit
GABOR_ASPECT = 0.5


@dataclass
class IceSettings:
    """Iteration controls: ridge weight, iteration cap, convergence tol."""
    lam: float = 1e-3
    max_iters: int = 30
    tol: float = 1e-6

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


@dataclass
class ParamVector:
    """Fitted coefficients for one directed pair."""
    family: str
    alpha: np.ndarray
    residual_pe: float
    iterations: int = 0
    converged: bool = True
    residual_trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("alpha contains non-finite values")
        if self.residual_pe < 0:
            raise ValueError("residual_pe must be >= 0")


def eval_poly(family, n, x):
    """Evaluate L_n(x) or C_n(x) on [-1, 1] by the three-term recurrence."""
    if family not in POLY_FAMILIES:
        raise ValueError(f"not a polynomial family: {family}")
    if n < 0:
        raise ValueError("degree must be >= 0")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValueError("argument outside [-1, 1]")
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p_cur = x.copy()
    for k in range(1, n):
        if family == "legendre":
            p_next = ((2 * k + 1) * x * p_cur - k * p_prev) / (k + 1)
        else:
            p_next = 2 * x * p_cur - p_prev
        p_prev, p_cur = p_cur, p_next
    return p_cur if p_cur.ndim else float(p_cur)


def poly_design(family, x):
    """Design matrix with columns L_0..L_5 (or C_0..C_5) at the points x."""
    x = np.asarray(x, dtype=float).ravel()
    cols = [np.ones_like(x), x]
    for k in range(1, 5):
        if family == "legendre":
            cols.append(((2 * k + 1) * x * cols[-1] - k * cols[-2]) / (k + 1))
        else:
            cols.append(2 * x * cols[-1] - cols[-2])
    return np.stack(cols, axis=1)


_GABOR_KERNELS = None


def _gabor_kernels():
    global _GABOR_KERNELS
    if _GABOR_KERNELS is None:
        banks = []
        for lam in GABOR_WAVELENGTHS:
            sigma = GABOR_SIGMA_FACTOR * lam
            half = int(np.ceil(3.0 * sigma))
            yy, xx = np.mgrid[-half : half + 1, -half : half + 1].astype(float)
            quad = []
            for theta in GABOR_ORIENTATIONS:
                t = np.deg2rad(theta)
                xr = xx * np.cos(t) + yy * np.sin(t)
                yr = -xx * np.sin(t) + yy * np.cos(t)
                env = np.exp(-(xr**2 + (GABOR_ASPECT * yr) ** 2) / (2 * sigma**2))
                quad.append((env * np.cos(2 * np.pi * xr / lam),
                             env * np.sin(2 * np.pi * xr / lam)))
            banks.append(quad)
        _GABOR_KERNELS = banks
    return _GABOR_KERNELS


def gabor_bank(img):
    """Four combined Gabor responses, one per wavelength (2, 3, 4, 5 px).

    Sixteen filters (4 wavelengths x 4 orientations); per wavelength the four
    orientation magnitude responses (even/odd quadrature pair) are averaged.
    """
    img = np.asarray(img, dtype=float)
    kernels = _gabor_kernels()
    support = 2 * int(np.ceil(3.0 * GABOR_SIGMA_FACTOR * max(GABOR_WAVELENGTHS))) + 1
    if min(img.shape) < support:
        raise ValueError(f"image smaller than the largest filter support ({support} px)")
    out = []
    for quad in kernels:
        mags = []
        for even, odd in quad:
            re = ndimage.convolve(img, even, mode="nearest")
            im = ndimage.convolve(img, odd, mode="nearest")
            mags.append(np.hypot(re, im))
        out.append(np.mean(mags, axis=0))
    return np.stack(out, axis=0)


def rbf_kernel(family, x, mu):
    """Radial kernel value(s) K(x; mu).

    gaussian_rbf: exp(-(x-mu)^2).  bump_rbf: exp(-1/(1-z^2)) for |z| < 1 with
    z = x - mu, and exactly 0 outside the support.
    """
    if family not in RBF_FAMILIES:
        raise ValueError(f"not an RBF family: {family}")
    z = np.asarray(x, dtype=float) - np.asarray(mu, dtype=float)
    if family == "gaussian_rbf":
        out = np.exp(-(z**2))
    else:
        out = np.zeros_like(z)
        inside = np.abs(z) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return float(out) if out.ndim == 0 else out


def _ice_design(family, img_norm):
    """Rows of the fit system for one image: (n_pixels, m)."""
    if family in POLY_FAMILIES:
        return poly_design(family, img_norm.ravel())
    # gabor: the basis images are the 4 combined responses
    return gabor_bank(img_norm).reshape(4, -1).T


def fit_ice(src, tgt, family, settings=None):
    """Fit src ~ sum_h alpha_h * B_h[tgt] for a global basis family.

    Intensities are normalized to [-1, 1] internally.  The initial alpha is
    the projection solve of J^T M alpha = J^T y (J = basis rows of src, M =
    basis rows of tgt, y = src pixels); each refinement step computes
    dalpha = (J^T J + lam I)^-1 J^T E with E the current model error and
    applies alpha <- alpha/(1+dalpha) elementwise, skipping components where
    |1+dalpha| < 1e-12.  Stops when ||dalpha|| < tol.
    """
    if family not in ICE_FAMILIES:
        raise ValueError(f"fit_ice does not handle family: {family}")
    settings = settings or IceSettings()
    src = np.asarray(src, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    if src.shape != tgt.shape:
        raise ValueError(f"shape mismatch: {src.shape} vs {tgt.shape}")
    if src.size == 0:
        raise ValueError("empty image")
    y = normalize_unit(src).ravel()
    J = _ice_design(family, normalize_unit(src))
    M = _ice_design(family, normalize_unit(tgt))
    m = J.shape[1]
    alpha = np.linalg.lstsq(J.T @ M, J.T @ y, rcond=None)[0]
    H = J.T @ J + settings.lam * np.eye(m)
    converged = False
    iterations = 0
    trace = []
    for k in range(1, settings.max_iters + 1):
        iterations = k
        err = M @ alpha - y
        trace.append(float(np.mean(err**2)))
        dalpha = np.linalg.solve(H, J.T @ err)
        if np.linalg.norm(dalpha) < settings.tol:
            converged = True
            break
        den = 1.0 + dalpha
        upd = np.abs(den) >= 1e-12
        alpha[upd] = alpha[upd] / den[upd]
    residual = float(np.mean((y - M @ alpha) ** 2))
    return ParamVector(family, alpha, residual, iterations, converged, trace)


def fit_blockwise(src, tgt, family, block=16, ridge=1e-6):
    """Blockwise RBF fit: tgt_q ~ sum_h alpha_h K(src_q; c_h) per block.

    Intensities are mapped to [0, 1] (keeps the bump support wide enough for
    the full intensity range).  Kernel centers c_h are the source block's own
    pixel values, so each block contributes a block^2-dimensional system,
    solved with a small ridge to absorb constant blocks; the returned alpha
    is the mean over blocks.
    """
    if family not in RBF_FAMILIES:
        raise ValueError(f"fit_blockwise does not handle family: {family}")
    src = np.asarray(src, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    if src.shape != tgt.shape:
        raise ValueError(f"shape mismatch: {src.shape} vs {tgt.shape}")
    sblocks = tessellate(src / 255.0, block)
    tblocks = tessellate(tgt / 255.0, block)
    m = block * block
    eye = np.eye(m)
    alphas = np.empty((len(sblocks), m))
    sse = 0.0
    for q, (sb, tb) in enumerate(zip(sblocks, tblocks)):
        x = sb.ravel()
        y = tb.ravel()
        phi = rbf_kernel(family, x[:, None], x[None, :])
        a = np.linalg.solve(phi + ridge * eye, y)
        alphas[q] = a
        r = y - phi @ a
        sse += float(r @ r)
    residual = sse / (len(sblocks) * m)
    return ParamVector(family, alphas.mean(axis=0), residual)


def model_pair(a, b, family, settings=None):
    """Fit both directions of a pair under one convention.

    alpha_ab always means "a explained by b's basis expansion": the ICE
    families pass (src=a, tgt=b) directly, the blockwise RBF solve models its
    tgt from its src's kernels, so the arguments flip.
    """
    if family in ICE_FAMILIES:
        return fit_ice(a, b, family, settings), fit_ice(b, a, family, settings)
    return fit_blockwise(b, a, family), fit_blockwise(a, b, family)


def write_params_csv(path, rows):
    """CSV export of fitted vectors: pair id, direction, family, alpha, residual.

    rows = iterable of (pair_id, direction, ParamVector).
    """
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        first = True
        for pair_id, direction, pv in rows:
            if first:
                w.writerow(["pair", "direction", "family"]
                           + [f"alpha_{h+1}" for h in range(len(pv.alpha))]
                           + ["residual_pe"])
                first = False
            w.writerow([pair_id, direction, pv.family]
                       + [repr(float(x)) for x in pv.alpha]
                       + [repr(float(pv.residual_pe))])
