"""Grayscale image handling.

Images are 2-D float arrays with intensities in [0, 255].  Everything here
keeps real-valued intensities internally; quantization to 8 bit happens only
when a file is written.  This module also owns the synthetic near-duplicate
generator: given a seed image and a tree shape it derives one image per node,
each child obtained from its parent by a single randomly parameterized
transformation.
"""

import json
import os
import tempfile

import numpy as np
from PIL import Image
from scipy import ndimage

PHOTOMETRIC_KINDS = ("brightness", "median", "gaussian_smooth", "gamma")
GEOMETRIC_KINDS = ("resample", "rotate", "translate", "scale")

# Sampling ranges for the generator.  Translation entries are magnitudes;
# the sign of each axis is drawn separately.
PARAM_RANGES = {
    "brightness": {"a": (0.9, 1.5), "b": (-30.0, 30.0)},
    "median": {"m": (2, 6), "n": (2, 6)},
    "gaussian_smooth": {"sigma": (1.0, 3.0)},
    "gamma": {"gamma": (0.5, 1.5)},
    "resample": {"factor": (0.90, 1.10)},
    "scale": {"factor": (0.90, 1.10)},
    "rotate": {"degrees": (-5.0, 5.0)},
    "translate": {"dx": (5, 20), "dy": (5, 20)},
}

# Named tree shapes used throughout the experiments: a balanced 10-node
# configuration, a deep and a wide 10-node variant, and four 5-node shapes.
TREE_SHAPES = {
    "fig4a": (10, [(0, 1), (0, 2), (1, 3), (1, 4), (1, 5), (2, 6), (2, 7), (2, 8), (3, 9)]),
    "fig4c": (10, [(0, 1), (0, 2), (1, 3), (3, 4), (3, 5), (4, 6), (6, 7), (6, 8), (7, 9)]),
    "fig4d": (10, [(0, 1), (0, 2), (0, 3), (1, 4), (2, 5), (3, 6), (4, 7), (5, 8), (6, 9)]),
    "fig5-1": (5, [(0, 1), (1, 2), (2, 3), (3, 4)]),
    "fig5-2": (5, [(0, 1), (0, 2), (1, 3), (3, 4)]),
    "fig5-3": (5, [(0, 1), (0, 2), (1, 3), (1, 4)]),
    "fig5-4": (5, [(0, 1), (0, 2), (0, 3), (0, 4)]),
}


def imread(path):
    """Read an 8-bit grayscale PNG/PGM file as a float array in [0, 255]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=float)


def quantize(img):
    """Round to the nearest 8-bit level and clip to [0, 255]."""
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def imwrite(path, img):
    """Write an image (quantized to 8 bit) as PNG or PGM depending on suffix."""
    arr = img if img.dtype == np.uint8 else quantize(img)
    Image.fromarray(arr, mode="L").save(path)


def normalize_unit(img):
    """Map intensities [0, 255] -> [-1, 1], the polynomial domain."""
    return np.asarray(img, dtype=float) / 127.5 - 1.0


def denormalize_unit(img):
    """Inverse of normalize_unit."""
    return (np.asarray(img, dtype=float) + 1.0) * 127.5


def tessellate(img, block):
    """Split an image into non-overlapping block x block tiles, row-major.

    Right/bottom partial tiles are padded by edge replication so every tile
    has the full block size.  Returns a list of ceil(h/b)*ceil(w/b) arrays.
    """
    if block < 1:
        raise ValueError("block size must be >= 1")
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    nby = -(-h // block)
    nbx = -(-w // block)
    padded = np.pad(img, ((0, nby * block - h), (0, nbx * block - w)), mode="edge")
    return [
        padded[by * block : (by + 1) * block, bx * block : (bx + 1) * block]
        for by in range(nby)
        for bx in range(nbx)
    ]


def assemble(blocks, shape, block):
    """Reassemble tessellate() output, dropping the replication padding."""
    h, w = shape
    nbx = -(-w // block)
    nby = -(-h // block)
    out = np.empty((nby * block, nbx * block))
    for i, blk in enumerate(blocks):
        by, bx = divmod(i, nbx)
        out[by * block : (by + 1) * block, bx * block : (bx + 1) * block] = blk
    return out[:h, :w]


def _check_params(kind, params):
    if kind == "brightness":
        a, b = params["a"], params["b"]
        if not (0.0 < a <= 5.0 and -255.0 <= b <= 255.0):
            raise ValueError(f"brightness params out of range: a={a}, b={b}")
    elif kind == "median":
        m, n = int(params["m"]), int(params["n"])
        if not (1 <= m <= 15 and 1 <= n <= 15):
            raise ValueError(f"median window out of range: {m}x{n}")
    elif kind == "gaussian_smooth":
        if not 0.0 < params["sigma"] <= 10.0:
            raise ValueError(f"gaussian stddev out of range: {params['sigma']}")
    elif kind == "gamma":
        if not 0.1 <= params["gamma"] <= 10.0:
            raise ValueError(f"gamma out of range: {params['gamma']}")
    elif kind in ("resample", "scale"):
        if not 0.5 <= params["factor"] <= 2.0:
            raise ValueError(f"{kind} factor out of range: {params['factor']}")
    elif kind == "rotate":
        if not -45.0 <= params["degrees"] <= 45.0:
            raise ValueError(f"rotation out of range: {params['degrees']}")
    elif kind == "translate":
        dx, dy = int(params["dx"]), int(params["dy"])
        if not (abs(dx) <= 64 and abs(dy) <= 64):
            raise ValueError(f"translation out of range: ({dx}, {dy})")
    else:
        raise ValueError(f"unknown transform kind: {kind}")


def apply_photometric(img, spec):
    """Apply a photometric transform; output is clipped to [0, 255]."""
    kind, params = spec["kind"], spec["params"]
    if kind not in PHOTOMETRIC_KINDS:
        raise ValueError(f"not a photometric kind: {kind}")
    _check_params(kind, params)
    img = np.asarray(img, dtype=float)
    if img.size == 0:
        raise ValueError("empty image")
    if kind == "brightness":
        out = params["a"] * img + params["b"]
    elif kind == "gamma":
        out = 255.0 * (np.clip(img, 0, None) / 255.0) ** params["gamma"]
    elif kind == "gaussian_smooth":
        out = ndimage.gaussian_filter(img, params["sigma"], mode="nearest")
    else:  # median
        out = ndimage.median_filter(img, size=(int(params["m"]), int(params["n"])), mode="nearest")
    return np.clip(out, 0.0, 255.0)


def _bilinear_resize(img, out_h, out_w):
    """Bilinear resize to an exact output shape (align-corners sampling)."""
    h, w = img.shape
    ys = np.linspace(0.0, h - 1.0, out_h)
    xs = np.linspace(0.0, w - 1.0, out_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def _fit_to_shape(img, h, w):
    """Center-crop or replicate-pad to (h, w)."""
    ch, cw = img.shape
    if ch > h:
        top = (ch - h) // 2
        img = img[top : top + h, :]
    if cw > w:
        left = (cw - w) // 2
        img = img[:, left : left + w]
    ch, cw = img.shape
    if ch < h or cw < w:
        ty = (h - ch) // 2
        tx = (w - cw) // 2
        img = np.pad(img, ((ty, h - ch - ty), (tx, w - cw - tx)), mode="edge")
    return img


def apply_geometric(img, spec):
    """Apply a geometric transform, keeping the source dimensions.

    Rotation/scaling/resampling use bilinear interpolation; outputs are
    re-cropped or replicate-padded so every image in a tree stays the same
    size (pixelwise comparison never needs registration).
    """
    kind, params = spec["kind"], spec["params"]
    if kind not in GEOMETRIC_KINDS:
        raise ValueError(f"not a geometric kind: {kind}")
    _check_params(kind, params)
    img = np.asarray(img, dtype=float)
    if img.size == 0:
        raise ValueError("empty image")
    h, w = img.shape
    if kind == "rotate":
        out = ndimage.rotate(img, params["degrees"], reshape=False, order=1, mode="nearest")
    elif kind == "translate":
        dx, dy = int(params["dx"]), int(params["dy"])
        rows = np.clip(np.arange(h) - dy, 0, h - 1)
        cols = np.clip(np.arange(w) - dx, 0, w - 1)
        out = img[np.ix_(rows, cols)]
    elif kind == "scale":
        f = params["factor"]
        zoomed = _bilinear_resize(img, max(int(round(h * f)), 1), max(int(round(w * f)), 1))
        out = _fit_to_shape(zoomed, h, w)
    else:  # resample: change sampling density, then return to original grid
        f = params["factor"]
        small = _bilinear_resize(img, max(int(round(h * f)), 1), max(int(round(w * f)), 1))
        out = _bilinear_resize(small, h, w)
    return np.clip(out, 0.0, 255.0)


def apply_transform(img, spec):
    if spec["kind"] in PHOTOMETRIC_KINDS:
        return apply_photometric(img, spec)
    return apply_geometric(img, spec)


def sample_spec(klass, rng):
    """Draw a random TransformSpec of the given class (photometric|geometric|mixed)."""
    if klass == "mixed":
        klass = "photometric" if rng.random() < 0.5 else "geometric"
    if klass == "photometric":
        kind = PHOTOMETRIC_KINDS[rng.integers(0, len(PHOTOMETRIC_KINDS))]
    elif klass == "geometric":
        kind = GEOMETRIC_KINDS[rng.integers(0, len(GEOMETRIC_KINDS))]
    else:
        raise ValueError(f"unknown transform class: {klass}")
    r = PARAM_RANGES[kind]
    if kind == "brightness":
        params = {"a": float(rng.uniform(*r["a"])), "b": float(rng.uniform(*r["b"]))}
    elif kind == "median":
        params = {"m": int(rng.integers(r["m"][0], r["m"][1] + 1)),
                  "n": int(rng.integers(r["n"][0], r["n"][1] + 1))}
    elif kind == "gaussian_smooth":
        params = {"sigma": float(rng.uniform(*r["sigma"]))}
    elif kind == "gamma":
        params = {"gamma": float(rng.uniform(*r["gamma"]))}
    elif kind in ("resample", "scale"):
        params = {"factor": float(rng.uniform(*r["factor"]))}
    elif kind == "rotate":
        params = {"degrees": float(rng.uniform(*r["degrees"]))}
    else:  # translate: magnitude in range, independent sign per axis
        dx = int(rng.integers(r["dx"][0], r["dx"][1] + 1)) * (1 if rng.random() < 0.5 else -1)
        dy = int(rng.integers(r["dy"][0], r["dy"][1] + 1)) * (1 if rng.random() < 0.5 else -1)
        params = {"dx": dx, "dy": dy}
    return {"kind": kind, "params": params}


def tree_shape(name):
    """Resolve a named tree shape (or 'random:<n>:<seed>') to (n, edges)."""
    if name in TREE_SHAPES:
        n, edges = TREE_SHAPES[name]
        return n, list(edges)
    if name.startswith("random:"):
        parts = name.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad random shape spec: {name}")
        n, seed = int(parts[1]), int(parts[2])
        if n < 2:
            raise ValueError("random shape needs n >= 2")
        rng = np.random.default_rng(seed)
        edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
        return n, edges
    raise ValueError(f"unknown tree shape: {name}")


def check_shape(n, edges):
    """Validate that (n, edges) is a rooted tree with root 0-parented layout."""
    if n < 2:
        raise ValueError("tree needs >= 2 nodes")
    parent = {}
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n) or u == v:
            raise ValueError(f"bad edge ({u}, {v})")
        if v in parent:
            raise ValueError(f"node {v} has two parents")
        parent[v] = u
    roots = [v for v in range(n) if v not in parent]
    if len(roots) != 1:
        raise ValueError(f"expected a single root, found {roots}")
    root = roots[0]
    # walking up from every node must terminate at the root (no cycles)
    for v in range(n):
        seen = set()
        while v != root:
            if v in seen:
                raise ValueError("shape contains a cycle")
            seen.add(v)
            v = parent[v]
    return root


def synth_ipt(seed_img, shape, klass, rng_seed):
    """Generate a synthetic near-duplicate tree from a seed image.

    shape is (n, edges) or a named shape string.  Each child is its parent
    with exactly one transform of the requested class applied, parameters
    drawn uniformly from the documented ranges.  Children derive from the
    quantized parent so that replaying the manifest from the stored root
    file reproduces every stored image bit-exactly.

    Returns a manifest dict with in-memory images (uint8 arrays).
    """
    if isinstance(shape, str):
        n, edges = tree_shape(shape)
    else:
        n, edges = shape
    root = check_shape(n, edges)
    if klass not in ("photometric", "geometric", "mixed"):
        raise ValueError(f"unknown transform class: {klass}")
    rng = np.random.default_rng(rng_seed)
    images = [None] * n
    images[root] = quantize(np.asarray(seed_img, dtype=float))
    edge_specs = {}
    # children in ascending id order so the draw sequence is reproducible
    for u, v in sorted(edges, key=lambda e: e[1]):
        if images[u] is None:
            raise ValueError("edge list is not topologically ordered from the root")
        spec = sample_spec(klass, rng)
        edge_specs[(u, v)] = [spec]
        img = images[u].astype(float)
        for s in edge_specs[(u, v)]:
            img = apply_transform(img, s)
        images[v] = quantize(img)
    return {
        "seed": int(rng_seed),
        "images": images,
        "root": int(root),
        "edges": [(int(u), int(v)) for u, v in edges],
        "edge_specs": edge_specs,
    }


def _atomic_write(path, data):
    """Write bytes (or text) to path atomically via a temp file + rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj, path):
    """Canonical JSON serialization: sorted keys, atomic write."""
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_dataset(manifest, outdir, fmt="png"):
    """Write a synth_ipt manifest to a directory: images + manifest.json."""
    os.makedirs(outdir, exist_ok=True)
    n = len(manifest["images"])
    names = [f"node_{i:02d}.{fmt}" for i in range(n)]
    for name, img in zip(names, manifest["images"]):
        # image writes go through a temp name too, so a crash never leaves
        # a half-written file next to a manifest that references it
        tmp = os.path.join(outdir, ".tmp-" + name)
        imwrite(tmp, img)
        os.replace(tmp, os.path.join(outdir, name))
    doc = {
        "seed": manifest["seed"],
        "images": names,
        "root": manifest["root"],
        "edges": [[u, v] for u, v in manifest["edges"]],
        "edge_specs": {f"{u}-{v}": specs for (u, v), specs in manifest["edge_specs"].items()},
    }
    path = os.path.join(outdir, "manifest.json")
    dump_json(doc, path)
    return path


def validate_manifest(doc):
    """Schema check for a manifest JSON document; raises ValueError."""
    if not isinstance(doc, dict):
        raise ValueError("manifest must be a JSON object")
    for key in ("seed", "images", "root", "edges", "edge_specs"):
        if key not in doc:
            raise ValueError(f"manifest missing key: {key}")
    if not isinstance(doc["seed"], int):
        raise ValueError("manifest seed must be an integer")
    imgs = doc["images"]
    if not isinstance(imgs, list) or not imgs or not all(isinstance(p, str) for p in imgs):
        raise ValueError("manifest images must be a non-empty list of paths")
    n = len(imgs)
    if not isinstance(doc["root"], int) or not 0 <= doc["root"] < n:
        raise ValueError("manifest root out of range")
    edges = doc["edges"]
    if not isinstance(edges, list):
        raise ValueError("manifest edges must be a list")
    for e in edges:
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e)):
            raise ValueError(f"bad manifest edge: {e}")
        if not (0 <= e[0] < n and 0 <= e[1] < n):
            raise ValueError(f"manifest edge out of range: {e}")
    check_shape(n, [tuple(e) for e in edges])
    if not isinstance(doc["edge_specs"], dict):
        raise ValueError("manifest edge_specs must be an object")
    for key, specs in doc["edge_specs"].items():
        if not isinstance(specs, list):
            raise ValueError(f"edge_specs[{key}] must be a list")
        for s in specs:
            if not (isinstance(s, dict) and "kind" in s and "params" in s):
                raise ValueError(f"bad transform spec under {key}")
            if s["kind"] not in PHOTOMETRIC_KINDS + GEOMETRIC_KINDS:
                raise ValueError(f"unknown transform kind: {s['kind']}")
    return doc


def load_manifest(path):
    """Load + validate a manifest; returns (doc, images as float arrays)."""
    with open(path) as f:
        doc = json.load(f)
    validate_manifest(doc)
    base = os.path.dirname(os.path.abspath(path))
    images = [imread(os.path.join(base, name)) for name in doc["images"]]
    return doc, images


def replay_manifest(doc, images):
    """Check the manifest invariant: children equal their parent transformed.

    Works on the stored (quantized) images; returns the list of edges whose
    replay does not reproduce the stored child bit-exactly.
    """
    bad = []
    for e in doc["edges"]:
        u, v = e
        img = np.asarray(images[u], dtype=float)
        for spec in doc["edge_specs"][f"{u}-{v}"]:
            img = apply_transform(img, spec)
        if not np.array_equal(quantize(img), quantize(np.asarray(images[v], dtype=float))):
            bad.append((u, v))
    return bad
