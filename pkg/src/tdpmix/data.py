"""Dataset I/O, synthetic data generation, and sufficient-statistic
checkpoints for online (warm-start) runs.

Supported input formats: ``csv-curves`` (one curve per row, ragged rows
resampled to the median length), ``csv-points`` (x,y per row), ``pgm-dir``
(a directory of binary P5 PGM files) and ``idx`` (big-endian IDX images or
labels, optionally gzipped). Image pixels are scaled to [0, 1].

Checkpoints store only per-cluster sufficient statistics (never raw
items), as little-endian length-prefixed binary with an 8-byte magic, so
round trips are bit-exact and file size is independent of the data set.
"""

import gzip
import io
import struct
from dataclasses import dataclass

import numpy as np

from . import jac as jac_mod
from .expfam import BernoulliStats, DiagGaussianStats, TransformPriorStats
from .hyper import Hyperparams
from .transforms import AffineImage, CurveWarp

__all__ = [
    "Dataset",
    "DataFormatError",
    "load_dataset",
    "load_labels",
    "save_dataset",
    "write_pgm",
    "read_pgm",
    "base_curves",
    "synth_curves",
    "synth_points2d",
    "synth_images",
    "checkpoint_save",
    "checkpoint_load",
]

CHECKPOINT_MAGIC = b"TDPMIXCK"
CHECKPOINT_VERSION = 1

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataFormatError(ValueError):
    """Malformed or unsupported input data."""


@dataclass
class Dataset:
    """Homogeneous items as rows of a (N, D) array plus shape metadata."""

    items: np.ndarray
    kind: str  # "points2d" | "curves" | "images"
    image_shape: tuple = None
    labels: np.ndarray = None

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=float)
        if self.items.ndim != 2:
            raise DataFormatError("items must form a 2D array")
        if self.kind not in ("points2d", "curves", "images"):
            raise DataFormatError(f"unknown dataset kind: {self.kind!r}")
        if self.kind == "images":
            if self.image_shape is None:
                raise DataFormatError("image data sets need image_shape")
            h, w = self.image_shape
            if h * w != self.items.shape[1]:
                raise DataFormatError("image_shape does not match item length")
        if self.kind == "points2d" and self.items.shape[1] != 2:
            raise DataFormatError("2D point items must have length 2")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.items.shape[0],):
                raise DataFormatError("labels length must match item count")

    @property
    def n(self):
        return self.items.shape[0]

    @property
    def dim(self):
        return self.items.shape[1]


# ---------------------------------------------------------------------------
# Loaders


def _read_maybe_gzip(path):
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            return gzip.open(f, "rb").read()
        return f.read()


def _parse_csv_rows(path):
    rows = []
    with open(path, "r") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            try:
                rows.append([float(p) for p in parts])
            except ValueError as e:
                raise DataFormatError(f"{path}: non-numeric row: {line[:60]}") from e
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return rows


def _resample_to(curve, length):
    src = np.linspace(0.0, 1.0, len(curve))
    dst = np.linspace(0.0, 1.0, length)
    return np.interp(dst, src, curve)


def load_csv_curves(path):
    rows = _parse_csv_rows(path)
    lengths = sorted(len(r) for r in rows)
    target = lengths[len(lengths) // 2]
    items = np.array(
        [r if len(r) == target else _resample_to(np.asarray(r), target) for r in rows]
    )
    return Dataset(items, "curves")


def load_csv_points(path):
    rows = _parse_csv_rows(path)
    if any(len(r) != 2 for r in rows):
        raise DataFormatError(f"{path}: point rows must have exactly 2 values")
    return Dataset(np.array(rows), "points2d")


def read_pgm(path):
    """Binary (P5) PGM reader; returns floats in [0, 1]."""
    data = open(path, "rb").read()
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError(f"{path}: truncated PGM header")
        return data[start:pos]

    if token() != b"P5":
        raise DataFormatError(f"{path}: not a binary PGM (P5) file")
    width = int(token())
    height = int(token())
    maxval = int(token())
    pos += 1  # single whitespace byte separates header from raster
    if maxval <= 0 or maxval > 65535:
        raise DataFormatError(f"{path}: bad maxval {maxval}")
    if maxval < 256:
        raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    else:
        raw = np.frombuffer(data, dtype=">u2", count=width * height, offset=pos)
    if raw.size != width * height:
        raise DataFormatError(f"{path}: truncated pixel data")
    return raw.reshape(height, width).astype(float) / maxval


def write_pgm(path, image, maxval=255):
    """Write floats in [0, 1] as a binary P5 PGM."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("write_pgm expects a 2D image")
    pix = np.clip(np.rint(image * maxval), 0, maxval).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode())
        f.write(pix.tobytes())


def load_pgm_dir(path):
    import os

    names = sorted(n for n in os.listdir(path) if n.lower().endswith(".pgm"))
    if not names:
        raise DataFormatError(f"{path}: no .pgm files")
    images = [read_pgm(os.path.join(path, n)) for n in names]
    shape = images[0].shape
    if any(im.shape != shape for im in images):
        raise DataFormatError(f"{path}: images differ in size")
    items = np.stack([im.ravel() for im in images])
    return Dataset(items, "images", image_shape=shape)


def load_idx_images(path):
    data = _read_maybe_gzip(path)
    if len(data) < 16:
        raise DataFormatError(f"{path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"{path}: bad IDX image magic {magic:#010x}")
    need = count * rows * cols
    raw = np.frombuffer(data, dtype=np.uint8, count=need, offset=16)
    if raw.size != need:
        raise DataFormatError(f"{path}: truncated IDX pixel data")
    items = raw.reshape(count, rows * cols).astype(float) / 255.0
    return Dataset(items, "images", image_shape=(rows, cols))


def load_idx_labels(path):
    data = _read_maybe_gzip(path)
    if len(data) < 8:
        raise DataFormatError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"{path}: bad IDX label magic {magic:#010x}")
    raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=8)
    if raw.size != count:
        raise DataFormatError(f"{path}: truncated IDX label data")
    return raw.astype(int)


def write_idx_images(path, images, image_shape):
    h, w = image_shape
    images = np.asarray(images, dtype=float)
    pix = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, images.shape[0], h, w))
        f.write(pix.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.size))
        f.write(labels.tobytes())


def load_dataset(path, fmt=None):
    """Load a data set; the format is sniffed when not given."""
    import os

    if fmt is None:
        if os.path.isdir(path):
            fmt = "pgm-dir"
        elif path.endswith((".idx", ".idx3-ubyte", "-ubyte", "-ubyte.gz", ".idx.gz")):
            fmt = "idx"
        elif path.endswith(".csv"):
            rows = _parse_csv_rows(path)
            fmt = "csv-points" if all(len(r) == 2 for r in rows) else "csv-curves"
        else:
            raise DataFormatError(f"cannot sniff format of {path}")
    if fmt == "csv-curves":
        return load_csv_curves(path)
    if fmt == "csv-points":
        return load_csv_points(path)
    if fmt == "pgm-dir":
        return load_pgm_dir(path)
    if fmt == "idx":
        return load_idx_images(path)
    raise DataFormatError(f"unknown format: {fmt!r}")


def load_labels(path):
    """Integer labels from a one-column CSV or an IDX label file."""
    if path.endswith(".csv") or path.endswith(".txt"):
        rows = _parse_csv_rows(path)
        return np.array([int(r[-1]) for r in rows])
    return load_idx_labels(path)


def save_dataset(ds, path, fmt=None):
    """Write a data set back out (CSV matrix, PGM directory or IDX)."""
    import os

    if fmt is None:
        fmt = {"curves": "csv-curves", "points2d": "csv-points", "images": "pgm-dir"}[
            ds.kind
        ]
    if fmt in ("csv-curves", "csv-points"):
        np.savetxt(path, ds.items, fmt="%.12g", delimiter=",")
    elif fmt == "pgm-dir":
        os.makedirs(path, exist_ok=True)
        h, w = ds.image_shape
        for i in range(ds.n):
            write_pgm(os.path.join(path, f"item_{i:05d}.pgm"), ds.items[i].reshape(h, w))
    elif fmt == "idx":
        write_idx_images(path, ds.items, ds.image_shape)
    else:
        raise DataFormatError(f"unknown format: {fmt!r}")


# ---------------------------------------------------------------------------
# Synthetic data


def base_curves(length=128):
    """Four analytic base shapes: Gaussian bump, double bump, ramp-plateau,
    damped sinusoid."""
    u = np.linspace(0.0, 1.0, length)
    bump = np.exp(-((u - 0.5) ** 2) / (2 * 0.08**2))
    double = 0.8 * np.exp(-((u - 0.33) ** 2) / (2 * 0.06**2)) + np.exp(
        -((u - 0.7) ** 2) / (2 * 0.05**2)
    )
    ramp = np.interp(u, [0.0, 0.45, 0.8, 1.0], [0.0, 1.0, 1.0, 0.15])
    damped = np.exp(-2.0 * u) * np.sin(6.0 * np.pi * u)
    return np.stack([bump, double, ramp, damped])


def synth_curves(bases=None, per_base=50, magnitude=0.3, seed=0, noise=None):
    """Random warps of base curves plus observation noise; labels by base."""
    bases = base_curves() if bases is None else np.atleast_2d(np.asarray(bases, float))
    rng = np.random.default_rng(seed)
    family = CurveWarp(bases.shape[1])
    items = []
    labels = []
    for b, base in enumerate(bases):
        amp_range = float(np.ptp(base))
        sd = 0.01 * amp_range if noise is None else float(noise)
        for _ in range(per_base):
            rho = family.random_params(magnitude, rng)
            y = family.apply(base, rho)
            if sd > 0:
                y = y + rng.normal(0.0, sd, size=y.shape)
            items.append(y)
            labels.append(b)
    return Dataset(np.array(items), "curves", labels=np.array(labels))


def synth_points2d(
    radii, spreads, counts, seed=0, centers=None, radial_jitter=0.03
):
    """Clusters of 2D points: jittered radius, Gaussian angular spread."""
    radii = np.atleast_1d(np.asarray(radii, float))
    spreads = np.broadcast_to(np.asarray(spreads, float), radii.shape)
    counts = np.broadcast_to(np.asarray(counts, int), radii.shape)
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    rng = np.random.default_rng(seed)
    if centers is None:
        centers = rng.uniform(-np.pi, np.pi, size=radii.size)
    else:
        centers = np.broadcast_to(np.asarray(centers, float), radii.shape)
    pts = []
    labels = []
    for c, (r, sp, m) in enumerate(zip(radii, spreads, counts)):
        angles = centers[c] + rng.normal(0.0, sp, size=m) if sp > 0 else np.full(
            m, centers[c]
        )
        rads = r * (1.0 + rng.normal(0.0, radial_jitter, size=m)) if radial_jitter > 0 else np.full(m, r)
        pts.append(np.stack([rads * np.cos(angles), rads * np.sin(angles)], axis=1))
        labels.extend([c] * m)
    return Dataset(np.concatenate(pts), "points2d", labels=np.array(labels))


def _glyphs(size):
    """Ten soft-edged binary-ish shapes on a size x size grid."""
    lin = np.linspace(-1.0, 1.0, size)
    xx, yy = np.meshgrid(lin, lin)
    r = np.hypot(xx, yy)
    edge = 2.0 / size * 1.5

    def fill(d):
        return np.clip(0.5 - d / (2 * edge), 0.0, 1.0)

    def bar(x, y, hw, hh):
        return np.maximum(np.abs(x) - hw, np.abs(y) - hh)

    u = (xx + yy) / np.sqrt(2.0)
    v = (xx - yy) / np.sqrt(2.0)
    shapes = [
        np.abs(r - 0.55) - 0.12,                                   # ring
        bar(xx, yy, 0.14, 0.68),                                   # bar
        np.minimum(bar(xx, yy, 0.12, 0.62), bar(yy, xx, 0.12, 0.62)),  # cross
        np.minimum(bar(u, v, 0.12, 0.62), bar(v, u, 0.12, 0.62)),  # X
        np.minimum(bar(xx, yy - 0.3, 0.55, 0.11), bar(xx, yy + 0.3, 0.55, 0.11)),
        np.minimum(bar(xx + 0.30, yy, 0.12, 0.55), bar(xx, yy + 0.45, 0.45, 0.12)),
        np.minimum(bar(xx, yy + 0.45, 0.55, 0.12), bar(xx, yy, 0.12, 0.55)),  # T
        np.abs(np.abs(xx) + np.abs(yy) - 0.62) - 0.11,             # diamond
        r - 0.35,                                                  # disc
        np.maximum(np.abs(r - 0.52) - 0.12, -xx - 0.15),           # C arc
    ]
    return np.stack([fill(d).ravel() for d in shapes])


def synth_images(
    n_classes=10, per_class=50, magnitude=0.25, seed=0, size=28, noise=0.0
):
    """Affine-perturbed glyph images; labels by glyph class."""
    if not 1 <= n_classes <= 10:
        raise ValueError("n_classes must be in 1..10")
    glyphs = _glyphs(size)[:n_classes]
    rng = np.random.default_rng(seed)
    family = AffineImage(size, size)
    items = []
    labels = []
    for g in range(n_classes):
        for _ in range(per_class):
            rho = family.random_params(magnitude, rng)
            im = family.apply(glyphs[g], rho)
            if noise > 0:
                im = np.clip(im + rng.normal(0.0, noise, size=im.shape), 0.0, 1.0)
            items.append(im)
            labels.append(g)
    return Dataset(
        np.array(items), "images", image_shape=(size, size), labels=np.array(labels)
    )


# ---------------------------------------------------------------------------
# Checkpoints


def _w_vec(buf, arr):
    arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
    buf.write(struct.pack("<I", arr.size))
    buf.write(arr.tobytes())


def _r_vec(buf, limit=1 << 24):
    raw = buf.read(4)
    if len(raw) != 4:
        raise DataFormatError("checkpoint: truncated vector length")
    (n,) = struct.unpack("<I", raw)
    if n > limit:
        raise DataFormatError("checkpoint: corrupt vector length")
    data = buf.read(8 * n)
    if len(data) != 8 * n:
        raise DataFormatError("checkpoint: truncated vector data")
    return np.frombuffer(data, dtype="<f8").copy()


def _w_stats(buf, stats):
    if isinstance(stats, BernoulliStats):
        buf.write(struct.pack("<BIqdd", 1, stats.dim, stats.count, stats.a, stats.b))
        _w_vec(buf, stats.ones)
    elif isinstance(stats, DiagGaussianStats):
        buf.write(
            struct.pack(
                "<BIqddd", 2, stats.dim, stats.count, stats.kappa0, stats.a0, stats.b0
            )
        )
        _w_vec(buf, stats.mu0)
        _w_vec(buf, stats.sum)
        _w_vec(buf, stats.sumsq)
    elif isinstance(stats, TransformPriorStats):
        buf.write(struct.pack("<BIqd", 3, stats.dim, stats.count, stats.aT))
        _w_vec(buf, stats.bT)
        _w_vec(buf, stats.sumsq)
    else:
        raise TypeError(f"cannot serialize {type(stats)!r}")


def _r_stats(buf):
    tag = buf.read(1)
    if len(tag) != 1:
        raise DataFormatError("checkpoint: truncated stats tag")
    tag = tag[0]
    if tag == 1:
        dim, count, a, b = struct.unpack("<Iqdd", buf.read(4 + 8 + 16))
        s = BernoulliStats(dim, a, b)
        s.count = count
        s.ones = _r_vec(buf)
        return s
    if tag == 2:
        dim, count, kappa0, a0, b0 = struct.unpack("<Iqddd", buf.read(4 + 8 + 24))
        mu0 = _r_vec(buf)
        s = DiagGaussianStats(dim, mu0, kappa0, a0, b0)
        s.count = count
        s.sum = _r_vec(buf)
        s.sumsq = _r_vec(buf)
        return s
    if tag == 3:
        dim, count, aT = struct.unpack("<Iqd", buf.read(4 + 8 + 8))
        bT = _r_vec(buf)
        s = TransformPriorStats(dim, aT, bT)
        s.count = count
        s.sumsq = _r_vec(buf)
        return s
    raise DataFormatError(f"checkpoint: unknown stats tag {tag}")


def _w_str(buf, s):
    raw = s.encode()
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _r_str(buf):
    (n,) = struct.unpack("<I", buf.read(4))
    if n > 1 << 16:
        raise DataFormatError("checkpoint: corrupt string length")
    return buf.read(n).decode()


def checkpoint_save(state):
    """Serialize gamma, hyperparameters and per-cluster statistics."""
    hp = state.hp
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    _w_str(buf, state.family.name)
    buf.write(struct.pack("<IQ", state.family.dim, state.next_id))
    buf.write(struct.pack("<dB", state.gamma, int(state.gamma_locked)))
    _w_str(buf, hp.data_dist)
    buf.write(
        struct.pack(
            "<9d",
            hp.bern_a,
            hp.bern_b,
            hp.gauss_mu0,
            hp.gauss_kappa0,
            hp.gauss_a0,
            hp.gauss_b0,
            hp.t_aT,
            hp.gamma_prior_a,
            hp.gamma_prior_b,
        )
    )
    _w_vec(buf, hp.t_bT if hp.t_bT is not None else np.zeros(0))
    buf.write(struct.pack("<iiq", hp.iters, hp.L, hp.seed))
    ids = state.live_ids()
    buf.write(struct.pack("<I", len(ids)))
    for k in ids:
        c = state.clusters[k]
        buf.write(struct.pack("<qdB", c.id, float(c.crp_weight), int(c.locked)))
        _w_stats(buf, c.data_stats)
        _w_stats(buf, c.t_stats)
    return buf.getvalue()


def checkpoint_info(blob):
    """Parse a checkpoint fully and summarize it; raises on corruption."""
    buf = io.BytesIO(blob)
    if buf.read(8) != CHECKPOINT_MAGIC:
        raise DataFormatError("checkpoint: bad magic")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"checkpoint: unsupported version {version}")
    fam_name = _r_str(buf)
    fam_dim, next_id = struct.unpack("<IQ", buf.read(12))
    gamma, locked = struct.unpack("<dB", buf.read(9))
    data_dist = _r_str(buf)
    buf.read(72)
    _r_vec(buf)
    buf.read(16)
    (n_clusters,) = struct.unpack("<I", buf.read(4))
    weights = []
    for _ in range(n_clusters):
        _, weight, _ = struct.unpack("<qdB", buf.read(17))
        _r_stats(buf)
        _r_stats(buf)
        weights.append(weight)
    return {
        "version": version,
        "family": fam_name,
        "family_dim": fam_dim,
        "data_dist": data_dist,
        "gamma": gamma,
        "gamma_locked": bool(locked),
        "clusters": n_clusters,
        "total_weight": float(sum(weights)),
        "next_id": next_id,
    }


def checkpoint_load(blob, new_items, family, seed=None):
    """Rebuild a state whose clusters carry the saved statistics.

    The new items start unassigned; previous cluster mass enters the CRP
    weights as pseudo-counts, so one Gibbs pass assigns the new batch as
    if it had arrived late in the original run.
    """
    buf = io.BytesIO(blob)
    if buf.read(8) != CHECKPOINT_MAGIC:
        raise DataFormatError("checkpoint: bad magic")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"checkpoint: unsupported version {version}")
    fam_name = _r_str(buf)
    fam_dim, next_id = struct.unpack("<IQ", buf.read(12))
    if family.name != fam_name or family.dim != fam_dim:
        raise DataFormatError(
            f"checkpoint: family mismatch (saved {fam_name}/{fam_dim}, "
            f"got {family.name}/{family.dim})"
        )
    gamma, locked = struct.unpack("<dB", buf.read(9))
    hp = Hyperparams()
    hp.data_dist = _r_str(buf)
    (
        hp.bern_a,
        hp.bern_b,
        hp.gauss_mu0,
        hp.gauss_kappa0,
        hp.gauss_a0,
        hp.gauss_b0,
        hp.t_aT,
        hp.gamma_prior_a,
        hp.gamma_prior_b,
    ) = struct.unpack("<9d", buf.read(72))
    bT = _r_vec(buf)
    hp.t_bT = bT if bT.size else None
    hp.iters, hp.L, hp.seed = struct.unpack("<iiq", buf.read(16))
    hp.gamma_init = gamma

    new_items = np.asarray(new_items, dtype=float)
    rng = np.random.default_rng(hp.seed if seed is None else seed)
    state = jac_mod.init_jac(new_items, family, hp, rng, gamma=gamma, init="unassigned")
    state.gamma_locked = bool(locked)
    (n_clusters,) = struct.unpack("<I", buf.read(4))
    for _ in range(n_clusters):
        cid, weight, clocked = struct.unpack("<qdB", buf.read(17))
        data_stats = _r_stats(buf)
        t_stats = _r_stats(buf)
        if data_stats.dim != new_items.shape[1]:
            raise DataFormatError("checkpoint: item dimension mismatch")
        c = jac_mod.Cluster(cid, data_stats, t_stats)
        c.seed_weight = weight
        c.locked = bool(clocked)
        c.seed_data_stats = data_stats.copy()
        c.seed_t_stats = t_stats.copy()
        state.clusters[cid] = c
    state.next_id = max(next_id, max(state.clusters, default=-1) + 1)
    return state
