"""Synthetic teacher-network data and MNIST (IDX format) loading."""
import gzip
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .network import DataBatch, NetworkShape, Params, predict

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


class IdxParseError(ValueError):
    """Malformed IDX file; ``offset`` is the byte position of the problem."""

    def __init__(self, msg, offset, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{msg} (at byte offset {offset})")
        self.offset = offset
        self.path = path


@dataclass
class SyntheticSpec:
    shape: NetworkShape
    eps_y: float = 0.05
    seed: int = 0
    teacher_scale: float = 1.0
    alpha: float = 0.01

    def __post_init__(self):
        if self.eps_y < 0:
            raise ValueError("eps_y must be nonnegative")


@dataclass
class MnistSpec:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    N: int
    seed: int = 0
    N_test: int = None  # default ceil(N / 5)

    @classmethod
    def from_dir(cls, directory, N, seed=0, N_test=None):
        """Locate the four standard files (optionally ``.gz``) in ``directory``."""
        def find(stem):
            for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"),
                         stem.replace("-idx", ".idx") + ".gz"):
                path = os.path.join(directory, name)
                if os.path.exists(path):
                    return path
            raise FileNotFoundError(f"no {stem}[.gz] in {directory}")
        return cls(find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte"),
                   find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte"),
                   N, seed, N_test)


def gen_synthetic(spec):
    """Training/test data generated by a random leaky-ReLU teacher.

    Inputs are ``x ~ Normal(zeta, S^T S)`` with ``zeta`` and the square
    ``S`` standard Gaussian; targets are the teacher output plus
    ``eps_y``-scaled Gaussian noise. ``ceil(N/5)`` extra test samples are
    drawn the same way.

    Returns
    -------
    (DataBatch, DataBatch, Params)
        Train set, test set, teacher parameters.
    """
    shape = spec.shape
    d = shape.dims
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    N, N_test = shape.N, math.ceil(shape.N / 5)
    total = N + N_test
    zeta = rng.standard_normal(d[0])
    S = rng.standard_normal((d[0], d[0]))
    Ws, bs = [], []
    for l in range(1, shape.L + 1):
        Ws.append(rng.standard_normal((d[l], d[l - 1])) / math.sqrt(d[l - 1]) * spec.teacher_scale)
        bs.append(rng.standard_normal(d[l]) * 0.1 * spec.teacher_scale)
    teacher = Params(Ws, bs)
    Z = rng.standard_normal((d[0], total))
    X = zeta[:, None] + S.T @ Z
    clean = predict(teacher, X, spec.alpha)
    Y = clean + spec.eps_y * rng.standard_normal((d[-1], total))
    return (DataBatch(X[:, :N], Y[:, :N]), DataBatch(X[:, N:], Y[:, N:]), teacher)


def input_covariance(spec):
    """Covariance ``S^T S`` used by :func:`gen_synthetic` for ``spec``."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n0 = spec.shape.dims[0]
    rng.standard_normal(n0)
    S = rng.standard_normal((n0, n0))
    return S.T @ S


def _open(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    with open(path, "rb") as fh:
        return fh.read()


def parse_idx(data, expected_magic=None, path=None):
    """Decode an IDX byte string into a numpy array."""
    if len(data) < 4:
        raise IdxParseError("file too short for an IDX header", 0, path)
    magic = struct.unpack(">I", data[:4])[0]
    if expected_magic is not None and magic != expected_magic:
        raise IdxParseError(
            f"bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}", 0, path)
    if magic >> 16 != 0:
        raise IdxParseError(f"bad magic number 0x{magic:08x}", 0, path)
    code, ndim = (magic >> 8) & 0xFF, magic & 0xFF
    if code not in _DTYPES:
        raise IdxParseError(f"unknown IDX element type 0x{code:02x}", 2, path)
    hdr = 4 + 4 * ndim
    if len(data) < hdr:
        raise IdxParseError("truncated dimension header", len(data), path)
    dims = struct.unpack(f">{ndim}I", data[4:hdr])
    dt = np.dtype(_DTYPES[code])
    need = int(np.prod(dims)) * dt.itemsize
    if len(data) - hdr < need:
        raise IdxParseError(
            f"truncated payload: need {need} bytes, found {len(data) - hdr}", len(data), path)
    if len(data) - hdr > need:
        raise IdxParseError(
            f"count mismatch: {len(data) - hdr - need} trailing bytes", hdr + need, path)
    return np.frombuffer(data, dtype=dt, count=int(np.prod(dims)), offset=hdr).reshape(dims)


def read_idx(path, expected_magic=None):
    return parse_idx(_open(path), expected_magic, path)


def write_idx(path, array, compress=None):
    """Write an unsigned-byte array in IDX format (gzip if the name ends in .gz)."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("only uint8 arrays are supported")
    header = struct.pack(">I", (0x08 << 8) | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    payload = header + array.tobytes()
    if compress is None:
        compress = str(path).endswith(".gz")
    opener = gzip.open if compress else open
    with opener(path, "wb") as fh:
        fh.write(payload)


def load_idx_pair(images_path, labels_path):
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxParseError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels", 4, labels_path)
    return images, labels


def per_class_counts(n, n_classes=10):
    base, extra = divmod(n, n_classes)
    return [base + (1 if c < extra else 0) for c in range(n_classes)]


def _stratified(images, labels, n, rng):
    counts = per_class_counts(n)
    picked = []
    for c, k in enumerate(counts):
        pool = np.flatnonzero(labels == c)
        if k > pool.size:
            raise ValueError(f"class {c}: requested {k} samples, only {pool.size} available")
        picked.append(rng.choice(pool, size=k, replace=False))
    idx = np.concatenate(picked)
    X = images[idx].reshape(idx.size, -1).T.astype(float) / 255.0
    Y = np.zeros((10, idx.size))
    Y[labels[idx], np.arange(idx.size)] = 1.0
    return DataBatch(X, Y)


def load_mnist(spec):
    """Class-balanced random subsample of MNIST with one-hot targets.

    Pixels are scaled to [0, 1]. ``spec.N`` training samples are drawn
    without replacement, as evenly as possible across the ten classes; the
    test set (default ``ceil(N/5)`` samples) is drawn the same way from the
    test files.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    tr_img, tr_lab = load_idx_pair(spec.train_images, spec.train_labels)
    te_img, te_lab = load_idx_pair(spec.test_images, spec.test_labels)
    if spec.N > tr_lab.size:
        raise ValueError(f"N={spec.N} exceeds the {tr_lab.size} available training samples")
    n_test = spec.N_test if spec.N_test is not None else math.ceil(spec.N / 5)
    train = _stratified(tr_img, tr_lab, spec.N, rng)
    test = _stratified(te_img, te_lab, n_test, rng)
    return train, test
