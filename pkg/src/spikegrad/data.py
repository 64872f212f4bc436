"""Datasets: synthetic tasks, a tiny raster container, and event binning.

Sample tensors are [N, T, C, H, W] float64; static data carries T == 1 and
is replicated across timesteps at the model input.  File formats are
deliberately trivial so tests can be byte-exact with no codec dependency:

raster container ("IMGS"):
    magic    4 bytes  b"IMGS"
    count    u32      number of images N
    channels u32
    height   u32
    width    u32
    labels   N bytes  (u8 class ids)
    pixels   N*C*H*W bytes, channel-major per image (u8)

event stream (text): one event per line, ``t x y p`` with microsecond
timestamps, nondecreasing in t; '#' starts a comment line.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

RASTER_MAGIC = b"IMGS"


class DataError(IOError):
    """Malformed dataset container or event stream."""


@dataclass
class Dataset:
    samples: np.ndarray   # [N, T, C, H, W]
    labels: np.ndarray    # [N] int64 in [0, classes)
    classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.ndim != 5:
            raise DataError(f"samples must be [N,T,C,H,W], got {self.samples.shape}")
        if len(self.labels) != len(self.samples):
            raise DataError("labels and samples disagree in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise DataError("label out of range")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.samples.shape[2:])


def gen_synthetic(task: str, n: int, seed: int, classes: int | None = None,
                  shape: tuple[int, int, int] | None = None,
                  separation: float = 6.0, noise: float = 0.15,
                  frames: int = 1, frame_noise: float = 0.0) -> Dataset:
    """Reproducible labeled toy corpora.

    gaussian-blobs: `classes` isotropic unit-variance clusters whose centers
    sit `separation` apart in expectation (separation >= ~6 is linearly
    separable).  xor-rings: two classes in the plane; the label is the ring
    index (inner/outer radius band) xor the quadrant parity, so no linear
    readout works.

    With frames > 1 each sample becomes a short clip: the clean feature
    vector observed `frames` times under fresh additive noise of scale
    frame_noise.  Recovering the label then rewards temporal integration.
    """
    rng = Rng(seed)
    if task == "gaussian-blobs":
        classes = classes or 4
        shape = shape or (4, 2, 2)
        if n < classes:
            raise ValueError("need at least one sample per class")
        dim = int(np.prod(shape))
        centers = rng.normal(size=(classes, dim))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        centers *= separation / np.sqrt(2.0)  # expected inter-center distance ~ separation
        labels = np.arange(n) % classes
        x = centers[labels] + rng.normal(size=(n, dim))
        samples = _as_frames(x.reshape(n, *shape), frames, frame_noise, rng)
        return Dataset(samples, labels.astype(np.int64), classes,
                       meta={"task": task, "seed": seed, "separation": separation,
                             "frames": frames, "frame_noise": frame_noise})
    if task == "xor-rings":
        if classes not in (None, 2):
            raise ValueError("xor-rings is a two-class task")
        shape = shape or (2, 1, 1)
        if int(np.prod(shape)) != 2:
            raise ValueError("xor-rings needs a 2-feature shape")
        ring = rng.integers(0, 2, size=n)
        radius = 1.0 + ring * 1.0 + rng.normal(size=n) * noise
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        x = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
        quadrant = ((x[:, 0] > 0).astype(int) + (x[:, 1] > 0).astype(int)) % 2
        labels = (ring ^ quadrant).astype(np.int64)
        samples = _as_frames(x.reshape(n, *shape), frames, frame_noise, rng)
        return Dataset(samples, labels, 2,
                       meta={"task": task, "seed": seed, "noise": noise,
                             "frames": frames, "frame_noise": frame_noise})
    raise ValueError(f"unknown synthetic task {task!r}")


def _as_frames(clean: np.ndarray, frames: int, frame_noise: float, rng: Rng) -> np.ndarray:
    """[N, C, H, W] -> [N, frames, C, H, W] noisy observations of each sample."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    if frames == 1 and frame_noise == 0.0:
        return clean[:, None]
    reps = np.repeat(clean[:, None], frames, axis=1)
    if frame_noise:
        reps = reps + rng.normal(size=reps.shape) * frame_noise
    return reps


def image_blobs(n: int, seed: int, classes: int = 4,
                shape: tuple[int, int, int] = (2, 8, 8), separation: float = 4.0) -> Dataset:
    """Gaussian blobs living in image space, for the convolutional presets."""
    return gen_synthetic("gaussian-blobs", n, seed, classes=classes,
                         shape=shape, separation=separation)


# ---------------------------------------------------------------------------
# raster container
# ---------------------------------------------------------------------------

def write_raster(path, images: np.ndarray, labels: np.ndarray) -> None:
    """images: [N,C,H,W] u8; labels: [N] u8."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    n, c, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(RASTER_MAGIC)
        fh.write(struct.pack("<IIII", n, c, h, w))
        fh.write(labels.tobytes())
        fh.write(images.tobytes())


def read_raster_raw(path):
    """(images u8 [N,C,H,W], labels u8 [N]) exactly as stored."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:4] != RASTER_MAGIC:
        raise DataError("bad raster magic")
    n, c, h, w = struct.unpack_from("<IIII", blob, 4)
    need = 20 + n + n * c * h * w
    if len(blob) < need:
        raise DataError("truncated raster payload")
    labels = np.frombuffer(blob, dtype=np.uint8, count=n, offset=20)
    images = np.frombuffer(blob, dtype=np.uint8, count=n * c * h * w, offset=20 + n)
    return images.reshape(n, c, h, w).copy(), labels.copy()


def load_raster(path, eps: float = 1e-8) -> Dataset:
    """Load and per-channel standardize a raster corpus."""
    images, labels = read_raster_raw(path)
    x = images.astype(np.float64)
    mean = x.mean(axis=(0, 2, 3), keepdims=True)
    std = x.std(axis=(0, 2, 3), keepdims=True)
    x = (x - mean) / np.maximum(std, eps)
    samples = x[:, None]  # insert T axis
    classes = int(labels.max()) + 1 if len(labels) else 1
    return Dataset(samples, labels.astype(np.int64), classes,
                   meta={"source": str(path),
                         "channel_mean": mean.ravel().tolist(),
                         "channel_std": std.ravel().tolist()})


# ---------------------------------------------------------------------------
# event streams
# ---------------------------------------------------------------------------

@dataclass
class EventStream:
    t: np.ndarray          # microsecond timestamps, nondecreasing
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray          # polarity in {0, 1}
    extent: tuple[int, int]  # (height, width)

    def __post_init__(self):
        if len(self.t) and np.any(np.diff(self.t) < 0):
            raise DataError("event timestamps must be nondecreasing")
        h, w = self.extent
        if len(self.t) and (self.x.min() < 0 or self.x.max() >= w
                            or self.y.min() < 0 or self.y.max() >= h):
            raise DataError("event coordinates outside sensor extent")
        if len(self.t) and not np.all((self.p == 0) | (self.p == 1)):
            raise DataError("polarity must be 0 or 1")

    def __len__(self) -> int:
        return len(self.t)


def parse_events(text: str, extent: tuple[int, int] | None = None) -> EventStream:
    """Parse ``t x y p`` lines; infers extent from max coords when absent."""
    ts, xs, ys, ps = [], [], [], []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DataError(f"line {line_no}: expected 't x y p', got {line!r}")
        t, x, y, p = (int(v) for v in parts)
        ts.append(t); xs.append(x); ys.append(y); ps.append(p)
    t = np.asarray(ts, dtype=np.int64)
    x = np.asarray(xs, dtype=np.int64)
    y = np.asarray(ys, dtype=np.int64)
    p = np.asarray(ps, dtype=np.int64)
    if extent is None:
        extent = (int(y.max()) + 1 if len(y) else 1, int(x.max()) + 1 if len(x) else 1)
    return EventStream(t, x, y, p, extent)


def load_events(path, extent=None) -> EventStream:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_events(fh.read(), extent=extent)


def bin_events(stream: EventStream, blocks: int, out_hw: tuple[int, int] | None = None) -> np.ndarray:
    """Accumulate events into [blocks, 2, h, w] count maps.

    The time range is split into `blocks` equal intervals (the final edge is
    inclusive); counts land in the polarity channel at the event's pixel.
    Event count is conserved before any spatial resize; when out_hw is given
    the maps are then box-averaged to that size.
    """
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    h, w = stream.extent
    out = np.zeros((blocks, 2, h, w))
    if len(stream) == 0:
        return _box_average(out, out_hw) if out_hw else out
    t0 = int(stream.t[0])
    t1 = int(stream.t[-1])
    span = max(t1 - t0, 1)
    idx = ((stream.t - t0) * blocks) // span
    idx = np.minimum(idx, blocks - 1).astype(np.int64)
    np.add.at(out, (idx, stream.p, stream.y, stream.x), 1.0)
    if out_hw is not None:
        out = _box_average(out, out_hw)
    return out


def _box_average(maps: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Area-weighted box average of [..., H, W] to [..., h, w]."""
    h_out, w_out = out_hw
    h_in, w_in = maps.shape[-2], maps.shape[-1]
    a_rows = _overlap_matrix(h_in, h_out)
    a_cols = _overlap_matrix(w_in, w_out)
    return np.einsum("oi,...ij,pj->...op", a_rows, maps, a_cols)


def _overlap_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix whose (o, i) entry is the fraction of output
    cell o covered by input cell i (both viewed as intervals of [0, 1])."""
    a = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        lo, hi = o * scale, (o + 1) * scale
        i0, i1 = int(np.floor(lo)), int(np.ceil(hi))
        for i in range(i0, min(i1, n_in)):
            a[o, i] = max(0.0, min(hi, i + 1) - max(lo, i)) / scale
    return a


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

def augment_batch(batch: np.ndarray, rng: Rng, pad: int = 4, max_roll: int = 5,
                  flip: bool = True) -> np.ndarray:
    """Per-sample horizontal flip, crop-with-pad, and circular roll.

    batch is [N, T, C, H, W]; each sample gets one transform applied to all
    of its timesteps.  Deterministic given the rng state.
    """
    n, _, _, h, w = batch.shape
    out = batch.copy()
    for i in range(n):
        if flip and rng.uniform() < 0.5:
            out[i] = out[i, :, :, :, ::-1]
        if pad:
            dy = int(rng.integers(0, 2 * pad + 1))
            dx = int(rng.integers(0, 2 * pad + 1))
            padded = np.pad(out[i], ((0, 0), (0, 0), (pad, pad), (pad, pad)))
            out[i] = padded[:, :, dy: dy + h, dx: dx + w]
        if max_roll:
            ry = int(rng.integers(-max_roll, max_roll + 1))
            rx = int(rng.integers(-max_roll, max_roll + 1))
            out[i] = np.roll(out[i], (ry, rx), axis=(-2, -1))
    return out
