"""Synthetic 9-class 2-D head phantom: generator, splits, and file format.

Each sample is a stack of jittered nested ellipses — skin, bone, CSF and GM
rings around a WM interior — plus one ventricle blob inside WM, two eyes and
one cavity blob in the lower half. Class intensities (fraction of dynamic
range, also documented in the README):

    background 0.05   wm   0.85   gm         0.60
    csf        0.20   bones 0.35  skin       0.75
    cavities   0.45   eyes  0.95  ventricles 0.15

Every pair of classes differs by at least 0.1 except ventricles vs CSF,
which share fluid-like intensity and must be told apart by position; all
geometrically adjacent classes differ by at least 0.1, so the task is
learnable under the default texture noise. Sample ``i`` is generated from a stream derived from
``(seed, i)``, so generation is order- and parallelism-independent.

Dataset file format: magic ``SSRL``, version byte 0x01, zero padding to an
8-byte header boundary, then little-endian u32 ``n, H, W, K``; then ``n``
records of H*W float32 intensities followed by H*W label bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, LabelAccessError
from .seeding import stream

CLASS_NAMES = ("background", "wm", "gm", "csf", "bones", "skin",
               "cavities", "eyes", "ventricles")
NUM_CLASSES = 9
(BACKGROUND, WM, GM, CSF, BONES, SKIN, CAVITIES, EYES, VENTRICLES) = range(9)

CLASS_MEANS = np.array(
    [0.05, 0.85, 0.60, 0.20, 0.35, 0.75, 0.45, 0.95, 0.15], dtype=np.float64)

MAGIC = b"SSRL"
VERSION = 1
_HEADER = struct.Struct("<4sB3x4I")  # 24 bytes


@dataclass(frozen=True)
class PhantomConfig:
    size: int = 64
    intensity_noise: float = 0.03
    geometry_jitter: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.size % 4:
            raise ValueError(f"size must be divisible by 4, got {self.size}")
        if self.intensity_noise < 0 or self.geometry_jitter < 0:
            raise ValueError("noise/jitter must be >= 0")


@dataclass(frozen=True)
class PhantomSample:
    image: np.ndarray   # (H, W) float32 in [0, 1]
    labels: np.ndarray  # (H, W) uint8 in [0, 9)


# head half-axes as fractions of the image size
_SKIN_AXES = (0.44, 0.385)
# nested bands from the inside out: WM core plus ring widths; jitter is
# applied to the widths, never to absolute radii, so bands cannot pinch shut
_WM_CORE = 0.40
_BANDS = ((GM, 0.18), (CSF, 0.15), (BONES, 0.14), (SKIN, 0.13))


def _ellipse(size: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    yy = np.arange(size)[:, None] - cy
    xx = np.arange(size)[None, :] - cx
    return (yy / ry) ** 2 + (xx / rx) ** 2 <= 1.0


def generate_sample(cfg: PhantomConfig, index: int) -> PhantomSample:
    rng = stream(cfg.seed, "phantom", index)
    s = float(cfg.size)
    j = cfg.geometry_jitter

    # whole-head scale and band jitter are clipped so the geometry stays sane
    # for any configured jitter
    scale_r = 1.0 + np.clip(rng.uniform(-j, j), -0.2, 0.2)
    scale_c = 1.0 + np.clip(rng.uniform(-j, j), -0.2, 0.2)
    cy = s / 2 + rng.uniform(-0.02, 0.02) * s
    cx = s / 2 + rng.uniform(-0.02, 0.02) * s
    jit = 1.0 + np.clip(rng.uniform(-j / 2, j / 2, size=(len(_BANDS) + 1, 2)),
                        -0.05, 0.05)

    # cumulative band fractions, innermost first
    frac_r = [_WM_CORE * jit[0, 0]]
    frac_c = [_WM_CORE * jit[0, 1]]
    order = [WM]
    for k, (cls, width) in enumerate(_BANDS, start=1):
        frac_r.append(frac_r[-1] + width * jit[k, 0])
        frac_c.append(frac_c[-1] + width * jit[k, 1])
        order.append(cls)

    labels = np.zeros((cfg.size, cfg.size), dtype=np.uint8)
    for cls, fr, fc in zip(reversed(order), reversed(frac_r), reversed(frac_c)):
        ry = min(_SKIN_AXES[0] * scale_r * fr, 0.48) * s
        rx = min(_SKIN_AXES[1] * scale_c * fc, 0.48) * s
        labels[_ellipse(cfg.size, cy, cx, ry, rx)] = cls

    vy = cy - 0.04 * s + rng.uniform(-0.01, 0.01) * s
    vx = cx + rng.uniform(-0.01, 0.01) * s
    vry = 0.075 * s * (1.0 + np.clip(rng.uniform(-j / 2, j / 2), -0.05, 0.05))
    vrx = 0.060 * s * (1.0 + np.clip(rng.uniform(-j / 2, j / 2), -0.05, 0.05))
    labels[_ellipse(cfg.size, vy, vx, vry, vrx)] = VENTRICLES

    # eyes sit outside the head along the lower diagonals, separated from the
    # skin by a background gap so no region gets pinched
    skin_ry = min(_SKIN_AXES[0] * scale_r * frac_r[-1], 0.48) * s
    skin_rx = min(_SKIN_AXES[1] * scale_c * frac_c[-1], 0.48) * s
    diag = np.sqrt(0.5)
    t_skin = 1.0 / np.sqrt((diag / skin_ry) ** 2 + (diag / skin_rx) ** 2)
    for side in (-1.0, 1.0):
        er = 0.052 * s * (1.0 + np.clip(rng.uniform(-j / 2, j / 2), -0.05, 0.05))
        dist = t_skin + 0.045 * s + er
        ey = cy + diag * dist + rng.uniform(-0.01, 0.01) * s
        ex = cx + side * diag * dist + rng.uniform(-0.01, 0.01) * s
        ey = min(ey, s - 2.0 - er)
        ex = float(np.clip(ex, er + 2.0, s - 2.0 - er))
        labels[_ellipse(cfg.size, ey, ex, er, er)] = EYES

    # the cavity rides the jittered head scale so it stays clear of both the
    # WM core above and the skin boundary below
    qy = cy + 0.30 * s * scale_r + rng.uniform(-0.01, 0.01) * s
    qx = cx + rng.uniform(-0.02, 0.02) * s
    qry = 0.060 * s * (1.0 + np.clip(rng.uniform(-j / 2, j / 2), -0.05, 0.05))
    qrx = 0.075 * s * (1.0 + np.clip(rng.uniform(-j / 2, j / 2), -0.05, 0.05))
    labels[_ellipse(cfg.size, qy, qx, qry, qrx)] = CAVITIES

    _absorb_slivers(labels, min_px=max(4, (cfg.size * cfg.size) // 512))

    noise = rng.normal(0.0, cfg.intensity_noise, size=labels.shape)
    image = np.clip(CLASS_MEANS[labels] + noise, 0.0, 1.0).astype(np.float32)
    return PhantomSample(image=image, labels=labels)


def _absorb_slivers(labels: np.ndarray, min_px: int, max_iters: int = 4) -> None:
    """Reassign tiny 4-connected fragments to their surrounding class.

    Painting the cavity across the thin bands can shave off 1-to-few-pixel
    slivers that hang onto their band only diagonally; absorbing them keeps
    every region 4-connected. Real structures are far above ``min_px``.
    """
    H, W = labels.shape
    for _ in range(max_iters):
        changed = False
        seen = np.zeros((H, W), dtype=bool)
        for sy in range(H):
            for sx in range(W):
                if seen[sy, sx]:
                    continue
                cls = labels[sy, sx]
                stack = [(sy, sx)]
                seen[sy, sx] = True
                comp = []
                while stack:
                    y, x = stack.pop()
                    comp.append((y, x))
                    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        ny, nx = y + dy, x + dx
                        if (0 <= ny < H and 0 <= nx < W and not seen[ny, nx]
                                and labels[ny, nx] == cls):
                            seen[ny, nx] = True
                            stack.append((ny, nx))
                if len(comp) >= min_px:
                    continue
                votes = {}
                for y, x in comp:
                    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < H and 0 <= nx < W and labels[ny, nx] != cls:
                            votes[labels[ny, nx]] = votes.get(labels[ny, nx], 0) + 1
                if votes:
                    winner = max(sorted(votes), key=votes.get)
                    for y, x in comp:
                        labels[y, x] = winner
                    changed = True
        if not changed:
            break


def generate(cfg: PhantomConfig, n: int) -> list[PhantomSample]:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return [generate_sample(cfg, i) for i in range(n)]


@dataclass
class AccessGuard:
    """Audit record for label access on the unlabeled split."""
    trips: int = 0         # forbidden reads attempted through training paths
    oracle_reads: int = 0  # explicit evaluation-only reads


class UnlabeledSet:
    """Unlabeled samples: images are visible, labels are locked.

    The ``labels`` property raises (and counts the attempt) — training code
    must never see them. Evaluation harnesses may call
    :meth:`oracle_labels`, which is audited separately.
    """

    def __init__(self, samples: list[PhantomSample]):
        self._samples = list(samples)
        self.guard = AccessGuard()

    def __len__(self) -> int:
        return len(self._samples)

    def images(self) -> np.ndarray:
        return np.stack([s.image for s in self._samples]) if self._samples \
            else np.zeros((0, 0, 0), dtype=np.float32)

    @property
    def labels(self):
        self.guard.trips += 1
        raise LabelAccessError(
            "ground truth of unlabeled samples is not available to training")

    def oracle_labels(self, i: int) -> np.ndarray:
        self.guard.oracle_reads += 1
        return self._samples[i].labels


def split(samples: list[PhantomSample], labeled_fraction: float,
          seed: int) -> tuple[list[PhantomSample], UnlabeledSet]:
    """Deterministic shuffled split into a labeled list and an UnlabeledSet."""
    if not samples:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < labeled_fraction <= 1.0:
        raise ValueError(
            f"labeled_fraction must be in (0, 1], got {labeled_fraction}")
    n = len(samples)
    k = int(round(labeled_fraction * n))
    if k == 0:
        raise ValueError("labeled_fraction leaves no labeled samples")
    perm = stream(seed, "split").permutation(n)
    labeled = [samples[i] for i in perm[:k]]
    unlabeled = UnlabeledSet([samples[i] for i in perm[k:]])
    return labeled, unlabeled


def corrupt_labels(labels: np.ndarray, fraction: float,
                   rng: np.random.Generator,
                   num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Flip a fraction of pixels to uniformly random *wrong* classes."""
    labels = np.asarray(labels)
    flip = rng.random(labels.shape) < fraction
    offset = rng.integers(1, num_classes, size=labels.shape)
    return np.where(flip, (labels + offset) % num_classes, labels).astype(labels.dtype)


def save_dataset(samples: list[PhantomSample], path) -> None:
    if not samples:
        raise ValueError("refusing to write an empty dataset")
    H, W = samples[0].image.shape
    for s in samples:
        if s.image.shape != (H, W) or s.labels.shape != (H, W):
            raise ValueError("all samples must share the same extents")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(samples), H, W, NUM_CLASSES))
        for s in samples:
            fh.write(s.image.astype("<f4").tobytes())
            fh.write(s.labels.astype(np.uint8).tobytes())


def load_dataset(path) -> list[PhantomSample]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"truncated header: {len(raw)} bytes")
    magic, version, n, H, W, K = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DataFormatError(f"unsupported version {version}")
    if K != NUM_CLASSES:
        raise DataFormatError(f"unsupported class count {K}")
    expected = _HEADER.size + n * (H * W * 4 + H * W)
    if len(raw) != expected:
        raise DataFormatError(
            f"size mismatch: expected {expected} bytes, got {len(raw)}")
    samples = []
    offset = _HEADER.size
    for _ in range(n):
        image = np.frombuffer(raw, dtype="<f4", count=H * W, offset=offset)
        offset += H * W * 4
        labels = np.frombuffer(raw, dtype=np.uint8, count=H * W, offset=offset)
        offset += H * W
        samples.append(PhantomSample(
            image=image.reshape(H, W).astype(np.float32),
            labels=labels.reshape(H, W).copy()))
    return samples
