"""Training loop: supervised and semi-supervised modes with Adam and checkpoints.

Semi-supervised step (the heart of the method): weak-augment the labeled
batch, build weak and strong views of the unlabeled batch, run ONE forward
over the concatenation of the three views, split the probabilities back into
(p_l, p_w, p_s), take argmax pseudo-labels from the weak view as gradient
constants, and optimize

    loss = (loss_x + loss_u) / 2

where loss_x is cross-entropy on the labeled view and loss_u is either the
confidence-thresholded cross-entropy (mode ``semi_threshold``) or the robust
beta cross-entropy (mode ``semi_bce``) on the strong view.

Every random consumer draws from its own named stream keyed by (seed, step),
so resuming from a checkpoint continues the exact uninterrupted trajectory:
the stream position is a pure function of the step counter, which is
persisted.
"""

from __future__ import annotations

import struct
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import StrongAugConfig, WeakAugConfig, apply_views, strong_style, weak_gaussian
from .errors import DataFormatError, TrainingError
from .losses import beta_ce, ce_loss, combined_loss, pseudo_label, thresholded_ce
from .metrics import MetricsReport, evaluate
from .model import ModelParams, UNetConfig, forward, param_count
from .phantom import PhantomSample, UnlabeledSet
from .seeding import stream
from .tensor import Tensor, backward, scale, softmax_channels, split_batch
from . import model as unet

MODES = ("baseline", "weak_aug", "strong_aug", "semi_threshold", "semi_bce")
SEMI_MODES = ("semi_threshold", "semi_bce")

_DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "baseline"
    steps: int = 2000
    lr: float = 1e-3
    batch_labeled: int = 8
    batch_unlabeled: int = 8
    tau: float = 0.95
    beta: float = 0.5
    seed: int = 0
    eval_every: int = 500
    precision: str = "f32"
    sup_loss: str = "ce"      # "beta_ce" also applies the robust loss to labels
    loss_scale: float = 1.0   # scales the optimized total; used by equivalence tests
    model: UNetConfig = field(default_factory=UNetConfig)
    weak: WeakAugConfig = field(default_factory=WeakAugConfig)
    strong: StrongAugConfig = field(default_factory=StrongAugConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.steps < 0 or self.batch_labeled <= 0 or self.eval_every <= 0:
            raise ValueError("steps must be >= 0 and batch/eval counts positive")
        if self.mode in SEMI_MODES and self.batch_unlabeled <= 0:
            raise ValueError("semi modes require batch_unlabeled > 0")
        if self.lr <= 0 or self.beta <= 0:
            raise ValueError("lr and beta must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.precision not in _DTYPES:
            raise ValueError(f"precision must be one of {tuple(_DTYPES)}")
        if self.sup_loss not in ("ce", "beta_ce"):
            raise ValueError(f"sup_loss must be 'ce' or 'beta_ce'")

    @property
    def dtype(self):
        return _DTYPES[self.precision]


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["model"] = UNetConfig(**d["model"])
    d["weak"] = WeakAugConfig(**d["weak"])
    d["strong"] = StrongAugConfig(**d["strong"])
    return TrainConfig(**d)


class Adam:
    """Adaptive-moment optimizer (decay 0.9/0.999, eps 1e-8, bias-corrected)."""

    def __init__(self, params: ModelParams, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.tensors.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.tensors.items()}

    def zero_grad(self):
        for p in self.params.tensors.values():
            p.zero_grad()

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.tensors.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient in {name!r}")
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class StepRecord:
    step: int
    loss_x: float
    loss_u: float | None
    loss: float


@dataclass
class TrainResult:
    config: TrainConfig
    params: ModelParams
    optimizer: Adam
    steps: list
    evals: list              # (step, MetricsReport) pairs
    final_report: MetricsReport | None
    guard_trips: int
    fell_back_to_supervised: bool
    duration_s: float


def _weak_batch(images: np.ndarray, cfg: TrainConfig, step: int) -> np.ndarray:
    rng = stream(cfg.seed, "aug_labeled", step)
    out = np.empty_like(images)
    for i, child in enumerate(rng.spawn(len(images))):
        out[i] = weak_gaussian(images[i], cfg.weak, child)
    return out


def _strong_batch(images: np.ndarray, cfg: TrainConfig, step: int) -> np.ndarray:
    rng = stream(cfg.seed, "aug_labeled", step)
    out = np.empty_like(images)
    for i, child in enumerate(rng.spawn(len(images))):
        style = images[child.integers(len(images))]
        out[i] = strong_style(images[i], style, cfg.strong)
    return out


def _to_batch_tensor(images: np.ndarray, dtype) -> Tensor:
    return Tensor(np.ascontiguousarray(images[:, None]).astype(dtype))


def _sup_loss(prob, labels, cfg: TrainConfig):
    if cfg.sup_loss == "beta_ce":
        return beta_ce(prob, labels, cfg.beta)
    return ce_loss(prob, labels)


def train_step_supervised(params: ModelParams, opt: Adam, images: np.ndarray,
                          labels: np.ndarray, cfg: TrainConfig,
                          step: int) -> StepRecord:
    if cfg.mode == "weak_aug":
        images = _weak_batch(images, cfg, step)
    elif cfg.mode == "strong_aug":
        images = _strong_batch(images, cfg, step)
    prob = softmax_channels(forward(params, _to_batch_tensor(images, cfg.dtype)))
    loss_x = _sup_loss(prob, labels, cfg)
    total = loss_x if cfg.loss_scale == 1.0 else scale(loss_x, cfg.loss_scale)
    opt.zero_grad()
    backward(total)
    opt.step()
    return StepRecord(step=step, loss_x=loss_x.item(), loss_u=None, loss=total.item())


def train_step_semi(params: ModelParams, opt: Adam, images_l: np.ndarray,
                    labels_l: np.ndarray, images_u: np.ndarray,
                    cfg: TrainConfig, step: int) -> StepRecord:
    x_l = _weak_batch(images_l, cfg, step)
    x_w, x_s = apply_views(images_u, cfg.weak, cfg.strong, style_pool=images_u,
                           rng=stream(cfg.seed, "aug_unlabeled", step))
    batch = np.concatenate([x_l, x_w, x_s])[:, None].astype(cfg.dtype)
    prob = softmax_channels(forward(params, Tensor(batch)))
    p_l, p_w, p_s = split_batch(prob, (len(x_l), len(x_w), len(x_s)))
    pseudo, confidence = pseudo_label(p_w)

    loss_x = _sup_loss(p_l, labels_l, cfg)
    if cfg.mode == "semi_threshold":
        loss_u = thresholded_ce(p_s, pseudo, confidence, cfg.tau)
    else:
        loss_u = beta_ce(p_s, pseudo, cfg.beta)
    total = combined_loss(loss_x, loss_u)
    if cfg.loss_scale != 1.0:
        total = scale(total, cfg.loss_scale)
    opt.zero_grad()
    backward(total)
    opt.step()
    return StepRecord(step=step, loss_x=loss_x.item(), loss_u=loss_u.item(),
                      loss=total.item())


def train(cfg: TrainConfig, labeled: list[PhantomSample],
          unlabeled: UnlabeledSet | None = None,
          test_set: list[PhantomSample] | None = None,
          init_state: "Checkpoint | None" = None) -> TrainResult:
    """Run the configured training and return parameters, logs, and reports."""
    t0 = time.perf_counter()
    if not labeled:
        raise ValueError("labeled set is empty")

    mode = cfg.mode
    fell_back = False
    if mode in SEMI_MODES and (unlabeled is None or len(unlabeled) == 0):
        warnings.warn("semi mode without unlabeled data; "
                      "falling back to supervised weak_aug behavior")
        mode = "weak_aug"
        fell_back = True
    run_cfg = cfg if mode == cfg.mode else _with_mode(cfg, mode)

    images_l = np.stack([s.image for s in labeled])
    labels_l = np.stack([s.labels for s in labeled]).astype(np.int64)
    images_u = unlabeled.images() if (unlabeled is not None and len(unlabeled)) else None

    if init_state is not None:
        if init_state.params.size() != param_count(cfg.model):
            raise ValueError("checkpoint parameter count does not match config")
        params = init_state.params
        opt = Adam(params, cfg.lr)
        opt.t = init_state.step
        opt.m = {k: v.copy() for k, v in init_state.opt_m.items()}
        opt.v = {k: v.copy() for k, v in init_state.opt_v.items()}
        start = init_state.step
    else:
        params = unet.init(cfg.model, cfg.seed, dtype=cfg.dtype)
        opt = Adam(params, cfg.lr)
        start = 0

    records = []
    evals = []
    n_l = len(labeled)
    for step in range(start, cfg.steps):
        idx_l = stream(cfg.seed, "batch_labeled", step).integers(0, n_l, cfg.batch_labeled)
        if mode in SEMI_MODES:
            idx_u = stream(cfg.seed, "batch_unlabeled", step).integers(
                0, len(images_u), cfg.batch_unlabeled)
            rec = train_step_semi(params, opt, images_l[idx_l], labels_l[idx_l],
                                  images_u[idx_u], run_cfg, step)
        else:
            rec = train_step_supervised(params, opt, images_l[idx_l],
                                        labels_l[idx_l], run_cfg, step)
        if not np.isfinite(rec.loss):
            raise TrainingError(f"non-finite loss at step {step}")
        records.append(rec)
        if test_set and (step + 1) % cfg.eval_every == 0 and (step + 1) < cfg.steps:
            evals.append((step + 1, evaluate(params, test_set)))

    final_report = None
    if test_set:
        final_report = evaluate(params, test_set)
        evals.append((cfg.steps, final_report))

    return TrainResult(
        config=cfg, params=params, optimizer=opt, steps=records, evals=evals,
        final_report=final_report,
        guard_trips=unlabeled.guard.trips if unlabeled is not None else 0,
        fell_back_to_supervised=fell_back,
        duration_s=time.perf_counter() - t0,
    )


def _with_mode(cfg: TrainConfig, mode: str) -> TrainConfig:
    d = config_to_dict(cfg)
    d["mode"] = mode
    return config_from_dict(d)


# ---------------------------------------------------------------------------
# checkpoint format: magic SSCK, version byte (1 = f32 payload, 2 = f64),
# u32 step, u32 tensor count, then per tensor u16 name length + name bytes +
# 4 x u32 extents + payload; optimizer moment buffers follow in the same
# layout (names suffixed .m/.v); a length-prefixed JSON config echo closes
# the file.
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"SSCK"
_CKPT_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


@dataclass
class Checkpoint:
    config: TrainConfig
    step: int
    params: ModelParams
    opt_m: dict
    opt_v: dict


def checkpoint_from_result(result: TrainResult) -> Checkpoint:
    return Checkpoint(config=result.config, step=result.optimizer.t,
                      params=result.params,
                      opt_m=result.optimizer.m, opt_v=result.optimizer.v)


def _write_tensor(fh, name: str, arr: np.ndarray, dtype):
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<4I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def save_checkpoint(path, ck: Checkpoint) -> None:
    import json

    dtype = np.dtype("<f8") if ck.config.precision == "f64" else np.dtype("<f4")
    version = 2 if ck.config.precision == "f64" else 1
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<B", version))
        fh.write(struct.pack("<I", ck.step))
        fh.write(struct.pack("<I", len(ck.params.tensors)))
        for name, p in ck.params.tensors.items():
            _write_tensor(fh, name, p.data, dtype)
        fh.write(struct.pack("<I", 2 * len(ck.opt_m)))
        for name in ck.params.tensors:
            _write_tensor(fh, f"{name}.m", ck.opt_m[name], dtype)
            _write_tensor(fh, f"{name}.v", ck.opt_v[name], dtype)
        blob = json.dumps(config_to_dict(ck.config), sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.raw):
            raise DataFormatError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.off}")
        out = self.raw[self.off:self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _read_tensor(r: _Reader, dtype):
    name_len = struct.unpack("<H", r.take(2))[0]
    name = r.take(name_len).decode("utf-8")
    shape = struct.unpack("<4I", r.take(16))
    count = int(np.prod(shape))
    arr = np.frombuffer(r.take(count * dtype.itemsize), dtype=dtype)
    return name, arr.reshape(shape).copy()


def load_checkpoint(path) -> Checkpoint:
    import json

    with open(path, "rb") as fh:
        raw = fh.read()
    r = _Reader(raw)
    magic = r.take(4)
    if magic != CKPT_MAGIC:
        raise DataFormatError(f"bad magic {magic!r}, expected {CKPT_MAGIC!r}")
    version = r.take(1)[0]
    if version not in _CKPT_DTYPES:
        raise DataFormatError(f"unsupported checkpoint version {version}")
    dtype = _CKPT_DTYPES[version]
    step = r.u32()

    n_tensors = r.u32()
    tensors = {}
    for _ in range(n_tensors):
        name, arr = _read_tensor(r, dtype)
        tensors[name] = arr
    n_moments = r.u32()
    moments = {}
    for _ in range(n_moments):
        name, arr = _read_tensor(r, dtype)
        moments[name] = arr
    blob_len = r.u32()
    cfg = config_from_dict(json.loads(r.take(blob_len).decode("utf-8")))
    if r.off != len(raw):
        raise DataFormatError(f"size mismatch: {len(raw) - r.off} trailing bytes")

    total = sum(a.size for a in tensors.values())
    if total != param_count(cfg.model):
        raise DataFormatError(
            f"parameter count mismatch: file has {total}, "
            f"config expects {param_count(cfg.model)}")

    native = np.float64 if version == 2 else np.float32
    params = ModelParams(config=cfg.model, tensors={
        name: Tensor(arr.astype(native), track_grad=True, name=name)
        for name, arr in tensors.items()})
    opt_m = {name: moments[f"{name}.m"].astype(native) for name in tensors}
    opt_v = {name: moments[f"{name}.v"].astype(native) for name in tensors}
    return Checkpoint(config=cfg, step=step, params=params,
                      opt_m=opt_m, opt_v=opt_v)
