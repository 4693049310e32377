"""A tiny trainable epsilon-predictor and its curriculum trainer.

The denoiser is a two-hidden-layer tanh perceptron over
[z_t, sinusoidal time features, condition embedding], written directly in
numpy with hand-derived gradients so training is exactly reproducible.

Conditions are hierarchical: a full condition id factors into
(text, timing, phoneme) levels, and coarser views drop the finer levels.
Each curriculum stage draws one granularity per batch, including the
unconditional branch used for classifier-free guidance.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .diffusion import NoiseSchedule

__all__ = [
    "GRANULARITIES",
    "ToyDenoiser",
    "CurriculumStage",
    "default_curriculum",
    "InverseLR",
    "TrainingDiverged",
    "train_toy_denoiser",
    "validation_loss",
    "make_toy_dataset",
    "save_checkpoint",
    "load_checkpoint",
]

# Condition granularities, coarsest first; "null" is the unconditional branch.
GRANULARITIES = ("text", "text_timing", "full", "null")

_CKPT_MAGIC = b"TOYDNZR\x00"
_CKPT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; carries the stage name and step number."""

    def __init__(self, stage: str, step: int):
        super().__init__(f"stage {stage!r}: non-finite loss at step {step}")
        self.stage = stage
        self.step = step


def _time_features(t: np.ndarray, T: int, n_freq: int) -> np.ndarray:
    """Sinusoidal features of normalized time, shape (n, 2*n_freq)."""
    tau = np.asarray(t, dtype=np.float64)[:, None] / T
    freqs = 2.0 ** np.arange(n_freq)
    angles = 2.0 * np.pi * tau * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class ToyDenoiser:
    """Two-hidden-layer MLP epsilon predictor with per-granularity
    condition-embedding tables and a dedicated null embedding."""

    def __init__(
        self,
        dim: int,
        T: int,
        hidden: int = 64,
        emb: int = 8,
        level_sizes: tuple[int, int, int] = (2, 2, 2),
        n_freq: int = 4,
        rng: np.random.Generator | None = None,
    ):
        if dim < 1 or T < 1 or hidden < 1 or emb < 1 or n_freq < 1:
            raise ValueError("all sizes must be positive")
        if len(level_sizes) != 3 or any(s < 1 for s in level_sizes):
            raise ValueError(f"level_sizes must be three positive ints, got {level_sizes!r}")
        self.dim = dim
        self.T = T
        self.hidden = hidden
        self.emb = emb
        self.level_sizes = tuple(int(s) for s in level_sizes)
        self.n_freq = n_freq
        if rng is None:
            rng = np.random.default_rng(0)
        s1, s2, s3 = self.level_sizes
        in_dim = dim + 2 * n_freq + emb
        self.params: dict[str, np.ndarray] = {
            "W1": rng.standard_normal((in_dim, hidden)) / np.sqrt(in_dim),
            "b1": np.zeros(hidden),
            "W2": rng.standard_normal((hidden, hidden)) / np.sqrt(hidden),
            "b2": np.zeros(hidden),
            "W3": rng.standard_normal((hidden, dim)) / np.sqrt(hidden),
            "b3": np.zeros(dim),
            "E_text": 0.1 * rng.standard_normal((s1, emb)),
            "E_text_timing": 0.1 * rng.standard_normal((s1 * s2, emb)),
            "E_full": 0.1 * rng.standard_normal((s1 * s2 * s3, emb)),
            "E_null": 0.1 * rng.standard_normal((1, emb)),
        }

    # ---- condition bookkeeping -------------------------------------------

    @property
    def n_conditions(self) -> int:
        s1, s2, s3 = self.level_sizes
        return s1 * s2 * s3

    def view_of(self, full_id: int, granularity: str) -> int:
        """Project a full condition id onto a coarser granularity."""
        if not 0 <= full_id < self.n_conditions:
            raise ValueError(f"condition id {full_id} outside 0..{self.n_conditions - 1}")
        _, s2, s3 = self.level_sizes
        if granularity == "full":
            return full_id
        if granularity == "text_timing":
            return full_id // s3
        if granularity == "text":
            return full_id // (s2 * s3)
        if granularity == "null":
            return 0
        raise ValueError(f"unknown granularity {granularity!r}")

    def _table(self, granularity: str) -> str:
        if granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {granularity!r}")
        return {"text": "E_text", "text_timing": "E_text_timing", "full": "E_full", "null": "E_null"}[granularity]

    # ---- forward / backward ----------------------------------------------

    def _forward(self, z_t: np.ndarray, t: np.ndarray, granularity: str, view_ids: np.ndarray):
        table = self._table(granularity)
        E = self.params[table]
        if np.any(view_ids < 0) or np.any(view_ids >= E.shape[0]):
            raise ValueError(f"view id outside the {granularity} table of {E.shape[0]} rows")
        feats = _time_features(t, self.T, self.n_freq)
        x = np.concatenate([z_t, feats, E[view_ids]], axis=1)
        h1 = np.tanh(x @ self.params["W1"] + self.params["b1"])
        h2 = np.tanh(h1 @ self.params["W2"] + self.params["b2"])
        out = h2 @ self.params["W3"] + self.params["b3"]
        return out, (x, h1, h2, table, view_ids)

    def _loss_and_grads(
        self,
        z_t: np.ndarray,
        t: np.ndarray,
        eps: np.ndarray,
        granularity: str,
        view_ids: np.ndarray,
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean per-item squared L2 objective and gradients for every
        parameter (untouched embedding tables get zero gradients)."""
        out, (x, h1, h2, table, view_ids) = self._forward(z_t, t, granularity, view_ids)
        n = z_t.shape[0]
        diff = out - eps
        loss = float(np.sum(diff * diff)) / n
        g_out = 2.0 * diff / n
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        grads["W3"] = h2.T @ g_out
        grads["b3"] = g_out.sum(axis=0)
        g_h2 = (g_out @ self.params["W3"].T) * (1.0 - h2 * h2)
        grads["W2"] = h1.T @ g_h2
        grads["b2"] = g_h2.sum(axis=0)
        g_h1 = (g_h2 @ self.params["W2"].T) * (1.0 - h1 * h1)
        grads["W1"] = x.T @ g_h1
        grads["b1"] = g_h1.sum(axis=0)
        g_x = g_h1 @ self.params["W1"].T
        g_emb = g_x[:, self.dim + 2 * self.n_freq :]
        np.add.at(grads[table], view_ids, g_emb)
        return loss, grads

    # ---- Denoiser interface ----------------------------------------------

    def predict(self, z_t: np.ndarray, t: int, c: tuple[str, int] | None = None) -> np.ndarray:
        z = np.asarray(z_t, dtype=np.float64)
        single = z.ndim == 1
        z2 = z[None, :] if single else z
        if z2.ndim != 2 or z2.shape[1] != self.dim:
            raise ValueError(f"expected latents of dimension {self.dim}, got shape {z.shape}")
        if c is None:
            granularity, vid = "null", 0
        else:
            granularity, vid = c
        view_ids = np.full(z2.shape[0], int(vid))
        out, _ = self._forward(z2, np.full(z2.shape[0], t, dtype=np.float64), granularity, view_ids)
        return out[0] if single else out


@dataclass(frozen=True)
class InverseLR:
    """Constant for the first ``constant_fraction`` of steps, then decays as
    eta0 * (1 + t'/gamma)^-0.5 where t' counts steps past the cut."""

    eta0: float
    gamma: float = 1e6
    constant_fraction: float = 0.99

    def __post_init__(self) -> None:
        if self.eta0 <= 0 or self.gamma <= 0 or not 0.0 <= self.constant_fraction <= 1.0:
            raise ValueError("invalid InverseLR parameters")

    def lr_at(self, step: int, total_steps: int) -> float:
        cut = int(np.floor(self.constant_fraction * total_steps))
        if step < cut:
            return self.eta0
        return self.eta0 * (1.0 + (step - cut) / self.gamma) ** -0.5


@dataclass(frozen=True)
class CurriculumStage:
    """One training stage: how long, how big, how fast, and which condition
    granularities its batches draw from."""

    name: str
    steps: int
    batch_size: int
    lr: float
    granularity_probs: Mapping[str, float]
    lr_schedule: InverseLR | None = None

    def __post_init__(self) -> None:
        if self.steps < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError(f"stage {self.name!r}: steps, batch_size, lr must be positive")
        probs = dict(self.granularity_probs)
        if not probs:
            raise ValueError(f"stage {self.name!r}: empty granularity_probs")
        for g, p in probs.items():
            if g not in GRANULARITIES:
                raise ValueError(f"stage {self.name!r}: unknown granularity {g!r}")
            if p < 0:
                raise ValueError(f"stage {self.name!r}: negative probability for {g!r}")
        if abs(sum(probs.values()) - 1.0) > 1e-9:
            raise ValueError(f"stage {self.name!r}: granularity_probs sum to {sum(probs.values())}")
        object.__setattr__(self, "granularity_probs", probs)


def default_curriculum(steps: int = 300, batch_size: int = 64, lr: float = 3e-3) -> tuple[CurriculumStage, ...]:
    """Three stages that widen the condition mix while keeping 10%
    unconditional dropout throughout."""
    return (
        CurriculumStage("stage1", steps, batch_size, lr, {"text": 0.9, "null": 0.1}),
        CurriculumStage(
            "stage2", steps, batch_size, lr, {"text": 0.45, "text_timing": 0.45, "null": 0.1}
        ),
        CurriculumStage(
            "stage3", steps, batch_size, lr,
            {"text": 0.3, "text_timing": 0.3, "full": 0.3, "null": 0.1},
        ),
    )


def _draw_granularity(probs: Mapping[str, float], rng: np.random.Generator) -> str:
    r = rng.random()
    acc = 0.0
    # canonical order keeps the draw independent of dict insertion order
    items = [(g, probs[g]) for g in GRANULARITIES if g in probs]
    for g, p in items:
        acc += p
        if r < acc:
            return g
    return items[-1][0]


def _stack_dataset(dataset: Sequence[tuple[np.ndarray, int]]) -> tuple[np.ndarray, np.ndarray]:
    if not dataset:
        raise ValueError("empty dataset")
    z0 = np.stack([np.asarray(z, dtype=np.float64) for z, _ in dataset])
    cids = np.array([int(c) for _, c in dataset])
    if z0.ndim != 2:
        raise ValueError("dataset latents must be 1-D vectors of a common dimension")
    return z0, cids


def train_toy_denoiser(
    dataset: Sequence[tuple[np.ndarray, int]],
    curriculum: Sequence[CurriculumStage],
    sched: NoiseSchedule,
    seed: int,
    denoiser: ToyDenoiser | None = None,
    hidden: int = 64,
    emb: int = 8,
    level_sizes: tuple[int, int, int] = (2, 2, 2),
) -> ToyDenoiser:
    """Train (or continue training) the toy denoiser through the curriculum.

    Each step draws a batch with replacement, one granularity for the whole
    batch, per-item timesteps and noise, and takes one Adam step on the
    squared-noise-error objective.  Fully deterministic for a given seed.
    """
    z0_all, cid_all = _stack_dataset(dataset)
    n, dim = z0_all.shape
    rng = np.random.default_rng(seed)
    if denoiser is None:
        denoiser = ToyDenoiser(dim, sched.T, hidden=hidden, emb=emb, level_sizes=level_sizes, rng=rng)
    if denoiser.dim != dim:
        raise ValueError(f"denoiser dimension {denoiser.dim} != dataset dimension {dim}")
    if denoiser.T != sched.T:
        raise ValueError(f"denoiser was built for T={denoiser.T}, schedule has T={sched.T}")
    if np.any(cid_all < 0) or np.any(cid_all >= denoiser.n_conditions):
        raise ValueError(f"condition ids must lie in 0..{denoiser.n_conditions - 1}")

    sqrt_ab = np.sqrt(sched.alpha_bar)
    sqrt_1mab = np.sqrt(1.0 - sched.alpha_bar)

    # fresh Adam state per call; continuing training restarts the optimizer
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in denoiser.params.items()}
    v = {k: np.zeros_like(p) for k, p in denoiser.params.items()}
    adam_t = 0

    for stage in curriculum:
        for step in range(stage.steps):
            idx = rng.integers(0, n, size=stage.batch_size)
            granularity = _draw_granularity(stage.granularity_probs, rng)
            t = rng.integers(1, sched.T + 1, size=stage.batch_size)
            eps = rng.standard_normal((stage.batch_size, dim))
            z_t = sqrt_ab[t, None] * z0_all[idx] + sqrt_1mab[t, None] * eps
            if granularity == "null":
                view_ids = np.zeros(stage.batch_size, dtype=np.int64)
            else:
                view_ids = np.array([denoiser.view_of(int(c), granularity) for c in cid_all[idx]])
            loss, grads = denoiser._loss_and_grads(z_t, t.astype(np.float64), eps, granularity, view_ids)
            if not np.isfinite(loss):
                raise TrainingDiverged(stage.name, step)
            lr = stage.lr_schedule.lr_at(step, stage.steps) if stage.lr_schedule else stage.lr
            adam_t += 1
            for key in denoiser.params:
                g = grads[key]
                m[key] = beta1 * m[key] + (1 - beta1) * g
                v[key] = beta2 * v[key] + (1 - beta2) * g * g
                m_hat = m[key] / (1 - beta1**adam_t)
                v_hat = v[key] / (1 - beta2**adam_t)
                denoiser.params[key] -= lr * m_hat / (np.sqrt(v_hat) + adam_eps)
    return denoiser


def validation_loss(
    denoiser: ToyDenoiser | None,
    dataset: Sequence[tuple[np.ndarray, int]],
    sched: NoiseSchedule,
    granularity: str,
    rng: np.random.Generator,
    repeats: int = 8,
) -> float:
    """Mean squared-noise-error over the dataset with fresh (t, eps) draws.

    ``denoiser=None`` scores the zero predictor, the natural baseline whose
    expected loss is the latent dimension.  Use the same rng seed to compare
    models on identical draws.
    """
    if granularity not in GRANULARITIES:
        raise ValueError(f"unknown granularity {granularity!r}")
    z0_all, cid_all = _stack_dataset(dataset)
    n, dim = z0_all.shape
    sqrt_ab = np.sqrt(sched.alpha_bar)
    sqrt_1mab = np.sqrt(1.0 - sched.alpha_bar)
    total = 0.0
    for _ in range(repeats):
        t = rng.integers(1, sched.T + 1, size=n)
        eps = rng.standard_normal((n, dim))
        z_t = sqrt_ab[t, None] * z0_all + sqrt_1mab[t, None] * eps
        if denoiser is None:
            total += float(np.sum(eps * eps))
            continue
        if granularity == "null":
            view_ids = np.zeros(n, dtype=np.int64)
        else:
            view_ids = np.array([denoiser.view_of(int(c), granularity) for c in cid_all])
        out, _ = denoiser._forward(z_t, t.astype(np.float64), granularity, view_ids)
        total += float(np.sum((out - eps) ** 2))
    return total / (n * repeats)


def make_toy_dataset(
    n: int,
    dim: int,
    rng: np.random.Generator,
    level_sizes: tuple[int, int, int] = (2, 2, 2),
    spread: float = 2.0,
    sigma: float = 0.4,
) -> list[tuple[np.ndarray, int]]:
    """Gaussian components indexed by the full condition id.

    The text level sets the dominant mean (+/- spread); timing and phoneme
    levels add progressively smaller offsets, so every granularity carries
    usable signal.
    """
    s1, s2, s3 = level_sizes
    items: list[tuple[np.ndarray, int]] = []
    for _ in range(n):
        cid = int(rng.integers(0, s1 * s2 * s3))
        tt = cid // (s2 * s3)
        gg = (cid // s3) % s2
        pp = cid % s3
        mean = spread * (2.0 * tt / max(1, s1 - 1) - 1.0)
        mean += 0.25 * spread * (2.0 * gg / max(1, s2 - 1) - 1.0)
        mean += 0.125 * spread * (2.0 * pp / max(1, s3 - 1) - 1.0)
        z0 = mean + sigma * rng.standard_normal(dim)
        items.append((z0, cid))
    return items


def save_checkpoint(denoiser: ToyDenoiser, path: str | Path) -> None:
    """Flat binary: magic, version, JSON header (sizes + parameter shapes),
    then raw little-endian float64 parameter data in header order."""
    names = sorted(denoiser.params)
    header = {
        "dim": denoiser.dim,
        "T": denoiser.T,
        "hidden": denoiser.hidden,
        "emb": denoiser.emb,
        "level_sizes": list(denoiser.level_sizes),
        "n_freq": denoiser.n_freq,
        "params": [[name, list(denoiser.params[name].shape)] for name in names],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", _CKPT_VERSION, len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(denoiser.params[name], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> ToyDenoiser:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a toy-denoiser checkpoint")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        denoiser = ToyDenoiser(
            dim=header["dim"],
            T=header["T"],
            hidden=header["hidden"],
            emb=header["emb"],
            level_sizes=tuple(header["level_sizes"]),
            n_freq=header["n_freq"],
        )
        for name, shape in header["params"]:
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated checkpoint at parameter {name!r}")
            denoiser.params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after parameters")
    return denoiser
