"""LS-GAN with a departure-from-normality constraint on the generator.

Two architectures share the training code:

* ``conv``: square ``n x n`` maps. The generator projects the latent vector to
  a 4x4 seed map and doubles it with 3x3 stride-2 transposed convolutions
  (batch norm + ReLU on the inner blocks, tanh at the end). The
  discriminator halves the map with 5x5 stride-2 convolutions and leaky ReLU,
  then a dense layer gives an unbounded score.
* ``mlp``: 2-D points for the Gaussian-mixture benchmark. See
  :func:`batch_matrices` for the matrices whose DFN is measured there.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import linalg
from .errors import (
    ChecksumError,
    ConfigError,
    DefectiveMatrix,
    NonFiniteGradient,
    NonFiniteLoss,
    ShapeMismatch,
    VersionMismatch,
)
from .nn import Adam, LayerSpec, Net

log = logging.getLogger(__name__)

VARIANTS = {
    "lsgan011": dict(a=0.0, b=1.0, c=1.0, dfn=False),
    "lsgan-110": dict(a=-1.0, b=1.0, c=0.0, dfn=False),
    "lsgan011-dfn": dict(a=0.0, b=1.0, c=1.0, dfn=True),
    "lsgan-110-dfn": dict(a=-1.0, b=1.0, c=0.0, dfn=True),
}


@dataclass(frozen=True)
class GanConfig:
    a: float = 0.0
    b: float = 1.0
    c: float = 1.0
    epsilon: float | None = None
    penalty_weight: float = 1.0
    penalty_mode: str = "hinge"
    lagrange_rate: float = 0.01
    latent_dim: int = 32
    n: int = 32
    arch: str = "conv"
    gen_channels: tuple = (32, 16, 8)
    disc_channels: tuple = (8, 16, 32)
    hidden: int = 64
    data_dim: int = 2
    point_matrix: str = "scatter"
    batch_size: int = 32
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    init_std: float = 0.02
    leaky_slope: float = 0.2
    seed: int = 0
    checkpoint_every: int = 500
    ema_decay: float = 0.99
    symmetric_d_loss: bool = False
    eig_backend: str = "lapack"

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.penalty_weight < 0:
            raise ConfigError("penalty_weight must be >= 0")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        if self.penalty_mode not in ("hinge", "lagrangian"):
            raise ConfigError(f"unknown penalty_mode {self.penalty_mode!r}")
        if self.arch not in ("conv", "mlp"):
            raise ConfigError(f"unknown arch {self.arch!r}")
        if self.arch == "conv":
            n = self.n
            if n < 16 or n & (n - 1):
                raise ConfigError("n must be a power of two >= 16")
            ups = int(math.log2(n // 4))
            if len(self.gen_channels) != ups or len(self.disc_channels) != ups:
                raise ConfigError(f"n={n} needs {ups} generator and discriminator channel entries")
        if self.point_matrix not in ("scatter", "pairs"):
            raise ConfigError(f"unknown point_matrix {self.point_matrix!r}")
        if self.arch == "mlp" and self.point_matrix == "pairs" and self.batch_size % self.data_dim:
            raise ConfigError("pairs mode stacks data_dim points per matrix; batch_size must divide evenly")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gen_channels"] = list(self.gen_channels)
        d["disc_channels"] = list(self.disc_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GanConfig":
        known = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in known}
        for key in ("gen_channels", "disc_channels"):
            if key in kw:
                kw[key] = tuple(int(v) for v in kw[key])
        return cls(**kw)

    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()

    @property
    def uses_dfn(self) -> bool:
        return self.penalty_weight > 0


def variant_config(name: str, **overrides) -> GanConfig:
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    v = dict(VARIANTS[name])
    use_dfn = v.pop("dfn")
    pw = overrides.pop("penalty_weight", 1.0)
    return GanConfig(**v, penalty_weight=pw if use_dfn else 0.0, **overrides)


# -- architectures -------------------------------------------------------------

def generator_specs(cfg: GanConfig) -> list[LayerSpec]:
    if cfg.arch == "mlp":
        h = cfg.hidden
        return [LayerSpec("dense", cfg.latent_dim, h), LayerSpec("relu"),
                LayerSpec("dense", h, h), LayerSpec("relu"),
                LayerSpec("dense", h, cfg.data_dim)]
    ch = list(cfg.gen_channels)
    specs = [LayerSpec("dense", cfg.latent_dim, ch[0] * 16),
             LayerSpec("reshape", shape=(ch[0], 4, 4)),
             LayerSpec("relu")]
    for cin, cout in zip(ch[:-1], ch[1:]):
        specs += [LayerSpec("transposed_conv", cin, cout, kernel=3, stride=2, padding=1, output_padding=1),
                  LayerSpec("batch_norm", out_ch=cout),
                  LayerSpec("relu")]
    specs += [LayerSpec("transposed_conv", ch[-1], 1, kernel=3, stride=2, padding=1, output_padding=1),
              LayerSpec("tanh")]
    return specs


def discriminator_specs(cfg: GanConfig) -> list[LayerSpec]:
    slope = cfg.leaky_slope
    if cfg.arch == "mlp":
        h = cfg.hidden
        return [LayerSpec("dense", cfg.data_dim, h), LayerSpec("leaky_relu", leaky_slope=slope),
                LayerSpec("dense", h, h), LayerSpec("leaky_relu", leaky_slope=slope),
                LayerSpec("dense", h, 1)]
    specs = []
    cin = 1
    for cout in cfg.disc_channels:
        specs += [LayerSpec("conv", cin, cout, kernel=5, stride=2, padding=2),
                  LayerSpec("leaky_relu", leaky_slope=slope)]
        cin = cout
    specs += [LayerSpec("flatten"), LayerSpec("dense", cin * 16, 1)]
    return specs


_NETS: dict = {}


def networks(cfg: GanConfig) -> tuple[Net, Net]:
    key = (cfg.arch, cfg.latent_dim, cfg.n, cfg.gen_channels, cfg.disc_channels, cfg.hidden,
           cfg.data_dim, cfg.leaky_slope)
    if key not in _NETS:
        _NETS[key] = (Net(generator_specs(cfg)), Net(discriminator_specs(cfg)))
    return _NETS[key]


def generator_forward(params, z, cfg: GanConfig):
    """Generated batch: ``(B, 1, n, n)`` for conv, ``(B, data_dim)`` for mlp."""
    gen, _ = networks(cfg)
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] != cfg.latent_dim:
        raise ShapeMismatch(f"latent batch must be (batch, {cfg.latent_dim}), got {z.shape}")
    return gen(params, z)


def discriminator_forward(params, x, cfg: GanConfig) -> np.ndarray:
    _, disc = networks(cfg)
    x = np.asarray(x, dtype=float)
    want = (1, cfg.n, cfg.n) if cfg.arch == "conv" else (cfg.data_dim,)
    if x.shape[1:] != want:
        raise ShapeMismatch(f"discriminator input must be (batch, {want}), got {x.shape}")
    return disc(params, x)[:, 0]


# -- losses ----------------------------------------------------------------------

def d_loss(scores_real, scores_fake, a, b, symmetric: bool = False) -> float:
    """``1/2 E[(D(x) - b)^2] + E[(D(G(z)) - a)^2]``; both halves if ``symmetric``."""
    sr = np.asarray(scores_real, dtype=float)
    sf = np.asarray(scores_fake, dtype=float)
    if sr.size == 0 or sf.size == 0:
        raise ValueError("empty score batch")
    fake_w = 0.5 if symmetric else 1.0
    return float(0.5 * np.mean((sr - b) ** 2) + fake_w * np.mean((sf - a) ** 2))


def g_loss(scores_fake, c, dfn_fake_mean=0.0, dfn_real_mean=0.0, epsilon=0.0, penalty_weight=0.0):
    """Generator objective with the DFN constraint as an exact-penalty hinge.

    Returns ``(total, parts)``; ``parts`` has ``ls``, ``penalty`` and ``gap``
    (fake minus real mean DFN).
    """
    if penalty_weight < 0 or epsilon < 0:
        raise ValueError("penalty_weight and epsilon must be >= 0")
    sf = np.asarray(scores_fake, dtype=float)
    ls = float(0.5 * np.mean((sf - c) ** 2))
    gap = float(dfn_fake_mean) - float(dfn_real_mean)
    excess = abs(gap) - float(epsilon)
    penalty = float(penalty_weight) * excess if (penalty_weight > 0 and excess > 0) else 0.0
    return ls + penalty, {"ls": ls, "penalty": penalty, "gap": gap}


# -- DFN over batches -----------------------------------------------------------------

def batch_matrices(x, cfg: GanConfig) -> np.ndarray:
    """Square matrices whose DFN is constrained.

    Conv generators use the maps themselves. Point generators use either
    the batch scatter matrix ``(1/B) sum (x_i - mu)(x_i - mu)^T`` (one per
    batch, symmetric, so its DFN is identically zero) or ``pairs``: each run
    of ``data_dim`` consecutive points stacked as the rows of a matrix.
    """
    x = np.asarray(x, dtype=float)
    if cfg.arch == "conv":
        return x[:, 0]
    if cfg.point_matrix == "scatter":
        d = x - x.mean(axis=0)
        return (d.T @ d / len(x))[None]
    return x.reshape(-1, cfg.data_dim, cfg.data_dim)


def _unbatch_grad(g, x, cfg: GanConfig):
    """Pull a gradient on :func:`batch_matrices` back to the generator output."""
    if cfg.arch == "conv":
        return g[:, None]
    if cfg.point_matrix == "scatter":
        d = x - x.mean(axis=0)
        return d @ (g[0] + g[0].T) / len(x)
    return g.reshape(x.shape)


def batch_dfn(mats, backend: str = "lapack") -> np.ndarray:
    return np.array([linalg.dfn(m, backend=backend) for m in mats])


def batch_dfn_gradient(mats, backend: str = "lapack") -> np.ndarray:
    return np.stack([linalg.dfn_gradient_or_fd(m, backend=backend) for m in mats])


# -- state and checkpoints ---------------------------------------------------------

@dataclass
class TrainState:
    gen_params: np.ndarray
    disc_params: np.ndarray
    gen_m: np.ndarray
    gen_v: np.ndarray
    disc_m: np.ndarray
    disc_v: np.ndarray
    iter: int
    rng_state: dict
    real_dfn_mean: float = float("nan")
    epsilon: float = float("nan")
    penalty_weight: float = 0.0
    last: dict = field(default_factory=dict)

    def rng(self) -> np.random.Generator:
        g = np.random.default_rng()
        g.bit_generator.state = json.loads(json.dumps(self.rng_state))
        return g


def init_state(cfg: GanConfig) -> TrainState:
    rng = np.random.default_rng(cfg.seed)
    gen, disc = networks(cfg)
    gp = gen.init(rng, cfg.init_std).astype(np.float32)
    dp = disc.init(rng, cfg.init_std).astype(np.float32)
    eps = float("nan") if cfg.epsilon is None else float(cfg.epsilon)
    return TrainState(
        gen_params=gp, disc_params=dp,
        gen_m=np.zeros_like(gp), gen_v=np.zeros_like(gp),
        disc_m=np.zeros_like(dp), disc_v=np.zeros_like(dp),
        iter=0, rng_state=rng.bit_generator.state,
        epsilon=eps, penalty_weight=float(cfg.penalty_weight),
    )


def sample_latent(state: TrainState, batch: int, cfg: GanConfig):
    """Draw a latent batch from the state's generator; returns ``(z, new_state)``."""
    g = state.rng()
    z = g.standard_normal((batch, cfg.latent_dim))
    return z, replace(state, rng_state=g.bit_generator.state)


CKPT_MAGIC = b"DFNGCKPT"
CKPT_VERSION = 1
_BLOBS = ("gen_params", "disc_params", "gen_m", "gen_v", "disc_m", "disc_v")


def checkpoint_bytes(state: TrainState, cfg: GanConfig, version: int = CKPT_VERSION) -> bytes:
    parts = [CKPT_MAGIC, struct.pack("<H", version), cfg.digest(),
             struct.pack("<Qddd", state.iter, state.real_dfn_mean, state.epsilon, state.penalty_weight)]
    for name in _BLOBS:
        arr = np.ascontiguousarray(getattr(state, name), dtype="<f4")
        parts.append(struct.pack("<I", arr.size))
        parts.append(arr.tobytes())
    for obj in (state.rng_state, cfg.to_dict()):
        blob = json.dumps(obj, sort_keys=True).encode()
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(state: TrainState, path, cfg: GanConfig) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(state, cfg))


def load_checkpoint(path, cfg: GanConfig | None = None):
    """Return ``(state, config)``.

    Raises
    ------
    ChecksumError
        Truncated or corrupted file.
    VersionMismatch
        Unknown format version, or ``cfg`` given and its hash differs from
        the one recorded in the file.
    """
    buf = Path(path).read_bytes()
    if len(buf) < 14 or buf[:8] != CKPT_MAGIC:
        raise ChecksumError(f"{path}: not a checkpoint")
    # the version is read before the CRC so that files from another format
    # revision are reported as such rather than as corrupt
    (version,) = struct.unpack("<H", buf[8:10])
    if version != CKPT_VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    body, crc = buf[:-4], struct.unpack("<I", buf[-4:])[0]
    if zlib.crc32(body) != crc:
        raise ChecksumError(f"{path}: CRC mismatch")
    digest = body[10:42]
    off = 42
    it, dmean, eps, pw = struct.unpack("<Qddd", body[off:off + 32])
    off += 32
    arrays = {}
    for name in _BLOBS:
        (size,) = struct.unpack("<I", body[off:off + 4])
        off += 4
        arrays[name] = np.frombuffer(body[off:off + 4 * size], dtype="<f4").astype(np.float32)
        off += 4 * size
    objs = []
    for _ in range(2):
        (size,) = struct.unpack("<I", body[off:off + 4])
        off += 4
        objs.append(json.loads(body[off:off + size].decode()))
        off += size
    stored_cfg = GanConfig.from_dict(objs[1])
    if stored_cfg.digest() != digest:
        raise ChecksumError(f"{path}: embedded config does not match its hash")
    if cfg is not None and cfg.digest() != digest:
        raise VersionMismatch(f"{path}: checkpoint was written for a different config")
    state = TrainState(**arrays, iter=it, rng_state=objs[0], real_dfn_mean=dmean, epsilon=eps,
                       penalty_weight=pw)
    return state, stored_cfg


def state_digest(state: TrainState, cfg: GanConfig) -> str:
    return hashlib.sha256(checkpoint_bytes(state, cfg)).hexdigest()


# -- gradients ------------------------------------------------------------------------

def discriminator_gradient(gen_params, disc_params, real, z, cfg: GanConfig):
    """Discriminator loss and its gradient at fixed generator parameters."""
    gen, disc = networks(cfg)
    fake = gen(gen_params, z)
    sr, cache_r = disc.forward(disc_params, real)
    sf, cache_f = disc.forward(disc_params, fake)
    sr, sf = sr[:, 0], sf[:, 0]
    loss = d_loss(sr, sf, cfg.a, cfg.b, cfg.symmetric_d_loss)
    fake_w = 0.5 if cfg.symmetric_d_loss else 1.0
    _, g_r = disc.backward(disc_params, cache_r, ((sr - cfg.b) / sr.size)[:, None])
    _, g_f = disc.backward(disc_params, cache_f, (2.0 * fake_w * (sf - cfg.a) / sf.size)[:, None])
    return loss, g_r + g_f


def generator_gradient(gen_params, disc_params, z, cfg: GanConfig, real_dfn_mean=0.0,
                       epsilon=0.0, penalty_weight=None):
    """Generator loss (LS term plus DFN hinge), its parts and gradient."""
    gen, disc = networks(cfg)
    pw = cfg.penalty_weight if penalty_weight is None else penalty_weight
    fake, cache_g = gen.forward(gen_params, z)
    sf, cache_d = disc.forward(disc_params, fake)
    sf = sf[:, 0]
    mats = batch_matrices(fake, cfg)
    fake_dfn = float(np.mean(batch_dfn(mats, cfg.eig_backend)))
    total, parts = g_loss(sf, cfg.c, fake_dfn, real_dfn_mean, epsilon, pw)
    parts["fake_dfn"] = fake_dfn
    dfake, _ = disc.backward(disc_params, cache_d, ((sf - cfg.c) / sf.size)[:, None])
    if parts["penalty"] > 0:
        scale = pw * np.sign(parts["gap"]) / len(mats)
        dm = batch_dfn_gradient(mats, cfg.eig_backend) * scale
        dfake = dfake + _unbatch_grad(dm, fake, cfg)
    _, grad = gen.backward(gen_params, cache_g, dfake)
    return total, parts, grad


def backward(state: TrainState, real_batch, z_batch, cfg: GanConfig):
    """Gradients of both losses at the current state (no update)."""
    gp = state.gen_params.astype(np.float64)
    dp = state.disc_params.astype(np.float64)
    d_val, d_grad = discriminator_gradient(gp, dp, real_batch, z_batch, cfg)
    eps = 0.0 if math.isnan(state.epsilon) else state.epsilon
    ref = 0.0 if math.isnan(state.real_dfn_mean) else state.real_dfn_mean
    g_val, parts, g_grad = generator_gradient(gp, dp, z_batch, cfg, ref, eps, state.penalty_weight)
    for name, g in (("discriminator", d_grad), ("generator", g_grad)):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"{name} gradient has non-finite entries")
    return {"d_loss": d_val, "d_grad": d_grad, "g_loss": g_val, "g_parts": parts, "g_grad": g_grad}


# -- training -----------------------------------------------------------------------------

def train_step(state: TrainState, real_batch, z_batch, cfg: GanConfig, checkpoint_dir=None) -> TrainState:
    """One discriminator update followed by one generator update.

    The running real-data DFN mean is an exponential moving average over real
    batches. With ``penalty_mode="lagrangian"`` the penalty weight grows by
    ``lagrange_rate * max(0, |gap| - epsilon)`` after every step.
    """
    real = np.asarray(real_batch, dtype=float)
    z = np.asarray(z_batch, dtype=float)
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2)
    t = state.iter + 1

    real_dfn = float(np.mean(batch_dfn(batch_matrices(real, cfg), cfg.eig_backend)))
    if math.isnan(state.real_dfn_mean):
        ema = real_dfn
    else:
        ema = cfg.ema_decay * state.real_dfn_mean + (1.0 - cfg.ema_decay) * real_dfn
    eps = state.epsilon
    if math.isnan(eps):
        eps = linalg.suggest_epsilon(batch_matrices(real, cfg)) if cfg.uses_dfn else 0.0

    gp = state.gen_params.astype(np.float64)
    dp = state.disc_params.astype(np.float64)
    d_val, d_grad = discriminator_gradient(gp, dp, real, z, cfg)
    dp_new, dm, dv = opt.step(dp, d_grad, state.disc_m.astype(np.float64), state.disc_v.astype(np.float64), t)

    g_val, parts, g_grad = generator_gradient(gp, dp_new, z, cfg, ema, eps, state.penalty_weight)
    if not (math.isfinite(d_val) and math.isfinite(g_val)):
        raise NonFiniteLoss(f"non-finite loss at iteration {t}",
                            dump={"iter": t, "d_loss": d_val, "g_loss": g_val, "parts": parts})
    if not (np.all(np.isfinite(d_grad)) and np.all(np.isfinite(g_grad))):
        raise NonFiniteLoss(f"non-finite gradient at iteration {t}", dump={"iter": t})
    gp_new, gm, gv = opt.step(gp, g_grad, state.gen_m.astype(np.float64), state.gen_v.astype(np.float64), t)

    pw = state.penalty_weight
    if cfg.penalty_mode == "lagrangian" and cfg.uses_dfn:
        pw = pw + cfg.lagrange_rate * max(0.0, abs(parts["gap"]) - eps)

    new = TrainState(
        gen_params=gp_new.astype(np.float32), disc_params=dp_new.astype(np.float32),
        gen_m=gm.astype(np.float32), gen_v=gv.astype(np.float32),
        disc_m=dm.astype(np.float32), disc_v=dv.astype(np.float32),
        iter=t, rng_state=state.rng_state, real_dfn_mean=ema, epsilon=float(eps),
        penalty_weight=pw,
        last={"iter": t, "d_loss": d_val, "g_loss": g_val, "g_ls": parts["ls"],
              "penalty": parts["penalty"], "dfn_gap": parts["gap"], "real_dfn": real_dfn},
    )
    if checkpoint_dir is not None and t % cfg.checkpoint_every == 0:
        save_checkpoint(new, Path(checkpoint_dir) / f"ckpt_{t:07d}.bin", cfg)
    return new
