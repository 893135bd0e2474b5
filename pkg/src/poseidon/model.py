"""The energy-based multi-task network.

Architecture (desk-scale defaults, widths configurable except where noted):

  spatial branch   (B, H, W, 18) grids
      -> conv 3x3 (18 -> 16) + relu
      -> channel attention: GAP -> dense(C -> C/4) -> relu -> dense(C/4 -> C)
         -> sigmoid, applied per channel
      -> spatial attention: per-pixel channel mean and max -> 7x7 conv -> sigmoid,
         applied per pixel
      -> conv 3x3 (16 -> 32) + relu -> channel attention -> spatial attention
      -> global average pool -> dense projection -> h_s (32)
  event branch     (B, 16) feature vectors -> dense+relu -> dense+relu -> h_e (32)
  fusion           tanh(dense([h_s; h_e])) -> z in R^64        (64 is fixed)
  energy head      dense+relu -> dense -> E(z) scalar per sample
  augmentation     z~ = [z; tanh(E(z))] in R^65                (65 is fixed)
  trunk + heads    dense+relu (65 -> 32), three dense(32 -> 1) + sigmoid

All weights live in one flat float64 vector addressed through a shape
table, so the optimizer, checkpoints and gradient checks all see a single
array. Physics raw scalars (theta_b, theta_p, theta_c, delta_m) are the
final four entries and train like any other parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from . import diff
from .diff import Tensor
from .errors import InvalidInputError, NumericalError

Z_DIM = 64          # fixed latent width
AUGMENTED_DIM = 65  # z plus tanh(energy)


@dataclass(frozen=True)
class ModelConfig:
    grid_channels: int = 18
    conv_channels: tuple = (16, 32)
    attention_reduction: int = 4
    spatial_kernel: int = 7
    hs_dim: int = 32
    feature_dim: int = 16
    event_hidden: int = 32
    event_dim: int = 32
    energy_hidden: int = 32
    trunk_hidden: int = 32
    physics_init: tuple = (0.0, 0.0, -5.0, 1.2)  # theta_b, theta_p, theta_c, delta_m

    def validate(self):
        for ch in self.conv_channels:
            if ch % self.attention_reduction:
                raise InvalidInputError(
                    f"conv channels {self.conv_channels} must be divisible by the "
                    f"attention reduction {self.attention_reduction}")
        if self.spatial_kernel % 2 == 0:
            raise InvalidInputError("spatial attention kernel must be odd")
        if self.hs_dim + self.event_dim != Z_DIM:
            raise InvalidInputError(
                f"h_s ({self.hs_dim}) + h_e ({self.event_dim}) must equal the fixed "
                f"latent width {Z_DIM}")


def shape_table(cfg: ModelConfig) -> dict[str, tuple[int, tuple]]:
    """Ordered block name -> (offset, shape) covering the flat vector."""
    cfg.validate()
    shapes: list[tuple[str, tuple]] = []
    c_in = cfg.grid_channels
    for i, c_out in enumerate(cfg.conv_channels, start=1):
        r = cfg.attention_reduction
        k = cfg.spatial_kernel
        shapes += [
            (f"conv{i}.w", (3, 3, c_in, c_out)), (f"conv{i}.b", (c_out,)),
            (f"ca{i}.w1", (c_out, c_out // r)), (f"ca{i}.b1", (c_out // r,)),
            (f"ca{i}.w2", (c_out // r, c_out)), (f"ca{i}.b2", (c_out,)),
            (f"sa{i}.w", (k, k, 2, 1)), (f"sa{i}.b", (1,)),
        ]
        c_in = c_out
    shapes += [
        ("proj.w", (c_in, cfg.hs_dim)), ("proj.b", (cfg.hs_dim,)),
        ("ev1.w", (cfg.feature_dim, cfg.event_hidden)), ("ev1.b", (cfg.event_hidden,)),
        ("ev2.w", (cfg.event_hidden, cfg.event_dim)), ("ev2.b", (cfg.event_dim,)),
        ("fusion.w", (Z_DIM, Z_DIM)), ("fusion.b", (Z_DIM,)),
        ("en1.w", (Z_DIM, cfg.energy_hidden)), ("en1.b", (cfg.energy_hidden,)),
        ("en2.w", (cfg.energy_hidden, 1)), ("en2.b", (1,)),
        ("trunk.w", (AUGMENTED_DIM, cfg.trunk_hidden)), ("trunk.b", (cfg.trunk_hidden,)),
        ("head_a.w", (cfg.trunk_hidden, 1)), ("head_a.b", (1,)),
        ("head_t.w", (cfg.trunk_hidden, 1)), ("head_t.b", (1,)),
        ("head_f.w", (cfg.trunk_hidden, 1)), ("head_f.b", (1,)),
        ("phys.theta", (4,)),
    ]
    table = {}
    offset = 0
    for name, shape in shapes:
        table[name] = (offset, shape)
        offset += int(np.prod(shape))
    return table


@dataclass
class ModelParams:
    vector: np.ndarray
    table: dict
    config: ModelConfig
    seed: int

    @property
    def n_params(self) -> int:
        return self.vector.size

    def block(self, name: str) -> np.ndarray:
        offset, shape = self.table[name]
        return self.vector[offset:offset + int(np.prod(shape))].reshape(shape)

    def block_of_index(self, flat_index: int) -> str:
        for name, (offset, shape) in self.table.items():
            if offset <= flat_index < offset + int(np.prod(shape)):
                return name
        return "<out of range>"

    def physics(self):
        from .physics import PhysicsParams
        t = self.block("phys.theta")
        return PhysicsParams(theta_b=float(t[0]), theta_p=float(t[1]),
                             theta_c=float(t[2]), delta_m=float(t[3]))


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Fan-in scaled uniform weights, zero biases, physics raws at their
    documented starting point (b = p = 1.0, c just above its floor)."""
    table = shape_table(cfg)
    total = sum(int(np.prod(s)) for _, s in table.values())
    vec = np.zeros(total)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    for name, (offset, shape) in table.items():
        n = int(np.prod(shape))
        if name == "phys.theta":
            vec[offset:offset + n] = cfg.physics_init
        elif name.endswith(".b"):
            continue  # biases stay zero
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = 1.0 / math.sqrt(fan_in)
            vec[offset:offset + n] = rng.uniform(-bound, bound, size=n)
    return ModelParams(vector=vec, table=table, config=cfg, seed=seed)


def slice_params(root: Tensor, params: ModelParams) -> dict[str, Tensor]:
    out = {}
    for name, (offset, shape) in params.table.items():
        n = int(np.prod(shape))
        out[name] = diff.reshape(root[offset:offset + n], shape)
    return out


def _check_finite(name: str, t: Tensor):
    if not np.all(np.isfinite(t.data)):
        raise NumericalError(f"non-finite activation in layer {name!r}")


def _dense(x: Tensor, P: dict, name: str) -> Tensor:
    return diff.add(diff.matmul(x, P[f"{name}.w"]), P[f"{name}.b"])


def encode_spatial(grid: Tensor, P: dict, cfg: ModelConfig) -> Tensor:
    """(B, H, W, 18) normalized grids -> (B, hs_dim) summary."""
    if grid.data.ndim != 4 or grid.data.shape[3] != cfg.grid_channels:
        raise InvalidInputError(
            f"expected grids (B, H, W, {cfg.grid_channels}), got {grid.data.shape}")
    h = grid
    for i in range(1, len(cfg.conv_channels) + 1):
        h = diff.relu(diff.add(diff.conv2d(h, P[f"conv{i}.w"]), P[f"conv{i}.b"]))
        # channel attention: squeeze to per-channel stats, gate in (0, 1)
        s = diff.global_avg_pool(h)
        s = diff.relu(diff.add(diff.matmul(s, P[f"ca{i}.w1"]), P[f"ca{i}.b1"]))
        gate = diff.sigmoid(diff.add(diff.matmul(s, P[f"ca{i}.w2"]), P[f"ca{i}.b2"]))
        b, c = gate.data.shape
        h = diff.mul(h, diff.reshape(gate, (b, 1, 1, c)))
        # spatial attention from per-pixel channel mean and max
        pooled = diff.concat([diff.mean(h, axis=3, keepdims=True),
                              diff.tmax(h, axis=3, keepdims=True)], axis=3)
        amap = diff.sigmoid(diff.add(diff.conv2d(pooled, P[f"sa{i}.w"]), P[f"sa{i}.b"]))
        h = diff.mul(h, amap)
    hs = _dense(diff.global_avg_pool(h), P, "proj")
    _check_finite("proj", hs)
    return hs


def encode_event(feats: Tensor, P: dict) -> Tensor:
    h = diff.relu(_dense(feats, P, "ev1"))
    return diff.relu(_dense(h, P, "ev2"))


def make_energy_fn(P: dict):
    def energy_fn(z: Tensor) -> Tensor:
        h = diff.relu(_dense(z, P, "en1"))
        e = _dense(h, P, "en2")
        return diff.reshape(e, (e.data.shape[0],))
    return energy_fn


@dataclass
class Forward:
    p_a: Tensor
    p_t: Tensor
    p_f: Tensor
    energy: Tensor
    z: Tensor
    root: Tensor
    energy_fn: object = field(repr=False, default=None)


def forward(params: ModelParams, grids: np.ndarray, feats: np.ndarray) -> Forward:
    """Run the network on a batch; returns probabilities strictly inside
    (0, 1), per-sample energies, the latent z and the root parameter
    tensor whose .grad holds the flat gradient after backward()."""
    root = Tensor(params.vector, requires_grad=True)
    P = slice_params(root, params)
    cfg = params.config

    hs = encode_spatial(Tensor(grids), P, cfg)
    he = encode_event(Tensor(feats), P)
    z = diff.tanh(_dense(diff.concat([hs, he], axis=1), P, "fusion"))
    _check_finite("fusion", z)

    energy_fn = make_energy_fn(P)
    energy = energy_fn(z)
    _check_finite("energy", energy)

    ztilde = diff.concat([z, diff.reshape(diff.tanh(energy), (energy.data.shape[0], 1))], axis=1)
    trunk = diff.relu(_dense(ztilde, P, "trunk"))

    probs = []
    for head in ("head_a", "head_t", "head_f"):
        logit = _dense(trunk, P, head)
        _check_finite(head, logit)
        probs.append(diff.sigmoid(diff.reshape(logit, (logit.data.shape[0],))))

    return Forward(p_a=probs[0], p_t=probs[1], p_f=probs[2],
                   energy=energy, z=z, root=root, energy_fn=energy_fn)


def physics_tensors(P: dict) -> dict:
    """Derived (bounded) physics tensors from the raw parameter block."""
    from . import physics as phys
    theta = P["phys.theta"]
    return {
        "b": phys.derive_b(theta[0]),
        "p": phys.derive_p(theta[1]),
        "c": phys.derive_c(theta[2]),
        "delta_m": theta[3],
    }


# -- checkpoints ----------------------------------------------------------

CHECKPOINT_HEADER = "poseidon-checkpoint v1"


def save_checkpoint(params: ModelParams, path) -> None:
    """Plain-text checkpoint: header with config, shape table, seed and the
    derived physics values, then one %.17g value per line (lossless for
    float64)."""
    phys = params.physics()
    lines = [CHECKPOINT_HEADER, f"seed = {params.seed}", "[config]"]
    for f in dc_fields(ModelConfig):
        v = getattr(params.config, f.name)
        if isinstance(v, tuple):
            v = ",".join("%.17g" % x if isinstance(x, float) else str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    lines.append("[shapes]")
    for name, (_, shape) in params.table.items():
        lines.append(f"{name} = {','.join(map(str, shape))}")
    lines.append("[physics]")
    for k, v in zip(("b", "p", "c", "delta_m"), phys.derived()):
        lines.append("%s = %.17g" % (k, v))
    lines.append("[values]")
    body = "\n".join(lines) + "\n"
    body += "\n".join("%.17g" % v for v in params.vector) + "\n"
    with open(path, "w") as handle:
        handle.write(body)


def load_checkpoint(path) -> ModelParams:
    with open(path) as handle:
        text = handle.read().splitlines()
    if not text or text[0] != CHECKPOINT_HEADER:
        raise InvalidInputError(f"not a checkpoint file: {path}")
    seed = 0
    cfg_kwargs = {}
    section = ""
    values_at = None
    for i, line in enumerate(text[1:], start=1):
        if line.startswith("["):
            section = line.strip("[]")
            if section == "values":
                values_at = i + 1
                break
            continue
        if " = " not in line:
            continue
        key, _, val = line.partition(" = ")
        if key == "seed":
            seed = int(val)
        elif section == "config":
            cfg_kwargs[key] = _parse_config_value(key, val)
    cfg = ModelConfig(**cfg_kwargs)
    vec = np.array([float(v) for v in text[values_at:] if v], dtype=np.float64)
    params = ModelParams(vector=vec, table=shape_table(cfg), config=cfg, seed=seed)
    expected = sum(int(np.prod(s)) for _, s in params.table.values())
    if vec.size != expected:
        raise InvalidInputError(
            f"checkpoint value count {vec.size} does not match the shape table ({expected})")
    return params


def _parse_config_value(key: str, val: str):
    if key == "conv_channels":
        return tuple(int(p) for p in val.split(",") if p)
    if key == "physics_init":
        return tuple(float(p) for p in val.split(",") if p)
    return int(val)
