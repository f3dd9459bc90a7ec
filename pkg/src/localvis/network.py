"""Model layout, weight initialisation, parameter counts and checkpoints."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, config_hash
from .exceptions import FormatError
from .plasticity import PlasticityGain

GRID_IMAGE = 32
HAAR_CHANNELS = 12

# Philox key words (seed, tag); epochs use (seed, epoch) so tags sit far above.
TAG_INIT = 1 << 62
TAG_PROBE = (1 << 62) + 1
TAG_GATE = (1 << 62) + 2
TAG_EVAL_GATE = (1 << 62) + 3


def philox(seed, tag, stream=0):
    """Counter-based generator keyed by two 64-bit words; ``stream`` sets the
    top counter word so sub-streams never overlap."""
    mask = 0xFFFFFFFFFFFFFFFF
    key = np.array([int(seed) & mask, int(tag) & mask], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(stream) & mask], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def split_even(total, parts):
    base, extra = divmod(int(total), int(parts))
    return tuple(base + (1 if i < extra else 0) for i in range(parts))


@dataclass(frozen=True)
class Architecture:
    """Shapes of everything the plastic network holds."""

    streams: tuple  # ("gabor", index) or ("haar", None)
    stream_channels: tuple
    grid: int
    widths: tuple  # per layer, per stream
    side: bool
    memory: bool
    feedback: bool
    side_hidden: int
    side_out: int
    n_slots: int
    memory_dim: int
    lateral_radius: int

    @classmethod
    def from_config(cls, cfg: RunConfig) -> Architecture:
        active = cfg.active_components()
        if "multi_frequency" in active:
            streams = tuple(("gabor", i) for i in range(cfg.n_frequencies)) + (("haar", None),)
        else:
            streams = (("gabor", cfg.single_stream_index),)
        chans = tuple(cfg.n_theta if kind == "gabor" else HAAR_CHANNELS for kind, _ in streams)
        widths = tuple(split_even(w, len(streams)) for w in cfg.layer_widths)
        return cls(
            streams=streams,
            stream_channels=chans,
            grid=GRID_IMAGE // cfg.pool,
            widths=widths,
            side="side_branch" in active,
            memory="memory" in active,
            feedback="feedback" in active,
            side_hidden=cfg.side_hidden,
            side_out=cfg.side_out,
            n_slots=cfg.n_slots,
            memory_dim=cfg.memory_dim,
            lateral_radius=cfg.lateral_radius,
        )

    @property
    def n_streams(self):
        return len(self.streams)

    @property
    def channels(self):
        return sum(self.stream_channels)

    @property
    def main_dim(self):
        return sum(self.widths[-1])

    @property
    def rep_dim(self):
        return self.main_dim + (self.side_out if self.side else 0)

    def layer_width(self, layer):
        return sum(self.widths[layer])

    def input_dims(self, layer):
        if layer == 0:
            return tuple(c * self.grid * self.grid for c in self.stream_channels)
        return self.widths[layer - 1]

    def input_map(self, feats):
        """Stack the pooled stream maps of a FrontendFeatures batch: (B, C, g, g)."""
        parts = []
        for kind, idx in self.streams:
            parts.append(feats.gabor[:, idx] if kind == "gabor" else feats.haar)
        return np.concatenate(parts, axis=1).astype(np.float64, copy=False)

    def stream_inputs(self, R):
        """Flatten the input map into one vector per stream."""
        b = R.shape[0]
        edges = np.cumsum(self.stream_channels)[:-1]
        return [blk.reshape(b, -1) for blk in np.split(R, edges, axis=1)]

    def shapes(self):
        """Ordered mapping of weight key -> shape."""
        out = {}
        for l in range(4):
            for s, (n, d) in enumerate(zip(self.widths[l], self.input_dims(l))):
                out[f"main.W.{l}.{s}"] = (n, d)
            n_l = self.layer_width(l)
            out[f"main.L.{l}"] = (n_l, 2 * self.lateral_radius + 1)
            out[f"main.g.{l}"] = (n_l,)
        if self.side:
            out["side.W_d1"] = (self.side_hidden, self.layer_width(1))
            out["side.W_d2"] = (self.side_out, self.side_hidden)
            out["cross.W_x"] = (self.side_out, self.main_dim)
        if self.memory:
            joint = self.main_dim + (self.side_out if self.side else 0)
            out["memory.K"] = (self.n_slots, self.memory_dim)
            out["memory.V"] = (self.n_slots, self.main_dim)
            out["memory.W_q"] = (self.memory_dim, joint)
        if self.feedback:
            if self.side:
                out["feedback.W_fb1"] = (self.side_hidden, self.main_dim)
            out["feedback.W_fbL1"] = (self.grid * self.grid, self.main_dim)
            out["feedback.W_gate"] = (self.grid * self.grid, self.main_dim)
        return out


def module_of(key):
    """'main.W.0.3' -> 'main', 'main.L.0' -> 'lateral', 'main.g.1' -> 'homeostasis'."""
    parts = key.split(".")
    if parts[0] == "main":
        return {"W": "main", "L": "lateral", "g": "homeostasis"}[parts[1]]
    return parts[0]


def parameter_counts(arch: Architecture):
    """Learnable parameters per module (homeostatic gains excluded: they are a running average)."""
    counts: dict[str, int] = {}
    for key, shape in arch.shapes().items():
        mod = module_of(key)
        if mod == "homeostasis":
            continue
        n = int(np.prod(shape))
        if mod == "lateral":
            from .hierarchy import valid_band

            n = int(valid_band(shape[0], arch.lateral_radius).sum())
        counts[mod] = counts.get(mod, 0) + n
    counts["total"] = sum(counts.values())
    return counts


@dataclass
class ModelState:
    """All plastic state of one run; serialisable and seed-reproducible."""

    arch: Architecture
    weights: dict
    rho: list
    traces: dict = field(default_factory=dict)
    epoch: int = 0
    seed: int = 0

    def copy(self):
        return ModelState(
            arch=self.arch,
            weights={k: v.copy() for k, v in self.weights.items()},
            rho=[PlasticityGain(**{**vars(g), "rho": g.rho.copy(), "trace": g.trace.copy()}) for g in self.rho],
            traces={k: v.copy() for k, v in self.traces.items()},
            epoch=self.epoch,
            seed=self.seed,
        )

    def checksum(self):
        """sha256 over every representational weight, in key order."""
        h = hashlib.sha256()
        for key in sorted(self.weights):
            h.update(key.encode())
            h.update(np.ascontiguousarray(self.weights[key], dtype="<f8").tobytes())
        return h.hexdigest()


def init_state(cfg: RunConfig, seed: int, arch: Architecture | None = None) -> ModelState:
    """Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero lateral, unit gains."""
    arch = arch or Architecture.from_config(cfg)
    rng = philox(seed, TAG_INIT)
    weights = {}
    for key, shape in arch.shapes().items():
        mod = module_of(key)
        if mod == "lateral":
            weights[key] = np.zeros(shape)
        elif mod == "homeostasis":
            weights[key] = np.ones(shape)
        else:
            bound = np.sqrt(6.0 / shape[1])
            weights[key] = rng.uniform(-bound, bound, size=shape)
    rho = [
        PlasticityGain.ones(
            arch.layer_width(l),
            gamma=cfg.gamma_rho,
            decay=cfg.rho_trace_decay,
            rho_min=cfg.rho_min,
            rho_max=cfg.rho_max,
        )
        for l in range(4)
    ]
    traces = {}
    if cfg.use_hrr:
        for l in range(4):
            for s, d in enumerate(arch.input_dims(l)):
                traces[f"hrr.{l}.{s}"] = np.zeros(d)
    return ModelState(arch=arch, weights=weights, rho=rho, traces=traces, epoch=0, seed=seed)


# ---------------------------------------------------------------------------
# checkpoints: magic, version, JSON manifest, raw little-endian float64 arrays

MAGIC = b"LVCKPT\x00\x01"
CHECKPOINT_VERSION = 1


def _arch_to_json(arch):
    d = dict(vars(arch))
    d["streams"] = [list(s) for s in arch.streams]
    d["stream_channels"] = list(arch.stream_channels)
    d["widths"] = [list(w) for w in arch.widths]
    return d


def _arch_from_json(d):
    d = dict(d)
    d["streams"] = tuple(tuple(s) for s in d["streams"])
    d["stream_channels"] = tuple(d["stream_channels"])
    d["widths"] = tuple(tuple(w) for w in d["widths"])
    return Architecture(**d)


def save_checkpoint(path, state: ModelState, cfg: RunConfig, probe=None):
    arrays = {f"w/{k}": v for k, v in sorted(state.weights.items())}
    for l, g in enumerate(state.rho):
        arrays[f"rho/{l}/rho"] = g.rho
        arrays[f"rho/{l}/trace"] = g.trace
    arrays.update({f"trace/{k}": v for k, v in sorted(state.traces.items())})
    if probe is not None:
        arrays.update({f"probe/{k}": v for k, v in probe.arrays().items()})
    manifest = {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash(cfg),
        "config": cfg.to_dict(),
        "arch": _arch_to_json(state.arch),
        "epoch": state.epoch,
        "seed": state.seed,
        "rho": [
            {k: getattr(g, k) for k in ("gamma", "theta_target", "decay", "rho_min", "rho_max")}
            for g in state.rho
        ],
        "probe_step": None if probe is None else int(probe.t),
        "arrays": [[k, list(np.shape(v))] for k, v in arrays.items()],
    }
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(text)))
        fh.write(text)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns ``(state, manifest, probe_or_None)``."""
    from .probe import ProbeParams

    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise FormatError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    head = struct.calcsize("<IQ")
    if len(blob) < off + head:
        raise FormatError(f"{path}: truncated header")
    version, n = struct.unpack_from("<IQ", blob, off)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    off += head
    if len(blob) < off + n:
        raise FormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(blob[off : off + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable manifest ({exc})") from exc
    off += n
    arrays = {}
    for key, shape in manifest["arrays"]:
        size = int(np.prod(shape)) * 8
        if off + size > len(blob):
            raise FormatError(f"{path}: truncated at array {key}")
        arrays[key] = np.frombuffer(blob, dtype="<f8", count=size // 8, offset=off).reshape(shape).copy()
        off += size
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes")
    arch = _arch_from_json(manifest["arch"])
    weights = {k[2:]: v for k, v in arrays.items() if k.startswith("w/")}
    rho = []
    for l, meta in enumerate(manifest["rho"]):
        rho.append(PlasticityGain(rho=arrays[f"rho/{l}/rho"], trace=arrays[f"rho/{l}/trace"], **meta))
    traces = {k[6:]: v for k, v in arrays.items() if k.startswith("trace/")}
    state = ModelState(arch, weights, rho, traces, manifest["epoch"], manifest["seed"])
    probe = None
    if manifest["probe_step"] is not None:
        probe = ProbeParams.from_arrays({k[6:]: v for k, v in arrays.items() if k.startswith("probe/")}, manifest["probe_step"])
    return state, manifest, probe
