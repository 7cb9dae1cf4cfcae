"""Deterministic synthetic tracking sequences.

A sequence shows one textured target moving over a smooth static background
with optional distractors (same texture statistics as the target), transient
occluders and per-frame sensor noise. Ground truth is the target's float box.

Randomness comes from numpy's Philox4x64-10 counter-based generator keyed
directly with ``(seed, stream)``; doubles are the top 53 bits of each 64-bit
output and normal variates are produced by Box-Muller from pairs of doubles,
so a sequence is reproducible from the published algorithm alone.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import BBox

FRAMES_MAGIC = b"SVTF"
FRAMES_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")

_STREAM_DYNAMICS = 1
_STREAM_TEXTURE = 2
_STREAM_NOISE = 3


class CorruptFileError(IOError):
    """Raised when a stored sequence or dataset fails validation."""


class Rng:
    """Portable uniform / normal source on top of Philox4x64-10."""

    def __init__(self, seed: int, stream: int = 0) -> None:
        key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        u = self._gen.random(size)
        return low + (high - low) * u

    def normal(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        u1 = self._gen.random(n)
        u2 = self._gen.random(n)
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in ``[low, high]`` inclusive."""
        return low + min(int(self._gen.random() * (high - low + 1)), high - low)


@dataclass(frozen=True)
class WorldConfig:
    width: int = 160
    height: int = 160
    channels: int = 1
    min_length: int = 20
    max_length: int = 80
    shapes: tuple[str, ...] = ("rectangle", "ellipse")
    texture_seed: int = 0
    min_size: float = 18.0
    max_size: float = 36.0
    # fraction of box size per frame
    max_speed: float = 0.15
    accel_std: float = 0.04
    scale_std: float = 0.02
    min_scale: float = 0.7
    max_scale: float = 1.4
    min_distractors: int = 0
    max_distractors: int = 3
    occluder_prob: float = 0.02
    noise_amplitude: float = 6.0
    texture_grid: int = 5

    def __post_init__(self) -> None:
        nonneg = ("min_size", "max_size", "max_speed", "accel_std", "scale_std",
                  "occluder_prob", "noise_amplitude")
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.max_speed < 1:
            raise ValueError("max_speed must be < 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if not 2 <= self.min_length <= self.max_length:
            raise ValueError("length range must satisfy 2 <= min <= max")
        if self.min_size * self.min_scale < 4 or self.min_size > self.max_size:
            raise ValueError("size range must keep boxes >= 4 px and satisfy min <= max")
        if self.max_size * self.max_scale > min(self.width, self.height):
            raise ValueError("targets do not fit in the frame")
        if not 0 < self.min_scale <= 1 <= self.max_scale:
            raise ValueError("scale range must bracket 1")
        if not set(self.shapes) <= {"rectangle", "ellipse"} or not self.shapes:
            raise ValueError("shapes must be a non-empty subset of {rectangle, ellipse}")
        if not 0 <= self.min_distractors <= self.max_distractors:
            raise ValueError("distractor range invalid")

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, (tuple, list)):
                value = "|".join(value)
            lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str) -> "WorldConfig":
        """Parse ``key=value`` lines as written by :meth:`to_text`; unknown keys are errors."""
        defaults = cls()
        kwargs: dict[str, object] = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            if not sep or not hasattr(defaults, key):
                raise ValueError(f"bad world config line {raw!r}")
            default = getattr(defaults, key)
            if isinstance(default, tuple):
                kwargs[key] = tuple(v for v in value.split("|") if v)
            elif isinstance(default, int):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)  # type: ignore[arg-type]


@dataclass
class SyntheticSequence:
    id: str
    frames: np.ndarray  # (T+1, H, W, C) uint8
    groundtruth: list[BBox]
    seed: int = 0
    config_digest: str = ""

    def __post_init__(self) -> None:
        if self.frames.ndim != 4 or self.frames.dtype != np.uint8:
            raise ValueError("frames must be a (N, H, W, C) uint8 array")
        if len(self.frames) != len(self.groundtruth):
            raise ValueError(
                f"{len(self.frames)} frames but {len(self.groundtruth)} ground-truth boxes")

    def __len__(self) -> int:
        return len(self.frames)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SyntheticSequence):
            return NotImplemented
        return (self.id == other.id and self.seed == other.seed
                and self.config_digest == other.config_digest
                and self.groundtruth == other.groundtruth
                and self.frames.shape == other.frames.shape
                and np.array_equal(self.frames, other.frames))

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def channels(self) -> int:
        return self.frames.shape[3]

    def digest(self) -> str:
        h = hashlib.sha256(self.frames.tobytes())
        h.update(_format_groundtruth(self.groundtruth).encode())
        return h.hexdigest()


# -- rendering ---------------------------------------------------------------

def _upsample(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear upsample of a (G, G, C) grid to (out_h, out_w, C), corner aligned."""
    g = grid.shape[0]
    ys = np.linspace(0.0, g - 1.0, out_h)
    xs = np.linspace(0.0, g - 1.0, out_w)
    return _sample_grid(grid, ys[:, None], xs[None, :])


def _sample_grid(grid: np.ndarray, gy: np.ndarray, gx: np.ndarray) -> np.ndarray:
    g = grid.shape[0]
    gy = np.clip(gy, 0.0, g - 1.0)
    gx = np.clip(gx, 0.0, g - 1.0)
    y0 = np.minimum(np.floor(gy).astype(int), g - 2)
    x0 = np.minimum(np.floor(gx).astype(int), g - 2)
    fy = (gy - y0)[..., None]
    fx = (gx - x0)[..., None]
    top = grid[y0, x0] * (1 - fx) + grid[y0, x0 + 1] * fx
    bot = grid[y0 + 1, x0] * (1 - fx) + grid[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


@dataclass
class _Sprite:
    x: float
    y: float
    w0: float
    h0: float
    scale: float
    vx: float
    vy: float
    shape: str
    texture: np.ndarray = field(repr=False)

    @property
    def w(self) -> float:
        return self.w0 * self.scale

    @property
    def h(self) -> float:
        return self.h0 * self.scale

    def box(self) -> BBox:
        return BBox(self.x, self.y, self.w, self.h)


def _paint(canvas: np.ndarray, sp: _Sprite) -> None:
    H, W, _ = canvas.shape
    x0 = max(int(math.floor(sp.x)), 0)
    y0 = max(int(math.floor(sp.y)), 0)
    x1 = min(int(math.ceil(sp.x + sp.w)), W)
    y1 = min(int(math.ceil(sp.y + sp.h)), H)
    if x1 <= x0 or y1 <= y0:
        return
    u = (np.arange(x0, x1) + 0.5 - sp.x) / sp.w
    v = (np.arange(y0, y1) + 0.5 - sp.y) / sp.h
    uu, vv = np.meshgrid(u, v)
    if sp.shape == "ellipse":
        mask = (uu - 0.5) ** 2 + (vv - 0.5) ** 2 <= 0.25
    else:
        mask = (uu >= 0) & (uu < 1) & (vv >= 0) & (vv < 1)
    g = sp.texture.shape[0] - 1
    values = _sample_grid(sp.texture, vv * g, uu * g)
    region = canvas[y0:y1, x0:x1]
    region[mask] = values[mask]


def _new_sprite(rng: Rng, tex_rng: Rng, cfg: WorldConfig) -> _Sprite:
    w0 = float(rng.uniform(cfg.min_size, cfg.max_size))
    h0 = float(rng.uniform(cfg.min_size, cfg.max_size))
    x = float(rng.uniform(0.0, cfg.width - w0))
    y = float(rng.uniform(0.0, cfg.height - h0))
    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    speed = float(rng.uniform(0.0, cfg.max_speed))
    shape = cfg.shapes[rng.integers(0, len(cfg.shapes) - 1)]
    g = cfg.texture_grid
    # High-contrast texture: alternate dark / bright cells with jitter.
    base = tex_rng.uniform(0.0, 1.0, size=(g, g, cfg.channels))
    checker = ((np.arange(g)[:, None] + np.arange(g)[None, :]) % 2).astype(float)[..., None]
    texture = 255.0 * np.clip(0.15 + 0.7 * checker + 0.3 * (base - 0.5), 0.0, 1.0)
    return _Sprite(x, y, w0, h0, 1.0, speed * math.cos(angle), speed * math.sin(angle),
                   shape, texture)


def _advance(sp: _Sprite, rng: Rng, cfg: WorldConfig) -> None:
    vx = sp.vx + cfg.accel_std * rng.normal()
    vy = sp.vy + cfg.accel_std * rng.normal()
    speed = math.hypot(vx, vy)
    if speed > cfg.max_speed:
        f = cfg.max_speed / speed if speed > 0 else 0.0
        vx, vy = vx * f, vy * f
    sp.vx, sp.vy = vx, vy

    old_w, old_h = sp.w, sp.h
    s = sp.scale * math.exp(cfg.scale_std * rng.normal())
    sp.scale = min(max(s, cfg.min_scale), cfg.max_scale)
    # rescale about the center, then translate
    x = sp.x + (old_w - sp.w) / 2.0 + sp.vx * sp.w
    y = sp.y + (old_h - sp.h) / 2.0 + sp.vy * sp.h
    x, sp.vx = _reflect(x, sp.vx, cfg.width - sp.w)
    y, sp.vy = _reflect(y, sp.vy, cfg.height - sp.h)
    sp.x, sp.y = x, y


def _reflect(pos: float, vel: float, upper: float) -> tuple[float, float]:
    if pos < 0.0:
        return min(-pos, upper), -vel
    if pos > upper:
        return max(2.0 * upper - pos, 0.0), -vel
    return pos, vel


def generate_sequence(seed: int, cfg: WorldConfig | None = None, seq_id: str | None = None
                      ) -> SyntheticSequence:
    """Generate one sequence; a pure function of ``(seed, cfg)``."""
    cfg = cfg or WorldConfig()
    dyn = Rng(seed, _STREAM_DYNAMICS)
    tex = Rng(seed ^ (cfg.texture_seed * 0x9E3779B97F4A7C15), _STREAM_TEXTURE)
    noise = Rng(seed, _STREAM_NOISE)
    H, W, C = cfg.height, cfg.width, cfg.channels

    length = dyn.integers(cfg.min_length, cfg.max_length)
    g = cfg.texture_grid * 2
    bg_grid = 60.0 + 130.0 * tex.uniform(0.0, 1.0, size=(g, g, C))
    background = _upsample(bg_grid, H, W)

    target = _new_sprite(dyn, tex, cfg)
    n_distract = dyn.integers(cfg.min_distractors, cfg.max_distractors)
    distractors = [_new_sprite(dyn, tex, cfg) for _ in range(n_distract)]

    frames = np.empty((length, H, W, C), dtype=np.uint8)
    boxes: list[BBox] = []
    occluder: tuple[int, int, int, int, float] | None = None
    occ_left = 0
    for t in range(length):
        if t > 0:
            _advance(target, dyn, cfg)
            for d in distractors:
                _advance(d, dyn, cfg)
        canvas = background.copy()
        for d in distractors:
            _paint(canvas, d)
        _paint(canvas, target)

        if occ_left == 0 and t > 0 and dyn.uniform() < cfg.occluder_prob:
            ow = target.w * float(dyn.uniform(0.4, 0.9))
            oh = target.h * float(dyn.uniform(0.4, 0.9))
            ox = target.x + target.w * float(dyn.uniform(-0.2, 0.8)) - ow / 2.0
            oy = target.y + target.h * float(dyn.uniform(-0.2, 0.8)) - oh / 2.0
            occluder = (int(round(ox)), int(round(oy)), max(int(round(ow)), 1),
                        max(int(round(oh)), 1), float(dyn.uniform(40.0, 215.0)))
            occ_left = dyn.integers(2, 6)
        if occ_left > 0 and occluder is not None:
            ox, oy, ow, oh, level = occluder
            canvas[max(oy, 0):max(oy + oh, 0), max(ox, 0):max(ox + ow, 0)] = level
            occ_left -= 1

        if cfg.noise_amplitude > 0:
            canvas = canvas + cfg.noise_amplitude * (noise.uniform(0.0, 1.0, size=canvas.shape) - 0.5) * 2.0
        frames[t] = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
        boxes.append(target.box())

    return SyntheticSequence(
        id=seq_id if seq_id is not None else f"seq{seed}",
        frames=frames,
        groundtruth=boxes,
        seed=seed,
        config_digest=cfg.digest(),
    )


# -- storage -----------------------------------------------------------------

def _format_groundtruth(boxes: list[BBox]) -> str:
    return "".join(f"{b.x!r},{b.y!r},{b.w!r},{b.h!r}\n" for b in boxes)


def save_sequence(seq: SyntheticSequence, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n, h, w, c = seq.frames.shape
    with open(d / "frames.bin", "wb") as fh:
        fh.write(_HEADER.pack(FRAMES_MAGIC, FRAMES_VERSION, n, h, w, c))
        fh.write(np.ascontiguousarray(seq.frames).tobytes())
    (d / "groundtruth.txt").write_text(_format_groundtruth(seq.groundtruth))
    (d / "meta.txt").write_text(
        f"id={seq.id}\nseed={seq.seed}\nconfig_digest={seq.config_digest}\n")
    return d


def read_frames(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptFileError(f"{path}: truncated header")
    magic, version, n, h, w, c = _HEADER.unpack_from(raw)
    if magic != FRAMES_MAGIC:
        raise CorruptFileError(f"{path}: bad magic {magic!r}")
    if version != FRAMES_VERSION:
        raise CorruptFileError(f"{path}: unsupported version {version}")
    expected = n * h * w * c
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise CorruptFileError(f"{path}: expected {expected} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(n, h, w, c).copy()


def read_groundtruth(path: str | Path) -> list[BBox]:
    boxes = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise CorruptFileError(f"{path}:{lineno}: expected 4 fields")
        boxes.append(BBox.from_seq(float(p) for p in parts))
    return boxes


def load_sequence(directory: str | Path) -> SyntheticSequence:
    d = Path(directory)
    for name in ("frames.bin", "groundtruth.txt"):
        if not (d / name).is_file():
            raise FileNotFoundError(f"missing {name} in {d}")
    frames = read_frames(d / "frames.bin")
    boxes = read_groundtruth(d / "groundtruth.txt")
    if len(boxes) != len(frames):
        raise CorruptFileError(
            f"{d}: {len(frames)} frames but {len(boxes)} ground-truth lines")
    meta = {"id": d.name, "seed": "0", "config_digest": ""}
    if (d / "meta.txt").is_file():
        for line in (d / "meta.txt").read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                meta[k] = v
    return SyntheticSequence(meta["id"], frames, boxes, int(meta["seed"]), meta["config_digest"])


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    length: int
    width: int
    height: int
    channels: int


@dataclass(frozen=True)
class Manifest:
    seed: int
    config_digest: str
    entries: tuple[ManifestEntry, ...]

    def to_text(self) -> str:
        lines = [f"# seed={self.seed} config_digest={self.config_digest}"]
        lines += [f"{e.id},{e.length},{e.width},{e.height},{e.channels}" for e in self.entries]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def generate_dataset(count: int, seed: int, cfg: WorldConfig | None, directory: str | Path
                     ) -> Manifest:
    """Write ``count`` sequences (seeds ``seed + i``) and a manifest to ``directory``."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    cfg = cfg or WorldConfig()
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        seq = generate_sequence(seed + i, cfg, seq_id=f"seq_{i:04d}")
        save_sequence(seq, d / seq.id)
        entries.append(ManifestEntry(seq.id, len(seq), seq.width, seq.height, seq.channels))
    manifest = Manifest(seed, cfg.digest(), tuple(entries))
    (d / "manifest.txt").write_text(manifest.to_text())
    (d / "world.cfg").write_text(cfg.to_text())
    return manifest


def read_manifest(directory: str | Path) -> Manifest:
    path = Path(directory) / "manifest.txt"
    if not path.is_file():
        raise FileNotFoundError(f"no manifest.txt in {directory}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise CorruptFileError(f"{path}: missing header line")
    header = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    entries = []
    for line in lines[1:]:
        if not line.strip():
            continue
        sid, length, w, h, c = line.split(",")
        entries.append(ManifestEntry(sid, int(length), int(w), int(h), int(c)))
    return Manifest(int(header["seed"]), header["config_digest"], tuple(entries))


def load_dataset(directory: str | Path) -> list[SyntheticSequence]:
    d = Path(directory)
    manifest = read_manifest(d)
    seqs = []
    for e in manifest.entries:
        seq = load_sequence(d / e.id)
        if len(seq) != e.length:
            raise CorruptFileError(f"{e.id}: manifest length {e.length} != {len(seq)}")
        seqs.append(seq)
    return seqs
