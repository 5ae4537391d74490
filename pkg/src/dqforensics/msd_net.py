"""Multi-scale fusion plus threshold routing to a special network.

Every network emits a probability pair (tampered, authentic). The three scale
networks are fused with fixed simplex weights; when the fused pair is too
close to call (gap below the threshold) the special network, trained on
qf1 > qf2 material, decides from the 64x64 histogram instead.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Manifest, load_manifest
from .features import HistogramIntegral
from .jpeg_codec import CoeffImage
from .nn_core import (Network, TrainConfig, build_network, model_from_bytes,
                      model_to_bytes, train_network)

log = logging.getLogger(__name__)

TAMPERED_CLASS = 0  # index of the "singly compressed" probability
DEFAULT_WEIGHTS = (0.8, 0.1, 0.1)
DEFAULT_THRESHOLD = 0.2
SCALES = (64, 128, 256)
ROUTE_FUSED, ROUTE_SPECIAL = "fused", "special"

COMPOSITE_MAGIC = b"MSDM"
COMPOSITE_VERSION = 1
_COMPOSITE_HEADER = struct.Struct("<4sIffff")


class ModelStateError(RuntimeError):
    pass


def label_to_class(labels) -> np.ndarray:
    """Dataset labels (1 tampered, 0 authentic) to network class indices."""
    return np.where(np.asarray(labels) == 1, TAMPERED_CLASS, 1 - TAMPERED_CLASS).astype(np.intp)


def check_weights(weights) -> tuple[float, float, float]:
    w = tuple(float(v) for v in weights)
    if len(w) != 3 or any(v < 0 or v > 1 for v in w) or abs(sum(w) - 1) > 1e-6:
        raise ValueError(f"fusion weights must be three values in [0, 1] summing to 1, got {weights}")
    return w


def fuse(s1, s2, s3, weights=DEFAULT_WEIGHTS) -> np.ndarray:
    """Weighted sum of three probability pairs (or (n, 2) stacks of them)."""
    w1, w2, w3 = check_weights(weights)
    s1, s2, s3 = (np.asarray(s, dtype=np.float64) for s in (s1, s2, s3))
    for s in (s1, s2, s3):
        if np.any(np.abs(s.sum(axis=-1) - 1) > 1e-6):
            raise ValueError("each input must be a probability pair summing to 1")
    return w1 * s1 + w2 * s2 + w3 * s3


@dataclass
class MsdModel:
    net64: Network | None = None
    net128: Network | None = None
    net256: Network | None = None
    special: Network | None = None
    weights: tuple = DEFAULT_WEIGHTS
    threshold: float = DEFAULT_THRESHOLD
    histories: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.weights = check_weights(self.weights)
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must lie in (0, 1]")

    @property
    def networks(self):
        return (self.net64, self.net128, self.net256, self.special)

    def require_loaded(self):
        if any(n is None for n in self.networks):
            raise ModelStateError("model is not loaded: all four networks are required")


@dataclass(frozen=True)
class BlockDecision:
    tampered: bool
    probs: np.ndarray  # (tampered, authentic) of the deciding branch
    route: str
    fused: np.ndarray


def _route(model: MsdModel, fused, special_probs_fn, use_special=True):
    gap = np.abs(fused[:, 0] - fused[:, 1])
    special = (gap < model.threshold) if use_special else np.zeros(len(fused), bool)
    probs = fused.copy()
    if special.any():
        probs[special] = special_probs_fn(special)
    tampered = probs[:, TAMPERED_CLASS] > probs[:, 1 - TAMPERED_CLASS]
    return tampered, probs, special


def classify_blocks(model: MsdModel, h64, h128, h256, use_special: bool = True):
    """Vectorized decision for n windows.

    Returns (tampered bool[n], probs (n, 2), special bool[n], fused (n, 2)).
    ``use_special=False`` disables the routing and always trusts the fusion.
    """
    model.require_loaded()
    h64 = np.atleast_2d(h64)
    fused = fuse(model.net64.predict_proba(h64), model.net128.predict_proba(np.atleast_2d(h128)),
                 model.net256.predict_proba(np.atleast_2d(h256)), model.weights)
    tampered, probs, special = _route(
        model, fused, lambda sel: model.special.predict_proba(h64[sel]), use_special)
    return tampered, probs, special, fused


def classify_block(model: MsdModel, h64, h128, h256) -> BlockDecision:
    tampered, probs, special, fused = classify_blocks(model, h64, h128, h256)
    return BlockDecision(bool(tampered[0]), probs[0], ROUTE_SPECIAL if special[0] else ROUTE_FUSED, fused[0])


def decide(fused_pair, threshold, special_pair=None):
    """Scalar routing rule on precomputed pairs. Returns (tampered, route)."""
    f = np.asarray(fused_pair, dtype=np.float64)
    if abs(f[0] - f[1]) < threshold:
        if special_pair is None:
            raise ValueError("special network output required on the special route")
        c = np.asarray(special_pair, dtype=np.float64)
        return bool(c[0] > c[1]), ROUTE_SPECIAL
    return bool(f[0] > f[1]), ROUTE_FUSED


# ---------------------------------------------------------------- windows


def context_origin(start: int, extent: int, size: int) -> tuple[int, int]:
    """Origin and size of a co-centered ``size`` span around a 64-span at ``start``.

    Shifted inward to stay in [0, extent); shrunk to ``extent`` if it cannot fit.
    """
    if size >= extent:
        return 0, extent
    origin = start + 32 - size // 2
    return min(max(origin, 0), extent - size), size


def scale_regions(c: CoeffImage, x: int, y: int):
    """The 64/128/256 regions used for the 64x64 window at (x, y)."""
    by, bx = c.blocks_shape
    if 8 * bx < 64 or 8 * by < 64:
        raise ValueError("image smaller than 64x64")
    if x % 8 or y % 8 or x < 0 or y < 0 or x + 64 > 8 * bx or y + 64 > 8 * by:
        raise ValueError(f"window ({x}, {y}) is not a block-aligned in-bounds 64x64 window")
    regions = []
    for s in SCALES:
        ox, w = context_origin(x, 8 * bx, s)
        oy, h = context_origin(y, 8 * by, s)
        regions.append((ox, oy, w, h))
    return regions


def classify_window_features(c: CoeffImage, window, integral: HistogramIntegral | None = None):
    """(h64, h128, h256) for one 64x64 window given as (x, y) or (x, y, 64, 64)."""
    x, y = window[0], window[1]
    if len(window) == 4 and tuple(window[2:]) != (64, 64):
        raise ValueError("window must be 64x64")
    integral = integral or HistogramIntegral(c)
    return tuple(integral.region(r) for r in scale_regions(c, x, y))


def window_features(integral: HistogramIntegral, origins):
    """Batched (H64, H128, H256) for many 64x64 window origins."""
    c = integral.coeff_image
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    by, bx = c.blocks_shape
    if 8 * bx < 64 or 8 * by < 64:
        raise ValueError("image smaller than 64x64")
    out = []
    for s in SCALES:
        if s >= 8 * bx:
            ox, w = np.zeros(len(origins), np.int64), 8 * bx
        else:
            ox, w = np.clip(origins[:, 0] + 32 - s // 2, 0, 8 * bx - s), s
        if s >= 8 * by:
            oy, h = np.zeros(len(origins), np.int64), 8 * by
        else:
            oy, h = np.clip(origins[:, 1] + 32 - s // 2, 0, 8 * by - s), s
        out.append(integral.regions(np.stack([ox, oy], axis=1), (w, h)))
    return tuple(out)


# ---------------------------------------------------------------- training


def _as_manifest(m) -> Manifest:
    return m if isinstance(m, Manifest) else load_manifest(m)


def train_msd(manifests: dict, cfg: TrainConfig | None = None, weights=DEFAULT_WEIGHTS,
              threshold: float = DEFAULT_THRESHOLD, net_kwargs: dict | None = None,
              log_fn=None) -> MsdModel:
    """Train the three scale networks and the special network independently.

    ``manifests`` maps 64, 128, 256 and "special" to manifest paths or
    :class:`Manifest` objects. ``log_fn`` receives one dict per network epoch.
    """
    cfg = cfg or TrainConfig()
    net_kwargs = net_kwargs or {}
    keys = (64, 128, 256, "special")
    missing = [k for k in keys if k not in manifests]
    if missing:
        raise ValueError(f"missing manifests for {missing}")
    seeds = np.random.SeedSequence(cfg.seed).spawn(2 * len(keys))
    nets, histories = {}, {}
    for k, key in enumerate(keys):
        m = _as_manifest(manifests[key])
        x, y, _ = m.split("train")
        xv, yv, _ = m.split("val")
        if len(x) == 0:
            raise ValueError(f"manifest {m.path} has no training samples")
        net = build_network(rng=np.random.default_rng(seeds[2 * k]), **net_kwargs)

        def emit(row, name=str(key)):
            row = {"network": name, **row}
            log.info("net %s epoch %d loss %.4f acc %.4f val_acc %s", name, row["epoch"],
                     row["train_loss"], row["train_acc"], row.get("val_acc"))
            if log_fn is not None:
                log_fn(row)

        histories[str(key)] = train_network(
            net, x, label_to_class(y), cfg, xv, label_to_class(yv), log=emit,
            rng=np.random.default_rng(seeds[2 * k + 1]))
        nets[key] = net
    return MsdModel(nets[64], nets[128], nets[256], nets["special"], weights, threshold, histories)


# ---------------------------------------------------------------- persistence


def msd_to_bytes(model: MsdModel) -> bytes:
    model.require_loaded()
    parts = [_COMPOSITE_HEADER.pack(COMPOSITE_MAGIC, COMPOSITE_VERSION, *model.weights, model.threshold)]
    for net in model.networks:
        payload = model_to_bytes(net)
        parts.append(struct.pack("<I", len(payload)))
        parts.append(payload)
    return b"".join(parts)


def msd_from_bytes(data: bytes) -> MsdModel:
    from .nn_core import ModelFormatError
    if len(data) < _COMPOSITE_HEADER.size:
        raise ModelFormatError("truncated composite header")
    magic, version, w1, w2, w3, t = _COMPOSITE_HEADER.unpack_from(data)
    if magic != COMPOSITE_MAGIC:
        raise ModelFormatError(f"bad composite magic {magic!r}")
    if version != COMPOSITE_VERSION:
        raise ModelFormatError(f"unsupported version {version}")
    pos = _COMPOSITE_HEADER.size
    nets = []
    for _ in range(4):
        if pos + 4 > len(data):
            raise ModelFormatError("truncated composite model")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + n > len(data):
            raise ModelFormatError("truncated network payload")
        nets.append(model_from_bytes(data[pos:pos + n]))
        pos += n
    if pos != len(data):
        raise ModelFormatError("trailing bytes after composite model")
    return MsdModel(*nets, weights=(w1, w2, w3), threshold=t)


def save_msd(model: MsdModel, path) -> None:
    Path(path).write_bytes(msd_to_bytes(model))


def load_msd(path) -> MsdModel:
    return msd_from_bytes(Path(path).read_bytes())


def evaluate_blocks(model: MsdModel, manifest, base_dir=None, split: str = "val",
                    use_special: bool = True) -> dict:
    """Block-level accuracy of the full model on one split of a 64x64 manifest.

    Each block is classified from its own JPEG with co-centered context
    windows, exactly as at detection time.
    """
    from .jpeg_codec import parse_jpeg

    m = _as_manifest(manifest)
    base = Path(base_dir) if base_dir is not None else m.path.parent
    by_path: dict = {}
    for r in m.records:
        if r["split"] == split:
            by_path.setdefault(r["path"], []).append(r)
    if not by_path:
        raise ValueError(f"no '{split}' records in {m.path}")
    truth, pred, routed = [], [], []
    for path, recs in sorted(by_path.items()):
        integral = HistogramIntegral(parse_jpeg((base / path).read_bytes()))
        feats = window_features(integral, [(r["x"], r["y"]) for r in recs])
        tampered, _, special, _ = classify_blocks(model, *feats, use_special=use_special)
        truth += [r["label"] == 1 for r in recs]
        pred += list(tampered)
        routed += list(special)
    truth, pred, routed = np.array(truth), np.array(pred), np.array(routed)
    return {"accuracy": float((truth == pred).mean()), "special_fraction": float(routed.mean()),
            "n": int(len(truth))}
