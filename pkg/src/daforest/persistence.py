"""Versioned binary serialization of fitted cascade models.

The archive layout (documented byte-by-byte in docs/format.md) stores node
arrays with feature indices as unsigned 32-bit integers (0xFFFFFFFF marks a
leaf) and thresholds, weight masses, and class distributions as little-endian
IEEE-754 float64, so a loaded model's decision matrix is bit-identical to the
original's. Writes go to a temporary file in the target directory followed by
an atomic rename; a trailing CRC-32 over the payload rejects corrupt or
truncated files. No compression; auditability wins over size in version 1.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib

import numpy as np

from .cascade import CONNECTIVITY_MODES, SCORE_MODES, CascadeLayer, DaForestClassifier, SlotModel
from .forest import Forest, ForestKind
from .tree import DecisionTree

MAGIC = b"DAF1"
FORMAT_VERSION = 1

_KIND_CODE = {ForestKind.COMPLETELY_RANDOM: 0, ForestKind.RANDOM: 1}
_KIND_OF = {v: k for k, v in _KIND_CODE.items()}


class ArchiveError(Exception):
    """Raised when an archive cannot be written or parsed."""


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u8(self, v):
        self.parts.append(struct.pack("<B", v))

    def u32(self, v):
        self.parts.append(struct.pack("<I", v))

    def u64(self, v):
        self.parts.append(struct.pack("<Q", v))

    def f64(self, v):
        self.parts.append(struct.pack("<d", v))

    def raw(self, b: bytes):
        self.parts.append(b)

    def text(self, s: str):
        b = s.encode("utf-8")
        self.u32(len(b))
        self.raw(b)

    def array(self, arr: np.ndarray, dtype: str):
        self.raw(np.ascontiguousarray(arr, dtype=dtype).tobytes())

    def payload(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ArchiveError("archive truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def text(self) -> str:
        n = self.u32()
        return self.take(n).decode("utf-8")

    def array(self, dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(itemsize * count), dtype=dtype).copy()

    def done(self) -> bool:
        return self.pos == len(self.buf)


def _write_tree(w: _Writer, tree: DecisionTree):
    w.u64(tree.seed)
    w.u32(tree.n_nodes)
    w.u32(tree.mixed_dist.shape[0])
    w.array(tree.feature, "<i4")       # documented as u32; -1 leaf == 0xFFFFFFFF
    w.array(tree.threshold, "<f8")
    w.array(tree.left, "<i4")
    w.array(tree.right, "<i4")
    w.array(tree.leaf_class, "<i4")
    w.array(tree.mixed_index, "<i4")
    w.array(tree.weight_mass, "<f8")
    w.array(tree.mixed_dist, "<f8")


def _read_tree(r: _Reader, n_classes: int, n_features: int) -> DecisionTree:
    seed = r.u64()
    n_nodes = r.u32()
    n_mixed = r.u32()
    if n_nodes == 0:
        raise ArchiveError("tree with zero nodes")
    feature = r.array("<i4", n_nodes)
    threshold = r.array("<f8", n_nodes)
    left = r.array("<i4", n_nodes)
    right = r.array("<i4", n_nodes)
    leaf_class = r.array("<i4", n_nodes)
    mixed_index = r.array("<i4", n_nodes)
    weight_mass = r.array("<f8", n_nodes)
    mixed_dist = r.array("<f8", n_mixed * n_classes).reshape(n_mixed, n_classes)
    internal = feature >= 0
    if (feature[internal] >= n_features).any():
        raise ArchiveError("tree references an out-of-range feature")
    node_ids = np.arange(n_nodes, dtype=np.int32)
    for child in (left, right):
        # children always carry higher ids than their parent, which also
        # rules out cycles, so routing is guaranteed to terminate
        bad = internal & ((child <= node_ids) | (child >= n_nodes))
        if bad.any():
            raise ArchiveError("tree child pointer out of range")
    leaves = ~internal
    if (leaf_class[leaves] >= n_classes).any():
        raise ArchiveError("leaf class id out of range")
    mixed = leaves & (leaf_class < 0)
    if mixed.any() and ((mixed_index[mixed] < 0) | (mixed_index[mixed] >= n_mixed)).any():
        raise ArchiveError("mixed-leaf index out of range")
    return DecisionTree(feature=feature, threshold=threshold, left=left,
                        right=right, leaf_class=leaf_class,
                        mixed_index=mixed_index, mixed_dist=mixed_dist,
                        weight_mass=weight_mass, n_classes=n_classes,
                        n_features=n_features, seed=seed)


def _write_forest(w: _Writer, forest: Forest):
    w.u32(forest.n_estimators)
    w.u64(forest.seed)
    for tree in forest.trees:
        _write_tree(w, tree)


def _read_forest(r: _Reader, kind: ForestKind, n_classes: int,
                 n_features: int) -> Forest:
    n_estimators = r.u32()
    seed = r.u64()
    if n_estimators == 0:
        raise ArchiveError("forest with zero trees")
    trees = [_read_tree(r, n_classes, n_features) for _ in range(n_estimators)]
    return Forest(kind=kind, trees=trees, n_estimators=n_estimators, seed=seed,
                  n_classes=n_classes, n_features=n_features)


def save_model(model: DaForestClassifier, path) -> int:
    """Serialize a fitted model atomically; returns the byte count written."""
    if not hasattr(model, "layers_") or not model.layers_:
        raise ArchiveError("model is not fitted")
    w = _Writer()
    k = model.n_classes_
    w.u32(k)
    w.u32(model.n_features_in_)
    w.u8(CONNECTIVITY_MODES.index(model.connectivity))
    w.u8(1 if model.boosting else 0)
    w.u8(1 if model.score_features else 0)
    w.u8(SCORE_MODES.index(model.score_mode_))
    w.u8(1 if model.refit_full else 0)
    w.u8(1 if model.weighted_bootstrap else 0)
    w.f64(float(model.learning_rate))
    w.f64(float(model.prob_clip))
    seed = int(model.random_state)
    if not (0 <= seed < 2 ** 64):
        raise ArchiveError("random_state must fit in an unsigned 64-bit integer")
    w.u64(seed)
    w.u32(int(model.k_folds))
    slot_kinds = [slot.kind for slot in model.layers_[0].slots]
    w.u32(len(slot_kinds))
    for kind in slot_kinds:
        w.u8(_KIND_CODE[kind])
    w.u32(int(model.n_per_kind_[ForestKind.RANDOM.value]))
    w.u32(int(model.n_per_kind_[ForestKind.COMPLETELY_RANDOM.value]))
    w.u32(len(model.layers_))
    classes = np.asarray(model.classes_)
    if np.issubdtype(classes.dtype, np.integer):
        w.u8(0)
        w.u32(len(classes))
        w.array(classes, "<i8")
    else:
        w.u8(1)
        w.u32(len(classes))
        for c in classes:
            w.text(str(c))

    for layer in model.layers_:
        w.u32(layer.index)
        w.u32(layer.input_dim)
        for slot in layer.slots:
            w.u8(1 if slot.refit_model is not None else 0)
            for forest in slot.fold_models:
                _write_forest(w, forest)
            if slot.refit_model is not None:
                _write_forest(w, slot.refit_model)

    payload = w.payload()
    blob = MAGIC + struct.pack("<I", FORMAT_VERSION) + payload + \
        struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)

    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".daf.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(blob)


def load_model(path) -> DaForestClassifier:
    """Parse an archive back into a fitted classifier.

    Raises ArchiveError for bad magic, unsupported versions, checksum
    mismatches, truncation, or out-of-range structure; never returns a
    partial model.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise ArchiveError("not a model archive (file too small)")
    if blob[:4] != MAGIC:
        raise ArchiveError("bad magic: not a model archive")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != FORMAT_VERSION:
        raise ArchiveError(f"unsupported archive version {version} "
                           f"(reader supports {FORMAT_VERSION})")
    payload = blob[8:-4]
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise ArchiveError("checksum mismatch: archive is corrupt")

    r = _Reader(payload)
    k = r.u32()
    d = r.u32()
    connectivity = CONNECTIVITY_MODES[r.u8()]
    boosting = bool(r.u8())
    score_features = bool(r.u8())
    score_mode = SCORE_MODES[r.u8()]
    refit_full = bool(r.u8())
    weighted_bootstrap = bool(r.u8())
    learning_rate = r.f64()
    prob_clip = r.f64()
    random_state = r.u64()
    k_folds = r.u32()
    n_slots = r.u32()
    slot_kinds = []
    for _ in range(n_slots):
        code = r.u8()
        if code not in _KIND_OF:
            raise ArchiveError(f"unknown forest kind code {code}")
        slot_kinds.append(_KIND_OF[code])
    n_random = r.u32()
    n_cr = r.u32()
    n_layers = r.u32()
    tag = r.u8()
    n_class_labels = r.u32()
    if n_class_labels != k:
        raise ArchiveError("class label count disagrees with K")
    if tag == 0:
        classes = r.array("<i8", k)
    elif tag == 1:
        classes = np.asarray([r.text() for _ in range(k)], dtype=object)
    else:
        raise ArchiveError(f"unknown class label tag {tag}")

    layers: list[CascadeLayer] = []
    for _ in range(n_layers):
        index = r.u32()
        input_dim = r.u32()
        slots = []
        for kind in slot_kinds:
            has_refit = r.u8()
            fold_models = [_read_forest(r, kind, k, input_dim)
                           for _ in range(k_folds)]
            refit = _read_forest(r, kind, k, input_dim) if has_refit else None
            slots.append(SlotModel(kind=kind, fold_models=fold_models,
                                   refit_model=refit))
        layers.append(CascadeLayer(index=index, slots=slots, input_dim=input_dim))
    if not r.done():
        raise ArchiveError("trailing bytes after the last layer")
    if not layers:
        raise ArchiveError("archive holds no layers")

    model = DaForestClassifier(
        slots_per_kind=n_slots // 2, connectivity=connectivity,
        boosting=boosting, learning_rate=learning_rate, k_folds=k_folds,
        n_estimators=(n_random, n_cr), search=False,
        score_features=score_features, score_mode=score_mode,
        prob_clip=prob_clip, weighted_bootstrap=weighted_bootstrap,
        refit_full=refit_full, random_state=random_state)
    model.classes_ = classes
    model.n_classes_ = k
    model.n_features_in_ = d
    model.layers_ = layers
    model.n_layers_ = len(layers)
    model.n_per_kind_ = {ForestKind.RANDOM.value: n_random,
                         ForestKind.COMPLETELY_RANDOM.value: n_cr}
    model.score_mode_ = score_mode
    model.layer_accuracies_ = None
    model.search_results_ = None
    return model
