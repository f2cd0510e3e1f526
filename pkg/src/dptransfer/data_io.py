"""Dataset loading, splitting and model archives.

Archive layout (all integers little-endian u64, floats little-endian f64)::

    magic "DPMMARCH" | format_version | root section

    section := name_len | name (utf-8) | kind (u8) | payload_len | payload
    kind 1, group   : child_count | child sections
    kind 2, float   : ndim | dims... | row-major f64 values
    kind 3, integer : ndim | dims... | row-major i64 values
    kind 4, text    : utf-8 bytes

Every model is a group whose first child is a text section ``type``.
"""

import gzip
import os
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierModel
from .deep_autoencoder import CdmmaLayer, CdmmaModel, WideCdmmaModel
from .exceptions import FormatError, InvalidArgumentError, VersionError
from .membership_mapping import MembershipMappingModel
from .numkit import KernelParams
from .transfer import TransferModel

MAGIC = b"DPMMARCH"
FORMAT_VERSION = 1

KIND_GROUP, KIND_FLOAT, KIND_INT, KIND_TEXT = 1, 2, 3, 4

IDX_UBYTE = 0x08
IDX_FLOAT64 = 0x0E


@dataclass
class LabelledDataset:
    """Feature columns with dense 0-based labels.

    ``original_labels[k]`` is the label value that was remapped to ``k``.
    """

    features: np.ndarray  # (p, N)
    labels: np.ndarray  # (N,)
    original_labels: np.ndarray = field(default=None)
    source_format: str = "delimited"
    image_shape: tuple = None

    def __post_init__(self):
        if self.original_labels is None:
            self.original_labels = np.arange(self.class_count)

    @property
    def class_count(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def N(self):
        return self.features.shape[1]

    @property
    def p(self):
        return self.features.shape[0]

    def groups(self):
        """Feature matrix of every class, in label order."""
        return [self.features[:, self.labels == c] for c in range(self.class_count)]

    def subset(self, index):
        return LabelledDataset(
            self.features[:, index],
            self.labels[index],
            self.original_labels,
            self.source_format,
            self.image_shape,
        )


def dense_labels(raw):
    """Map arbitrary label values to 0..C-1 (sorted order)."""
    values, dense = np.unique(np.asarray(raw), return_inverse=True)
    return dense.astype(np.int64), values


def _open_binary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _parse_idx(data, path):
    if len(data) < 4:
        raise FormatError(f"{path}: truncated IDX header at offset 0")
    zero, dtype, ndim = struct.unpack(">HBB", data[:4])
    if zero != 0 or dtype not in (IDX_UBYTE, IDX_FLOAT64) or ndim < 1:
        raise FormatError(f"{path}: bad IDX magic 0x{data[:4].hex()} at offset 0")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{path}: truncated IDX dimensions at offset 4")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    itemsize = 1 if dtype == IDX_UBYTE else 8
    expected = int(np.prod(dims)) * itemsize
    if len(data) - header != expected:
        raise FormatError(
            f"{path}: payload at offset {header} has {len(data) - header} bytes, dimensions need {expected}"
        )
    np_dtype = np.uint8 if dtype == IDX_UBYTE else np.dtype(">f8")
    values = np.frombuffer(data, dtype=np_dtype, offset=header).reshape(dims)
    return dtype, values


def load_idx(images_path, labels_path):
    """Load an IDX image/label pair; byte pixels are scaled into [0, 1].

    Images are flattened row-major to ``rows * cols`` features. Files with
    the float64 IDX type (as written by :func:`save_idx`) are taken as-is.
    """
    img_type, images = _parse_idx(_open_binary(images_path), images_path)
    lab_type, labels = _parse_idx(_open_binary(labels_path), labels_path)
    if images.ndim != 3:
        raise FormatError(f"{images_path}: expected 3 IDX dimensions at offset 3, got {images.ndim}")
    if labels.ndim != 1 or lab_type != IDX_UBYTE:
        raise FormatError(f"{labels_path}: expected a 1-D unsigned-byte label file at offset 2")
    if labels.shape[0] == 0:
        raise FormatError(f"{labels_path}: label file is empty (count at offset 4 is 0)")
    if labels.shape[0] != images.shape[0]:
        raise FormatError(
            f"{labels_path}: {labels.shape[0]} labels at offset 4 but {images.shape[0]} images"
        )
    n_img, rows, cols = images.shape
    flat = images.reshape(n_img, rows * cols).astype(np.float64)
    if img_type == IDX_UBYTE:
        flat /= 255.0
    if not np.all(np.isfinite(flat)):
        raise FormatError(f"{images_path}: non-finite pixel values")
    dense, original = dense_labels(labels)
    return LabelledDataset(np.ascontiguousarray(flat.T), dense, original, "idx", (rows, cols))


def save_idx(ds, images_path, labels_path):
    """Write features as float64 IDX images and original labels as bytes."""
    rows, cols = ds.image_shape if ds.image_shape else (ds.p, 1)
    if rows * cols != ds.p:
        raise InvalidArgumentError(f"image shape {rows}x{cols} does not match {ds.p} features")
    original = ds.original_labels[ds.labels]
    if original.min() < 0 or original.max() > 255:
        raise InvalidArgumentError("IDX labels must fit in an unsigned byte")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">HBB", 0, IDX_FLOAT64, 3))
        fh.write(struct.pack(">3I", ds.N, rows, cols))
        fh.write(np.ascontiguousarray(ds.features.T, dtype=">f8").tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">HBB", 0, IDX_UBYTE, 1))
        fh.write(struct.pack(">I", ds.N))
        fh.write(original.astype(np.uint8).tobytes())


_SPLIT = re.compile(r"[,\s]+")


def load_delimited(path, has_label_column=True):
    """Load a comma- or whitespace-delimited numeric table, one sample per line."""
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            cells = [c for c in _SPLIT.split(text) if c]
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise FormatError(f"{path}: line {lineno} has {len(cells)} fields, expected {width}")
            try:
                values = [float(c) for c in cells]
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise FormatError(f"{path}: line {lineno} contains NaN or Inf")
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    if has_label_column:
        if table.shape[1] < 2:
            raise FormatError(f"{path}: a labelled table needs at least two columns")
        raw = table[:, -1]
        if np.any(raw != np.round(raw)):
            raise FormatError(f"{path}: label column holds non-integer values")
        dense, original = dense_labels(raw.astype(np.int64))
        features = table[:, :-1]
    else:
        dense = np.zeros(table.shape[0], dtype=np.int64)
        original = np.array([0])
        features = table
    return LabelledDataset(np.ascontiguousarray(features.T), dense, original, "delimited")


def save_delimited(ds, path, with_labels=True):
    """Write one sample per line, comma separated, labels last."""
    with open(path, "w") as fh:
        original = ds.original_labels[ds.labels]
        for i in range(ds.N):
            cells = [repr(float(v)) for v in ds.features[:, i]]
            if with_labels:
                cells.append(str(int(original[i])))
            fh.write(",".join(cells) + "\n")


def load_dataset(path, labels_path=None):
    """Load IDX when ``labels_path`` is given or the file has an IDX image header."""
    if labels_path is not None:
        return load_idx(path, labels_path)
    return load_delimited(path, has_label_column=True)


def split(ds, per_class_counts, seed):
    """Sample ``per_class_counts`` items per class into A, the rest into B.

    ``per_class_counts`` is an int (same for every class) or a sequence.
    Both subsets keep the original sample order.
    """
    C = ds.class_count
    counts = [per_class_counts] * C if np.isscalar(per_class_counts) else list(per_class_counts)
    if len(counts) != C:
        raise InvalidArgumentError(f"got {len(counts)} counts for {C} classes")
    rng = np.random.default_rng(seed)
    chosen = np.zeros(ds.N, dtype=bool)
    for c in range(C):
        members = np.flatnonzero(ds.labels == c)
        k = int(counts[c])
        if not 0 <= k <= members.size:
            raise InvalidArgumentError(
                f"class {ds.original_labels[c]} has {members.size} samples, requested {k}"
            )
        chosen[rng.choice(members, size=k, replace=False)] = True
    return ds.subset(np.flatnonzero(chosen)), ds.subset(np.flatnonzero(~chosen))


# ---------------------------------------------------------------- archives


class Group:
    """Ordered named children of an archive section."""

    def __init__(self, items=None):
        self.items = list(items or [])

    def add(self, name, value):
        self.items.append((name, value))
        return self

    def __getitem__(self, name):
        for key, value in self.items:
            if key == name:
                return value
        raise FormatError(f"archive section {name!r} is missing")

    def names(self):
        return [key for key, _ in self.items]


def _encode(name, value):
    raw_name = name.encode("utf-8")
    if isinstance(value, Group):
        kind = KIND_GROUP
        payload = struct.pack("<Q", len(value.items)) + b"".join(_encode(k, v) for k, v in value.items)
    elif isinstance(value, str):
        kind = KIND_TEXT
        payload = value.encode("utf-8")
    else:
        arr = np.asarray(value)
        if arr.dtype.kind in "iub":
            kind, dtype = KIND_INT, "<i8"
        elif arr.dtype.kind == "f":
            kind, dtype = KIND_FLOAT, "<f8"
        else:
            raise InvalidArgumentError(f"cannot archive {name!r} of dtype {arr.dtype}")
        head = struct.pack("<Q", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
        payload = head + np.ascontiguousarray(arr, dtype=dtype).tobytes()
    return struct.pack("<Q", len(raw_name)) + raw_name + struct.pack("<BQ", kind, len(payload)) + payload


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, count, what):
        if count < 0 or self.pos + count > len(self.data):
            raise FormatError(f"truncated archive reading {what} at offset {self.pos}")
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def u64(self, what):
        return struct.unpack("<Q", self.take(8, what))[0]


def _decode(reader):
    name_len = reader.u64("section name length")
    name = reader.take(name_len, "section name").decode("utf-8", errors="strict")
    kind = reader.take(1, "section kind")[0]
    length = reader.u64("section length")
    start = reader.pos
    body = _Reader(reader.take(length, f"section {name!r}"))
    if kind == KIND_GROUP:
        count = body.u64("child count")
        value = Group([_decode(body) for _ in range(count)])
    elif kind == KIND_TEXT:
        value = body.take(length, "text").decode("utf-8")
    elif kind in (KIND_FLOAT, KIND_INT):
        ndim = body.u64("ndim")
        if ndim > 32:
            raise FormatError(f"section {name!r} at offset {start} declares {ndim} dimensions")
        shape = tuple(body.u64("dimension") for _ in range(ndim))
        dtype = "<f8" if kind == KIND_FLOAT else "<i8"
        raw = body.take(int(np.prod(shape, dtype=np.int64)) * 8, f"values of {name!r}")
        value = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(np.float64 if kind == KIND_FLOAT else np.int64)
    else:
        raise FormatError(f"unknown section kind {kind} for {name!r} at offset {start}")
    if body.pos != length:
        raise FormatError(f"section {name!r} at offset {start} has {length - body.pos} trailing bytes")
    return name, value


def _mapping_group(m):
    return Group(
        [
            ("type", "membership_mapping"),
            ("alpha", m.alpha),
            ("inducing_points", m.inducing_points),
            ("sigma2", np.array(m.kp.sigma2)),
            ("weights", m.kp.weights),
            ("nu", np.array(m.nu)),
            ("beta", np.array(m.beta)),
            ("beta_iterations", np.array(m.beta_iterations)),
        ]
    )


def _cdmma_group(m):
    g = Group([("type", "cdmma"), ("p", np.array(m.p))])
    for i, layer in enumerate(m.layers):
        g.add(f"layer_{i}", Group([("projection", layer.projection), ("mapping", _mapping_group(layer.mapping))]))
    return g


def _wide_group(m):
    g = Group([("type", "wide_cdmma"), ("partition_sizes", np.array(m.partition_sizes, dtype=np.int64))])
    for s, sub in enumerate(m.submodels):
        g.add(f"submodel_{s}", _cdmma_group(sub))
    return g


def _classifier_group(m):
    g = Group([("type", "classifier"), ("labels", np.array(m.labels, dtype=np.int64))])
    for c, wide in enumerate(m.class_models):
        g.add(f"class_{c}", _wide_group(wide))
    return g


def _transfer_group(m):
    sizes = np.array(m.pool_sizes, dtype=np.int64).reshape(len(m.pool_sizes), -1)
    return Group(
        [
            ("type", "transfer"),
            ("source_classifier", _classifier_group(m.source_classifier)),
            ("target_classifier", _classifier_group(m.target_classifier)),
            ("s2t", _mapping_group(m.s2t)),
            ("V_sr", m.V_sr),
            ("V_tg", m.V_tg),
            ("pool_sizes", sizes),
        ]
    )


def _children(g, prefix):
    return [value for key, value in g.items if key.startswith(prefix)]


def _expect(g, kind):
    if not isinstance(g, Group):
        raise FormatError(f"expected a {kind} group")
    found = g["type"]
    if found != kind:
        raise FormatError(f"expected a {kind} section, found {found!r}")


def _mapping_from(g):
    _expect(g, "membership_mapping")
    kp = KernelParams(float(g["sigma2"]), g["weights"])
    return MembershipMappingModel(
        g["alpha"], g["inducing_points"], kp, float(g["nu"]), float(g["beta"]), int(g["beta_iterations"])
    )


def _cdmma_from(g):
    _expect(g, "cdmma")
    layers = [CdmmaLayer(lg["projection"], _mapping_from(lg["mapping"])) for lg in _children(g, "layer_")]
    return CdmmaModel(layers, int(g["p"]))


def _wide_from(g):
    _expect(g, "wide_cdmma")
    return WideCdmmaModel([_cdmma_from(s) for s in _children(g, "submodel_")], g["partition_sizes"].tolist())


def _classifier_from(g):
    _expect(g, "classifier")
    return ClassifierModel([_wide_from(c) for c in _children(g, "class_")], g["labels"].tolist())


def _transfer_from(g):
    _expect(g, "transfer")
    return TransferModel(
        _classifier_from(g["source_classifier"]),
        _classifier_from(g["target_classifier"]),
        _mapping_from(g["s2t"]),
        g["V_sr"],
        g["V_tg"],
        g["pool_sizes"].tolist(),
    )


_WRITERS = {
    MembershipMappingModel: _mapping_group,
    CdmmaModel: _cdmma_group,
    WideCdmmaModel: _wide_group,
    ClassifierModel: _classifier_group,
    TransferModel: _transfer_group,
}
_READERS = {
    "membership_mapping": _mapping_from,
    "cdmma": _cdmma_from,
    "wide_cdmma": _wide_from,
    "classifier": _classifier_from,
    "transfer": _transfer_from,
}


def model_to_group(model):
    try:
        return _WRITERS[type(model)](model)
    except KeyError:
        raise InvalidArgumentError(f"cannot archive objects of type {type(model).__name__}") from None


def group_to_model(group):
    kind = group["type"]
    try:
        reader = _READERS[kind]
    except KeyError:
        raise FormatError(f"unknown model type {kind!r}") from None
    return reader(group)


def dumps(model, extras=None):
    """Serialise a model (plus optional named arrays/text) to bytes."""
    root = model_to_group(model) if not isinstance(model, Group) else model
    if extras:
        root = Group(root.items + [(f"extra:{k}", v) for k, v in extras.items()])
    return MAGIC + struct.pack("<Q", FORMAT_VERSION) + _encode("model", root)


def loads_group(data):
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise FormatError("not a model archive (bad magic at offset 0)")
    version = struct.unpack("<Q", data[len(MAGIC) : len(MAGIC) + 8])[0]
    if version != FORMAT_VERSION:
        raise VersionError(f"archive format version {version} is not supported (expected {FORMAT_VERSION})")
    reader = _Reader(data)
    reader.pos = len(MAGIC) + 8
    _, root = _decode(reader)
    if reader.pos != len(data):
        raise FormatError(f"{len(data) - reader.pos} trailing bytes after archive at offset {reader.pos}")
    if not isinstance(root, Group):
        raise FormatError("archive root is not a group")
    return root


def loads(data):
    """Return ``(model, extras)`` from archive bytes."""
    root = loads_group(data)
    extras = {k[len("extra:") :]: v for k, v in root.items if k.startswith("extra:")}
    model = group_to_model(Group([(k, v) for k, v in root.items if not k.startswith("extra:")]))
    return model, extras


def save_model(model, path, extras=None):
    data = dumps(model, extras)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def load_model(path, with_extras=False):
    with open(path, "rb") as fh:
        data = fh.read()
    model, extras = loads(data)
    return (model, extras) if with_extras else model
