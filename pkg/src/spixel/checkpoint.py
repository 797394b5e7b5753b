"""Binary checkpoint format: magic "AISP", u16 version, little-endian,
then a table of named tensors (u16 name length, utf-8 name, u8 dtype tag,
u8 rank, u64 dims, raw row-major data) until end of file.

Model parameters live under ``param.*``, optimizer moments under ``adam.*``,
configuration and counters under ``config.*`` / ``meta.*``. The round trip
is bit-exact.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState
from .errors import CheckpointCompatError, CheckpointFormatError
from .implant import VARIANTS
from .model import Model, ModelConfig, build

MAGIC = b"AISP"
VERSION = 1

_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAG_FOR_KIND = {"f4": 0, "f8": 1, "i8": 2}

_VARIANT_NAMES = {code: name for name, code in VARIANTS.items()}
_PRECISION_CODES = {"f32": 0, "f64": 1}
_PRECISION_NAMES = {0: "f32", 1: "f64"}


def _tag_of(arr):
    key = arr.dtype.str.lstrip("<>=|")
    if key not in _TAG_FOR_KIND:
        raise CheckpointFormatError(f"cannot serialize dtype {arr.dtype}")
    return _TAG_FOR_KIND[key]


def _write_entry(fh, name, arr):
    arr = np.ascontiguousarray(arr)
    tag = _tag_of(arr)
    raw = arr.astype(_DTYPE_TAGS[tag], copy=False).tobytes()
    name_b = name.encode("utf-8")
    fh.write(struct.pack("<H", len(name_b)))
    fh.write(name_b)
    fh.write(struct.pack("<BB", tag, arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<Q", d))
    fh.write(raw)


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointFormatError(f"truncated checkpoint while reading {what}")
    return data


def _read_entries(fh):
    entries = {}
    while True:
        head = fh.read(2)
        if not head:
            return entries
        if len(head) != 2:
            raise CheckpointFormatError("truncated checkpoint in entry header")
        (name_len,) = struct.unpack("<H", head)
        name = _read_exact(fh, name_len, "entry name").decode("utf-8")
        tag, rank = struct.unpack("<BB", _read_exact(fh, 2, f"{name} header"))
        if tag not in _DTYPE_TAGS:
            raise CheckpointFormatError(f"unknown dtype tag {tag} for {name}")
        dims = tuple(
            struct.unpack("<Q", _read_exact(fh, 8, f"{name} dims"))[0]
            for _ in range(rank)
        )
        dtype = _DTYPE_TAGS[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
        raw = _read_exact(fh, nbytes, f"{name} data")
        entries[name] = np.frombuffer(raw, dtype).reshape(dims).copy()
    return entries


def _scalar(value):
    return np.asarray([value], "<i8")


@dataclass
class Checkpoint:
    version: int
    config: ModelConfig
    params: dict
    iteration: int
    seed: int
    adam: AdamState | None = None

    def build_model(self):
        model = build(self.config, rng=0)
        self.restore_into(model)
        return model

    def restore_into(self, model):
        """Copy stored parameters into a model, validating every shape."""
        dtype = model.config.dtype
        for name, p in model.params.items():
            if name not in self.params:
                raise CheckpointCompatError(f"checkpoint is missing tensor param.{name}")
            arr = self.params[name]
            if arr.shape != p.data.shape:
                raise CheckpointCompatError(
                    f"tensor param.{name}: checkpoint shape {arr.shape} does not "
                    f"match model shape {p.data.shape}"
                )
            p.data = arr.astype(dtype, copy=True)
        extra = sorted(set(self.params) - set(model.params))
        if extra:
            raise CheckpointCompatError(f"checkpoint has unexpected tensor param.{extra[0]}")

    def adam_state(self, model):
        if self.adam is None:
            return AdamState.for_params(model.params)
        state = AdamState(
            m={k: v.copy() for k, v in self.adam.m.items()},
            v={k: v.copy() for k, v in self.adam.v.items()},
            step=self.adam.step,
            beta1=self.adam.beta1,
            beta2=self.adam.beta2,
            eps=self.adam.eps,
        )
        return state


def save_checkpoint(path, model, adam=None, iteration=0, seed=0):
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        _write_entry(fh, "meta.iteration", _scalar(iteration))
        _write_entry(fh, "meta.seed", _scalar(seed))
        _write_entry(fh, "config.S", _scalar(cfg.S))
        _write_entry(fh, "config.widths", np.asarray(cfg.widths, "<i8"))
        _write_entry(fh, "config.D", _scalar(cfg.D))
        _write_entry(fh, "config.compress_mid", _scalar(cfg.compress_mid))
        _write_entry(fh, "config.K", _scalar(cfg.K))
        _write_entry(fh, "config.variant", _scalar(VARIANTS[cfg.variant]))
        _write_entry(fh, "config.use_ai", _scalar(int(cfg.use_ai)))
        _write_entry(fh, "config.precision", _scalar(_PRECISION_CODES[cfg.precision]))
        for name, p in model.params.items():
            _write_entry(fh, f"param.{name}", p.data)
        if adam is not None:
            _write_entry(fh, "adam.step", _scalar(adam.step))
            _write_entry(fh, "adam.hyper", np.asarray([adam.beta1, adam.beta2, adam.eps], "<f8"))
            for name in model.params:
                _write_entry(fh, f"adam.m.{name}", adam.m[name])
                _write_entry(fh, f"adam.v.{name}", adam.v[name])


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        entries = _read_entries(fh)

    def take_int(name):
        if name not in entries:
            raise CheckpointFormatError(f"checkpoint is missing {name}")
        return int(entries[name][0])

    config = ModelConfig(
        S=take_int("config.S"),
        widths=tuple(int(v) for v in entries.get("config.widths", np.empty(0))),
        D=take_int("config.D"),
        compress_mid=take_int("config.compress_mid"),
        K=take_int("config.K"),
        variant=_VARIANT_NAMES[take_int("config.variant")],
        use_ai=bool(take_int("config.use_ai")),
        precision=_PRECISION_NAMES[take_int("config.precision")],
    )
    params = {
        name[len("param."):]: arr
        for name, arr in entries.items()
        if name.startswith("param.")
    }
    adam = None
    if "adam.step" in entries:
        hyper = entries["adam.hyper"]
        adam = AdamState(
            m={n[len("adam.m."):]: a for n, a in entries.items() if n.startswith("adam.m.")},
            v={n[len("adam.v."):]: a for n, a in entries.items() if n.startswith("adam.v.")},
            step=take_int("adam.step"),
            beta1=float(hyper[0]),
            beta2=float(hyper[1]),
            eps=float(hyper[2]),
        )
    return Checkpoint(
        version=version,
        config=config,
        params=params,
        iteration=take_int("meta.iteration"),
        seed=take_int("meta.seed"),
        adam=adam,
    )
