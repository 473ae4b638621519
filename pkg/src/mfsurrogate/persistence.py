"""Save and reload fitted models bit-exactly.

File format (version 1)
-----------------------
A model is written as one NumPy ``.npz`` archive (uncompressed). Every
ndarray of the object tree is stored as its own member ``a0``, ``a1``, ...
in native float64/int64 layout, so reloading restores identical bits. The
member ``__meta__`` holds a UTF-8 JSON document::

    {"format": "mfsurrogate-model", "version": 1, "root": <node>}

where a node is one of

- a JSON scalar, list or object (plain values);
- ``{"__array__": "a3"}``, a reference to an array member;
- ``{"__type__": "KrrModel", "fields": {...}}``, a registered dataclass,
  rebuilt by calling the class with its init fields;
- ``{"__ref__": 2}``, the registered dataclass instance with encounter
  index 2 (counting from 0 in depth-first field order), so shared objects
  such as the LF surrogate referenced both by the model and by its basis
  stay shared after loading;
- ``{"__float__": "nan"}`` / ``"inf"`` / ``"-inf"`` for non-finite floats;
- ``{"__tuple__": [...]}`` for tuples.
"""

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .bnn import PosteriorEnsemble
from .data import Standardizer
from .exceptions import ContractError
from .gpr import BasisSpec, GprModel
from .krr import KrrModel
from .mf_bnn import MfBnnModel, SingleBnnModel
from .mf_gpr import GprMeanSurrogate, MfGprModel, SingleGprModel
from .nn import DnnModel, MlpSpec

FORMAT = "mfsurrogate-model"
VERSION = 1
_TYPES = {cls.__name__: cls for cls in (
    KrrModel, GprModel, BasisSpec, Standardizer, MfGprModel, GprMeanSurrogate, SingleGprModel,
    MlpSpec, DnnModel, PosteriorEnsemble, MfBnnModel, SingleBnnModel,
)}


class _Encoder:
    def __init__(self):
        self.arrays = {}
        self.seen = {}

    def encode(self, obj):
        if isinstance(obj, np.ndarray):
            key = f"a{len(self.arrays)}"
            self.arrays[key] = obj
            return {"__array__": key}
        if isinstance(obj, (bool, np.bool_)):
            return bool(obj)
        if isinstance(obj, (int, np.integer)):
            return int(obj)
        if isinstance(obj, (float, np.floating)):
            obj = float(obj)
            return obj if math.isfinite(obj) else {"__float__": repr(obj)}
        if obj is None or isinstance(obj, str):
            return obj
        if isinstance(obj, tuple):
            return {"__tuple__": [self.encode(v) for v in obj]}
        if isinstance(obj, list):
            return [self.encode(v) for v in obj]
        if isinstance(obj, dict):
            return {str(k): self.encode(v) for k, v in obj.items()}
        name = type(obj).__name__
        if dataclasses.is_dataclass(obj) and _TYPES.get(name) is type(obj):
            if id(obj) in self.seen:
                return {"__ref__": self.seen[id(obj)]}
            self.seen[id(obj)] = len(self.seen)
            fields = {f.name: self.encode(getattr(obj, f.name))
                      for f in dataclasses.fields(obj) if f.init}
            return {"__type__": name, "fields": fields}
        raise ContractError(f"cannot serialize objects of type {name}")


class _Decoder:
    def __init__(self, arrays):
        self.arrays = arrays
        self.objects = []

    def decode(self, node):
        if isinstance(node, list):
            return [self.decode(v) for v in node]
        if not isinstance(node, dict):
            return node
        if "__array__" in node:
            return self.arrays[node["__array__"]]
        if "__float__" in node:
            return float(node["__float__"])
        if "__tuple__" in node:
            return tuple(self.decode(v) for v in node["__tuple__"])
        if "__ref__" in node:
            return self.objects[node["__ref__"]]
        if "__type__" in node:
            cls = _TYPES.get(node["__type__"])
            if cls is None:
                raise ContractError(f"unknown serialized type {node['__type__']!r}")
            slot = len(self.objects)
            self.objects.append(None)
            obj = cls(**{k: self.decode(v) for k, v in node["fields"].items()})
            self.objects[slot] = obj
            return obj
        return {k: self.decode(v) for k, v in node.items()}


def save_model(model, path):
    """Write ``model`` to exactly ``path`` and return it as a ``Path``."""
    enc = _Encoder()
    root = enc.encode(model)
    # key order must be preserved: back-references are numbered in encounter order
    meta = json.dumps({"format": FORMAT, "version": VERSION, "root": root})
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(meta.encode("utf-8"), dtype=np.uint8), **enc.arrays)
    return path


def load_model(path):
    """Inverse of :func:`save_model`."""
    with np.load(Path(path), allow_pickle=False) as archive:
        meta = json.loads(archive["__meta__"].tobytes().decode("utf-8"))
        if meta.get("format") != FORMAT:
            raise ContractError(f"{path}: not an {FORMAT} file")
        if meta.get("version") != VERSION:
            raise ContractError(f"{path}: unsupported format version {meta.get('version')}")
        arrays = {k: archive[k] for k in archive.files if k != "__meta__"}
    return _Decoder(arrays).decode(meta["root"])


__all__ = ["save_model", "load_model", "FORMAT", "VERSION"]
