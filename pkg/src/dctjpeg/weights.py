"""Named tensor container for forward-only enhancement modules.

On disk a bundle is a JSON object ``{name: {"shape": [...], "data": [...]}}``
with row-major data, plus an optional ``"__metadata__"`` object.
"""

import json
from pathlib import Path

import numpy as np

from .errors import MissingWeights, ShapeMismatch

METADATA_KEY = "__metadata__"


class WeightBundle:
    def __init__(self, tensors=None, metadata=None):
        self.tensors = {}
        for name, value in (tensors or {}).items():
            self[name] = value
        self.metadata = dict(metadata or {})

    def __setitem__(self, name, value):
        a = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise ValueError(f"tensor {name!r} has non-finite values")
        a.setflags(write=False)
        self.tensors[name] = a

    def __contains__(self, name):
        return name in self.tensors

    def __len__(self):
        return len(self.tensors)

    def get(self, name, shape=None):
        """Tensor ``name``; raises MissingWeights if absent, ShapeMismatch if ``shape`` differs."""
        if name not in self.tensors:
            raise MissingWeights(name)
        a = self.tensors[name]
        if shape is not None and a.shape != tuple(shape):
            raise ShapeMismatch(f"{name}: expected shape {tuple(shape)}, got {a.shape}")
        return a

    def get_optional(self, name, shape):
        """Like :meth:`get` but returns zeros of ``shape`` when the tensor is absent."""
        if name not in self.tensors:
            return np.zeros(shape)
        return self.get(name, shape)

    def to_json(self):
        doc = {n: {"shape": list(a.shape), "data": a.ravel().tolist()} for n, a in sorted(self.tensors.items())}
        if self.metadata:
            doc[METADATA_KEY] = self.metadata
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ValueError("weight file must hold a JSON object")
        meta = doc.pop(METADATA_KEY, {})
        tensors = {}
        for name, entry in doc.items():
            try:
                shape = tuple(int(s) for s in entry["shape"])
                data = np.asarray(entry["data"], dtype=np.float64)
            except (KeyError, TypeError) as exc:
                raise ValueError(f"tensor {name!r} needs 'shape' and 'data'") from exc
            if data.size != int(np.prod(shape)):
                raise ShapeMismatch(f"{name}: {data.size} values for shape {shape}")
            tensors[name] = data.reshape(shape)
        return cls(tensors, meta)

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise MissingWeights(f"weight file {path} does not exist")
        return cls.from_json(path.read_text())
