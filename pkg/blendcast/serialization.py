"""JSON documents for trained parameters, written atomically.

Arrays are stored flat with their shape. ``json`` writes floats with the
shortest repr that round-trips, so loading gives back the exact doubles.
"""
import json
import os
import tempfile
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import DataError

PathLike = Union[str, Path]
FORMAT_VERSION = 1


class ArrayEntry(BaseModel):
    "One named parameter array, flattened in C order"
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(min_length=1)
    shape: List[int]
    values: List[float]

    @model_validator(mode="after")
    def _check_size(self):
        if any(d < 0 for d in self.shape):
            raise ValueError(f"negative dimension in shape {self.shape}")
        if len(self.values) != int(np.prod(self.shape, dtype=np.int64)):
            raise ValueError(f"{len(self.values)} values for shape {tuple(self.shape)}")
        return self

    @classmethod
    def from_array(cls, name: str, array: np.ndarray) -> "ArrayEntry":
        return cls(name=name, shape=list(array.shape), values=[float(v) for v in array.ravel()])

    def to_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64).reshape(tuple(self.shape))


class Document(BaseModel):
    """Envelope shared by every saved artefact; subclasses set ``FORMAT`` and add their fields"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    FORMAT: ClassVar[str] = ""

    format: str
    version: int = FORMAT_VERSION

    @model_validator(mode="after")
    def _check_envelope(self):
        if self.format != self.FORMAT:
            raise ValueError(f"expected a {self.FORMAT!r} document, got {self.format!r}")
        if self.version != FORMAT_VERSION:
            raise ValueError(f"unsupported version {self.version!r}")
        return self


D = TypeVar("D", bound=Document)


def encode_arrays(arrays: Dict[str, np.ndarray]) -> List[ArrayEntry]:
    return [ArrayEntry.from_array(name, array) for name, array in arrays.items()]


def decode_arrays(entries: List[ArrayEntry]) -> Dict[str, np.ndarray]:
    arrays = {}
    for entry in entries:
        if entry.name in arrays:
            raise DataError(f"parameter {entry.name} appears twice")
        arrays[entry.name] = entry.to_array()
    return arrays


def dumps(document: Dict[str, Any]) -> str:
    return json.dumps(document, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_text_atomic(path: PathLike, text: str) -> Path:
    """Writes through a temporary file in the target directory, then renames over ``path``"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path: PathLike, document: Union[Document, Dict[str, Any]]) -> Path:
    if isinstance(document, BaseModel):
        document = document.model_dump(mode="json")
    return write_text_atomic(path, dumps(document))


def describe_validation_error(exc: ValidationError) -> str:
    error = exc.errors()[0]
    where = ".".join(str(p) for p in error["loc"])
    message = error["msg"].removeprefix("Value error, ")
    more = f" (and {exc.error_count() - 1} more)" if exc.error_count() > 1 else ""
    return f"{where}: {message}{more}" if where else f"{message}{more}"


def read_document(path: PathLike, kind: Type[D]) -> D:
    """Loads ``path`` as a ``kind`` document; anything malformed is reported as a DataError naming the file"""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError("file not found", str(path))
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc}", str(path), exc.lineno)
    if not isinstance(raw, dict):
        raise DataError(f"expected a {kind.FORMAT!r} document, got a JSON {type(raw).__name__}", str(path))
    if raw.get("format") != kind.FORMAT:
        raise DataError(f"expected a {kind.FORMAT!r} document, got {raw.get('format')!r}", str(path))
    try:
        return kind.model_validate(raw)
    except ValidationError as exc:
        raise DataError(describe_validation_error(exc), str(path))
