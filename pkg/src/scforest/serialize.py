"""JSON model files for learned DBNs and classifiers.

Floats are written with ``repr`` precision so a load/dump cycle is
bit-exact; infinities are spelled as strings to keep the output strict
JSON. Count tables are stored as nested integer lists.
"""

from __future__ import annotations

import json
import math
import os
import tempfile

import numpy as np

from .classify import VARIANTS, ClassifierModel
from .data import DataError
from .dbn import MODEL_CLASSES, DbnModel

FORMAT = "scforest-model"
VERSION = 1


class ModelFormatError(DataError):
    """A model file is unreadable or internally inconsistent."""


def _num(x: float):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        raise ValueError("NaN cannot be serialised")
    return x


def _unnum(x) -> float:
    if isinstance(x, str):
        if x not in ("inf", "-inf"):
            raise ModelFormatError(f"bad number {x!r}")
        return float(x)
    return float(x)


def _cats(categories):
    return None if categories is None else [list(c) for c in categories]


def _uncats(categories):
    return None if categories is None else tuple(tuple(str(v) for v in c) for c in categories)


def _counts(tables):
    return [np.asarray(t, dtype=np.int64).tolist() for t in tables]


def _uncounts(tables, parents, cards, children):
    out = []
    for t, pa, child in zip(tables, parents, children):
        arr = np.asarray(t, dtype=np.int64)
        q = int(np.prod([cards[p] for p in pa])) if pa else 1
        if arr.shape != (q, cards[child]):
            raise ModelFormatError(
                f"count table of column {child} has shape {arr.shape}, expected {(q, cards[child])}"
            )
        if (arr < 0).any():
            raise ModelFormatError("negative counts")
        out.append(arr)
    return tuple(out)


def dbn_to_dict(model: DbnModel) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "type": "dbn",
        "names": list(model.names),
        "cardinalities": [int(c) for c in model.cardinalities],
        "categories": _cats(model.categories),
        "kind": model.kind,
        "k": int(model.k),
        "ess": _num(model.ess),
        "train_score": _num(model.train_score),
        "init_parents": [list(map(int, p)) for p in model.init_parents],
        "init_counts": _counts(model.init_counts),
        "trans_parents": [list(map(int, p)) for p in model.trans_parents],
        "trans_counts": _counts(model.trans_counts),
        "transitions": None if model.transitions is None
        else np.asarray(model.transitions, dtype=np.int64).tolist(),
    }


def dbn_from_dict(d: dict) -> DbnModel:
    try:
        names = tuple(str(n) for n in d["names"])
        cards = tuple(int(c) for c in d["cardinalities"])
        m = len(names)
        if len(cards) != m:
            raise ModelFormatError("names and cardinalities differ in length")
        kind = d["kind"]
        if kind not in MODEL_CLASSES:
            raise ModelFormatError(f"unknown model class {kind!r}")
        init_parents = tuple(tuple(int(p) for p in pa) for pa in d["init_parents"])
        trans_parents = tuple(tuple(int(p) for p in pa) for pa in d["trans_parents"])
        if len(init_parents) != m or len(trans_parents) != m:
            raise ModelFormatError("one parent list per variable expected")
        for pa in init_parents:
            if any(not 0 <= p < m for p in pa):
                raise ModelFormatError("initial-slice parent out of range")
        for pa in trans_parents:
            if any(not 0 <= p < 2 * m for p in pa):
                raise ModelFormatError("transition parent out of range")
        init_counts = _uncounts(d["init_counts"], init_parents, cards, range(m))
        trans_counts = _uncounts(d["trans_counts"], trans_parents, cards * 2,
                                 range(m, 2 * m))
        transitions = d.get("transitions")
        if transitions is not None:
            transitions = np.asarray(transitions, dtype=np.int64).reshape(-1, 2 * m)
            transitions.setflags(write=False)
        elif kind == "bma-scf":
            raise ModelFormatError("bma-scf model without training transitions")
        return DbnModel(
            names=names, cardinalities=cards, kind=kind, k=int(d["k"]),
            ess=_unnum(d["ess"]), init_parents=init_parents, init_counts=init_counts,
            trans_parents=trans_parents, trans_counts=trans_counts,
            train_score=_unnum(d["train_score"]), categories=_uncats(d.get("categories")),
            transitions=transitions,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed DBN model: {exc}") from exc


def classifier_to_dict(model: ClassifierModel) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "type": "classifier",
        "names": list(model.names),
        "cardinalities": [int(c) for c in model.cardinalities],
        "categories": _cats(model.categories),
        "class_index": int(model.class_index),
        "variant": model.variant,
        "alpha": _num(model.alpha),
        "ess": _num(model.ess),
        "train_score": _num(model.train_score),
        "features": [int(f) for f in model.features],
        "parents": [list(map(int, p)) for p in model.parents],
        "counts": _counts(model.counts),
        "class_counts": np.asarray(model.class_counts, dtype=np.int64).tolist(),
    }


def classifier_from_dict(d: dict) -> ClassifierModel:
    try:
        names = tuple(str(n) for n in d["names"])
        cards = tuple(int(c) for c in d["cardinalities"])
        if len(cards) != len(names):
            raise ModelFormatError("names and cardinalities differ in length")
        if d["variant"] not in VARIANTS:
            raise ModelFormatError(f"unknown variant {d['variant']!r}")
        ci = int(d["class_index"])
        features = tuple(int(f) for f in d["features"])
        parents = tuple(tuple(int(p) for p in pa) for pa in d["parents"])
        if not 0 <= ci < len(names) or len(parents) != len(features):
            raise ModelFormatError("inconsistent class index or parent lists")
        for pa in parents:
            if any(not 0 <= p < len(names) for p in pa):
                raise ModelFormatError("parent id out of range")
        counts = _uncounts(d["counts"], parents, cards, features)
        class_counts = np.asarray(d["class_counts"], dtype=np.int64)
        if class_counts.shape != (cards[ci],):
            raise ModelFormatError("class count vector has the wrong length")
        return ClassifierModel(
            names=names, cardinalities=cards, class_index=ci, variant=d["variant"],
            alpha=_unnum(d["alpha"]), ess=_unnum(d["ess"]), features=features,
            parents=parents, counts=counts, class_counts=class_counts,
            train_score=_unnum(d["train_score"]), categories=_uncats(d.get("categories")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed classifier model: {exc}") from exc


def model_to_dict(model) -> dict:
    if isinstance(model, DbnModel):
        return dbn_to_dict(model)
    if isinstance(model, ClassifierModel):
        return classifier_to_dict(model)
    raise TypeError(f"cannot serialise {type(model).__name__}")


def model_from_dict(d) -> DbnModel | ClassifierModel:
    if not isinstance(d, dict) or d.get("format") != FORMAT:
        raise ModelFormatError("not a model document")
    if d.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {d.get('version')!r}")
    kind = d.get("type")
    if kind == "dbn":
        return dbn_from_dict(d)
    if kind == "classifier":
        return classifier_from_dict(d)
    raise ModelFormatError(f"unknown model type {kind!r}")


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed separators, trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model, path) -> None:
    atomic_write_text(path, dumps(model_to_dict(model)))


def load_model(path) -> DbnModel | ClassifierModel:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON ({exc.msg})") from exc
    return model_from_dict(d)
