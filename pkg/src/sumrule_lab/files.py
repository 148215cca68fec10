"""JSON/CSV reading and writing plus run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import ValidationError
from .jacobi import JacobiSequence
from .measures import GridMeasure, MeasureModel
from .poly import Polynomial

SEED_ENV = "SUMRULE_LAB_SEED"


def fmt(x) -> str:
    """17 significant digits, the CSV float format."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _clean(obj):
    # JSON has no inf/nan; map them to null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def read_json(path):
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"missing file: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc.msg} (line {exc.lineno})") from exc


def write_json(path, obj) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n")
    return p


def write_csv(path, header, rows) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else fmt(v) for v in row])
    return p


def read_potential(path) -> Polynomial:
    data = read_json(path)
    if isinstance(data, dict):
        data = data.get("coeffs", data.get("potential"))
    return Polynomial.from_json(data)


def read_measure(path):
    """GridMeasure or MeasureModel, decided by the keys present."""
    data = read_json(path)
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: measure JSON must be an object")
    try:
        if "intervals" in data:
            return GridMeasure.from_json(data)
        if "ac" in data or "atoms" in data:
            return MeasureModel.from_json(data)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed measure ({exc})") from exc
    raise ValidationError(f"{path}: neither a GridMeasure nor a MeasureModel")


def as_model(mu) -> MeasureModel:
    return MeasureModel(mu) if isinstance(mu, GridMeasure) else mu


def read_jacobi(path) -> JacobiSequence:
    data = read_json(path)
    try:
        return JacobiSequence.from_json(data)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed Jacobi sequence ({exc})") from exc


def env_seed(seed: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return seed
    try:
        return int(raw)
    except ValueError as exc:
        raise ValidationError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def sha256_of(obj) -> str:
    return hashlib.sha256(json.dumps(_clean(obj), sort_keys=True).encode()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: list
    config_sha256: str
    seed: int | None = None
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: list = field(default_factory=list)

    @classmethod
    def start(cls, config, seed=None, argv=None) -> "RunManifest":
        return cls(list(sys.argv if argv is None else argv), sha256_of(config), seed)

    def add(self, path) -> None:
        self.outputs.append(str(path))

    def write(self, path) -> Path:
        self.finished = _now()
        return write_json(path, asdict(self))
