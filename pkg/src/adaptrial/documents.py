"""JSON persistence of designs together with how they were obtained.

Numbers are written with 17 significant digits so that every double survives
a save/load cycle unchanged, and the writer is deterministic, which makes
save -> load -> save byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .designs import SingleStageDesign, TwoStageDesign
from .stats_core import TruncatedNormalPrior

SCHEMA_VERSION = "1"
KINDS = ("single-stage", "two-stage")


class DocumentError(ValueError):
    """Malformed or incompatible design document."""


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise DocumentError(f"cannot store non-finite number {x!r}")
    return format(x, ".17g")


def _encode(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if hasattr(obj, "item"):  # numpy scalar
        return _encode(obj.item(), indent)
    raise DocumentError(f"cannot encode {type(obj).__name__}")


def config_digest(config: dict | None) -> str | None:
    """SHA-256 of the canonical JSON form of a solver configuration."""
    if config is None:
        return None
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def design_payload(design) -> dict:
    if isinstance(design, SingleStageDesign):
        return {"n": float(design.n), "c": float(design.c)}
    if isinstance(design, TwoStageDesign):
        return {
            "m": float(design.m),
            "f": float(design.f),
            "e": float(design.e),
            "n_pivots": [float(v) for v in design.n_pivots],
            "c_pivots": [float(v) for v in design.c_pivots],
            "interpolation": design.interpolation,
            "pivot_abscissae": None
            if design.pivot_abscissae is None
            else [float(v) for v in design.pivot_abscissae],
        }
    raise DocumentError(f"unsupported design type {type(design).__name__}")


def design_from_payload(kind: str, payload: dict):
    try:
        if kind == "single-stage":
            return SingleStageDesign(n=float(payload["n"]), c=float(payload["c"]))
        if kind == "two-stage":
            abscissae = payload.get("pivot_abscissae")
            return TwoStageDesign(
                m=float(payload["m"]),
                f=float(payload["f"]),
                e=float(payload["e"]),
                n_pivots=[float(v) for v in payload["n_pivots"]],
                c_pivots=[float(v) for v in payload["c_pivots"]],
                interpolation=payload.get("interpolation", "cubic"),
                pivot_abscissae=None if abscissae is None else [float(v) for v in abscissae],
            )
    except (KeyError, TypeError) as exc:
        raise DocumentError(f"incomplete {kind} design payload: {exc}") from exc
    raise DocumentError(f"unknown design kind {kind!r}")


@dataclass
class DesignDocument:
    """A design plus its provenance: prior, constraints, solver digest and timestamp."""

    kind: str
    design: SingleStageDesign | TwoStageDesign
    provenance: dict = field(default_factory=dict)
    characteristics: dict | None = None
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DocumentError(f"kind must be one of {KINDS}, got {self.kind!r}")

    @classmethod
    def create(
        cls,
        design,
        prior: TruncatedNormalPrior | None = None,
        constraints: dict | None = None,
        solver_config: dict | None = None,
        characteristics: dict | None = None,
        created: str | None = None,
    ) -> "DesignDocument":
        kind = "single-stage" if isinstance(design, SingleStageDesign) else "two-stage"
        if created is None:
            created = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
        provenance = {
            "prior": None if prior is None else {k: float(v) for k, v in prior.to_dict().items()},
            "constraints": dict(constraints or {}),
            "solver_config_digest": config_digest(solver_config),
            "created": created,
        }
        return cls(kind=kind, design=design, provenance=provenance, characteristics=characteristics)

    @property
    def prior(self) -> TruncatedNormalPrior | None:
        p = self.provenance.get("prior")
        return None if p is None else TruncatedNormalPrior.from_dict(p)

    def to_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "design": design_payload(self.design),
            "provenance": self.provenance,
        }
        if self.characteristics is not None:
            out["characteristics"] = self.characteristics
        return out

    def to_json(self) -> str:
        return _encode(self.to_dict()) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DesignDocument":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DocumentError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION!r}")
        kind = d.get("kind")
        if kind not in KINDS:
            raise DocumentError(f"unknown design kind {kind!r}")
        return cls(
            kind=kind,
            design=design_from_payload(kind, d.get("design") or {}),
            provenance=d.get("provenance") or {},
            characteristics=d.get("characteristics"),
            schema_version=version,
        )

    @classmethod
    def from_json(cls, text: str) -> "DesignDocument":
        try:
            # integral literals are floats written by the encoder ("-0" included)
            d = json.loads(text, parse_int=float)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise DocumentError("design document must be a JSON object")
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path) -> "DesignDocument":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DocumentError(f"cannot read {path}: {exc}") from exc
        return cls.from_json(text)
