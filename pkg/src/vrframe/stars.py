"""Star catalogues: CSV ingestion, formula-predicate filtering and conversion of
(ra, dec, parallax, BT, VT) into render directions, sizes and colors."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .formula import (
    BOOLEAN, REAL, Expr, FormulaError, FormulaTypeError, UnknownNameError, evaluate,
    free_variables, infer, parse,
)

PARALLAX_FLOOR = 0.1  # mas; below this no distance is reported
PREDICATE_NAMES = ("ra", "dec", "parallax", "bt", "vt", "v_mag")


class StarError(Exception):
    pass


class CatalogError(StarError):
    pass


@dataclass(frozen=True)
class StarRecord:
    id: str
    ra: float  # radians, [0, 2pi)
    dec: float  # radians, [-pi/2, pi/2]
    parallax: float = 0.0  # milliarcseconds
    bt: Optional[float] = None
    vt: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.ra < 2 * math.pi:
            raise StarError(f"ra {self.ra} outside [0, 2pi)")
        if not -math.pi / 2 <= self.dec <= math.pi / 2:
            raise StarError(f"dec {self.dec} outside [-pi/2, pi/2]")
        if not self.parallax >= 0:
            raise StarError(f"parallax {self.parallax} is negative")
        if self.bt is None and self.vt is None:
            raise StarError("record has neither BT nor VT")
        for name in ("ra", "dec", "parallax", "bt", "vt"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise StarError(f"{name} is not finite")


@dataclass(frozen=True)
class ColumnMap:
    """Source column names. Angles are in `angle_unit` ("deg" or "rad"), parallax in mas."""

    id: str = "id"
    ra: str = "ra"
    dec: str = "dec"
    parallax: Optional[str] = "parallax"
    bt: Optional[str] = "bt"
    vt: Optional[str] = "vt"
    angle_unit: str = "deg"

    def __post_init__(self):
        if self.angle_unit not in ("deg", "rad"):
            raise StarError(f"angle unit must be 'deg' or 'rad', not {self.angle_unit!r}")

    @classmethod
    def from_mapping(cls, m: Mapping[str, Any]) -> "ColumnMap":
        unknown = set(m) - set(cls.__dataclass_fields__)
        if unknown:
            raise StarError(f"unknown column-map keys: {', '.join(sorted(unknown))}")
        return cls(**m)

    @classmethod
    def parse(cls, text: str) -> "ColumnMap":
        """From ``key=column,key=column`` as given on the command line."""
        pairs = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, sep, value = part.partition("=")
            if not sep:
                raise StarError(f"column map entry {part!r} is not key=value")
            pairs[key.strip()] = value.strip()
        return cls.from_mapping(pairs)


CANONICAL = ColumnMap("id", "ra_rad", "dec_rad", "parallax_mas", "bt", "vt", "rad")


@dataclass(frozen=True)
class StarConfig:
    r_min: float = 1.0
    k: float = 8.0
    v_coef: float = 0.090
    bv_coef: float = 0.850
    color: Optional[Expr] = None  # over bv, temperature, v_mag; returns Vector(3) RGB

    def __post_init__(self):
        if isinstance(self.color, str):
            object.__setattr__(self, "color", parse(self.color))
        if self.r_min < 0 or self.k < 0:
            raise StarError("r_min and k must be non-negative")

    @classmethod
    def from_mapping(cls, m: Mapping[str, Any]) -> "StarConfig":
        unknown = set(m) - set(cls.__dataclass_fields__)
        if unknown:
            raise StarError(f"unknown star config keys: {', '.join(sorted(unknown))}")
        return cls(**m)


@dataclass(frozen=True)
class StarVisual:
    direction: tuple[float, float, float]
    distance: Optional[float]
    v_mag: float
    bv: float
    temperature: float
    color: tuple[int, int, int]
    radius_px: float


# -- ingestion ---------------------------------------------------------------

def _optional(row: Mapping[str, str], column: Optional[str]) -> Optional[float]:
    if column is None:
        return None
    text = (row.get(column) or "").strip()
    return float(text) if text else None


def parse_rows(rows: Iterable[Mapping[str, str]], header: Sequence[str], columns: ColumnMap,
               first_line: int = 2) -> tuple[list[StarRecord], list[tuple[int, str]]]:
    needed = [c for c in (columns.id, columns.ra, columns.dec, columns.parallax, columns.bt, columns.vt) if c]
    missing = [c for c in needed if c not in header]
    if missing:
        raise CatalogError(f"missing mapped column(s): {', '.join(missing)}")
    scale = math.pi / 180 if columns.angle_unit == "deg" else 1.0
    records, skipped = [], []
    for line, row in enumerate(rows, start=first_line):
        try:
            ra = float(row[columns.ra]) * scale
            dec = float(row[columns.dec]) * scale
            plx = _optional(row, columns.parallax)
            rec = StarRecord(
                row[columns.id].strip(), ra, dec, 0.0 if plx is None else plx,
                _optional(row, columns.bt), _optional(row, columns.vt),
            )
        except (StarError, ValueError, TypeError) as exc:
            skipped.append((line, str(exc)))
            continue
        records.append(rec)
    return records, skipped


def read_catalog(text: str, columns: ColumnMap = ColumnMap()) -> tuple[list[StarRecord], list[tuple[int, str]]]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise CatalogError("catalogue has no header")
    header = [h.strip() for h in reader.fieldnames]
    reader.fieldnames = header
    return parse_rows(reader, header, columns)


def load_catalog(path: Union[str, Path], columns: ColumnMap = ColumnMap()) -> tuple[list[StarRecord], list[tuple[int, str]]]:
    """Records plus (line number, reason) for each row that was skipped."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CatalogError(f"cannot read catalogue {path}: {exc}") from exc
    return read_catalog(text, columns)


# -- conversion --------------------------------------------------------------

def to_direction(ra: float, dec: float) -> tuple[float, float, float]:
    c = math.cos(dec)
    return (c * math.cos(ra), c * math.sin(ra), math.sin(dec))


def magnitudes(rec: StarRecord, config: StarConfig = StarConfig()) -> tuple[float, float]:
    """Johnson (V, B-V) from Tycho BT/VT; a lone magnitude is taken as V with B-V = 0."""
    if rec.bt is not None and rec.vt is not None:
        d = rec.bt - rec.vt
        return rec.vt - config.v_coef * d, config.bv_coef * d
    return (rec.vt if rec.vt is not None else rec.bt), 0.0


def temperature(bv: float) -> float:
    return 4600 * (1 / (0.92 * bv + 1.7) + 1 / (0.92 * bv + 0.62))


def blackbody_rgb(kelvin: float) -> tuple[int, int, int]:
    """Piecewise fit of blackbody color (Tanner Helland), valid roughly 1000-40000 K."""
    t = kelvin / 100
    if t <= 66:
        r = 255.0
        g = 99.4708025861 * math.log(t) - 161.1195681661 if t > 0 else 0.0
    else:
        r = 329.698727446 * (t - 60) ** -0.1332047592
        g = 288.1221695283 * (t - 60) ** -0.0755148492
    if t >= 66:
        b = 255.0
    elif t <= 19:
        b = 0.0
    else:
        b = 138.5177312231 * math.log(t - 10) - 305.0447927307
    return tuple(int(min(255.0, max(0.0, math.floor(c + 0.5)))) for c in (r, g, b))


def radius(v_mag: float, config: StarConfig = StarConfig()) -> float:
    return max(config.r_min, config.k * 10 ** (-v_mag / 5))


def visual(rec: StarRecord, config: StarConfig = StarConfig()) -> StarVisual:
    v, bv = magnitudes(rec, config)
    temp = temperature(bv)
    if config.color is not None:
        value = evaluate(config.color, {"bv": bv, "temperature": temp, "v_mag": v})
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != (3,):
            raise FormulaTypeError("star color formula must return Vector(3)")
        color = tuple(int(min(255.0, max(0.0, math.floor(c + 0.5)))) for c in arr.tolist())
    else:
        color = blackbody_rgb(temp)
    distance = 1000 / rec.parallax if rec.parallax > PARALLAX_FLOOR else None
    return StarVisual(to_direction(rec.ra, rec.dec), distance, v, bv, temp, color, radius(v, config))


# -- filtering ---------------------------------------------------------------

def check_predicate(predicate: Union[str, Expr]) -> Expr:
    expr = parse(predicate) if isinstance(predicate, str) else predicate
    names = free_variables(expr)
    for name in sorted(names):
        if name not in PREDICATE_NAMES:
            raise UnknownNameError(name)
    tag = infer(expr, {n: REAL for n in PREDICATE_NAMES})
    if tag != BOOLEAN:
        raise FormulaTypeError(f"filter predicate must be Boolean, not {tag}")
    return expr


def filter_records(records: Sequence[StarRecord], predicate: Union[str, Expr],
                   config: StarConfig = StarConfig()) -> list[StarRecord]:
    """Records for which `predicate` holds, in input order.

    A record missing an optional field the predicate mentions is dropped.
    """
    expr = check_predicate(predicate)
    used = free_variables(expr)
    kept = []
    for rec in records:
        if ("bt" in used and rec.bt is None) or ("vt" in used and rec.vt is None):
            continue
        env = {"ra": rec.ra, "dec": rec.dec, "parallax": rec.parallax,
               "v_mag": magnitudes(rec, config)[0]}
        if rec.bt is not None:
            env["bt"] = rec.bt
        if rec.vt is not None:
            env["vt"] = rec.vt
        if evaluate(expr, env) is True:
            kept.append(rec)
    return kept


# -- export ------------------------------------------------------------------

EXPORT_HEADER = ("id", "ra_rad", "dec_rad", "parallax_mas", "bt", "vt", "v_mag", "dist_pc", "r", "g", "b")


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def export_csv(records: Sequence[StarRecord], config: StarConfig = StarConfig()) -> str:
    """Canonical schema (radians, mas) plus computed v_mag, dist_pc and r, g, b."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EXPORT_HEADER)
    for rec in records:
        vis = visual(rec, config)
        w.writerow([
            rec.id, _fmt(rec.ra), _fmt(rec.dec), _fmt(rec.parallax), _fmt(rec.bt), _fmt(rec.vt),
            _fmt(vis.v_mag), _fmt(vis.distance), *vis.color,
        ])
    return buf.getvalue()
