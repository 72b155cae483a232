"""Reading points and scenario files; writing and reading result tables."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidConfig, ParseError
from .geometry import LinePair
from .simulate import DEFAULT_DIST_PARAMS, Distribution, ScenarioConfig

__all__ = [
    "parse_points",
    "read_points",
    "parse_scenario",
    "read_scenario",
    "format_float",
    "write_csv",
    "read_csv",
    "dump_json",
    "load_json",
]

JSON_SCHEMA = 1


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def parse_points(text: str) -> np.ndarray:
    """Two comma-separated numeric columns; ``#`` comments, blank lines and one leading header are skipped."""
    rows = []
    seen_data = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = [t.strip() for t in line.split(",")]
        if len(toks) != 2:
            raise ParseError(f"line {lineno}: expected 2 columns, found {len(toks)}", lineno, None)
        if not seen_data and not any(_is_number(t) for t in toks):
            seen_data = True  # header
            continue
        seen_data = True
        vals = []
        for col, tok in enumerate(toks, start=1):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"line {lineno}, column {col}: not a number: {tok!r}", lineno, col) from None
            if not math.isfinite(v):
                raise ParseError(f"line {lineno}, column {col}: value is not finite", lineno, col)
            vals.append(v)
        rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, 2)


def read_points(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return parse_points(fh.read())


def _parse_value(key, value):
    if "," in value:
        return tuple(float(v) for v in value.split(",") if v.strip())
    return float(value)


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_scenario(text: str, default_seed=0) -> ScenarioConfig:
    """``key = value`` lines.

    Keys: ``distribution``, ``n``, ``sigma``, ``reps``, ``seed``,
    ``protocol`` (``functional`` or ``structural``), ``lines``
    (``k1, h1, k2, h2``) and any distribution parameter of
    :data:`DEFAULT_DIST_PARAMS` (lists comma separated). Without a
    ``seed`` key, ``default_seed`` is used (called first if callable).
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"scenario line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise InvalidConfig(f"scenario line {lineno}: duplicate key {key!r}")
        raw[key] = (lineno, value)
    if "distribution" not in raw:
        raise InvalidConfig("scenario must set distribution")
    dist = Distribution.parse(raw.pop("distribution")[1])
    kwargs = {"distribution": dist}
    params = {}
    try:
        for key, (lineno, value) in raw.items():
            if key in ("n", "reps", "seed"):
                kwargs[key] = int(value)
            elif key == "sigma":
                kwargs[key] = float(value)
            elif key == "protocol":
                if value.lower() not in ("functional", "structural"):
                    raise InvalidConfig(f"scenario line {lineno}: protocol must be functional or structural")
                kwargs["functional"] = value.lower() == "functional"
            elif key == "lines":
                k1, h1, k2, h2 = (float(v) for v in value.split(","))
                kwargs["lines"] = LinePair.from_explicit(k1, h1, k2, h2)
            elif key in DEFAULT_DIST_PARAMS[dist]:
                params[key] = _parse_value(key, value)
            else:
                raise InvalidConfig(f"scenario line {lineno}: unknown key {key!r}")
    except ValueError as exc:
        if isinstance(exc, InvalidConfig):
            raise
        raise InvalidConfig(f"scenario: bad value ({exc})") from exc
    if "seed" not in kwargs:
        kwargs["seed"] = default_seed() if callable(default_seed) else default_seed
    return ScenarioConfig(dist_params=params, **kwargs)


def read_scenario(path, default_seed=0) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), default_seed)


def format_float(v) -> str:
    """Shortest text that parses back to the same float; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(fh, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) for v in row])


def read_csv(text: str):
    """Inverse of :func:`write_csv`: numeric cells become floats, empty cells ``None``."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    out = []
    for row in reader:
        if not row:
            continue
        rec = {}
        for k, v in zip(header, row):
            if v == "":
                rec[k] = None
            elif _is_number(v):
                rec[k] = float(v)
            elif v in ("true", "false"):
                rec[k] = v == "true"
            else:
                rec[k] = v
        out.append(rec)
    return header, out


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


def dump_json(payload: dict) -> str:
    return json.dumps({"schema": JSON_SCHEMA, **_jsonable(payload)}, indent=2)


def load_json(text: str) -> dict:
    data = json.loads(text)
    if data.get("schema") != JSON_SCHEMA:
        raise ParseError(f"unsupported report schema {data.get('schema')!r}")
    return data
