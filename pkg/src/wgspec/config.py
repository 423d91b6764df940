"""Run configuration: the versioned JSON schema and its validation.

Schema "wgspec-1".  Validation is strict (unknown keys rejected) and errors
carry the offending field path.
"""

import json
from dataclasses import dataclass, field

from .errors import ConfigError, PayloadValidationError
from .stripgrid import spec_from_config

SCHEMA = "wgspec-1"
DEFAULT_SEED = 0x5EED

_KNOWN_TOP = {"schema", "geometry", "perturbations", "ladder", "solver", "outputs",
              "verify", "transverse"}
_KNOWN_GEOM = {"d", "h", "margin"}
_KNOWN_LADDER = {"l", "l_start", "l_stop", "l_step"}
_KNOWN_SOLVER = {"max_pairs", "seed", "jobs", "matrix_a", "lanczos_tol"}
_KNOWN_OUTPUTS = {"dir", "formats"}
_KNOWN_VERIFY = {"theorems"}
_KNOWN_TRANSVERSE = {"count", "fd_check", "Ny"}
_THEOREMS = {"two-sided", "one-sided", "matrix-A", "convergence"}


@dataclass
class RunConfig:
    d: float
    h: float
    spec_minus: object = None
    spec_plus: object = None
    l_values: list = field(default_factory=list)
    margin_override: float | None = None
    max_pairs: int = 8
    seed: int = DEFAULT_SEED
    jobs: int = 1
    matrix_a: bool = True
    theorems: list = field(default_factory=list)
    out_dir: str = "out"
    formats: list = field(default_factory=lambda: ["json", "csv", "svg"])
    transverse_count: int = 5
    transverse_fd: bool = False
    transverse_Ny: int = 200
    raw: dict = field(default_factory=dict, repr=False)


def _require(cond, path, message):
    if not cond:
        raise ConfigError(path, message)


def _check_keys(obj, known, path):
    _require(isinstance(obj, dict), path, "expected an object")
    for key in obj:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")


def _positive(value, path):
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             path, "expected a number")
    _require(value > 0, path, "must be positive")
    return float(value)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"malformed JSON: {exc}") from exc
    return parse_config(data)


def parse_config(data):
    _check_keys(data, _KNOWN_TOP, "$")
    _require(data.get("schema") == SCHEMA, "$.schema", f"expected {SCHEMA!r}")

    geom = data.get("geometry")
    _require(geom is not None, "$.geometry", "required section missing")
    _check_keys(geom, _KNOWN_GEOM, "$.geometry")
    d = _positive(geom.get("d", 0), "$.geometry.d")
    h = _positive(geom.get("h", 0), "$.geometry.h")
    margin = geom.get("margin")
    if margin is not None:
        margin = _positive(margin, "$.geometry.margin")

    spec_minus = spec_plus = None
    perts = data.get("perturbations", {})
    _check_keys(perts, {"minus", "plus"}, "$.perturbations")
    for name in ("minus", "plus"):
        entry = perts.get(name)
        if entry is None:
            continue
        try:
            spec = spec_from_config(entry)
        except (PayloadValidationError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"$.perturbations.{name}", str(exc)) from exc
        _positive(spec.a, f"$.perturbations.{name}.a")
        if name == "minus":
            spec_minus = spec
        else:
            spec_plus = spec

    ladder = data.get("ladder", {})
    _check_keys(ladder, _KNOWN_LADDER, "$.ladder")
    if "l" in ladder:
        ls = ladder["l"]
        _require(isinstance(ls, list) and ls, "$.ladder.l", "expected a non-empty list")
        l_values = []
        for i, v in enumerate(ls):
            l_values.append(_positive(v, f"$.ladder.l[{i}]"))
    elif ladder:
        start = _positive(ladder.get("l_start", 0), "$.ladder.l_start")
        stop = _positive(ladder.get("l_stop", 0), "$.ladder.l_stop")
        step = _positive(ladder.get("l_step", 1), "$.ladder.l_step")
        _require(stop >= start, "$.ladder.l_stop", "must be >= l_start")
        l_values = []
        v = start
        while v <= stop + 1e-9:
            l_values.append(round(v, 12))
            v += step
    else:
        l_values = []
    a_sum = (spec_minus.a if spec_minus else 0.0) + (spec_plus.a if spec_plus else 0.0)
    for i, l in enumerate(l_values):
        _require(l >= a_sum, f"$.ladder.l[{i}]",
                 f"separation {l} below the support sum {a_sum}")

    solver = data.get("solver", {})
    _check_keys(solver, _KNOWN_SOLVER, "$.solver")
    max_pairs = int(solver.get("max_pairs", 8))
    _require(max_pairs >= 1, "$.solver.max_pairs", "must be >= 1")
    seed = int(solver.get("seed", DEFAULT_SEED))
    jobs = int(solver.get("jobs", 1))
    _require(jobs >= 1, "$.solver.jobs", "must be >= 1")
    matrix_a = bool(solver.get("matrix_a", True))

    outputs = data.get("outputs", {})
    _check_keys(outputs, _KNOWN_OUTPUTS, "$.outputs")
    out_dir = outputs.get("dir", "out")
    formats = outputs.get("formats", ["json", "csv", "svg"])
    _require(isinstance(formats, list), "$.outputs.formats", "expected a list")
    for i, fmt in enumerate(formats):
        _require(fmt in {"json", "csv", "svg"}, f"$.outputs.formats[{i}]",
                 "expected one of json/csv/svg")

    ver = data.get("verify", {})
    _check_keys(ver, _KNOWN_VERIFY, "$.verify")
    theorems = ver.get("theorems", [])
    for i, t in enumerate(theorems):
        _require(t in _THEOREMS, f"$.verify.theorems[{i}]",
                 f"expected one of {sorted(_THEOREMS)}")

    trans = data.get("transverse", {})
    _check_keys(trans, _KNOWN_TRANSVERSE, "$.transverse")

    return RunConfig(
        d=d,
        h=h,
        spec_minus=spec_minus,
        spec_plus=spec_plus,
        l_values=l_values,
        margin_override=margin,
        max_pairs=max_pairs,
        seed=seed,
        jobs=jobs,
        matrix_a=matrix_a,
        theorems=list(theorems),
        out_dir=out_dir,
        formats=list(formats),
        transverse_count=int(trans.get("count", 5)),
        transverse_fd=bool(trans.get("fd_check", False)),
        transverse_Ny=int(trans.get("Ny", 200)),
        raw=data,
    )


def dump_json(obj, path=None):
    """Deterministic JSON serialization (sorted keys, repr-exact floats)."""
    text = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
