"""MILP instances in ``A x >= b`` form with explicit bound rows, plus I/O.

Every variable ``j`` owns two rows: ``x_j >= l_j`` and ``-x_j >= -u_j``.
Rows of a family of instances are indexed positionally, so certificates
computed on one member can be replayed on another as long as row order and
count agree.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

EPS_FEAS = 1e-7
EPS_EQ = 1e-6
DEFAULT_UPPER = 1e6

STRUCTURAL = "structural"
LOWER = "lower"
UPPER = "upper"


class RowKind(NamedTuple):
    kind: str
    var: int = -1


class ParseError(ValueError):
    """Raised when an instance file cannot be read."""

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line


class UnsupportedFeatureError(ParseError):
    pass


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """One member of a parametric MILP family: ``min c x  s.t.  A x >= b``."""

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    integers: tuple[int, ...]
    row_kinds: tuple[RowKind, ...]
    parent: str | None = None

    def __post_init__(self):
        A = _frozen(self.A, 2)
        m, n = A.shape
        b = _frozen(self.b, 1)
        c = _frozen(self.c, 1)
        if b.shape != (m,):
            raise ValueError(f"rhs has length {b.shape[0]}, expected {m}")
        if c.shape != (n,):
            raise ValueError(f"objective has length {c.shape[0]}, expected {n}")
        if len(self.row_kinds) != m:
            raise ValueError(f"{len(self.row_kinds)} row kinds for {m} rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "integers", tuple(sorted(int(j) for j in self.integers)))
        object.__setattr__(self, "row_kinds", tuple(RowKind(*rk) for rk in self.row_kinds))

    @classmethod
    def from_parts(cls, name: str, A_struct, b_struct, c, lb, ub,
                   integers: Iterable[int] = (), parent: str | None = None) -> "Instance":
        """Build the canonical layout: structural rows, then (lower, upper) per variable."""
        c = np.asarray(c, dtype=float)
        n = c.shape[0]
        A_struct = np.asarray(A_struct, dtype=float).reshape(-1, n)
        b_struct = np.asarray(b_struct, dtype=float).reshape(-1)
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        bound_rows = np.zeros((2 * n, n))
        bound_rhs = np.zeros(2 * n)
        kinds = [RowKind(STRUCTURAL)] * A_struct.shape[0]
        for j in range(n):
            bound_rows[2 * j, j] = 1.0
            bound_rhs[2 * j] = lb[j]
            bound_rows[2 * j + 1, j] = -1.0
            bound_rhs[2 * j + 1] = -ub[j]
            kinds += [RowKind(LOWER, j), RowKind(UPPER, j)]
        return cls(name, np.vstack([A_struct, bound_rows]), np.concatenate([b_struct, bound_rhs]),
                   c, tuple(integers), tuple(kinds), parent)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def structural_rows(self) -> np.ndarray:
        return np.array([i for i, rk in enumerate(self.row_kinds) if rk.kind == STRUCTURAL], dtype=int)

    def bound_row(self, j: int, kind: str) -> int | None:
        for i, rk in enumerate(self.row_kinds):
            if rk.kind == kind and rk.var == j:
                return i
        return None

    @property
    def lower(self) -> np.ndarray:
        lb = np.zeros(self.n)
        for i, rk in enumerate(self.row_kinds):
            if rk.kind == LOWER:
                lb[rk.var] = self.b[i] / self.A[i, rk.var]
        return lb

    @property
    def upper(self) -> np.ndarray:
        ub = np.full(self.n, math.inf)
        for i, rk in enumerate(self.row_kinds):
            if rk.kind == UPPER:
                ub[rk.var] = self.b[i] / self.A[i, rk.var]
        return ub

    def same_layout(self, other: "Instance") -> bool:
        return (self.A.shape == other.A.shape and self.integers == other.integers
                and self.row_kinds == other.row_kinds)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.name == other.name and self.parent == other.parent
                and self.same_layout(other)
                and self.A.tobytes() == other.A.tobytes()
                and self.b.tobytes() == other.b.tobytes()
                and self.c.tobytes() == other.c.tobytes())

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Cut:
    """The inequality ``alpha . x >= beta``."""

    alpha: np.ndarray
    beta: float
    provenance: str = "fresh"
    source: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        alpha = _frozen(self.alpha, 1)
        if not np.all(np.isfinite(alpha)) or not math.isfinite(self.beta):
            raise ValueError("cut entries must be finite")
        if self.provenance not in ("fresh", "pdc", "spdc"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", float(self.beta))

    def violation(self, x) -> float:
        """Amount by which ``x`` violates the cut (positive means cut off)."""
        return self.beta - float(self.alpha @ np.asarray(x, dtype=float))

    def normalized(self) -> "Cut":
        scale = float(np.max(np.abs(self.alpha)))
        if scale == 0.0:
            return self
        return Cut(self.alpha / scale, self.beta / scale, self.provenance, self.source, dict(self.meta))

    def to_json(self) -> dict:
        return {"alpha": self.alpha.tolist(), "beta": self.beta, "provenance": self.provenance,
                "source": self.source, **({"meta": self.meta} if self.meta else {})}

    @classmethod
    def from_json(cls, d: dict) -> "Cut":
        return cls(np.array(d["alpha"], dtype=float), d["beta"], d.get("provenance", "fresh"),
                   d.get("source", ""), d.get("meta", {}))


# --- validation ----------------------------------------------------------------

def validate_instance(inst: Instance) -> list[str]:
    """Return one diagnostic per violated instance invariant (empty if well formed)."""
    diags = []
    n = inst.n
    if not (np.all(np.isfinite(inst.A)) and np.all(np.isfinite(inst.b)) and np.all(np.isfinite(inst.c))):
        diags.append("non-finite entries in A, b or c")
    for j in inst.integers:
        if not 0 <= j < n:
            diags.append(f"integer index {j} out of range [0, {n})")
    lows: dict[int, list[int]] = {j: [] for j in range(n)}
    ups: dict[int, list[int]] = {j: [] for j in range(n)}
    for i, rk in enumerate(inst.row_kinds):
        if rk.kind == STRUCTURAL:
            continue
        if rk.kind not in (LOWER, UPPER) or not 0 <= rk.var < n:
            diags.append(f"row {i}: bad row kind {rk}")
            continue
        row = inst.A[i]
        expect = 1.0 if rk.kind == LOWER else -1.0
        others = np.delete(row, rk.var)
        if row[rk.var] != expect or np.any(others != 0):
            diags.append(f"row {i}: {rk.kind} bound row of x{rk.var + 1} is not a unit row")
            continue
        (lows if rk.kind == LOWER else ups)[rk.var].append(i)
    for j in range(n):
        name = f"x{j + 1}"
        for label, rows in (("lower", lows[j]), ("upper", ups[j])):
            if len(rows) == 0:
                diags.append(f"missing {label} bound row for {name}")
            elif len(rows) > 1:
                diags.append(f"{len(rows)} {label} bound rows for {name}")
        if len(lows[j]) == 1 and len(ups[j]) == 1:
            lo = inst.b[lows[j][0]]
            up = -inst.b[ups[j][0]]
            if lo < 0:
                diags.append(f"negative lower bound on {name}")
            if up < lo:
                diags.append(f"crossed bounds on {name}")
    return diags


# --- perturbation ----------------------------------------------------------------

def perturb_element(inst: Instance, element: str, new_values, suffix: str = "p",
                    rows: Sequence[int] | None = None) -> Instance:
    """Replace ``A`` (structural rows), ``b`` (structural rhs) or ``c``.

    ``new_values`` covers the structural block only for ``A``/``b``; passing a
    full-height matrix or vector is accepted when its bound part is unchanged.
    """
    struct = inst.structural_rows if rows is None else np.asarray(rows, dtype=int)
    if rows is not None:
        for i in struct:
            if inst.row_kinds[i].kind != STRUCTURAL:
                raise ValueError(f"row {i} is a bound row; bound rows are never perturbed")
    new_values = np.asarray(new_values, dtype=float)
    A, b, c = inst.A.copy(), inst.b.copy(), inst.c.copy()
    if element == "c":
        if new_values.shape != c.shape:
            raise ValueError(f"objective needs shape {c.shape}, got {new_values.shape}")
        c = new_values
    elif element == "b":
        if new_values.shape == b.shape and rows is None:
            if not np.array_equal(np.delete(new_values, struct), np.delete(b, struct)):
                raise ValueError("perturbing bound rows is not allowed")
            b = new_values
        elif new_values.shape == (len(struct),):
            b[struct] = new_values
        else:
            raise ValueError(f"rhs needs shape ({len(struct)},), got {new_values.shape}")
    elif element == "A":
        if new_values.shape == A.shape and rows is None:
            if not np.array_equal(np.delete(new_values, struct, axis=0), np.delete(A, struct, axis=0)):
                raise ValueError("perturbing bound rows is not allowed")
            A = new_values
        elif new_values.shape == (len(struct), inst.n):
            A[struct] = new_values
        else:
            raise ValueError(f"matrix needs shape ({len(struct)}, {inst.n}), got {new_values.shape}")
    else:
        raise ValueError(f"element must be one of A, b, c; got {element!r}")
    return Instance(f"{inst.name}~{suffix}", A, b, c, inst.integers, inst.row_kinds,
                    parent=inst.parent or inst.name)


# --- JSON ------------------------------------------------------------------------

def instance_to_json(inst: Instance) -> dict:
    rows = []
    for i in inst.structural_rows:
        coeffs = {str(j): float(v) for j, v in enumerate(inst.A[i])
                  if v != 0.0 or math.copysign(1.0, v) < 0}
        rows.append({"coeffs": coeffs, "rhs": float(inst.b[i]), "sense": ">="})
    lb, ub = inst.lower, inst.upper
    d = {"name": inst.name, "numVars": inst.n, "objective": inst.c.tolist(), "rows": rows,
         "bounds": [{"var": j, "lb": float(lb[j]), "ub": float(ub[j])} for j in range(inst.n)],
         "integers": list(inst.integers)}
    if inst.parent:
        d["parent"] = inst.parent
    return d


def instance_from_json(d: dict, path: str | None = None) -> Instance:
    try:
        n = int(d["numVars"])
        c = np.array(d.get("objective", [0.0] * n), dtype=float)
        if c.shape != (n,):
            raise ParseError(f"objective has {c.shape[0]} entries, numVars is {n}", path=path)
        A_rows, b_rows = [], []
        for r, row in enumerate(d.get("rows", [])):
            coeffs = np.zeros(n)
            for key, val in row["coeffs"].items():
                j = int(key)
                if not 0 <= j < n:
                    raise ParseError(f"rows[{r}]: variable index {j} out of range", path=path)
                coeffs[j] = float(val)
            rhs = float(row["rhs"])
            sense = row.get("sense", ">=")
            if sense == ">=":
                A_rows.append(coeffs)
                b_rows.append(rhs)
            elif sense == "<=":
                A_rows.append(-coeffs)
                b_rows.append(-rhs)
            elif sense == "=":
                A_rows += [coeffs, -coeffs]
                b_rows += [rhs, -rhs]
            else:
                raise ParseError(f"rows[{r}].sense: unknown sense {sense!r}", path=path)
        lb = np.zeros(n)
        ub = np.full(n, DEFAULT_UPPER)
        for k, bd in enumerate(d.get("bounds", [])):
            j = int(bd["var"])
            if not 0 <= j < n:
                raise ParseError(f"bounds[{k}]: variable index {j} out of range", path=path)
            if bd.get("lb") is not None:
                lb[j] = float(bd["lb"])
            if bd.get("ub") is not None:
                ub[j] = float(bd["ub"])
        integers = [int(j) for j in d.get("integers", [])]
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}", path=path) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc), path=path) from None
    A = np.array(A_rows, dtype=float).reshape(-1, n)
    return Instance.from_parts(d.get("name", "unnamed"), A, np.array(b_rows, dtype=float), c,
                               lb, ub, integers, parent=d.get("parent"))


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_json(inst), indent=1))


def load_instance(path, format: str | None = None) -> Instance:
    path = Path(path)
    if format is None:
        format = "mps" if path.suffix.lower() in (".mps", ".mps-subset") else "json"
    text = path.read_text()
    if format == "json":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno, path=str(path)) from None
        return instance_from_json(d, path=str(path))
    if format in ("mps", "mps-subset"):
        return parse_mps(text, path=str(path))
    raise ValueError(f"unknown format {format!r}")


# --- MPS subset --------------------------------------------------------------------

_SECTIONS = {"NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"}
_UNSUPPORTED = {"RANGES", "SOS", "QUADOBJ", "QMATRIX", "QSECTION", "QCMATRIX",
                "INDICATORS", "LAZYCONS", "USERCUTS", "OBJSENSE", "OBJSENSE MAX", "PWLOBJ"}


def parse_mps(text: str, path: str | None = None) -> Instance:
    """Read the fixed subset NAME/ROWS/COLUMNS/RHS/BOUNDS of free-format MPS."""
    name = "unnamed"
    section = None
    obj_row = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    cols: dict[str, int] = {}
    entries: dict[tuple[str, int], float] = {}
    rhs: dict[str, float] = {}
    integer_cols: set[int] = set()
    lb: dict[int, float] = {}
    ub: dict[int, float] = {}
    in_int = False

    def col_index(cname: str) -> int:
        if cname not in cols:
            cols[cname] = len(cols)
        return cols[cname]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("*"):
            continue
        tok = line.split()
        if not raw[0].isspace():
            head = tok[0].upper()
            if head in _UNSUPPORTED or head.startswith("OBJSENSE"):
                raise UnsupportedFeatureError(f"unsupported MPS section {head}", line=lineno, path=path)
            if head not in _SECTIONS:
                raise ParseError(f"unknown section {tok[0]!r}", line=lineno, path=path)
            section = head
            if head == "NAME" and len(tok) > 1:
                name = tok[1]
            if head == "ENDATA":
                break
            continue
        if section == "ROWS":
            if len(tok) != 2:
                raise ParseError("ROWS entry needs a sense and a name", line=lineno, path=path)
            sense, rname = tok[0].upper(), tok[1]
            if sense == "N":
                if obj_row is None:
                    obj_row = rname
                continue
            if sense not in ("G", "L", "E"):
                raise ParseError(f"unknown row sense {tok[0]!r}", line=lineno, path=path)
            row_sense[rname] = sense
            row_order.append(rname)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1].strip("'").upper() == "MARKER":
                marker = tok[2].strip("'").upper()
                if marker == "INTORG":
                    in_int = True
                elif marker == "INTEND":
                    in_int = False
                else:
                    raise ParseError(f"unknown marker {tok[2]!r}", line=lineno, path=path)
                continue
            if len(tok) not in (3, 5):
                raise ParseError("COLUMNS entry needs column and (row, value) pairs", line=lineno, path=path)
            j = col_index(tok[0])
            if in_int:
                integer_cols.add(j)
            for rname, val in zip(tok[1::2], tok[2::2]):
                try:
                    v = float(val)
                except ValueError:
                    raise ParseError(f"bad number {val!r}", line=lineno, path=path) from None
                if rname != obj_row and rname not in row_sense:
                    raise ParseError(f"unknown row {rname!r}", line=lineno, path=path)
                entries[(rname, j)] = v
        elif section == "RHS":
            pairs = tok[1:] if len(tok) in (3, 5) else tok
            if len(pairs) not in (2, 4):
                raise ParseError("RHS entry needs (row, value) pairs", line=lineno, path=path)
            for rname, val in zip(pairs[0::2], pairs[1::2]):
                if rname == obj_row:
                    raise UnsupportedFeatureError("objective constant in RHS", line=lineno, path=path)
                if rname not in row_sense:
                    raise ParseError(f"unknown row {rname!r}", line=lineno, path=path)
                try:
                    rhs[rname] = float(val)
                except ValueError:
                    raise ParseError(f"bad number {val!r}", line=lineno, path=path) from None
        elif section == "BOUNDS":
            if len(tok) < 3:
                raise ParseError("BOUNDS entry too short", line=lineno, path=path)
            btype = tok[0].upper()
            cname = tok[2]
            if cname not in cols:
                raise ParseError(f"unknown column {cname!r}", line=lineno, path=path)
            j = cols[cname]
            val = None
            if btype not in ("BV", "FR", "MI", "PL"):
                if len(tok) < 4:
                    raise ParseError(f"{btype} bound needs a value", line=lineno, path=path)
                try:
                    val = float(tok[3])
                except ValueError:
                    raise ParseError(f"bad number {tok[3]!r}", line=lineno, path=path) from None
            if btype in ("UP", "UI"):
                ub[j] = val
            elif btype in ("LO", "LI"):
                lb[j] = val
            elif btype == "FX":
                lb[j] = ub[j] = val
            elif btype == "BV":
                lb[j], ub[j] = 0.0, 1.0
                integer_cols.add(j)
            elif btype == "PL":
                ub[j] = DEFAULT_UPPER
            elif btype in ("FR", "MI"):
                raise UnsupportedFeatureError(f"free/negative variables ({btype})", line=lineno, path=path)
            else:
                raise UnsupportedFeatureError(f"bound type {btype}", line=lineno, path=path)
            if btype in ("LI", "UI"):
                integer_cols.add(j)
        else:
            raise ParseError("data line outside of a section", line=lineno, path=path)

    n = len(cols)
    c = np.zeros(n)
    A_rows, b_rows = [], []
    for (rname, j), v in entries.items():
        if rname == obj_row:
            c[j] = v
    for rname in row_order:
        coeffs = np.zeros(n)
        for j in range(n):
            coeffs[j] = entries.get((rname, j), 0.0)
        r = rhs.get(rname, 0.0)
        sense = row_sense[rname]
        if sense == "G":
            A_rows.append(coeffs)
            b_rows.append(r)
        elif sense == "L":
            A_rows.append(-coeffs)
            b_rows.append(-r)
        else:
            A_rows += [coeffs, -coeffs]
            b_rows += [r, -r]
    lbv = np.array([lb.get(j, 0.0) for j in range(n)])
    ubv = np.array([ub.get(j, DEFAULT_UPPER) for j in range(n)])
    return Instance.from_parts(name, np.array(A_rows).reshape(-1, n), np.array(b_rows), c,
                               lbv, ubv, sorted(integer_cols))
