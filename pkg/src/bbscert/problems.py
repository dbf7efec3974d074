"""Benchmark problems and the TOML problem format.

A problem file has five tables::

    [problem]    name, variables, x0, T
    [fields]     one entry per vertex field: a list of component expressions
    [cost]       terminal = "...", optionally running = "..." (Bolza form)
    [structure]  edge = [i1, i2, i3] (1-based or vertex names), guess = {...}
    [solver]     numerical settings, all optional

A running cost is folded into the dynamics by appending one state with zero
initial value whose derivative is the running cost on every vertex.
"""
from __future__ import annotations

import itertools
import re
import sys
from dataclasses import asdict, dataclass, field, fields as dc_fields, replace
from typing import Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
import tomli_w

from .extremal import ControlAffineProblem, PolynomialCost, ShootingGuess
from .fieldalg import PolynomialField
from .poly import Polynomial, PolynomialParseError, parse_polynomial, valid_name

MAX_BILINEAR_CONTROLS = 12


class ConfigError(ValueError):
    """Invalid problem file; ``line``/``column`` locate the offending text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = [f"{k} {v}" for k, v in (("line", line), ("column", column)) if v is not None]
        super().__init__(message + (f" ({', '.join(where)})" if where else ""))


@dataclass(frozen=True)
class Settings:
    rtol: float = 1e-10
    atol: float = 1e-12
    shoot_tol: float = 1e-9
    max_iter: int = 30
    grid: int = 400
    margin: float = 0.0
    delta_fraction: float = 1e-3
    lq_grid: int = 201
    oracle_n: int = 128
    probe_grid: int = 50
    probe_samples: int = 6
    iota_grid: int = 20
    trials: int = 100
    tube_radius: float = 0.05
    seed: int = 0

    @classmethod
    def from_mapping(cls, data: dict) -> "Settings":
        known = {f.name: f.type for f in dc_fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown solver settings: {sorted(unknown)}")
        base = cls()
        out = {}
        for k, v in data.items():
            default = getattr(base, k)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"solver setting {k!r} must be numeric")
            out[k] = type(default)(v)
        return replace(base, **out)


@dataclass(frozen=True)
class ProblemConfig:
    """Parsed problem file, before augmentation."""

    name: str
    names: tuple[str, ...]
    vertex_names: tuple[str, ...]
    vertices: tuple[tuple[Polynomial, ...], ...]
    terminal: Polynomial
    running: Polynomial | None
    x0: tuple[float, ...]
    T: float
    edge: tuple[int, int, int]
    guess: dict | None
    settings: Settings = field(default_factory=Settings)

    @property
    def is_bolza(self) -> bool:
        return self.running is not None

    def augmented_names(self) -> tuple[str, ...]:
        if not self.is_bolza:
            return self.names
        extra = "x_run"
        while extra in self.names:
            extra += "_"
        return self.names + (extra,)

    def build(self) -> tuple[ControlAffineProblem, ShootingGuess | None]:
        n = len(self.names)
        if self.is_bolza:
            lift = _append_variable
            comps = [tuple(lift(c) for c in v) + (lift(self.running),) for v in self.vertices]
            cost = lift(self.terminal) + Polynomial.variable(n + 1, n)
            x0 = np.append(self.x0, 0.0)
        else:
            comps = [tuple(v) for v in self.vertices]
            cost = self.terminal
            x0 = np.asarray(self.x0, dtype=float)
        prob = ControlAffineProblem(
            fields=tuple(PolynomialField(c) for c in comps),
            cost=PolynomialCost(cost),
            x0=x0,
            T=self.T,
            edge=self.edge,
            names=self.augmented_names(),
            label=self.name,
        )
        return prob, _guess(self.guess, prob) if self.guess is not None else None


def _append_variable(p: Polynomial) -> Polynomial:
    return Polynomial(p.nvars + 1, {e + (0,): c for e, c in p.terms.items()})


def _guess(g: dict, prob: ControlAffineProblem) -> ShootingGuess:
    xT = np.asarray(g["x_T"], dtype=float)
    if xT.size == prob.dim - 1:
        # Bolza guess over the declared states: start the running cost at zero
        xT = np.append(xT, 0.0)
    if xT.size != prob.dim:
        raise ConfigError(f"guess x_T has {xT.size} entries, expected {prob.dim}")
    return ShootingGuess(xT, float(g["tau1"]), float(g["tau2"]))


# built-in problems -------------------------------------------------------------


VANDERPOL_TOML = """\
[problem]
name = "vanderpol"
variables = ["x1", "x2", "x3"]
x0 = [0.0, 1.0, 0.0]
T = 4.0

[fields]
h_minus = ["x2", "-x1 + x2*(1 - x1^2) - 1", "(x1^2 + x2^2)/2"]
h_plus = ["x2", "-x1 + x2*(1 - x1^2) + 1", "(x1^2 + x2^2)/2"]

[cost]
terminal = "x3"

[structure]
edge = ["h_minus", "h_plus", "h_minus"]
guess = { x_T = [0.5, 0.0, 2.0], tau1 = 1.37, tau2 = 2.46 }
"""


def vanderpol_problem() -> tuple[ControlAffineProblem, ShootingGuess]:
    """Van der Pol oscillator with running cost (x1^2 + x2^2)/2, Mayer form.

    Control ``u = -1`` is ``h1 = h3``, ``u = +1`` is ``h2``; ``f1 = (0, -2, 0)``.
    """
    x1, x2, x3 = (Polynomial.variable(3, i) for i in range(3))
    drift = -x1 + x2 * (1 - x1**2)
    run = 0.5 * (x1**2 + x2**2)
    h_minus = PolynomialField([x2, drift - 1, run])
    h_plus = PolynomialField([x2, drift + 1, run])
    prob = ControlAffineProblem(
        fields=(h_minus, h_plus),
        cost=PolynomialCost(x3),
        x0=np.array([0.0, 1.0, 0.0]),
        T=4.0,
        edge=(0, 1, 0),
        names=("x1", "x2", "x3"),
        label="vanderpol",
    )
    return prob, ShootingGuess(np.array([0.5, 0.0, 2.0]), 1.37, 2.46)


def bilinear_vertex_subsets(m: int) -> list[tuple[int, ...]]:
    """Subsets of ``{1..m}`` ordered by size, then lexicographically."""
    return [s for k in range(m + 1) for s in itertools.combinations(range(1, m + 1), k)]


def bilinear_to_mayer(A, B: Sequence, q, r, s, u_max, T: float, N0, edge=(0, 1, 0)) -> ControlAffineProblem:
    """Bilinear system ``N' = (A + sum u_j B_j) N`` with box controls ``[0, u_max_j]``.

    The box is rescaled to ``[0, 1]^m`` and the running cost
    ``<q, N> + <s, u>`` is carried by an extra state; vertices are
    ``f0 + sum_{j in S} f_j`` over subsets ``S`` in :func:`bilinear_vertex_subsets` order.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = [np.atleast_2d(np.asarray(b, dtype=float)) for b in B]
    m = len(B)
    if m > MAX_BILINEAR_CONTROLS:
        raise ValueError(f"{m} controls give 2^{m} vertices; at most {MAX_BILINEAR_CONTROLS} controls are supported")
    q, r, s, u_max, N0 = (np.asarray(v, dtype=float).ravel() for v in (q, r, s, u_max, N0))
    if A.shape != (n, n) or any(b.shape != (n, n) for b in B):
        raise ValueError("A and every B_j must be n x n")
    if q.size != n or r.size != n or N0.size != n or s.size != m or u_max.size != m:
        raise ValueError("q, r, N0 need n entries; s, u_max need m entries")
    if np.any(u_max <= 0):
        raise ValueError("u_max must be componentwise positive")
    C = [u * b for u, b in zip(u_max, B)]
    s_t = u_max * s
    f0 = np.zeros((n + 1, n + 1))
    f0[:n, :n] = A
    f0[n, :n] = q
    drift = [Polynomial.linear(row) for row in f0]
    fj = []
    for j in range(m):
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = C[j]
        comps = [Polynomial.linear(row) for row in M]
        comps[n] = Polynomial.constant(n + 1, s_t[j])
        fj.append(comps)
    vertices = []
    for subset in bilinear_vertex_subsets(m):
        comps = list(drift)
        for j in subset:
            comps = [a + b for a, b in zip(comps, fj[j - 1])]
        vertices.append(PolynomialField(comps))
    cost = PolynomialCost(Polynomial.linear(np.append(r, 1.0)))
    return ControlAffineProblem(
        fields=tuple(vertices), cost=cost, x0=np.append(N0, 0.0), T=float(T), edge=edge,
        names=tuple(f"N{i + 1}" for i in range(n)) + ("N_run",), label="bilinear",
    )


# parsing -------------------------------------------------------------------


def _locate(text: str, needle: str) -> tuple[int | None, int | None]:
    """1-based line and column of the first quoted occurrence of ``needle``."""
    for i, line in enumerate(text.splitlines(), start=1):
        for quote in ('"', "'"):
            j = line.find(quote + needle + quote)
            if j >= 0:
                return i, j + 2
    return None, None


def _parse_expr(expr, names, text: str, where: str) -> Polynomial:
    if not isinstance(expr, str):
        if isinstance(expr, (int, float)) and not isinstance(expr, bool):
            return Polynomial.constant(len(names), float(expr))
        raise ConfigError(f"{where}: expected an expression string")
    line, col0 = _locate(text, expr)
    try:
        return parse_polynomial(expr, names)
    except PolynomialParseError as exc:
        msg = str(exc).split(" (")[0]
        column = None if exc.column is None or col0 is None else col0 + exc.column - 1
        raise ConfigError(f"{where}: {msg}", line, column) from None


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required entry {key!r} in [{where}]")
    return table[key]


_TOML_POS = re.compile(r"at line (\d+), column (\d+)")


def parse_problem_config(text: str) -> ProblemConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _TOML_POS.search(str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ConfigError(f"malformed TOML: {str(exc).split(' (at')[0]}", line, col) from None

    for section in ("problem", "fields", "cost", "structure"):
        if section not in data or not isinstance(data[section], dict):
            raise ConfigError(f"missing [{section}] table")
    extra = set(data) - {"problem", "fields", "cost", "structure", "solver"}
    if extra:
        raise ConfigError(f"unknown tables: {sorted(extra)}")

    prob = data["problem"]
    names = tuple(_require(prob, "variables", "problem"))
    if not names or any(not isinstance(v, str) or not valid_name(v) for v in names):
        raise ConfigError("variables must be a non-empty list of identifiers")
    if len(set(names)) != len(names):
        raise ConfigError("variable names must be distinct")
    n = len(names)
    x0 = tuple(float(v) for v in _require(prob, "x0", "problem"))
    if len(x0) != n:
        raise ConfigError(f"x0 has {len(x0)} entries but {n} variables are declared")
    T = float(_require(prob, "T", "problem"))
    if not T > 0:
        raise ConfigError("T must be positive")

    vertex_names, vertices = [], []
    for vname, comps in data["fields"].items():
        if not isinstance(comps, list) or len(comps) != n:
            raise ConfigError(f"field {vname!r} must list {n} component expressions", *_locate(text, vname))
        vertex_names.append(vname)
        vertices.append(tuple(_parse_expr(c, names, text, f"field {vname!r}, component {i + 1}")
                              for i, c in enumerate(comps)))
    if not vertices:
        raise ConfigError("[fields] declares no vertex fields")

    cost = data["cost"]
    if "terminal" not in cost and "running" not in cost:
        raise ConfigError("[cost] needs a terminal and/or running expression")
    terminal = _parse_expr(cost.get("terminal", "0"), names, text, "terminal cost")
    running = _parse_expr(cost["running"], names, text, "running cost") if "running" in cost else None

    st = data["structure"]
    raw_edge = _require(st, "edge", "structure")
    if not isinstance(raw_edge, list) or len(raw_edge) != 3:
        raise ConfigError("edge must list three vertices (h1, h2, h3)")
    edge = []
    for e in raw_edge:
        if isinstance(e, str):
            if e not in vertex_names:
                raise ConfigError(f"edge refers to unknown vertex {e!r}", *_locate(text, e))
            edge.append(vertex_names.index(e))
        elif isinstance(e, int) and not isinstance(e, bool) and 1 <= e <= len(vertices):
            edge.append(e - 1)
        else:
            raise ConfigError(f"edge entry {e!r} is not a vertex name or 1-based index")
    guess = st.get("guess")
    if guess is not None:
        if not isinstance(guess, dict) or not {"x_T", "tau1", "tau2"} <= set(guess):
            raise ConfigError("guess needs x_T, tau1 and tau2")
        guess = {"x_T": [float(v) for v in guess["x_T"]], "tau1": float(guess["tau1"]), "tau2": float(guess["tau2"])}

    settings = Settings.from_mapping(data.get("solver", {}))
    name = str(prob.get("name", "problem"))
    return ProblemConfig(name, names, tuple(vertex_names), tuple(vertices), terminal, running,
                         x0, T, tuple(edge), guess, settings)


def load_problem(path) -> tuple[ControlAffineProblem, ShootingGuess, ProblemConfig]:
    """Read a problem file; a shooting guess is mandatory here."""
    with open(path, encoding="utf-8") as fh:
        cfg = parse_problem_config(fh.read())
    if cfg.guess is None:
        raise ConfigError("the problem file has no shooting guess: add guess = { x_T = [...], tau1 = ..., tau2 = ... } to [structure]")
    prob, guess = cfg.build()
    return prob, guess, cfg


def serialize_problem_config(cfg: ProblemConfig) -> str:
    names = list(cfg.names)
    doc = {
        "problem": {"name": cfg.name, "variables": names, "x0": list(cfg.x0), "T": cfg.T},
        "fields": {v: [p.to_string(names) for p in comps] for v, comps in zip(cfg.vertex_names, cfg.vertices)},
        "cost": {"terminal": cfg.terminal.to_string(names)},
        "structure": {"edge": [i + 1 for i in cfg.edge]},
    }
    if cfg.running is not None:
        doc["cost"]["running"] = cfg.running.to_string(names)
    if cfg.guess is not None:
        doc["structure"]["guess"] = dict(cfg.guess)
    defaults = asdict(Settings())
    solver = {k: v for k, v in asdict(cfg.settings).items() if v != defaults[k]}
    if solver:
        doc["solver"] = solver
    return tomli_w.dumps(doc)
