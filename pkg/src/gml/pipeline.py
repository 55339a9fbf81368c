"""Job specifications, the bundled catalog, and the end-to-end runner."""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import __version__
from .algebra import format_poly, format_ratfun
from .analysis import (
    check_flatness,
    check_pole_structure,
    check_regularity_at_infinity,
    numeric_validate,
)
from .ansatz import (
    AnsatzProblem,
    closed_form_dimension,
    integrability_system,
    solve_closed_logarithmic,
    verify_ansatz,
)
from .graph import FeynmanGraph, graph_from_json, load_graph
from .ibp import build_connection, default_seed_sum, family_from_graph, homogeneity_check, reduce_family
from .landau import compute_landau_set

CATALOG = ("tadpole", "bubble-massless", "bubble-massive", "triangle-massless", "triangle-one-mass")
COMMANDS = ("landau", "connection", "verify", "ansatz", "pipeline")
NUMERIC_THRESHOLD = 1e-6
RULES_CAP = 50


class CatalogError(LookupError):
    code = "input/unknown-graph"


class StageError(RuntimeError):
    def __init__(self, stage: str, code: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage, self.code, self.message = stage, code, message


def load_catalog(name: str) -> FeynmanGraph:
    if name not in CATALOG:
        raise CatalogError(f"unknown catalog graph {name!r}; available: {', '.join(CATALOG)}")
    text = resources.files("gml").joinpath("catalog", f"{name}.json").read_text()
    return graph_from_json(json.loads(text))


def resolve_graph(ref: str) -> FeynmanGraph:
    """A graph file path, or the name of a bundled graph."""
    if Path(ref).is_file():
        return load_graph(ref)
    if ref in CATALOG:
        return load_catalog(ref)
    raise CatalogError(f"no graph file {ref!r} and no such catalog entry; available: {', '.join(CATALOG)}")


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("GML_THREADS", "1")))
    except ValueError:
        return 1


def parse_point(text: str) -> dict:
    """``s=-1,m1sq=1,d=3`` -> {name: Fraction}."""
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, _, value = part.partition("=")
        if not _:
            raise ValueError(f"malformed assignment {part!r}")
        out[name.strip()] = Fraction(value.strip())
    return out


@dataclass
class JobSpec:
    command: str
    inputs: dict = field(default_factory=dict)
    seed: int = 0
    limits: dict = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")

    def to_json(self) -> dict:
        return {"command": self.command, "inputs": self.inputs, "seed": self.seed, "limits": self.limits}


@dataclass
class Report:
    job: dict
    results: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    tool_version: str = __version__

    @property
    def input_error(self) -> bool:
        return any(e["code"].startswith("input/") for e in self.errors)

    @property
    def verdict(self):
        """True, False, or None (inconclusive)."""
        if self.input_error:
            return None
        vals = list(self.verdicts.values())
        if self.errors:
            vals.append(None)
        if any(v is False for v in vals):
            return False
        if any(v is None for v in vals):
            return None
        return True

    def to_json(self, timings: bool = True) -> dict:
        out = {"tool_version": self.tool_version, "job": self.job, "results": self.results,
               "verdicts": {k: _tri(v) for k, v in self.verdicts.items()},
               "verdict": None if self.input_error else _tri(self.verdict),
               "errors": self.errors}
        if timings:
            out["timings"] = self.timings
        return out

    def dumps(self, timings: bool = True) -> str:
        return json.dumps(self.to_json(timings), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Report":
        data = json.loads(text)
        untri = {"inconclusive": None, True: True, False: False, None: None}
        return cls(data["job"], data["results"], {k: untri[v] for k, v in data["verdicts"].items()},
                   data["errors"], data.get("timings", {}), data["tool_version"])

    @property
    def exit_code(self) -> int:
        if self.input_error:
            return 3
        return {True: 0, False: 1, None: 2}[self.verdict]


def _tri(v):
    return "inconclusive" if v is None else bool(v)


def _index_text(nu) -> str:
    return "I(" + ",".join(str(n) for n in nu) + ")"


def _landau_entry(lp) -> dict:
    return {"polynomial": lp.text, "stratum": lp.stratum.to_json(), "verified": _tri(lp.verified)}


class _Stage:
    def __init__(self, report: Report, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.report.timings[self.name] = round(time.perf_counter() - self.t0, 4)
        if exc is None:
            return False
        if isinstance(exc, (KeyboardInterrupt, SystemExit)):
            return False
        code = getattr(exc, "code", None)
        if not isinstance(code, str):
            code = f"{self.name}/error"
        self.report.errors.append({"stage": self.name, "code": code, "message": str(exc)})
        raise StageError(self.name, code, str(exc)) from exc


def _landau(report, graph, spec, second_type):
    with _Stage(report, "landau"):
        rep = compute_landau_set(graph, second_type, spec.limits.get("trials", 20), spec.seed, spec.threads)
    report.results["landau"] = {
        "second_type": second_type,
        "landau_set": [_landau_entry(lp) for lp in rep.polynomials],
        "rejected": [_landau_entry(lp) for lp in rep.rejected],
        "inconclusive": [_landau_entry(lp) for lp in rep.inconclusive],
        "strata": len(rep.strata),
        "degenerate_charts": [{"stratum": r.stratum.to_json(), "charts": r.degenerate_charts}
                              for r in rep.strata if r.degenerate_charts],
    }
    report.verdicts["landau"] = None if rep.inconclusive else True
    return rep.polynomials


def _connection(report, graph, spec):
    with _Stage(report, "connection"):
        fam = family_from_graph(graph)
        seed_sum = spec.limits.get("seed_sum") or default_seed_sum(fam)
        table = reduce_family(fam, seed_sum)
        conn = build_connection(fam, table)
        residual = homogeneity_check(fam, conn)
    cap = spec.limits.get("rules_cap", RULES_CAP)
    rules = sorted(table.rules.items(), key=lambda kv: (sum(abs(n) for n in kv[0]), kv[0]))
    report.results["connection"] = {
        "seed_sum": seed_sum,
        "masters": [list(m) for m in table.masters],
        "rules_total": len(rules),
        "rules": {_index_text(nu): {_index_text(m): format_ratfun(c) for m, c in sorted(row.items())}
                  for nu, row in rules[:cap]},
        "matrices": {A.invariant: [[format_ratfun(f) for f in row] for row in A.entries] for A in conn},
    }
    zero = all(not f for row in residual for f in row)
    report.results["homogeneity"] = {"zero": zero,
                                     "residual": [[format_ratfun(f) for f in row] for row in residual]}
    report.verdicts["homogeneity"] = zero
    return fam, conn


def _checks(report, fam, conn, landau_polys, spec):
    with _Stage(report, "poles"):
        poles = check_pole_structure(conn, landau_polys)
    report.results["poles"] = poles.to_json()
    report.verdicts["poles"] = poles.verdict
    with _Stage(report, "flatness"):
        flat = check_flatness(conn)
    report.results["flatness"] = flat.to_json()
    report.verdicts["flatness"] = flat.verdict
    with _Stage(report, "infinity"):
        inf = check_regularity_at_infinity(conn, spec.limits.get("lines", 10), spec.seed)
    report.results["infinity"] = inf.to_json()
    report.verdicts["infinity"] = inf.verdict
    point = spec.inputs.get("numeric")
    if point:
        values = parse_point(point) if isinstance(point, str) else dict(point)
        d_value = values.pop("d", Fraction(3))
        with _Stage(report, "numeric"):
            residuals = {A.invariant: numeric_validate(fam, conn, values, d_value, A.invariant) for A in conn}
        worst = max(residuals.values())
        report.results["numeric"] = {"point": {k: str(v) for k, v in values.items()}, "d": str(d_value),
                                     "residuals": {k: float(f"{v:.3e}") for k, v in residuals.items()},
                                     "threshold": NUMERIC_THRESHOLD}
        report.verdicts["numeric"] = worst < NUMERIC_THRESHOLD


def _ansatz(report, spec):
    inp = spec.inputs
    with _Stage(report, "ansatz"):
        problem = AnsatzProblem.from_text(inp["divisor"], inp["vars"], size=inp.get("size", 1),
                                          degree=inp.get("degree", 0), regularity=inp.get("regularity", True))
        system = integrability_system(problem)
        basis = solve_closed_logarithmic(problem, triangular=inp.get("triangular", False))
        checks = [verify_ansatz(problem, c, spec.limits.get("lines", 10), spec.seed) for c in basis]
        oracle = closed_form_dimension(problem) if problem.size == 1 else None
    report.results["ansatz"] = {
        "variables": list(problem.variables),
        "divisor": [format_poly(L) for L in problem.divisor],
        "counts": system.counts,
        "solution_dimension": len(basis),
        "curl_system_dimension": oracle,
        "basis": [c.to_json(problem) for c in basis],
        "basis_verified": [r.verdict for r in checks],
    }
    report.verdicts["ansatz"] = all(r.verdict for r in checks)
    if oracle is not None:
        report.verdicts["ansatz_oracle"] = oracle == len(basis)


def run_pipeline(spec: JobSpec) -> Report:
    """Run one command; stage failures are recorded in the report, not raised."""
    report = Report(spec.to_json())
    t0 = time.perf_counter()
    try:
        if spec.command == "ansatz":
            _ansatz(report, spec)
        else:
            with _Stage(report, "input"):
                graph = resolve_graph(spec.inputs["graph"])
            report.results["graph"] = {"name": graph.name, "loops": graph.loops, "edges": len(graph.edges),
                                       "invariants": list(graph.variable_order)}
            if spec.command == "landau":
                _landau(report, graph, spec, spec.inputs.get("second_type", "off"))
            elif spec.command == "connection":
                _connection(report, graph, spec)
            else:
                polys = _landau(report, graph, spec, spec.inputs.get("second_type", "both"))
                fam, conn = _connection(report, graph, spec)
                _checks(report, fam, conn, polys, spec)
    except StageError:
        pass
    report.timings["total"] = round(time.perf_counter() - t0, 4)
    return report
