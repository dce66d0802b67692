"""Per-cycle cost bookkeeping and run summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

MGCG_PATHS = ("mgcg", "mgcg-fallback")
CSV_HEADER = "cycle,objective,volume,radius,solver_path,res,cg_iters,vcycles,wall_ms"


@dataclass
class IterationRecord:
    cycle: int
    objective: float
    volume: float
    radius: float
    solver_path: str
    res: float
    cg_iters: int
    vcycles: int
    wall_ms: float

    def csv_row(self, include_wall: bool = True) -> str:
        wall = repr(float(self.wall_ms)) if include_wall else "0"
        return ",".join([
            str(self.cycle), repr(float(self.objective)), repr(float(self.volume)),
            repr(float(self.radius)), self.solver_path, repr(float(self.res)),
            str(self.cg_iters), str(self.vcycles), wall,
        ])


@dataclass(frozen=True)
class RunSummary:
    cycles: int
    total_vcycles: int
    total_cg_iterations: int
    mgcg_evaluations: int
    wall_ms: float
    normalized_cost: float | None = None
    improvement_vcycles: float | None = None
    improvement_wall: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def summarize(history, baseline: RunSummary | None = None) -> RunSummary:
    """Totals over ``history``; improvements are ``1 - cost / baseline_cost``.

    Cost is measured in V-cycles (hardware independent) and separately in
    wall time.
    """
    if not history:
        raise ValueError("cannot summarize an empty history")
    vcycles = sum(r.vcycles for r in history)
    cg = sum(r.cg_iters for r in history)
    evals = sum(1 for r in history if r.solver_path in MGCG_PATHS)
    wall = float(sum(r.wall_ms for r in history))
    if baseline is None:
        return RunSummary(len(history), vcycles, cg, evals, wall)
    norm = vcycles / baseline.total_vcycles if baseline.total_vcycles else float("nan")
    wall_ratio = wall / baseline.wall_ms if baseline.wall_ms else float("nan")
    return RunSummary(len(history), vcycles, cg, evals, wall,
                      normalized_cost=norm, improvement_vcycles=1.0 - norm,
                      improvement_wall=1.0 - wall_ratio)


def record_fields() -> list[str]:
    return [f.name for f in fields(IterationRecord)]
