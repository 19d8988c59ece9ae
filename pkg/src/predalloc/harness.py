"""Sweeps over (eta, error rate, repetition) with per-run audits, CSV tables and SVG plots."""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ad_auctions import (
    consistency_bound_auction,
    quasi_feasibility_audit,
    robustness_bound_auction,
    run_algorithm2,
)
from .bounded_alloc import (
    consistency_bound,
    dual_rate_audit,
    robustness_bound,
    run_algorithm1,
    run_waterfill,
)
from .core import (
    AdAuctionInstance,
    BoundedAllocationInstance,
    Instance,
    InvalidInputError,
    capped_revenue,
    check_dual_feasibility,
    check_primal_feasibility,
    revenue,
)
from .fileio import read_instance
from .generators import PRESETS, GeneratorSpec, generate
from .offline import fractional_opt, integral_opt
from .predictions import (
    OracleConfig,
    changed_fraction,
    follow_prediction,
    perturb,
    prediction_value,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("algo1", "algo2", "waterfill_baseline", "follow_prediction")
AUDITS = (
    "primal_feasible",
    "dual_feasible",
    "dual_rate",
    "lemma4",
    "quasi_feasible",
    "consistency",
    "robustness",
    "ratio_le_one",
)
SUMMARY_HEADER = ("eta", "error_rate", "mean_ratio", "ci_low", "ci_high", "n_runs", "audit_failures")
BOUND_TOL = 1e-6
RATIO_TOL = 1e-6
# eta = 0 makes the auction constant degenerate (C = 1)
AUCTION_MIN_ETA = 1e-3


def derive_seed(base: int, *coords: int) -> int:
    """64-bit seed hashed from a base seed and integer cell coordinates."""
    ss = np.random.SeedSequence(base & (2**64 - 1), spawn_key=tuple(int(c) for c in coords))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


@dataclass(frozen=True)
class SweepConfig:
    algorithm: str = "algo1"
    etas: tuple[float, ...] = tuple(round(0.1 * k, 10) for k in range(11))
    error_rates: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    repetitions: int = 20
    generator: GeneratorSpec | None = None
    instance_path: str | None = None
    seed: int = 0
    out_dir: str | None = None
    # None: one instance for all repetitions unless the generator is random_bounded
    fixed_instance: bool | None = None
    time_budget: float = 10.0
    workers: int = 1
    strict_alternatives: bool = False
    fixed_fraction: bool = False
    ci: str = "normal"  # or "t"

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise InvalidInputError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not self.etas or not self.error_rates:
            raise InvalidInputError("eta and error-rate grids must be nonempty")
        if self.repetitions < 1:
            raise InvalidInputError("repetitions must be at least 1")
        for e in self.etas:
            if not 0.0 <= e <= 1.0:
                raise InvalidInputError(f"eta {e} outside [0, 1]")
        for r in self.error_rates:
            if not 0.0 <= r <= 1.0:
                raise InvalidInputError(f"error rate {r} outside [0, 1]")
        if (self.generator is None) == (self.instance_path is None):
            raise InvalidInputError("give exactly one of a generator spec or an instance path")
        if self.generator is not None:
            self.generator.validate()
        if self.ci not in ("normal", "t"):
            raise InvalidInputError(f"unknown CI method {self.ci!r}")

    @property
    def uses_fixed_instance(self) -> bool:
        if self.instance_path is not None:
            return True
        if self.fixed_instance is not None:
            return self.fixed_instance
        return self.generator.kind != "random_bounded"


@dataclass
class RunRecord:
    eta: float
    error_rate: float
    rep: int
    eta_used: float
    algo_value: float
    raw_revenue: float
    opt: float
    p_value: float
    p_feasible: bool
    ratio: float
    consistency_target: float
    robustness_target: float
    base_optimal: bool
    changed: float
    audits: dict[str, bool] = field(default_factory=dict)

    @property
    def failed(self) -> list[str]:
        return [k for k in AUDITS if self.audits.get(k) is False]


@dataclass
class CellSummary:
    eta: float
    error_rate: float
    mean: float
    half_width: float
    low: float
    high: float
    n: int
    audit_failures: int


@dataclass
class SweepReport:
    algorithm: str
    cells: list[CellSummary]
    runs: list[RunRecord]
    bound_curve: list[tuple[float, float]] = field(default_factory=list)

    @property
    def audit_failures(self) -> int:
        return sum(1 for r in self.runs if r.failed)


@dataclass
class _RepContext:
    instance: Instance
    opt: float
    base: list[int]
    base_optimal: bool


def _load_instance(config: SweepConfig, rep: int) -> Instance:
    if config.instance_path is not None:
        return read_instance(config.instance_path)
    seed = derive_seed(config.seed, 0, 0 if config.uses_fixed_instance else rep)
    return generate(config.generator.with_seed(seed))


def _context(config: SweepConfig, rep: int) -> _RepContext:
    inst = _load_instance(config, rep)
    if config.algorithm == "algo2" and not isinstance(inst, AdAuctionInstance):
        raise InvalidInputError("algo2 needs an Ad-Auctions instance")
    if config.algorithm in ("algo1", "waterfill_baseline") and not isinstance(
        inst, BoundedAllocationInstance
    ):
        raise InvalidInputError(f"{config.algorithm} needs a bounded-allocation instance")
    frac = fractional_opt(inst)
    integ = integral_opt(inst, config.time_budget, fractional=frac)
    if not integ.optimal:
        log.info("integral base for rep %d not proven optimal (gap %.4g)", rep, integ.integrality_gap)
    return _RepContext(inst, frac.value, list(integ.mapping), integ.optimal)


def _bound_at(instance: Instance, algorithm: str, eta: float) -> float:
    if algorithm in ("algo1", "waterfill_baseline"):
        return robustness_bound(1.0 if algorithm == "waterfill_baseline" else eta, instance.d)
    if algorithm == "algo2":
        r = instance.declared_r_max or instance.r_max
        return robustness_bound_auction(max(eta, AUCTION_MIN_ETA), r) if r > 0 else 0.0
    return 0.0


def run_single(
    instance: Instance,
    algorithm: str,
    eta: float,
    prediction,
    opt: float,
) -> tuple[dict[str, object], dict[str, bool]]:
    """Run one algorithm once and every audit that applies to it.

    Returns (numbers, audits). ``numbers`` holds the reported value, the raw
    revenue, the targets and the allocation.
    """
    pv = prediction_value(instance, prediction)
    audits: dict[str, bool] = {}
    eta_used = eta
    if algorithm in ("algo1", "waterfill_baseline"):
        res = run_algorithm1(instance, prediction, eta) if algorithm == "algo1" else run_waterfill(instance)
        if algorithm == "waterfill_baseline":
            eta_used = 1.0
        alloc = res.allocation
        raw = revenue(instance, alloc)
        value = raw
        audits["primal_feasible"] = check_primal_feasibility(instance, alloc).passed
        audits["dual_feasible"] = check_dual_feasibility(instance, res.dual).passed
        audits["dual_rate"] = dual_rate_audit(res.trace).passed
        consistency = consistency_bound(eta_used) * pv.value
        robust = robustness_bound(eta_used, instance.d)
    elif algorithm == "algo2":
        if eta <= 0.0:
            warnings.warn(f"algo2 needs eta > 0; running eta={AUCTION_MIN_ETA} instead of 0", stacklevel=2)
            eta_used = AUCTION_MIN_ETA
        res = run_algorithm2(instance, prediction, eta_used, record_trace=False)
        alloc = res.allocation
        raw = revenue(instance, alloc)
        value = capped_revenue(instance, alloc)
        audits["dual_feasible"] = check_dual_feasibility(instance, res.dual).passed
        audits["lemma4"] = not res.lemma4_failures
        audits["quasi_feasible"] = quasi_feasibility_audit(instance, alloc).passed
        consistency = consistency_bound_auction(eta_used) * pv.value
        robust = _bound_at(instance, "algo2", eta_used)
    elif algorithm == "follow_prediction":
        alloc = follow_prediction(instance, prediction)
        raw = value = revenue(instance, alloc)
        audits["primal_feasible"] = check_primal_feasibility(instance, alloc).passed
        consistency = pv.value
        robust = 0.0
    else:
        raise InvalidInputError(f"unknown algorithm {algorithm!r}")
    audits["consistency"] = raw >= consistency - BOUND_TOL * max(pv.value, 1.0)
    ratio = value / opt if opt > 0 else 1.0
    raw_ratio = raw / opt if opt > 0 else 1.0
    audits["robustness"] = raw_ratio >= robust - BOUND_TOL
    audits["ratio_le_one"] = ratio <= 1.0 + RATIO_TOL
    numbers = {
        "eta_used": eta_used,
        "value": value,
        "raw": raw,
        "ratio": ratio,
        "p_value": pv.value,
        "p_feasible": pv.feasible,
        "consistency_target": consistency,
        "robustness_target": robust,
        "allocation": alloc,
    }
    return numbers, audits


def _run_rep(args: tuple[SweepConfig, int, _RepContext | None]) -> list[RunRecord]:
    config, rep, ctx = args
    if ctx is None:
        ctx = _context(config, rep)
    mode = "auction" if isinstance(ctx.instance, AdAuctionInstance) else "bounded"
    out: list[RunRecord] = []
    for e_idx, err in enumerate(config.error_rates):
        oc = OracleConfig(
            err,
            derive_seed(config.seed, 1, e_idx, rep),
            mode,
            config.strict_alternatives,
            config.fixed_fraction,
        )
        pred = perturb(ctx.instance, ctx.base, oc)
        changed = changed_fraction(ctx.base, pred)
        for eta in config.etas:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                nums, audits = run_single(ctx.instance, config.algorithm, eta, pred, ctx.opt)
            out.append(
                RunRecord(
                    eta=eta,
                    error_rate=err,
                    rep=rep,
                    eta_used=nums["eta_used"],
                    algo_value=nums["value"],
                    raw_revenue=nums["raw"],
                    opt=ctx.opt,
                    p_value=nums["p_value"],
                    p_feasible=nums["p_feasible"],
                    ratio=nums["ratio"],
                    consistency_target=nums["consistency_target"],
                    robustness_target=nums["robustness_target"],
                    base_optimal=ctx.base_optimal,
                    changed=changed,
                    audits=audits,
                )
            )
    return out


def _z(ci: str, n: int) -> float:
    if ci == "t" and n > 1:
        from scipy.stats import t

        return float(t.ppf(0.975, n - 1))
    return 1.96


def summarize(runs: Sequence[RunRecord], etas: Sequence[float], error_rates: Sequence[float], ci: str = "normal") -> list[CellSummary]:
    groups: dict[tuple[float, float], list[RunRecord]] = {}
    for r in runs:
        groups.setdefault((r.eta, r.error_rate), []).append(r)
    cells = []
    for err in error_rates:
        for eta in etas:
            rs = groups.get((eta, err), [])
            if not rs:
                continue
            ratios = np.array([r.ratio for r in rs])
            n = len(ratios)
            sd = float(ratios.std(ddof=1)) if n > 1 else 0.0
            half = _z(ci, n) * sd / math.sqrt(n)
            mean = float(ratios.mean())
            cells.append(
                CellSummary(
                    eta, err, mean, half, float(ratios.min()), float(ratios.max()), n,
                    sum(1 for r in rs if r.failed),
                )
            )
    return cells


def run_sweep(config: SweepConfig) -> SweepReport:
    """Run every (eta, error rate, repetition) cell of the grid.

    The instance seed depends on the repetition only (or is shared when the
    instance is fixed) and the prediction seed on (error index, repetition),
    so every eta sees the same prediction. Results do not depend on
    ``workers``.
    """
    config.validate()
    shared = _context(config, 0) if config.uses_fixed_instance else None
    jobs = [(config, rep, shared) for rep in range(config.repetitions)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_rep, jobs))
    else:
        chunks = [_run_rep(j) for j in jobs]
    runs = [r for chunk in chunks for r in chunk]
    cells = summarize(runs, config.etas, config.error_rates, config.ci)
    inst = shared.instance if shared is not None else _load_instance(config, 0)
    curve = []
    if config.algorithm != "follow_prediction":
        grid = np.linspace(0.0, 1.0, 101)
        curve = [(float(e), _bound_at(inst, config.algorithm, float(e))) for e in grid]
    return SweepReport(config.algorithm, cells, runs, curve)


# ---------------------------------------------------------------- output


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def summary_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for c in report.cells:
        w.writerow(
            [_fmt(c.eta), _fmt(c.error_rate), _fmt(c.mean), _fmt(c.mean - c.half_width),
             _fmt(c.mean + c.half_width), c.n, c.audit_failures]
        )
    return buf.getvalue()


RUN_FIELDS = [f.name for f in fields(RunRecord) if f.name != "audits"]


def runs_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", *RUN_FIELDS, *AUDITS, "failed_audits"])
    for r in report.runs:
        vals = []
        for name in RUN_FIELDS:
            v = getattr(r, name)
            # full precision so the report command reproduces summary.csv exactly
            vals.append(int(v) if isinstance(v, bool) else (repr(v) if isinstance(v, float) else v))
        audits = ["" if k not in r.audits else int(r.audits[k]) for k in AUDITS]
        w.writerow([report.algorithm, *vals, *audits, ";".join(r.failed)])
    return buf.getvalue()


def parse_runs_csv(text: str) -> tuple[str, list[RunRecord]]:
    """Inverse of :func:`runs_csv` (used by the ``report`` subcommand)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise InvalidInputError("runs table is empty")
    types = {f.name: f.type for f in fields(RunRecord)}
    algorithm = rows[0].get("algorithm", "")
    runs = []
    for lineno, row in enumerate(rows, start=2):
        try:
            kw: dict[str, object] = {}
            for name in RUN_FIELDS:
                raw = row[name]
                t = types[name]
                if t in ("bool", bool):
                    kw[name] = raw.strip() in ("1", "True", "true")
                elif t in ("int", int):
                    kw[name] = int(raw)
                else:
                    kw[name] = float(raw)
            kw["audits"] = {k: row[k] == "1" for k in AUDITS if row.get(k, "") != ""}
        except (KeyError, ValueError, AttributeError) as exc:
            raise InvalidInputError(f"runs table line {lineno}: {exc}") from None
        runs.append(RunRecord(**kw))
    return algorithm, runs


def report_from_runs(text: str, ci: str = "normal") -> SweepReport:
    algorithm, runs = parse_runs_csv(text)
    etas = sorted({r.eta for r in runs})
    errs = sorted({r.error_rate for r in runs})
    # curve from the recorded per-run targets
    curve = sorted({(r.eta_used, r.robustness_target) for r in runs})
    return SweepReport(algorithm, summarize(runs, etas, errs, ci), runs, curve)


def _plot(report: SweepReport, series: Iterable[float], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "predalloc"
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    cmap = plt.get_cmap("viridis")
    errs = sorted(set(series))
    for k, err in enumerate(errs):
        cs = sorted((c for c in report.cells if c.error_rate == err), key=lambda c: c.eta)
        x = [c.eta for c in cs]
        y = np.array([c.mean for c in cs])
        h = np.array([c.half_width for c in cs])
        color = cmap(k / max(len(errs) - 1, 1))
        ax.plot(x, y, marker="o", ms=3, color=color, label=f"error rate {err:g}")
        ax.fill_between(x, y - h, y + h, color=color, alpha=0.2, linewidth=0)
    if report.bound_curve:
        bx, by = zip(*report.bound_curve)
        ax.plot(bx, by, "k--", linewidth=1, label="robustness bound")
    ax.set_xlabel("eta")
    ax.set_ylabel("competitive ratio")
    ax.set_xlim(0, 1)
    ax.set_title(report.algorithm)
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report: SweepReport, out_dir: str | Path, formats: str = "both") -> list[Path]:
    """Write summary.csv and runs.csv and/or ratio SVGs (combined and one per error rate)."""
    if not report.cells:
        raise InvalidInputError("nothing to report: the sweep produced no cells")
    if formats not in ("csv", "svg", "both"):
        raise InvalidInputError(f"unknown format {formats!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if formats in ("csv", "both"):
        for name, text in (("summary.csv", summary_csv(report)), ("runs.csv", runs_csv(report))):
            p = out / name
            p.write_text(text)
            written.append(p)
    if formats in ("svg", "both"):
        errs = sorted({c.error_rate for c in report.cells})
        p = out / "ratio.svg"
        _plot(report, errs, p)
        written.append(p)
        for err in errs:
            p = out / f"ratio_err{err:g}.svg"
            _plot(report, [err], p)
            written.append(p)
    return written


# ---------------------------------------------------------------- config files


def _floats(value: str) -> tuple[float, ...]:
    """``0,0.5,1`` or ``start:stop:step`` (inclusive stop)."""
    value = value.strip()
    if ":" in value:
        parts = [float(v) for v in value.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise InvalidInputError(f"bad range {value!r}; use start:stop:step")
        start, stop, step = parts
        k = int(math.floor((stop - start) / step + 1e-9))
        return tuple(round(start + i * step, 10) for i in range(k + 1))
    return tuple(float(v) for v in value.split(",") if v.strip())


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise InvalidInputError(f"not a boolean: {value!r}")


_GEN_KEYS = {
    "kind": str,
    "buyers": int,
    "items": int,
    "d_bound": int,
    "bidders_per_item": int,
    "lognormal_mu": float,
    "lognormal_sigma": float,
    "budget_fraction": float,
    "budget_mode": str,
}


def parse_key_values(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"config line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def generator_from_options(opts: dict[str, str], base: GeneratorSpec | None = None) -> GeneratorSpec | None:
    """Build a generator spec from ``preset`` plus per-field overrides; None if nothing given."""
    spec = base
    if "preset" in opts:
        if opts["preset"] not in PRESETS:
            raise InvalidInputError(f"unknown preset {opts['preset']!r}; choose from {sorted(PRESETS)}")
        spec = PRESETS[opts["preset"]]
    changes: dict[str, object] = {}
    try:
        for key, conv in _GEN_KEYS.items():
            if key in opts:
                changes[key] = conv(opts[key])
        for rng_key in ("budget", "price"):
            lo, hi = opts.get(f"{rng_key}_low"), opts.get(f"{rng_key}_high")
            if lo is not None or hi is not None:
                cur = getattr(spec or GeneratorSpec(), f"{rng_key}_range")
                changes[f"{rng_key}_range"] = (
                    float(lo) if lo is not None else cur[0],
                    float(hi) if hi is not None else cur[1],
                )
        if "generator_seed" in opts:
            changes["seed"] = int(opts["generator_seed"])
    except ValueError as exc:
        raise InvalidInputError(f"bad generator option: {exc}") from None
    if spec is None and not changes:
        return None
    return replace(spec or GeneratorSpec(), **changes)


def config_from_options(opts: dict[str, str]) -> SweepConfig:
    try:
        kw: dict[str, object] = {}
        if "algorithm" in opts:
            kw["algorithm"] = opts["algorithm"]
        if "etas" in opts:
            kw["etas"] = _floats(opts["etas"])
        if "error_rates" in opts:
            kw["error_rates"] = _floats(opts["error_rates"])
        for key in ("repetitions", "seed", "workers"):
            if key in opts:
                kw[key] = int(opts[key])
        if "time_budget" in opts:
            kw["time_budget"] = float(opts["time_budget"])
        for key in ("fixed_instance", "strict_alternatives", "fixed_fraction"):
            if key in opts:
                kw[key] = _bool(opts[key])
        if "ci" in opts:
            kw["ci"] = opts["ci"]
        if "instance" in opts:
            kw["instance_path"] = opts["instance"]
        if "out" in opts:
            kw["out_dir"] = opts["out"]
    except ValueError as exc:
        raise InvalidInputError(f"bad sweep option: {exc}") from None
    kw["generator"] = generator_from_options(opts)
    config = SweepConfig(**kw)
    config.validate()
    return config


def read_config(path: str | Path) -> SweepConfig:
    return config_from_options(parse_key_values(Path(path).read_text()))
