"""Configuration-driven experiments and their reports.

Every experiment returns an :class:`EstimateReport` holding one record per
(parameter tuple, ensemble member) and a summary. Records depend only on
the configuration and the seed, so re-running reproduces them exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import io as _io
import json
import logging
import math
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fracwave import __version__
from fracwave.errors import FracwaveError, ParameterError
from fracwave.frac_ops import TimeGrid, TimeSeries, caputo_derivative_array, verify_calculus_identities
from fracwave.kernel import SpaceGrid, build_kernel_table, fit_kernel_bounds, save_kernel_table
from fracwave.maximal import sharp_estimate_check
from fracwave.solver import Field, manufactured, residual_and_weakform_check, solve, spectral_derivative
from fracwave.weights import (
    PowerWeight,
    SamplingSpec,
    WeightedNormSpec,
    ap_characteristic,
    in_power_class,
    mixed_norm_values,
)

log = logging.getLogger(__name__)

KINDS = ("identities", "kernel", "solve", "estimate-ratio", "sharp-check", "ap-weights")
RUNTIME_FIELDS = ("runtime_s",)


@dataclass(frozen=True)
class GridSpec:
    dim: int = 1
    L: float = 40.0
    n_points: int = 512
    n_steps: int = 512

    def refined(self, levels: int) -> "GridSpec":
        f = 2**levels
        return dataclasses.replace(self, n_points=self.n_points * f, n_steps=self.n_steps * f)

    def space(self) -> SpaceGrid:
        return SpaceGrid(self.dim, self.L, self.n_points)

    def time(self, t_end: float) -> TimeGrid:
        return TimeGrid(t_end, self.n_steps)


@dataclass(frozen=True)
class EnsembleSpec:
    """Random sources: ``count`` members, spatial wavelength scale ``smoothness``,
    ``time_modes`` cosine modes in time; ``compact_space`` multiplies by a
    spatial bump."""

    count: int = 50
    seed: int = 0
    smoothness: float = 1.0
    time_modes: int = 4
    compact_space: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment.

    With ``relative_gammas`` the entries of ``gamma1`` and ``gamma2`` are
    fractions of ``d (p - 1)`` and ``q - 1``.
    """

    kind: str = "estimate-ratio"
    alphas: tuple[float, ...] = (0.5, 1.0, 1.5)
    pq: tuple[tuple[float, float], ...] = ((2.0, 2.0), (3.0, 2.0), (2.0, 3.0))
    gamma1: tuple[float, ...] = (0.0, 0.4)
    gamma2: tuple[float, ...] = (0.0, 0.4)
    relative_gammas: bool = True
    T_list: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    grid: GridSpec = field(default_factory=GridSpec)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    p0: float = 2.0
    ks: tuple[int, ...] = (0, 1, 2)
    boundary_probe: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "estimate-ratio" and not self.boundary_probe:
            for p, q, g1, g2 in self.weight_tuples():
                if not in_power_class(g1, self.grid.dim, p):
                    raise ParameterError(f"gamma1={g1} is not an A_{p} exponent in dim {self.grid.dim}")
                if not in_power_class(g2, 1, q):
                    raise ParameterError(f"gamma2={g2} is not an A_{q} exponent on R")

    def weight_tuples(self) -> list[tuple[float, float, float, float]]:
        out = []
        d = self.grid.dim
        for p, q in self.pq:
            for a in self.gamma1:
                for b in self.gamma2:
                    g1 = a * d * (p - 1.0) if self.relative_gammas else a
                    g2 = b * (q - 1.0) if self.relative_gammas else b
                    out.append((float(p), float(q), float(g1), float(g2)))
        return out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        if "grid" in data:
            data["grid"] = GridSpec(**data["grid"])
        if "ensemble" in data:
            data["ensemble"] = EnsembleSpec(**data["ensemble"])
        for key in ("alphas", "gamma1", "gamma2", "T_list", "ks"):
            if key in data:
                data[key] = tuple(data[key])
        if "pq" in data:
            data["pq"] = tuple(tuple(float(v) for v in item) for item in data["pq"])
        return cls(**data)


def default_config(kind: str) -> ExperimentConfig:
    """Shipped defaults per experiment kind."""
    if kind == "sharp-check":
        return ExperimentConfig(
            kind=kind, alphas=(0.5, 1.5), T_list=(1.0,),
            grid=GridSpec(1, 40.0, 128, 128),
            ensemble=EnsembleSpec(count=4, compact_space=True),
        )
    if kind == "solve":
        return ExperimentConfig(kind=kind, grid=GridSpec(1, 40.0, 128, 512))
    if kind == "kernel":
        return ExperimentConfig(kind=kind, alphas=(0.5, 1.0, 1.5), grid=GridSpec(1, 40.0, 1024, 512))
    if kind == "identities":
        return ExperimentConfig(kind=kind, alphas=(0.3, 0.7, 1.2), grid=GridSpec(1, 40.0, 512, 4096))
    if kind == "ap-weights":
        return ExperimentConfig(kind=kind, pq=((1.5, 1.5), (2.0, 2.0), (3.0, 3.0)))
    return ExperimentConfig(kind=kind)


@dataclass
class EstimateReport:
    kind: str
    config: dict
    records: list[dict]
    summary: dict
    runtime_s: float = 0.0
    version: str = __version__
    git: str = "unknown"

    def comparable(self) -> dict:
        """Everything except runtime fields."""
        return {
            "kind": self.kind,
            "config": self.config,
            "records": self.records,
            "summary": self.summary,
            "version": self.version,
        }


# --- random sources --------------------------------------------------------------


def smooth_window(tau: np.ndarray) -> np.ndarray:
    """``exp(1 - 1/(4 tau (1 - tau)))`` on (0, 1), zero outside: flat to all orders at 0 and 1."""
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    inside = (tau > 0) & (tau < 1)
    s = tau[inside]
    out[inside] = np.exp(1.0 - 1.0 / (4.0 * s * (1.0 - s)))
    return out


def random_field(spec: EnsembleSpec, tgrid: TimeGrid, sgrid: SpaceGrid, member: int = 0) -> Field:
    """Band-limited random source times a smooth window in ``tau = t / t_end``.

    Spatial Fourier modes with ``|xi| > 2 pi / smoothness`` are exactly
    zero (unless ``compact_space``); the field vanishes to all orders at
    ``t = 0`` and ``t = t_end``.
    """
    rng = np.random.default_rng([spec.seed, member])
    cutoff = 2.0 * np.pi / spec.smoothness
    xi_sq = sgrid.xi_sq()
    band = (xi_sq <= cutoff**2) & (xi_sq > 0)
    n_modes = spec.time_modes
    coeffs = np.zeros((n_modes,) + sgrid.shape, dtype=complex)
    count = int(band.sum())
    coeffs[:, band] = rng.standard_normal((n_modes, count)) + 1j * rng.standard_normal((n_modes, count))
    axes = tuple(range(1, sgrid.dim + 1))
    # real part of the inverse transform keeps the spectrum inside the band
    spatial = np.fft.ifftn(coeffs, axes=axes).real
    spatial /= max(float(np.max(np.abs(spatial))), 1e-300)
    tau = tgrid.nodes / tgrid.t_end
    modes = np.cos(np.pi * np.arange(n_modes)[:, None] * tau[None, :])
    vals = np.tensordot(modes.T, spatial, axes=(1, 0)) * smooth_window(tau).reshape((-1,) + (1,) * sgrid.dim)
    if spec.compact_space:
        r = sgrid.radius() / (0.25 * sgrid.L)
        bump = np.where(r < 1, np.exp(1.0 - 1.0 / np.maximum(1.0 - r**2, 1e-300)), 0.0)
        vals = vals * bump
    return Field(tgrid, sgrid, vals)


# --- norms -----------------------------------------------------------------------------


def unweighted_norm(mag: np.ndarray, p: float, q: float, tgrid: TimeGrid, sgrid: SpaceGrid) -> float:
    """Direct ``L_q(0,T; L_p)`` norm: rectangle rule in space, trapezoid in time."""
    inner = np.sum(mag**p, axis=tuple(range(1, sgrid.dim + 1))) * sgrid.dx**sgrid.dim
    w = np.full(tgrid.n_steps + 1, tgrid.dt)
    w[0] = w[-1] = 0.5 * tgrid.dt
    return float(np.sum(w * inner ** (q / p)) ** (1.0 / q))


def _frobenius(fields: list[np.ndarray]) -> np.ndarray:
    return np.sqrt(sum(f * f for f in fields))


# --- experiments -------------------------------------------------------------------------


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _solution_pieces(f: Field, alpha: float) -> dict[str, np.ndarray]:
    u = solve(f, alpha)
    d = f.sgrid.dim
    ux = [spectral_derivative(u, (i,)).values for i in range(d)]
    uxx = [spectral_derivative(u, (i, j)).values for i in range(d) for j in range(d)]
    n = f.tgrid.n_steps
    dta = caputo_derivative_array(u.values.reshape(n + 1, -1), alpha, f.tgrid.dt).reshape(u.values.shape)
    return {
        "f": np.abs(f.values),
        "u": np.abs(u.values),
        "ux": _frobenius(ux),
        "uxx": _frobenius(uxx),
        "dta": np.abs(dta),
    }


def run_estimate_experiment(config: ExperimentConfig) -> EstimateReport:
    """Empirical constants ``N_0`` (``||u_xx|| / ||f||``) and ``N_1`` over an ensemble."""
    start = time.perf_counter()
    sgrid = config.grid.space()
    tuples = config.weight_tuples()
    records: list[dict] = []
    failures: list[str] = []
    for alpha in config.alphas:
        for T in config.T_list:
            tgrid = config.grid.time(T)

            def member_records(m, alpha=alpha, T=T, tgrid=tgrid):
                f = random_field(config.ensemble, tgrid, sgrid, m)
                pieces = _solution_pieces(f, alpha)
                out = []
                for p, q, g1, g2 in tuples:
                    spec = WeightedNormSpec(
                        p, q, PowerWeight(g1, sgrid.dim, role="space"), PowerWeight(g2, 1, role="time"), T
                    )
                    rec = {"alpha": alpha, "p": p, "q": q, "gamma1": g1, "gamma2": g2, "T": T, "member": m}
                    try:
                        norms = {k: mixed_norm_values(v, spec, tgrid, sgrid) for k, v in pieces.items()}
                        rec["R0"] = norms["uxx"] / norms["f"]
                        rec["R1"] = (norms["dta"] + norms["u"] + norms["ux"] + norms["uxx"]) / norms["f"]
                        if g1 == 0.0 and g2 == 0.0:
                            direct = unweighted_norm(pieces["uxx"], p, q, tgrid, sgrid) / unweighted_norm(
                                pieces["f"], p, q, tgrid, sgrid)
                            rec["unit_weight_error"] = abs(direct - rec["R0"]) / direct
                        if not (math.isfinite(rec["R0"]) and math.isfinite(rec["R1"])):
                            raise OverflowError("non-finite ratio")
                    except (OverflowError, FloatingPointError, FracwaveError) as exc:
                        log.warning("tuple %s failed: %s", rec, exc)
                        rec["error"] = str(exc)
                    out.append(rec)
                return out

            for recs in _map(member_records, range(config.ensemble.count), config.threads):
                records.extend(r for r in recs if "error" not in r)
                failures.extend(str(r) for r in recs if "error" in r)
    summary = _estimate_summary(records, config)
    summary["failures"] = failures
    return EstimateReport("estimate-ratio", config.to_dict(), records, summary,
                          time.perf_counter() - start, git=_git_hash())


def _tuple_key(r: dict) -> tuple:
    return (r["alpha"], r["p"], r["q"], r["gamma1"], r["gamma2"])


def _estimate_summary(records: list[dict], config: ExperimentConfig) -> dict:
    groups: dict[tuple, dict[float, list[dict]]] = {}
    for r in records:
        groups.setdefault(_tuple_key(r), {}).setdefault(r["T"], []).append(r)
    rows = []
    unit_err = 0.0
    for key, by_t in groups.items():
        alpha, p, q, g1, g2 = key
        n0 = {T: max(r["R0"] for r in rs) for T, rs in sorted(by_t.items())}
        n1 = {T: max(r["R1"] for r in rs) for T, rs in sorted(by_t.items())}
        r0_all = np.array([r["R0"] for rs in by_t.values() for r in rs])
        unit_err = max([unit_err] + [r.get("unit_weight_error", 0.0) for rs in by_t.values() for r in rs])
        rows.append({
            "alpha": alpha, "p": p, "q": q, "gamma1": g1, "gamma2": g2,
            "N0": {str(T): v for T, v in n0.items()},
            "N1": {str(T): v for T, v in n1.items()},
            "N0_T_stability": max(n0.values()) / min(n0.values()),
            "N1_T_growth": max(n1.values()) / min(n1.values()),
            "R0_median": float(np.median(r0_all)),
            "R0_q90": float(np.quantile(r0_all, 0.9)),
            "w1_characteristic": _characteristic(g1, config.grid.dim, p),
            "w2_characteristic": _characteristic(g2, 1, q),
        })
    return {
        "tuples": rows,
        "max_N0_T_stability": max((r["N0_T_stability"] for r in rows), default=None),
        "all_finite": all(math.isfinite(r["R0"]) and math.isfinite(r["R1"]) for r in records),
        "max_unit_weight_error": unit_err,
    }


@functools.lru_cache(maxsize=None)
def _characteristic(gamma: float, dim: int, p: float) -> float:
    return ap_characteristic(PowerWeight(gamma, dim), p).value


def run_sharp_experiment(config: ExperimentConfig) -> EstimateReport:
    """Ensemble sweep of :func:`sharp_estimate_check` for every ``k``.

    Each record holds the constant with lag cutoff ``T`` and ``2T`` and the
    relative change of the constant under ``f -> 10 f``.
    """
    start = time.perf_counter()
    sgrid = config.grid.space()
    records = []
    for alpha in config.alphas:
        for T in config.T_list:
            tgrid = config.grid.time(T)
            for k in config.ks:
                def member(m, alpha=alpha, T=T, k=k, tgrid=tgrid):
                    f = random_field(config.ensemble, tgrid, sgrid, m)
                    res = sharp_estimate_check(f, alpha, config.p0, k, compare_2T=True)
                    scaled = sharp_estimate_check(f.with_values(10.0 * f.values), alpha, config.p0, k,
                                                  compare_2T=False)
                    return {
                        "alpha": alpha, "k": k, "T": T, "member": m,
                        "N": res.constant, "N_2T": res.constant_2T,
                        "T_ratio": res.t_ratio,
                        "scale_error": abs(scaled.constant - res.constant) / res.constant,
                    }

                records.extend(_map(member, range(config.ensemble.count), config.threads))
    rows = []
    keys = sorted({(r["alpha"], r["k"], r["T"]) for r in records})
    for alpha, k, T in keys:
        rs = [r for r in records if (r["alpha"], r["k"], r["T"]) == (alpha, k, T)]
        n, n2 = max(r["N"] for r in rs), max(r["N_2T"] for r in rs)
        rows.append({"alpha": alpha, "k": k, "T": T, "N": n, "N_2T": n2,
                     "T_stability": max(n, n2) / min(n, n2)})
    summary = {
        "rows": rows,
        "all_finite": all(math.isfinite(r["N"]) and math.isfinite(r["N_2T"]) for r in records),
        "max_k2_T_stability": max((r["T_stability"] for r in rows if r["k"] == 2), default=None),
        "max_scale_error": max((r["scale_error"] for r in records), default=0.0),
    }
    return EstimateReport("sharp-check", config.to_dict(), records, summary,
                          time.perf_counter() - start, git=_git_hash())


def run_identities(config: ExperimentConfig) -> EstimateReport:
    """Calculus identities on ``t^2 sin t`` over ``[0, 2]`` for every ``alpha``, ``beta``."""
    start = time.perf_counter()
    records = []
    for n in (config.grid.n_steps // 2, config.grid.n_steps):
        grid = TimeGrid(2.0, n)
        phi = TimeSeries.from_function(grid, lambda t: t**2 * np.sin(t))
        for alpha in config.alphas:
            for beta in config.alphas:
                if beta >= 1 or alpha + beta > 2:
                    continue
                rep = verify_calculus_identities(phi, alpha, beta)
                records.append({"alpha": alpha, "beta": beta, "n_steps": n,
                                "semigroup": rep.semigroup_error, "inversion": rep.inversion_error,
                                "equivalence": rep.equivalence_error})
    summary = {
        f"max_error_n{n}": max((max(r["semigroup"], r["inversion"], r["equivalence"])
                                for r in records if r["n_steps"] == n), default=0.0)
        for n in (config.grid.n_steps // 2, config.grid.n_steps)
    }
    return EstimateReport("identities", config.to_dict(), records, summary,
                          time.perf_counter() - start, git=_git_hash())


def run_kernel(config: ExperimentConfig, cache_dir: Path | None = None) -> EstimateReport:
    """Build (and cache) kernel tables and fit their pointwise bounds."""
    start = time.perf_counter()
    grid = config.grid.space()
    records = []
    for alpha in config.alphas:
        table = build_kernel_table(alpha, grid)
        if cache_dir is not None:
            save_kernel_table(table, Path(cache_dir) / f"kernel_a{alpha:g}_d{grid.dim}_n{grid.n_points}")
        for m in (0, 1, 2):
            rep = fit_kernel_bounds(table, m)
            records.append({"alpha": alpha, "m": m, "N_far": rep.far.N, "sigma": rep.far.sigma,
                            "N_near": rep.near.N, "mass": table.mass(), "checksum": table.checksum(),
                            **{f"N_eps{f.epsilon:g}": f.N for f in rep.family}})
    return EstimateReport("kernel", config.to_dict(), records, {"n_tables": len(config.alphas)},
                          time.perf_counter() - start, git=_git_hash())


def run_solve(config: ExperimentConfig, cache_dir: Path | None = None) -> EstimateReport:
    """Manufactured-solution errors and residuals, with and without refinement."""
    start = time.perf_counter()
    records = []
    for alpha in config.alphas:
        for level in (0, 1):
            g = config.grid.refined(level)
            tg, sg = g.time(1.0), g.space()
            u_star, f = manufactured(tg, sg, alpha)
            u = solve(f, alpha)
            err = float(np.linalg.norm(u.values - u_star.values) / np.linalg.norm(u_star.values))
            rep = residual_and_weakform_check(u, f, alpha)
            if cache_dir is not None and level == 0:
                u.save(Path(cache_dir) / f"solution_a{alpha:g}", alpha=alpha)
            records.append({"alpha": alpha, "n_steps": g.n_steps, "n_points": g.n_points,
                            "l2_error": err, "residual": rep.residual, "weak_form": rep.weak_form})
    return EstimateReport("solve", config.to_dict(), records,
                          {"max_l2_error": max(r["l2_error"] for r in records)},
                          time.perf_counter() - start, git=_git_hash())


def run_ap_weights(config: ExperimentConfig) -> EstimateReport:
    """Classify a grid of power exponents by the empirical ``A_p`` characteristic."""
    start = time.perf_counter()
    d = config.grid.dim
    records = []
    sampling = SamplingSpec()
    for p, _ in config.pq:
        for g in np.round(np.arange(-d - 0.5, d * (p - 1) + 0.5 + 1e-9, 0.25), 10):
            est = ap_characteristic(PowerWeight(float(g), d), p, sampling)
            records.append({"dim": d, "p": p, "gamma": float(g), "estimate": est.value,
                            "converged": est.converged, "member": in_power_class(float(g), d, p)})
    agree = all(r["converged"] == r["member"] for r in records)
    return EstimateReport("ap-weights", config.to_dict(), records, {"criterion_agrees": agree},
                          time.perf_counter() - start, git=_git_hash())


def run_experiment(config: ExperimentConfig, cache_dir: Path | None = None) -> EstimateReport:
    if config.kind == "estimate-ratio":
        return run_estimate_experiment(config)
    if config.kind == "sharp-check":
        return run_sharp_experiment(config)
    if config.kind == "identities":
        return run_identities(config)
    if config.kind == "kernel":
        return run_kernel(config, cache_dir)
    if config.kind == "solve":
        return run_solve(config, cache_dir)
    return run_ap_weights(config)


# --- reporting -----------------------------------------------------------------------------


def _git_hash() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _csv_text(records: list[dict]) -> str:
    columns: list[str] = []
    for r in records:
        for k in r:
            if k not in columns and k not in RUNTIME_FIELDS:
                columns.append(k)
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items() if k in columns})
    return buf.getvalue()


def _summary_text(report: EstimateReport) -> str:
    lines = [f"experiment: {report.kind}", f"version: {report.version} ({report.git})",
             f"records: {len(report.records)}", f"runtime: {report.runtime_s:.1f} s"]
    for key, val in report.summary.items():
        if isinstance(val, list):
            lines.append(f"{key}: {len(val)} entries")
            for row in val[:200]:
                lines.append("  " + json.dumps(row, sort_keys=True))
        else:
            lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"


def emit_report(report: EstimateReport, path) -> dict[str, Path]:
    """Write ``report.json``, ``records.csv`` and ``summary.txt`` into directory ``path``."""
    out = Path(path)
    files = {"json": out / "report.json", "csv": out / "records.csv", "summary": out / "summary.txt"}
    try:
        out.mkdir(parents=True, exist_ok=True)
        doc = dict(report.comparable(), runtime_s=report.runtime_s, git=report.git)
        files["json"].write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default))
        files["csv"].write_text(_csv_text(report.records))
        files["summary"].write_text(_summary_text(report))
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return files


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def load_report(path) -> EstimateReport:
    doc = json.loads((Path(path) / "report.json").read_text())
    return EstimateReport(doc["kind"], doc["config"], doc["records"], doc["summary"],
                          doc.get("runtime_s", 0.0), doc.get("version", ""), doc.get("git", "unknown"))
