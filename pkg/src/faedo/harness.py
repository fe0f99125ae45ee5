"""Experiment configuration, convergence sweeps, hypothesis checks and reports.

Every continuum object (the solution Psi, the map K and its derivative K') is
a proxy on a reference basis of dimension ``n_ref = ref_multiplier * max(n)``.
Operator-norm columns (h5, h7, h8) are sampled lower-bound estimates.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .derivative import Linearization, dispersion_estimate, random_unit_trajectories, sup_norms
from .evolution import GalerkinProblem, PropagatorConfig
from .fixed_point import (
    INITIAL_PRESETS,
    FixedPointConfig,
    MaxIterations,
    NonContraction,
    ReferenceSolution,
    apply_K_ref,
    apply_Kn,
    initial_state,
    reference_problem,
    reference_solution,
    solve_fixed_point,
)
from .function_space import (
    FieldSample,
    SpatialDomain,
    TimeGrid,
    Trajectory,
    build_basis,
    h10_norm,
    inject,
    project_Pn,
    project_Qn,
    traj_norm,
    transfer_matrix,
)
from .potentials import ExternalPotentialSpec, HartreeKernel

log = logging.getLogger(__name__)

WORKERS_ENV = "FAEDO_WORKERS"

SWEEP_COLUMNS = (
    "n", "e_proj", "e_init", "e_fp", "e_total", "c_n", "iters", "contraction",
    "h3", "h4", "h5", "h6", "h7", "h8",
)
HYPOTHESIS_COLUMNS = ("n", "h3", "h4", "h5", "h6", "h7", "h8")


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _ints(text):
    return tuple(int(v) for v in text.split(","))


def _key(section, name, parse, help=""):
    return field(metadata={"key": f"{section}.{name}", "parse": parse, "help": help})


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; each field maps to one ``section.name`` key."""

    length: float = _key("domain", "length", float)
    nodes: int = _key("domain", "nodes", int)
    panel_order: int = _key("domain", "panel_order", int)
    horizon: float = _key("time", "horizon", float)
    samples: int = _key("time", "samples", int)
    substeps: int = _key("time", "substeps", int)
    hbar: float = _key("physics", "hbar", float)
    mass: float = _key("physics", "mass", float)
    orbitals: int = _key("physics", "orbitals", int)
    initial: str = _key("physics", "initial", str)
    preset: str = _key("potential", "preset", str)
    amplitude: float = _key("potential", "amplitude", float)
    drive_amplitude: float = _key("potential", "drive_amplitude", float)
    drive_frequency: float = _key("potential", "drive_frequency", float)
    well_shape: float = _key("potential", "well_shape", float)
    softening: float = _key("kernel", "softening", float)
    truncation: float = _key("kernel", "truncation", float)
    coupling: float = _key("kernel", "coupling", float)
    n_values: tuple = _key("sweep", "n_values", _ints)
    ref_multiplier: int = _key("sweep", "ref_multiplier", int)
    tolerance: float = _key("fixed_point", "tolerance", float)
    max_iter: int = _key("fixed_point", "max_iter", int)
    damping: float = _key("fixed_point", "damping", float)
    ref_tolerance: float = _key("fixed_point", "ref_tolerance", float)
    dim_cap: int = _key("derivative", "dim_cap", int)
    dispersion_samples: int = _key("derivative", "dispersion_samples", int)
    probes: int = _key("derivative", "probes", int)
    ball_draws: int = _key("derivative", "ball_draws", int)
    ball_radius: float = _key("derivative", "ball_radius", float)
    fd_steps: tuple = _key("derivative", "fd_steps", _floats)
    seed: int = _key("derivative", "seed", int)
    directory: str = _key("output", "directory", str)
    format: str = _key("output", "format", str)

    def __post_init__(self):
        ns = self.n_values
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
            raise ConfigError("sweep.n_values must be positive and strictly increasing")
        if self.ref_multiplier < 4:
            raise ConfigError("sweep.ref_multiplier must be >= 4 (n_ref >= 4 max(n))")
        if self.initial not in INITIAL_PRESETS:
            raise ConfigError(f"physics.initial must be one of {INITIAL_PRESETS}")
        if self.format not in ("csv", "json", "both"):
            raise ConfigError("output.format must be csv, json or both")
        try:
            self.domain, self.grid, self.potential, self.kernel, self.propagator
            FixedPointConfig(self.tolerance, self.max_iter, self.damping)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def n_ref(self) -> int:
        return self.ref_multiplier * max(self.n_values)

    @property
    def domain(self) -> SpatialDomain:
        return SpatialDomain(self.length, self.nodes, self.panel_order)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.samples)

    @property
    def potential(self) -> ExternalPotentialSpec:
        return ExternalPotentialSpec(self.preset, self.amplitude, self.drive_amplitude, self.drive_frequency, self.well_shape)

    @property
    def kernel(self) -> HartreeKernel:
        return HartreeKernel(self.softening, self.truncation, self.coupling)

    @property
    def propagator(self) -> PropagatorConfig:
        return PropagatorConfig(self.substeps, self.hbar, self.mass)

    @property
    def fixed_point(self) -> FixedPointConfig:
        return FixedPointConfig(self.tolerance, self.max_iter, self.damping)

    def problem(self, n: int) -> GalerkinProblem:
        return GalerkinProblem(build_basis(self.domain, n), self.grid, self.potential, self.kernel, self.propagator)

    def initial_field(self) -> FieldSample:
        return initial_state(self.initial, self.domain, self.orbitals)

    def replace(self, **changes) -> "ExperimentConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ExperimentConfig(**values)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.metadata['key']} = {v}")
        return "\n".join(lines) + "\n"


CONFIG_KEYS = {f.metadata["key"]: f for f in fields(ExperimentConfig)}


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Every key is required."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        f = CONFIG_KEYS[key]
        if f.name in values:
            raise ConfigError(f"duplicate config key {key!r}")
        try:
            values[f.name] = f.metadata["parse"](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    missing = [k for k, f in CONFIG_KEYS.items() if f.name not in values]
    if missing:
        raise ConfigError(f"missing config key {missing[0]!r}" + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    return ExperimentConfig(**values)


def default_config_text() -> str:
    return resources.files("faedo").joinpath("configs/default.cfg").read_text()


def load_config(source: str | os.PathLike) -> ExperimentConfig:
    """Load a config by path, or the packaged one when `source` is ``"default"``."""
    if str(source) == "default":
        return parse_config(default_config_text())
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc}") from exc
    return parse_config(text)


def default_config(**changes) -> ExperimentConfig:
    cfg = parse_config(default_config_text())
    return cfg.replace(**changes) if changes else cfg


# ---------------------------------------------------------------------------
# experiments


def build_reference(cfg: ExperimentConfig) -> ReferenceSolution:
    problem = reference_problem(cfg.problem(max(cfg.n_values)), cfg.n_ref)
    fp = FixedPointConfig(cfg.ref_tolerance, max(cfg.max_iter, 100), cfg.damping)
    return reference_solution(problem, cfg.initial_field(), fp)


def initial_error(basis, initial: FieldSample) -> float:
    """``||Psi_0 - Q_n Psi_0||_{H^1_0}`` against the exact initial field."""
    c = project_Qn(basis, initial)
    diff = FieldSample(initial.domain, initial.values - basis.synthesize(c), initial.grad - basis.synthesize_grad(c))
    return h10_norm(diff)


@dataclass
class _Shared:
    cfg: ExperimentConfig
    ref: ReferenceSolution
    k_ref: Trajectory  # K Psi_ref
    probes_ref: np.ndarray
    kprime_ref_probes: np.ndarray  # K'(Psi_ref) applied to probes_ref


def _shared_state(cfg: ExperimentConfig, ref: ReferenceSolution) -> _Shared:
    rng = np.random.default_rng(cfg.seed)
    probes = random_unit_trajectories(rng, cfg.probes, ref.trajectory.coeffs.shape)
    lin = Linearization(ref.problem, ref.trajectory, ref.psi0)
    return _Shared(cfg, ref, apply_K_ref(ref, ref.trajectory), probes, lin.apply(probes))


def _measure(shared: _Shared, n: int) -> dict:
    cfg, ref = shared.cfg, shared.ref
    fine = ref.problem.basis
    problem = ref.problem.with_basis(build_basis(cfg.domain, n)) if n != fine.dim else ref.problem
    basis = problem.basis
    R = transfer_matrix(basis, fine)
    initial = cfg.initial_field()
    psi0 = project_Qn(basis, initial)
    row = {"n": n}

    p_ref = project_Pn(basis, ref.trajectory)
    e_proj = traj_norm(ref.trajectory, inject(p_ref, fine))
    row["e_proj"] = e_proj
    row["e_init"] = initial_error(basis, initial)

    # consistency-type quantities need only P_n Psi, not the discrete fixed point
    kn_p = apply_Kn(problem, p_ref, psi0)
    k_p = apply_K_ref(ref, p_ref)
    pk_p = project_Pn(basis, k_p)
    row["c_n"] = traj_norm(project_Pn(basis, shared.k_ref), kn_p)
    row["h3"] = e_proj
    row["h4"] = traj_norm(inject(pk_p, fine), shared.k_ref)
    row["h6"] = traj_norm(pk_p, kn_p)

    # h5: P_n K'(P_n Psi) - K'(Psi) on reference probes
    lin_ref_p = Linearization(ref.problem, inject(p_ref, fine), ref.psi0)
    img = lin_ref_p.apply(shared.probes_ref)
    diff = (img @ R) @ R.T - shared.kprime_ref_probes
    row["h5"] = float(np.max(sup_norms(diff) / sup_norms(shared.probes_ref)))

    # h7: [K_n' - P_n K'](P_n Psi) on E_n probes
    rng = np.random.default_rng([cfg.seed, n])
    probes_n = random_unit_trajectories(rng, cfg.probes, p_ref.coeffs.shape)
    lin_n = Linearization(problem, p_ref, psi0)
    base_n = lin_n.apply(probes_n)
    img = lin_ref_p.apply(probes_n @ R.T) @ R
    row["h7"] = float(np.max(sup_norms(base_n - img) / sup_norms(probes_n)))

    # h8: sup over a ball around P_n Psi whose radius scales with ||Psi - P_n Psi||
    radius = cfg.ball_radius * e_proj
    draws = random_unit_trajectories(rng, cfg.ball_draws, p_ref.coeffs.shape)
    h8 = 0.0
    for xi in draws:
        moved = p_ref.replace(p_ref.coeffs + radius * xi)
        img = Linearization(problem, moved, psi0).apply(probes_n)
        h8 = max(h8, float(np.max(sup_norms(img - base_n) / sup_norms(probes_n))))
    row["h8"] = h8

    try:
        psi_n, it = solve_fixed_point(problem, psi0, cfg.fixed_point)
    except (NonContraction, MaxIterations) as exc:
        row.update(e_fp=math.nan, e_total=math.nan, iters=cfg.max_iter, contraction=math.nan)
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row["e_fp"] = traj_norm(psi_n, p_ref)
    row["e_total"] = traj_norm(inject(psi_n, fine), ref.trajectory)
    row["iters"] = it.iterations
    row["contraction"] = it.contraction
    row["max_ratio"] = it.max_ratio
    return row


def worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _map(func, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))


class _MeasureN:
    def __init__(self, shared):
        self.shared = shared

    def __call__(self, n):
        try:
            return _measure(self.shared, n)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            row = {c: math.nan for c in SWEEP_COLUMNS}
            row.update(n=n, iters=0, error=f"{type(exc).__name__}: {exc}")
            return row


@dataclass
class ConvergenceReport:
    """Per-n measurements plus the provenance of the reference proxy."""

    rows: list
    n_ref: int
    ref_residual: float
    ref_iterations: int
    seed: int
    config: ExperimentConfig | None = None
    notes: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def failed(self) -> list:
        return [r for r in self.rows if "error" in r]

    def to_csv(self, columns=SWEEP_COLUMNS) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in self.rows:
            w.writerow([format_value(r.get(c, math.nan)) for c in columns])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "n_ref": self.n_ref,
            "reference_residual": self.ref_residual,
            "reference_iterations": self.ref_iterations,
            "seed": self.seed,
            "notes": self.notes,
            "rows": [{k: _jsonable(v) for k, v in r.items()} for r in self.rows],
        }
        if self.config is not None:
            payload["config"] = {k: _jsonable(v) for k, v in asdict(self.config).items()}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v


def _clean(obj):
    """Recursively make `obj` strict-JSON serializable (NaN becomes null)."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _jsonable(obj)


def format_value(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".12g")


REPORT_NOTES = {
    "reference": "continuum quantities are fixed-point proxies on the reference basis",
    "h5": "est. sampled operator-norm lower bound (random probes)",
    "h7": "est. sampled operator-norm lower bound (random probes)",
    "h8": "est. sampled sup over a ball of radius ball_radius * e_proj around P_n Psi",
}


def run_convergence_sweep(cfg: ExperimentConfig, ref: ReferenceSolution | None = None) -> ConvergenceReport:
    """Reference solution once, then every report column for each n in the sweep."""
    ref = ref or build_reference(cfg)
    shared = _shared_state(cfg, ref)
    rows = _map(_MeasureN(shared), list(cfg.n_values), worker_count())
    return ConvergenceReport(rows, ref.n_ref, ref.residual, ref.iterations, cfg.seed, cfg, dict(REPORT_NOTES))


def run_hypothesis_check(cfg: ExperimentConfig, report: ConvergenceReport | None = None) -> list:
    """Rows ``{n, h3..h8}``; reuses `report` when given."""
    report = report or run_convergence_sweep(cfg)
    return [{c: r.get(c, math.nan) for c in HYPOTHESIS_COLUMNS} for r in report.rows]


def run_dispersion(cfg: ExperimentConfig, ref: ReferenceSolution | None = None) -> list:
    ref = ref or build_reference(cfg)
    bases = [build_basis(cfg.domain, n) for n in cfg.n_values]
    return dispersion_estimate(ref, bases, cfg.dispersion_samples, cfg.seed)


def least_squares_slope(x, y) -> float:
    """Slope of the least-squares line through (log x, log y)."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------------------
# output


def write_atomic(path: Path, text: str):
    """Write UTF-8 text with LF endings via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def table_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c, math.nan)) for c in columns])
    return buf.getvalue()


def write_outputs(cfg: ExperimentConfig, stem: str, csv_text: str, json_obj) -> list:
    out = Path(cfg.directory)
    written = []
    if cfg.format in ("csv", "both"):
        write_atomic(out / f"{stem}.csv", csv_text)
        written.append(out / f"{stem}.csv")
    if cfg.format in ("json", "both"):
        text = json_obj if isinstance(json_obj, str) else json.dumps(_clean(json_obj), indent=2, sort_keys=True) + "\n"
        write_atomic(out / f"{stem}.json", text)
        written.append(out / f"{stem}.json")
    return written
