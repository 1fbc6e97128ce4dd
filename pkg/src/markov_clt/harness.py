"""Config-driven experiments and their CSV/JSON reports.

Five experiment kinds are supported:

``mc-clt``
    Ensemble of normalized reward sums ``U_n`` of a finite chain compared
    with ``N(0, Sigma_inf)``, next to the martingale CLT bound.
``td-clt``
    Ensemble of ``sqrt(n) (theta_bar_n - theta*)`` for averaged TD(0),
    compared with ``N(0, A_bar^{-1} Sigma_inf A_bar^{-T})``.
``bound-curve``
    The martingale CLT bound at a fixed ``beta`` and at the log schedule.
``upsilon-decay``
    Averaged squared norms of the deterministic ``Upsilon_j^t`` matrices.
``delta-moments``
    Ensemble mean of ``||theta_k - theta*||^2`` along single long runs.

Every Monte Carlo distance is reported next to its finite-sample floor,
the distance between two independent reference samples of the same size.
Rows of the form ``<name>_slope`` (with ``n = 0``) hold fitted log-log
slopes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import formats, linalg, markov, rng, stats, stein, td
from .ensemble import run_chunks
from .errors import ConfigError, DegenerateCovarianceError, NumericalError, StabilityError

KINDS = ("mc-clt", "td-clt", "bound-curve", "upsilon-decay", "delta-moments")
CSV_COLUMNS = ("experiment", "n", "estimator", "value", "stderr", "wall_ms")
# the exact law of U_n is only computed when the DP table stays small
EXACT_LAW_MAX_WIDTH = 20_000

_REQUIRED = {
    "mc-clt": ("chain", "reward", "n_grid", "replicates"),
    "td-clt": ("model", "n_grid", "replicates"),
    "bound-curve": ("chain", "reward", "n_grid"),
    "upsilon-decay": ("n_grid",),
    "delta-moments": ("model", "n_grid", "replicates"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``chain``, ``reward`` and ``model`` are either inline JSON objects or
    paths, resolved against `base_dir` (the config file's directory).
    """

    kind: str
    n_grid: tuple
    chain: object = None
    reward: object = None
    model: object = None
    replicates: int = 1000
    seed: int = 0
    delta: float | None = None
    beta: object = 0.5
    directions: int = 256
    threads: int = 1
    start: object = None
    c_universal: float = 1.0
    theta0: object = None
    A_bar: object = None
    base_dir: Path = field(default=Path("."), compare=False)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        extra = sorted(set(doc) - known)
        if extra:
            raise ConfigError(f"unknown config key {extra[0]!r}")
        if "kind" not in doc:
            raise ConfigError("config is missing field 'kind'")
        cfg = cls(**doc, base_dir=Path(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(formats.read_json(path), Path(path).parent)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"field 'kind' must be one of {', '.join(KINDS)}, got {self.kind!r}")
        for key in _REQUIRED[self.kind]:
            if getattr(self, key) is None:
                raise ConfigError(f"field {key!r} is required for kind {self.kind!r}")
        if self.kind == "upsilon-decay" and self.model is None:
            if self.A_bar is None or self.delta is None:
                raise ConfigError("upsilon-decay needs 'model' or both 'A_bar' and 'delta'")
        grid = self.n_grid
        if not isinstance(grid, (list, tuple)) or not grid:
            raise ConfigError("field 'n_grid' must be a non-empty list")
        if not all(_is_int(n) and n >= 1 for n in grid):
            raise ConfigError("field 'n_grid' must contain positive integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("field 'n_grid' must be strictly increasing")
        object.__setattr__(self, "n_grid", tuple(int(n) for n in grid))
        for key in ("replicates", "directions", "threads"):
            v = getattr(self, key)
            if not _is_int(v) or v < 1:
                raise ConfigError(f"field {key!r} must be a positive integer, got {v!r}")
        if not _is_int(self.seed) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"field 'seed' must be an integer in [0, 2^64), got {self.seed!r}")
        if self.delta is not None:
            if not _is_num(self.delta) or not 0.5 < self.delta < 1.0:
                raise ConfigError(f"field 'delta' must lie in (0.5, 1), got {self.delta!r}")
        if self.beta != "schedule" and (not _is_num(self.beta) or not 0.0 < self.beta < 1.0):
            raise ConfigError(f"field 'beta' must lie in (0, 1) or be \"schedule\", got {self.beta!r}")
        if not _is_num(self.c_universal) or self.c_universal <= 0:
            raise ConfigError("field 'c_universal' must be a positive number")
        if self.start is not None and not (_is_int(self.start) or isinstance(self.start, list)):
            raise ConfigError("field 'start' must be null, a state index or a distribution")

    # resolved inputs

    def _resolve(self, value):
        if isinstance(value, str):
            return self.base_dir / value
        return value

    def load_chain(self):
        return formats.chain_from_json(self._resolve(self.chain))

    def load_reward(self):
        return formats.reward_from_json(self._resolve(self.reward))

    def load_model(self) -> td.TDModel:
        model = formats.td_model_from_json(self._resolve(self.model))
        if self.delta is not None:
            model = replace(model, delta=float(self.delta))
        return model


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    n: int
    estimator: str
    value: float
    stderr: float = math.nan
    wall_ms: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise NumericalError(f"estimator {self.estimator!r} at n={self.n} is not finite")


@dataclass
class ExperimentResult:
    kind: str
    rows: list
    reports: dict
    meta: dict


class _Recorder:
    """Collects rows and the per-estimator curves that are later fitted."""

    def __init__(self, kind):
        self.kind = kind
        self.rows = []
        self.curves = {}
        self.meta = {}

    def add(self, n, name, value, stderr=math.nan, wall_ms=0.0, curve=True):
        self.rows.append(ResultRow(self.kind, int(n), name, float(value), float(stderr), wall_ms))
        if curve:
            self.curves.setdefault(name, ([], [], []))
            g, v, s = self.curves[name]
            g.append(n)
            v.append(float(value))
            s.append(float(stderr))

    def fit(self, names, wall_ms=0.0):
        """Fit and emit slope rows; curves with non-positive values are listed as unfit."""
        reports = {}
        for name in names:
            if name not in self.curves:
                continue
            g, v, s = self.curves[name]
            if len(g) < 2:
                continue
            if min(v) <= 0:
                bad = g[int(np.argmin(v))]
                self.meta.setdefault("unfit", {})[name] = f"non-positive value at n={bad}"
                continue
            rep = stats.RateReport.fit(g, v, s)
            reports[name] = rep
            self.add(0, f"{name}_slope", rep.slope, wall_ms=wall_ms, curve=False)
        return ExperimentResult(self.kind, self.rows, reports, self.meta)


def _ms(t0):
    return round((time.perf_counter() - t0) * 1e3, 3)


def _distances(rec, n, samples, cov, seed, eid, directions, wall):
    """Distance to the reference Gaussian, the floor and their difference."""
    R = len(samples)
    ref = stats.gaussian_samples(cov, R, rng.stream(seed, eid, 0, rng.REFERENCE))
    flo = stats.gaussian_samples(cov, R, rng.stream(seed, eid, 0, rng.FLOOR))
    d, dse = stats.distance(samples, ref, directions, rng.stream(seed, eid, 0, rng.DIRECTIONS))
    f, fse = stats.distance(flo, ref, directions, rng.stream(seed, eid, 0, rng.DIRECTIONS))
    se = dse if samples.shape[1] > 1 else math.nan
    fse = fse if samples.shape[1] > 1 else math.nan
    rec.add(n, "distance", d, se, wall)
    rec.add(n, "floor", f, fse, wall)
    rec.add(n, "distance_adjusted", d - f, math.hypot(se, fse) if se == se else math.nan, wall)


def _cov_error(rec, n, samples, target, wall):
    emp = stats.empirical_covariance(samples)
    scale = linalg.hs_norm(target)
    err = linalg.hs_norm(emp - target)
    if scale > 0:
        rec.add(n, "cov_rel_error", err / scale, wall_ms=wall)
    else:
        rec.add(n, "cov_hs_error", err, wall_ms=wall)


def require_positive_definite(cov):
    if not cov.positive_definite:
        raise DegenerateCovarianceError(
            f"asymptotic covariance is singular (min eigenvalue {cov.min_eigenvalue:.3g}); "
            "the reward must not be a constant plus a coboundary"
        )


def run_mc_clt(cfg: ExperimentConfig) -> ExperimentResult:
    chain, reward = cfg.load_chain(), cfg.load_reward()
    if reward.ndim != 2:
        raise ConfigError("mc-clt needs a vector reward (field 'r')")
    sol = markov.solve_poisson(chain, reward)
    cov = markov.asymptotic_covariance(chain, sol)
    require_positive_definite(cov)
    d = reward.shape[1]
    rec = _Recorder(cfg.kind)
    rec.meta.update(metric="w1" if d == 1 else "sliced_w1", sigma_inf=cov.matrix, d=d,
                    c_universal=cfg.c_universal, beta=cfg.beta)
    integer = d == 1 and np.allclose(reward, np.round(reward), rtol=0, atol=1e-12)
    span = int(np.ptp(np.round(reward))) if integer else 0
    t_all = time.perf_counter()
    for n in cfg.n_grid:
        t0 = time.perf_counter()
        eid = rng.experiment_id(f"mc-clt/n={n}")
        gens = [rng.stream(cfg.seed, eid, r, rng.CHAIN) for r in range(cfg.replicates)]
        job = lambda g, n=n: markov.ensemble_reward_sums(chain, reward, n, g, cfg.start)  # noqa: E731
        sums = np.concatenate(run_chunks(job, gens, cfg.threads))
        U = (sums - n * sol.r_bar) / math.sqrt(n)
        wall = _ms(t0)
        _distances(rec, n, U, cov.matrix, cfg.seed, eid, cfg.directions, wall)
        if cfg.replicates > 1:
            _cov_error(rec, n, U, cov.matrix, wall)
        bound = stein.chain_bound(chain, sol, cov.matrix, n, cfg.beta, cfg.start, cfg.c_universal)
        rec.add(n, "bound", bound, wall_ms=wall)
        if integer and n * span < EXACT_LAW_MAX_WIDTH:
            vals, pmf = markov.partial_sum_law(chain, reward, n, cfg.start)
            atoms = (vals - n * sol.r_bar[0]) / math.sqrt(n)
            w = stats.w1_discrete_to_gaussian(atoms, pmf, math.sqrt(cov.matrix[0, 0]))
            rec.add(n, "w1_exact_law", w, wall_ms=_ms(t0))
    return rec.fit(["distance", "distance_adjusted", "cov_rel_error", "bound", "w1_exact_law"], _ms(t_all))


def run_td_clt(cfg: ExperimentConfig) -> ExperimentResult:
    model = cfg.load_model()
    target = td.mean_dynamics(model)
    rec = _Recorder(cfg.kind)
    rec.meta.update(metric="w1" if model.d == 1 else "sliced_w1", delta=model.delta,
                    theta_star=target.theta_star, limit_cov=target.limit_cov)
    if not linalg.is_positive_definite(target.limit_cov):
        rec.meta["reference_degenerate"] = True
        rec.add(0, "reference_degenerate", 1.0, curve=False)
    t_all = time.perf_counter()
    for n in cfg.n_grid:
        t0 = time.perf_counter()
        eid = rng.experiment_id(f"td-clt/n={n}")
        bars, _ = td.simulate_ensemble(
            model, n, cfg.replicates, cfg.seed, eid, theta0=cfg.theta0, start=cfg.start,
            threads=cfg.threads, target=target,
        )
        Y = math.sqrt(n) * (bars[0] - target.theta_star)
        wall = _ms(t0)
        _distances(rec, n, Y, target.limit_cov, cfg.seed, eid, cfg.directions, wall)
        if cfg.replicates > 1:
            _cov_error(rec, n, Y, target.limit_cov, wall)
    return rec.fit(["distance", "distance_adjusted", "cov_rel_error"], _ms(t_all))


def run_bound_curve(cfg: ExperimentConfig) -> ExperimentResult:
    """Bound at fixed ``beta`` (unless ``beta`` is ``"schedule"``) and at ``beta_schedule(n)``."""
    chain, reward = cfg.load_chain(), cfg.load_reward()
    if reward.ndim != 2:
        raise ConfigError("bound-curve needs a vector reward (field 'r')")
    sol = markov.solve_poisson(chain, reward)
    cov = markov.asymptotic_covariance(chain, sol)
    require_positive_definite(cov)
    rec = _Recorder(cfg.kind)
    rec.meta.update(c_universal=cfg.c_universal, beta=cfg.beta)
    rec.add(0, "c_universal", cfg.c_universal, curve=False)
    ratios = []
    t_all = time.perf_counter()
    for n in cfg.n_grid:
        t0 = time.perf_counter()
        if cfg.beta != "schedule":
            b = stein.chain_bound(chain, sol, cov.matrix, n, cfg.beta, cfg.start, cfg.c_universal)
            rec.add(n, "bound_fixed", b, wall_ms=_ms(t0))
        t0 = time.perf_counter()
        b = stein.chain_bound(chain, sol, cov.matrix, n, "schedule", cfg.start, cfg.c_universal)
        rec.add(n, "bound_schedule", b, wall_ms=_ms(t0))
        ratios.append(b / (math.log(n) / math.sqrt(n)))
        rec.add(n, "schedule_ratio", ratios[-1], curve=False)
    # smallest c with bound_schedule(n) <= c log n / sqrt n on the grid
    rec.add(0, "schedule_c", max(ratios), curve=False)
    return rec.fit(["bound_fixed", "bound_schedule"], _ms(t_all))


def run_upsilon_decay(cfg: ExperimentConfig) -> ExperimentResult:
    if cfg.model is not None:
        model = cfg.load_model()
        A_bar, delta = model.A_bar, model.delta
    else:
        A_bar, delta = np.atleast_2d(np.asarray(cfg.A_bar, dtype=float)), float(cfg.delta)
    if not linalg.is_hurwitz(-A_bar):
        raise StabilityError("-A_bar is not Hurwitz")
    rec = _Recorder(cfg.kind)
    rec.meta.update(delta=delta, A_bar=A_bar)
    t_all = time.perf_counter()
    for t in cfg.n_grid:
        t0 = time.perf_counter()
        norms = td.upsilon_norms(t, delta, A_bar)
        wall = _ms(t0)
        rec.add(t, "upsilon_sq_mean", float(np.mean(norms**2)), wall_ms=wall)
        rec.add(t, "upsilon_sup", float(norms.max()), wall_ms=wall)
    return rec.fit(["upsilon_sq_mean"], _ms(t_all))


def run_delta_moments(cfg: ExperimentConfig) -> ExperimentResult:
    model = cfg.load_model()
    rec = _Recorder(cfg.kind)
    rec.meta.update(delta=model.delta)
    t0 = time.perf_counter()
    rep = td.delta_moment_curve(
        model, cfg.n_grid, cfg.replicates, cfg.seed, cfg.theta0, cfg.start, cfg.threads,
        experiment=rng.experiment_id("delta-moments"),
    )
    wall = _ms(t0)
    for k, v, s in zip(cfg.n_grid, rep.values, rep.stderrs):
        rec.add(k, "delta_sq_mean", v, s, wall)
    return rec.fit(["delta_sq_mean"], wall)


RUNNERS = {
    "mc-clt": run_mc_clt,
    "td-clt": run_td_clt,
    "bound-curve": run_bound_curve,
    "upsilon-decay": run_upsilon_decay,
    "delta-moments": run_delta_moments,
}


def run(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg)


def _fmt(x):
    return "" if math.isnan(x) else repr(float(x))


def to_csv(result: ExperimentResult, timing: bool = True) -> str:
    """CSV text; with ``timing=False`` every ``wall_ms`` is written as 0."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.rows:
        w.writerow([r.experiment, r.n, r.estimator, _fmt(r.value), _fmt(r.stderr),
                    f"{r.wall_ms:.3f}" if timing else "0"])
    return buf.getvalue()


def to_json(result: ExperimentResult, timing: bool = True) -> str:
    def row(r):
        return {
            "experiment": r.experiment, "n": r.n, "estimator": r.estimator, "value": r.value,
            "stderr": None if math.isnan(r.stderr) else r.stderr,
            "wall_ms": r.wall_ms if timing else 0,
        }

    reports = {
        name: {"grid": rep.grid, "values": rep.values, "stderrs": [None if math.isnan(s) else s for s in rep.stderrs],
               "slope": rep.slope, "intercept": rep.intercept}
        for name, rep in result.reports.items()
    }
    doc = {"experiment": result.kind, "meta": result.meta, "rows": [row(r) for r in result.rows],
           "reports": reports}
    return json.dumps(formats.to_jsonable(doc), indent=2) + "\n"


def read_csv(source) -> list[ResultRow]:
    """Parse rows written by :func:`to_csv` from a path or CSV text."""
    text = source if "\n" in str(source) else Path(source).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ConfigError(f"CSV header must be {','.join(CSV_COLUMNS)}")
    rows = []
    for i, rec in enumerate(reader, start=2):
        try:
            rows.append(ResultRow(rec["experiment"], int(rec["n"]), rec["estimator"], float(rec["value"]),
                                  float(rec["stderr"]) if rec["stderr"] else math.nan, float(rec["wall_ms"])))
        except (TypeError, ValueError):
            raise ConfigError(f"malformed CSV row on line {i}") from None
    return rows
