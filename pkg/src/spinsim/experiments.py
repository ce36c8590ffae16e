"""Scenario runner: parameter sweeps over the conditioned map, written as deterministic CSV."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from .channel import fixed_points, iterate, kraus_family, polarized_mediator, transmit_step
from .noise import NoiseParams, monte_carlo_iterate, noisy_iterate
from .scattering import Model
from .spin import SpinQuantum, as_spin, check_density_matrix, fidelity_with_singlet, pair_singlet, projector, up_down

log = logging.getLogger(__name__)

SCENARIOS = ("fig2", "fig3b", "fig4", "fig5", "sweep", "fixedpoint")
CSV_HEADER = ("scenario", "model", "g", "q", "r_pol", "n", "F", "P", "mu", "tb_over_td", "stderr_F")
FIGURES = {"2": "fig2", "3b": "fig3b", "4": "fig4", "5": "fig5"}
NOISE_METHODS = ("exact", "montecarlo", "both")


class ConfigError(ValueError):
    """Unparseable or inconsistent scenario configuration."""


@dataclass(frozen=True)
class NoiseGrid:
    tb_over_td: tuple[float, ...] = (0.0,)
    mu: tuple[float, ...] = (0.0,)
    trajectories: int = 1000
    method: str = "exact"


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    model: Model = Model.EXCHANGE
    g_grid: tuple[float, ...] = (1.0,)
    q: int = 1
    n_max: int = 10
    n_values: tuple[int, ...] | None = None
    r_pol_grid: tuple[float, ...] = (0.0,)
    initial_state: Any = "up-down"
    s: SpinQuantum = SpinQuantum(1)
    noise: NoiseGrid | None = None
    seed: int = 0
    raman_scale: float = 0.5
    output_path: str | None = None
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def steps(self) -> tuple[int, ...]:
        return self.n_values if self.n_values is not None else tuple(range(1, self.n_max + 1))


@dataclass(frozen=True)
class RunRecord:
    scenario: str
    model: str
    g: float
    q: int
    r_pol: float
    n: int
    F: float
    P: float
    mu: float = 0.0
    tb_over_td: float = 0.0
    stderr_F: float | None = None

    def row(self) -> list[str]:
        return [
            self.scenario, self.model, _num(self.g), str(self.q), _num(self.r_pol), str(self.n),
            _num(self.F), _num(self.P), _num(self.mu), _num(self.tb_over_td),
            "" if self.stderr_F is None else _num(self.stderr_F),
        ]


@dataclass
class ScenarioResult:
    records: list[RunRecord]
    tables: dict[str, tuple[list[str], list[list[str]]]] = field(default_factory=dict)
    report: list[str] = field(default_factory=list)
    paths: list[Path] = field(default_factory=list)


def _num(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"non-finite value {x} in output")
    return f"{x:.16e}"


# ---------------------------------------------------------------- config parsing


def _grid(value, name: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        values = [float(value)]
    elif isinstance(value, list):
        values = value
    elif isinstance(value, dict):
        kinds = {"logspace", "linspace"} & value.keys()
        if len(kinds) != 1:
            raise ConfigError(f"{name}: grid object needs exactly one of 'logspace' or 'linspace'")
        kind = kinds.pop()
        try:
            lo, hi, num = value[kind]
            num = int(num)
            values = list(np.geomspace(lo, hi, num) if kind == "logspace" else np.linspace(lo, hi, num))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {kind} must be [start, stop, count]") from exc
        values += list(value.get("include", []))
        values = sorted(set(float(v) for v in values))
    else:
        raise ConfigError(f"{name}: expected a number, list or grid object, got {type(value).__name__}")
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: non-numeric entry") from exc
    if not out:
        raise ConfigError(f"{name}: grid is empty")
    if not all(np.isfinite(out)):
        raise ConfigError(f"{name}: non-finite entry")
    return out


def _spin(value) -> SpinQuantum:
    try:
        if isinstance(value, str) and "/" in value:
            num, den = value.split("/")
            return as_spin(int(num) / int(den))
        return as_spin(float(value))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"s: invalid spin {value!r}") from exc


def parse_config(data: dict, base_dir: Path | str = ".") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ScenarioConfig)} - {"base_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    scenario = data.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}, got {scenario!r}")
    kw: dict[str, Any] = {"scenario": scenario, "base_dir": Path(base_dir)}
    if "model" in data:
        try:
            kw["model"] = Model.parse(data["model"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    for key in ("g_grid", "r_pol_grid"):
        if key in data:
            kw[key] = _grid(data[key], key)
    for key in ("q", "n_max", "seed"):
        if key in data:
            v = data[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{key} must be an integer, got {v!r}")
            kw[key] = v
    if "n_values" in data and data["n_values"] is not None:
        nv = data["n_values"]
        if not isinstance(nv, list) or not nv or not all(isinstance(n, int) and n >= 1 for n in nv):
            raise ConfigError("n_values must be a non-empty list of positive integers")
        kw["n_values"] = tuple(nv)
    if "raman_scale" in data:
        kw["raman_scale"] = float(data["raman_scale"])
    if "initial_state" in data:
        kw["initial_state"] = data["initial_state"]
    if "s" in data:
        kw["s"] = _spin(data["s"])
    if "output_path" in data:
        kw["output_path"] = None if data["output_path"] is None else str(data["output_path"])
    if data.get("noise") is not None:
        kw["noise"] = _noise(data["noise"])
    cfg = ScenarioConfig(**kw)
    validate(cfg)
    return cfg


def _noise(value) -> NoiseGrid:
    if not isinstance(value, dict):
        raise ConfigError("noise must be an object")
    extra = set(value) - {"tb_over_td", "mu", "trajectories", "method"}
    if extra:
        raise ConfigError(f"unknown noise keys: {', '.join(sorted(extra))}")
    method = value.get("method", "exact")
    if method not in NOISE_METHODS:
        raise ConfigError(f"noise.method must be one of {', '.join(NOISE_METHODS)}")
    traj = value.get("trajectories", 1000)
    if isinstance(traj, bool) or not isinstance(traj, int) or traj < 1:
        raise ConfigError("noise.trajectories must be a positive integer")
    return NoiseGrid(
        tb_over_td=_grid(value.get("tb_over_td", 0.0), "noise.tb_over_td"),
        mu=_grid(value.get("mu", 0.0), "noise.mu"),
        trajectories=traj,
        method=method,
    )


def validate(cfg: ScenarioConfig) -> None:
    if cfg.n_max < 1:
        raise ConfigError(f"n_max must be >= 1, got {cfg.n_max}")
    if cfg.q < 1:
        raise ConfigError(f"q must be a positive integer, got {cfg.q}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if any(g < 0 for g in cfg.g_grid):
        raise ConfigError("g_grid entries must be >= 0")
    if any(not 0 <= r <= 1 for r in cfg.r_pol_grid):
        raise ConfigError("r_pol_grid entries must lie in [0, 1]")
    if cfg.raman_scale <= 0:
        raise ConfigError("raman_scale must be > 0")
    if cfg.noise is not None:
        if cfg.s.two_s != 1:
            raise ConfigError("noise is only defined for s = 1/2")
        if any(t < 0 for t in cfg.noise.tb_over_td) or any(not 0 <= m <= 1 for m in cfg.noise.mu):
            raise ConfigError("noise grids out of range (tb_over_td >= 0, mu in [0, 1])")
    if cfg.scenario == "fig5" and cfg.noise is None:
        raise ConfigError("fig5 requires a noise section")
    initial_state(cfg)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(data, path.parent)


def bundled_config(figure_id: str) -> ScenarioConfig:
    name = FIGURES.get(str(figure_id))
    if name is None:
        raise ConfigError(f"unknown figure id {figure_id!r}; expected one of {', '.join(FIGURES)}")
    text = resources.files("spinsim.configs").joinpath(f"{name}.json").read_text()
    return parse_config(json.loads(text))


def load_matrix(path: Path) -> np.ndarray:
    """Read a complex matrix from .npy or from JSON ``{"real": [[...]], "imag": [[...]]}``."""
    if path.suffix == ".npy":
        return np.load(path)
    data = json.loads(path.read_text())
    if isinstance(data, list):
        return np.array(data, dtype=complex)
    real = np.array(data["real"], dtype=float)
    imag = np.array(data.get("imag", np.zeros_like(real)), dtype=float)
    return real + 1j * imag


def initial_state(cfg: ScenarioConfig) -> np.ndarray:
    spec = cfg.initial_state
    dd = cfg.s.pair_dim
    if spec == "up-down":
        return up_down(cfg.s)
    if spec == "singlet":
        return projector(pair_singlet(cfg.s))
    if spec == "mixed":
        return np.eye(dd, dtype=complex) / dd
    if isinstance(spec, dict) and set(spec) == {"file"}:
        path = cfg.base_dir / spec["file"]
        try:
            rho = load_matrix(path)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load initial state from {path}: {exc}") from exc
        try:
            return check_density_matrix(rho, dd, atol=1e-9)
        except ValueError as exc:
            raise ConfigError(f"initial state {path} is not a valid density matrix: {exc}") from exc
    raise ConfigError(f"initial_state must be 'up-down', 'singlet', 'mixed' or {{'file': path}}, got {spec!r}")


# ---------------------------------------------------------------- execution


def worker_count() -> int:
    raw = os.environ.get("SPINSIM_THREADS")
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SPINSIM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"SPINSIM_THREADS must be a positive integer, got {raw!r}")
    return n


def _ordered_map(fn: Callable, items: Iterable) -> list:
    """Evaluate ``fn`` on a worker pool; results come back in input order."""
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _curve(cfg: ScenarioConfig, model: Model, g: float, r_pol: float):
    K = kraus_family(model, g, cfg.q, cfg.s)
    return iterate(initial_state(cfg), polarized_mediator(r_pol), K, max(cfg.steps))


def _records(cfg, scenario, model, g, r_pol, recs, mu=0.0, tb=0.0, stderr=None):
    out = []
    for n in cfg.steps:
        rec = recs[n - 1]
        se = None if stderr is None else float(stderr[n - 1])
        out.append(RunRecord(scenario, model.value, g, cfg.q, r_pol, n, rec.F, rec.P, mu, tb, se))
    return out


def _run_grid(cfg: ScenarioConfig, scenario: str, model: Model) -> list[RunRecord]:
    points = [(g, r) for g in cfg.g_grid for r in cfg.r_pol_grid]
    curves = _ordered_map(lambda pt: _curve(cfg, model, *pt), points)
    rows = []
    for (g, r), recs in zip(points, curves):
        rows += _records(cfg, scenario, model, g, r, recs)
    return rows


def _pivot(records: list[RunRecord], attr: str, steps) -> tuple[list[str], list[list[str]]]:
    header = ["g"] + [f"n={n}" for n in steps]
    by_g: dict[float, dict[int, float]] = {}
    for rec in records:
        by_g.setdefault(rec.g, {})[rec.n] = getattr(rec, attr)
    return header, [[_num(g)] + [_num(row[n]) for n in steps] for g, row in by_g.items()]


def _fig2(cfg: ScenarioConfig) -> ScenarioResult:
    cfg = replace(cfg, model=Model.EXCHANGE, r_pol_grid=(0.0,))
    records = _run_grid(cfg, "fig2", Model.EXCHANGE)
    tables = {"fidelity": _pivot(records, "F", cfg.steps), "probability": _pivot(records, "P", cfg.steps)}
    return ScenarioResult(records, tables)


def percent_difference(reference: float, other: float) -> float:
    return 100.0 * abs(reference - other) / abs(reference)


def _fig3b(cfg: ScenarioConfig) -> ScenarioResult:
    cfg = replace(cfg, r_pol_grid=(0.0,))
    ex = _ordered_map(lambda g: _curve(cfg, Model.EXCHANGE, g, 0.0), cfg.g_grid)
    ra = _ordered_map(lambda g: _curve(cfg, Model.RAMAN, cfg.raman_scale * g, 0.0), cfg.g_grid)
    records, diff = [], []
    for g, a, b in zip(cfg.g_grid, ex, ra):
        records += _records(cfg, "fig3b", Model.EXCHANGE, g, 0.0, a)
        records += _records(cfg, "fig3b", Model.RAMAN, cfg.raman_scale * g, 0.0, b)
        for n in cfg.steps:
            fa, fb = a[n - 1], b[n - 1]
            diff.append([_num(g), str(n), _num(percent_difference(fa.F, fb.F)),
                         _num(percent_difference(fa.P, fb.P))])
    tables = {"diff": (["g", "n", "dF_percent", "dP_percent"], diff)}
    return ScenarioResult(records, tables)


def _fig4(cfg: ScenarioConfig) -> ScenarioResult:
    return ScenarioResult(_run_grid(replace(cfg, model=Model.RAMAN), "fig4", Model.RAMAN))


def _noise_point(cfg: ScenarioConfig, method: str, g: float, r_pol: float, mu: float, tb: float):
    K = kraus_family(cfg.model, g, cfg.q, cfg.s)
    rho0, rho_e = initial_state(cfg), polarized_mediator(r_pol)
    p = NoiseParams(tb, mu, cfg.noise.trajectories, cfg.seed)
    if method == "exact":
        return noisy_iterate(rho0, rho_e, K, max(cfg.steps), p), None
    est = monte_carlo_iterate(rho0, rho_e, K, max(cfg.steps), p)
    return est.records, est.stderr_F


def _noisy(cfg: ScenarioConfig, scenario: str) -> ScenarioResult:
    noise = cfg.noise
    methods = ("exact", "montecarlo") if noise.method == "both" else (noise.method,)
    points = [(m, g, r, mu, tb) for m in methods for g in cfg.g_grid for r in cfg.r_pol_grid
              for mu in noise.mu for tb in noise.tb_over_td]
    results = _ordered_map(lambda pt: _noise_point(cfg, *pt), points)
    records = []
    for (m, g, r, mu, tb), (recs, se) in zip(points, results):
        tag = scenario if m == "exact" else f"{scenario}-mc"
        records += _records(cfg, tag, cfg.model, g, r, recs, mu, tb, se)
    return ScenarioResult(records)


def _fig5(cfg: ScenarioConfig) -> ScenarioResult:
    return _noisy(replace(cfg, model=Model.RAMAN), "fig5")


def _sweep(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.noise is not None:
        return _noisy(cfg, "sweep")
    return ScenarioResult(_run_grid(cfg, "sweep", cfg.model))


def _fixedpoint(cfg: ScenarioConfig) -> ScenarioResult:
    records, report = [], []
    for g in cfg.g_grid:
        for r in cfg.r_pol_grid:
            K = kraus_family(cfg.model, g, cfg.q, cfg.s)
            rho_e = polarized_mediator(r)
            states = fixed_points(K, rho_e)
            report.append(f"model={cfg.model.value} g={g:g} q={cfg.q} r_pol={r:g} s={cfg.s}: "
                          f"{len(states)} fixed state(s)")
            for rho in states:
                _, p1 = transmit_step(rho, rho_e, K)
                f = fidelity_with_singlet(rho)
                report.append(f"  singlet fidelity {f:.12f}, P1 {p1:.12f}, purity {np.trace(rho @ rho).real:.6f}")
                records.append(RunRecord("fixedpoint", cfg.model.value, g, cfg.q, r, 1, f, p1))
    return ScenarioResult(records, report=report)


_RUNNERS = {"fig2": _fig2, "fig3b": _fig3b, "fig4": _fig4, "fig5": _fig5, "sweep": _sweep,
            "fixedpoint": _fixedpoint}


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


PLOT_TEMPLATE = '''"""Plot {csv} (generated by spinsim)."""
import csv
import sys

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open({csv!r})))
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for key, ax in zip(("F", "P"), axes):
    series = {{}}
    for row in rows:
        label = f"{{row['scenario']}} {{row['model']}} n={{row['n']}}"
        series.setdefault(label, []).append((float(row["g"]), float(row[key])))
    for label, pts in sorted(series.items()):
        xs, ys = zip(*sorted(pts))
        ax.plot(xs, ys, label=label)
    ax.set_xlabel("g")
    ax.set_ylabel(key)
axes[0].legend(fontsize="x-small")
plt.savefig(sys.argv[1] if len(sys.argv) > 1 else {png!r})
'''


def run_scenario(cfg: ScenarioConfig, output_path: str | Path | None = None,
                 plot_script: bool = False) -> ScenarioResult:
    """Run one scenario; write ``<output>.csv`` plus ``<output>_<table>.csv`` extras if a path is set."""
    result = _RUNNERS[cfg.scenario](cfg)
    for rec in result.records:
        if not (0.0 <= rec.F <= 1.0 + 1e-12 and 0.0 <= rec.P <= 1.0 + 1e-12):
            raise ArithmeticError(f"record out of range: {rec}")
    out = output_path if output_path is not None else cfg.output_path
    if out is None:
        return result
    out = Path(out)
    if not out.is_absolute() and output_path is None:
        out = cfg.base_dir / out
    main = _write(out, render_csv(CSV_HEADER, [r.row() for r in result.records]))
    result.paths.append(main)
    for name, (header, rows) in result.tables.items():
        result.paths.append(_write(out.with_name(f"{out.stem}_{name}.csv"), render_csv(header, rows)))
    if result.report:
        result.paths.append(_write(out.with_suffix(".txt"), "\n".join(result.report) + "\n"))
    if plot_script:
        text = PLOT_TEMPLATE.format(csv=main.name, png=f"{main.stem}.png")
        result.paths.append(_write(out.with_name(f"{out.stem}_plot.py"), text))
    log.info("wrote %s", ", ".join(str(p) for p in result.paths))
    return result
