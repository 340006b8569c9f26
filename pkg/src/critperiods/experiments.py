"""Declarative experiment configs, runners and on-disk run layout.

A config is a YAML mapping::

    kind: completion_transfer
    seed: 0
    description: free text, ignored by the digest
    params: {depth: 3, observations: 2000}
    fast: {final_epochs: 3000}        # applied with --fast
    sweep: {depth: [1, 2, 3]}         # cartesian product of param values

Unknown keys at any level are rejected. Every param has a default, so the
resolved config (written as ``config.resolved``) fully determines a run.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .completion import partial_observation_experiment, transfer_run
from .deficits import DeficitSchedule, Window
from .errors import ConfigError, DivergenceError, FSingularityError
from .exact import analytical_compare, exact_compare
from .multipath import MultipathConfig, run_multipath_experiment
from .reduced import ReducedSystem, flow_field, integrate, phase_portrait
from .linalg import make_rng
from .tasks import hierarchical_task_checksum
from .trajectory import TrajectoryLog

OUT_ENV = "CRITPERIODS_OUT"
DEFAULT_OUT = "runs"

TOP_KEYS = {"kind", "seed", "description", "params", "fast", "sweep"}

# kind -> default params; the type of each default is the accepted type
DEFAULTS = {
    "multipath": {
        "depth": 4, "hidden_width": 100, "lr": 0.01, "epochs": 1500, "scale": 0.01,
        "noise_sd": 1e-3, "log_every": 1, "deficits": [], "compare_reduced": False,
    },
    "reduced_portrait": {
        "depth": 2, "sigma": 10.0, "trials": 100, "init_family": "unit-conserved",
        "step": 0.001, "epochs": 1000, "p_sd": 0.01, "eps": 0.005, "deficits": [],
        "record_every": 10,
    },
    "flow_field": {
        "depth": 2, "sigma": 10.0, "k_min": 0.0, "k_max": 10.0, "grid": 21, "tau": 1.0,
    },
    "completion_transfer": {
        "n": 100, "depth": 3, "g": 0.01, "lr": 0.2, "pretrain_rank": 10, "final_rank": 5,
        "observations": 2000, "pretrain_epochs": 0, "final_epochs": 30000, "gt_norm": "n",
        "pretrain_relation": "independent", "log_every": 500,
    },
    "partial_observation": {
        "n": 100, "depth": 3, "g": 0.01, "lr": 0.2, "rank": 5, "n_pre": 1500,
        "n_final": 4000, "durations": [0, 5000, 10000, 20000], "final_epochs": 30000,
        "gt_norm": "n",
    },
    "exact_compare": {
        "n": 100, "depth": 3, "lr": 0.25, "ranks": [8, 2], "observations": 1750,
        "switch_epoch": 15000, "post_epochs": 10000, "init_scale": 0.01, "init_floor": 0.01,
        "gt_norm": "n", "log_every": 100,
    },
    "analytical_compare": {
        "n": 100, "r_b": 5, "s_r": 20.0, "lam": 0.5, "eps": 0.01, "observations": None,
        "switch_epoch": 10000, "post_epochs": 20000, "gt_norm": "n_over_r", "log_every": 100,
    },
}
KINDS = tuple(DEFAULTS)


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    params: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    description: str = ""
    name: str = "run"

    def resolved(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "params": self.params,
                "sweep": self.sweep}

    def digest(self) -> str:
        """sha256 of the canonical JSON of the resolved config (name and description excluded)."""
        text = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def cells(self) -> list[dict]:
        """One params dict per point of the sweep grid (just ``params`` without a sweep)."""
        if not self.sweep:
            return [dict(self.params)]
        keys = sorted(self.sweep)
        out = []
        for values in itertools.product(*(self.sweep[k] for k in keys)):
            cell = dict(self.params)
            cell.update(zip(keys, values))
            out.append(cell)
        return out


# -- parsing -----------------------------------------------------------------

def _coerce(kind: str, key: str, value, default):
    where = f"{kind}.params.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and key == "depth" and isinstance(value, list):
        if not value or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where}: expected an integer or list of integers")
        return list(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if default is None:
        # optional count, e.g. observations: null means every entry
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer or null, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if key == "deficits":
            return [_deficit(kind, d) for d in value]
        return list(value)
    return value


DEFICIT_KEYS = {"pathway", "start", "end", "kind", "mode"}


def _deficit(kind: str, d) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{kind}.params.deficits: each entry must be a mapping")
    extra = set(d) - DEFICIT_KEYS
    if extra:
        raise ConfigError(f"{kind}.params.deficits: unknown keys {sorted(extra)}")
    try:
        w = {"pathway": str(d["pathway"]), "start": int(d["start"]),
             "end": None if d.get("end") is None else int(d["end"]),
             "kind": str(d.get("kind", "gating")),
             "mode": None if d.get("mode") is None else int(d["mode"])}
        _window(w)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{kind}.params.deficits: {exc}") from None
    return w


def _window(d: dict) -> Window:
    # config modes count from 1, matching the k_a_1 ... log columns
    mode = None if d["mode"] is None else d["mode"] - 1
    return Window(d["start"], d["end"], d["pathway"], d["kind"], mode)


def schedule_from(deficits) -> DeficitSchedule:
    return DeficitSchedule(tuple(_window(d) for d in deficits))


def _params(kind: str, raw, section: str, base: dict) -> dict:
    if raw is None:
        return dict(base)
    if not isinstance(raw, dict):
        raise ConfigError(f"{section} must be a mapping")
    defaults = DEFAULTS[kind]
    unknown = set(raw) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {section} keys for kind {kind!r}: {sorted(unknown)}")
    out = dict(base)
    for k, v in raw.items():
        out[k] = _coerce(kind, k, v, defaults[k])
    return out


def parse_config(obj, name: str = "run", fast: bool = False, seed: int | None = None
                 ) -> ExperimentConfig:
    """Validate a config mapping (or YAML text) and fill in defaults."""
    if isinstance(obj, str):
        try:
            obj = yaml.safe_load(obj)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(obj) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kind = obj.get("kind")
    if kind not in DEFAULTS:
        raise ConfigError(f"kind must be one of {list(KINDS)}, got {kind!r}")
    cfg_seed = obj.get("seed", 0) if seed is None else seed
    if isinstance(cfg_seed, bool) or not isinstance(cfg_seed, int) or not 0 <= cfg_seed < 2**63:
        raise ConfigError(f"seed must be a nonnegative integer, got {cfg_seed!r}")
    params = _params(kind, obj.get("params"), "params", DEFAULTS[kind])
    fast_params = _params(kind, obj.get("fast"), "fast", {})
    if fast:
        params.update(fast_params)
    sweep_raw = obj.get("sweep") or {}
    if not isinstance(sweep_raw, dict):
        raise ConfigError("sweep must be a mapping of param -> list of values")
    sweep = {}
    for k, values in sweep_raw.items():
        if k not in DEFAULTS[kind]:
            raise ConfigError(f"unknown sweep axis {k!r} for kind {kind!r}")
        if not isinstance(values, list):
            raise ConfigError(f"sweep axis {k!r} must be a list")
        sweep[k] = [_coerce(kind, k, v, DEFAULTS[kind][k]) for v in values]
    desc = obj.get("description", "")
    return ExperimentConfig(kind, cfg_seed, params, sweep, str(desc or ""), name)


def load_config(path_or_preset, fast: bool = False, seed: int | None = None) -> ExperimentConfig:
    """Read a YAML file, or a bundled preset by name."""
    path = Path(path_or_preset)
    if path.is_file():
        text, name = path.read_text(), path.stem
    elif str(path_or_preset) in preset_names():
        name = str(path_or_preset)
        text = resources.files("critperiods.presets").joinpath(f"{name}.yaml").read_text()
    else:
        raise ConfigError(f"no such config file or preset: {path_or_preset}")
    return parse_config(text, name, fast, seed)


def preset_names() -> list[str]:
    root = resources.files("critperiods.presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_descriptions() -> dict[str, str]:
    out = {}
    for name in preset_names():
        text = resources.files("critperiods.presets").joinpath(f"{name}.yaml").read_text()
        out[name] = (yaml.safe_load(text) or {}).get("description", "")
    return out


# -- runners -----------------------------------------------------------------
# each returns (files: {name: csv text}, metrics: dict)

def _run_multipath(p: dict, seed: int):
    schedule = schedule_from(p["deficits"])
    depth = tuple(p["depth"]) if isinstance(p["depth"], list) else p["depth"]
    cfg = MultipathConfig(depth=depth, hidden_width=p["hidden_width"], lr=p["lr"],
                          epochs=p["epochs"], scale=p["scale"], noise_sd=p["noise_sd"],
                          schedule=schedule, seed=seed, log_every=p["log_every"])
    log, net, task_svd = run_multipath_experiment(cfg)
    r = task_svd.rank
    final = log.last()
    metrics = {"final_loss": final["loss"], "s_max": float(task_svd.a.max()),
               "singular_values": task_svd.a.tolist()}
    for name in ("a", "b"):
        metrics[f"final_k_{name}"] = [final[f"k_{name}_{i + 1}"] for i in range(r)]
    if p["compare_reduced"]:
        # rebuild the same initial network to seed the reduced system
        from .multipath import init_aligned
        init = init_aligned(task_svd, depth, p["hidden_width"], p["scale"], p["noise_sd"],
                            make_rng(seed))
        sys = ReducedSystem.from_network(init, task_svd.a, p["lr"], schedule)
        snaps = integrate(sys, p["epochs"], record_every=p["log_every"])
        gd = np.stack([np.stack([log.column(f"k_{name}_{i + 1}") for i in range(r)], axis=1)
                       for name in ("a", "b")], axis=1)
        metrics["max_ode_deviation"] = float(np.abs(gd - snaps).max())
    return {"trajectory.csv": log.to_csv()}, metrics


def _run_portrait(p: dict, seed: int):
    pp = phase_portrait(p["depth"], p["sigma"], p["trials"], p["init_family"],
                        schedule_from(p["deficits"]), p["step"], p["epochs"], make_rng(seed),
                        p["p_sd"], p["eps"], p["record_every"])
    ends = pp.endpoints
    drift = np.abs((pp.q ** 2 - pp.p ** 2) - (pp.q[0] ** 2 - pp.p[0] ** 2)[None])
    metrics = {"mean_final_k_a": float(ends[:, 0].mean()), "mean_final_k_b": float(ends[:, 1].mean()),
               "mean_final_share_a": float(ends[:, 0].mean() / p["sigma"]),
               "max_conserved_drift": float(drift.max())}
    return {"trajectory.csv": pp.to_log().to_csv()}, metrics


def _run_flow(p: dict, seed: int):
    grid = np.linspace(p["k_min"], p["k_max"], p["grid"])
    ff = flow_field(p["depth"], p["sigma"], grid, grid, p["tau"])
    return {"flow_field.csv": ff.to_csv()}, {"points": int(ff.x.size),
                                             "max_magnitude": float(ff.magnitude.max())}


def _run_transfer(p: dict, seed: int):
    log, metrics = transfer_run(seed=seed, **p)
    return {"trajectory.csv": log.to_csv()}, metrics


def _run_partial(p: dict, seed: int):
    rows = partial_observation_experiment(seed=seed, **p)
    log = TrajectoryLog(["duration", "recon_error", "relative_error", "train_loss",
                         "surviving_modes"])
    for row in rows:
        log.append(**{k: row[k] for k in log.columns})
    metrics = {"durations": [r["duration"] for r in rows],
               "recon_error": [r["recon_error"] for r in rows],
               "surviving_modes": [r["surviving_modes"] for r in rows]}
    return {"trajectory.csv": log.to_csv()}, metrics


def _run_exact(p: dict, seed: int):
    kw = dict(p)
    kw["ranks"] = tuple(kw["ranks"])
    log, metrics = exact_compare(seed=seed, **kw)
    return {"trajectory.csv": log.to_csv()}, metrics


def _run_analytical(p: dict, seed: int):
    log, metrics = analytical_compare(seed=seed, **p)
    return {"trajectory.csv": log.to_csv()}, metrics


RUNNERS = {
    "multipath": _run_multipath, "reduced_portrait": _run_portrait, "flow_field": _run_flow,
    "completion_transfer": _run_transfer, "partial_observation": _run_partial,
    "exact_compare": _run_exact, "analytical_compare": _run_analytical,
}

# exit statuses
EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_SINGULAR = 0, 1, 2, 3, 4


def error_category(exc: BaseException) -> tuple[str, int]:
    if isinstance(exc, ConfigError):
        return "config", EXIT_CONFIG
    if isinstance(exc, FSingularityError):
        return "f-singularity", EXIT_SINGULAR
    if isinstance(exc, DivergenceError):
        return "divergence", EXIT_DIVERGENCE
    if isinstance(exc, ValueError):
        return "config", EXIT_CONFIG
    return "error", EXIT_FAILED


def output_root(out: str | None = None) -> Path:
    """``out`` if given, else ``$CRITPERIODS_OUT``, else ``./runs``."""
    return Path(out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _constants() -> dict:
    return {"hierarchical_task_sha256": hierarchical_task_checksum(), "version": __version__}


def _to_jsonable(x):
    if isinstance(x, dict):
        return {k: _to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def run_cell(kind: str, params: dict, seed: int, outdir: Path) -> dict:
    """Execute one parameter set and write its artifacts; returns its summary."""
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    cell = {"params": params, "seed": seed}
    try:
        files, metrics = RUNNERS[kind](params, seed)
    except Exception as exc:  # recorded, not raised, so sweeps keep going
        category, status = error_category(exc)
        cell.update(status=status, error=category, message=str(exc))
    else:
        for fname, text in files.items():
            (outdir / fname).write_text(text)
        cell.update(status=EXIT_OK, metrics=_to_jsonable(metrics))
    cell["wall_clock_s"] = time.perf_counter() - t0
    return cell


def _cell_dir(root: Path, idx: int, cell: dict, axes) -> Path:
    if not axes:
        return root
    label = "_".join(f"{k}={cell[k]}" for k in axes).replace("/", "-").replace(" ", "")
    return root / f"cell_{idx:03d}_{label}"


def execute(cfg: ExperimentConfig, out: str | None = None, jobs: int = 1) -> tuple[dict, int]:
    """Run every cell of ``cfg`` and write ``summary.json`` and ``config.resolved``.

    Returns ``(summary, exit_status)``; the status is that of the first
    failing cell, or 0.
    """
    root = output_root(out) / cfg.name
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.resolved").write_text(
        yaml.safe_dump(_to_jsonable(cfg.resolved()), sort_keys=True))
    t0 = time.perf_counter()
    axes = sorted(cfg.sweep)
    cells = cfg.cells()
    dirs = [_cell_dir(root, i, c, axes) for i, c in enumerate(cells)]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, [cfg.kind] * len(cells), cells,
                                    [cfg.seed] * len(cells), dirs))
    else:
        results = [run_cell(cfg.kind, c, cfg.seed, d) for c, d in zip(cells, dirs)]
    summary = {"name": cfg.name, "kind": cfg.kind, "seed": cfg.seed, "digest": cfg.digest(),
               "constants": _constants()}
    if axes:
        for d, res in zip(dirs, results):
            res["dir"] = d.name
        summary["axes"] = axes
        summary["cells"] = results
        summary["aggregate"] = [
            {**{k: res["params"][k] for k in axes}, **_scalar_metrics(res)} for res in results]
        summary["metrics"] = {}
    else:
        res = results[0]
        summary.update({k: res[k] for k in ("status", "metrics", "error", "message") if k in res})
    summary["wall_clock_s"] = time.perf_counter() - t0
    (root / "summary.json").write_text(json.dumps(_to_jsonable(summary), indent=2, sort_keys=True))
    status = next((r["status"] for r in results if r["status"] != EXIT_OK), EXIT_OK)
    return summary, status


def _scalar_metrics(res: dict) -> dict:
    if res["status"] != EXIT_OK:
        return {"status": res["status"], "error": res["error"]}
    return {"status": EXIT_OK,
            **{k: v for k, v in res["metrics"].items() if isinstance(v, (int, float))}}
