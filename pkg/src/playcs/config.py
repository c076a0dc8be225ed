"""Run configuration files (YAML) and their validation."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

import yaml

from .core import LsmPrior
from .harness import REFERENCE_METHODS, Method
from .signals import ScenarioSpec
from .solver import SolverOptions
from .trackers import TrackerKind, TrackerParams


class ConfigError(ValueError):
    pass


_TOP = {"scenario", "methods", "sweep", "output"}
_METHOD = {"name", "kind", "params"}
_PARAMS = {"gamma", "alpha", "support_mode", "a", "b", "lam", "em_iters", "em_tol",
           "rwl1_epsilon", "sigma_f", "sigma_m", "weights", "solver"}
_SOLVER = {f.name for f in dataclasses.fields(SolverOptions)}
_SCENARIO = {f.name for f in dataclasses.fields(ScenarioSpec)}
_SWEEP = {"snr_list", "m_list", "trials"}
_OUTPUT = {"dir", "dataset"}


@dataclass(frozen=True)
class SweepAxes:
    snr_list: tuple
    m_list: tuple
    trials: int


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSpec
    methods: tuple
    sweep: SweepAxes | None = None
    out_dir: str = "results"
    dataset_path: str | None = None
    digest: str = ""


def _check_keys(section, d, allowed):
    if not isinstance(d, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(unknown)}")


def _params(kind, d, where):
    d = dict(d or {})
    _check_keys(where, d, _PARAMS)
    solver = d.pop("solver", None) or {}
    _check_keys(f"{where}.solver", solver, _SOLVER)
    lsm = LsmPrior(d.pop("a", 1.0), d.pop("b", 0.01))
    return TrackerParams(kind=kind, lsm=lsm, solver=SolverOptions(**solver), **d)


def parse_config(data, seed=None) -> RunConfig:
    """Validate a config mapping; raises :class:`ConfigError` naming the problem."""
    try:
        return _parse(data, seed)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _parse(data, seed):
    _check_keys("config", data, _TOP)
    if "scenario" not in data:
        raise ConfigError("config: missing 'scenario' section")
    sc = data["scenario"]
    _check_keys("scenario", sc, _SCENARIO)
    sc = dict(sc)
    if seed is not None:
        sc["seed"] = seed
    scenario = ScenarioSpec(**sc)

    raw_methods = data.get("methods") or []
    if not raw_methods:
        raise ConfigError("methods: at least one method is required")
    methods = []
    for i, md in enumerate(raw_methods):
        where = f"methods[{i}]"
        _check_keys(where, md, _METHOD)
        if "kind" not in md:
            raise ConfigError(f"{where}: missing 'kind'")
        kind = md["kind"]
        if kind in REFERENCE_METHODS:
            if md.get("params"):
                raise ConfigError(f"{where}: reference method {kind!r} takes no params")
            methods.append(Method(md.get("name", kind), kind))
            continue
        try:
            kind = TrackerKind(kind)
        except ValueError:
            valid = [k.value for k in TrackerKind] + list(REFERENCE_METHODS)
            raise ConfigError(f"{where}: unknown kind {kind!r}; expected one of {valid}") from None
        methods.append(Method(md.get("name", kind.value), kind.value,
                              _params(kind, md.get("params"), f"{where}.params")))
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigError(f"methods: duplicate names {names}")

    sweep = None
    if data.get("sweep") is not None:
        sw = data["sweep"]
        _check_keys("sweep", sw, _SWEEP)
        missing = _SWEEP - set(sw)
        if missing:
            raise ConfigError(f"sweep: missing {', '.join(sorted(missing))}")
        if int(sw["trials"]) < 1:
            raise ConfigError("sweep: trials must be at least 1")
        if not sw["snr_list"] or not sw["m_list"]:
            raise ConfigError("sweep: snr_list and m_list must be nonempty")
        for m in sw["m_list"]:
            dataclasses.replace(scenario, m=int(m))  # re-runs the m <= n check
        sweep = SweepAxes(tuple(float(s) for s in sw["snr_list"]),
                          tuple(int(m) for m in sw["m_list"]), int(sw["trials"]))

    out = data.get("output") or {}
    _check_keys("output", out, _OUTPUT)
    return RunConfig(scenario, tuple(methods), sweep, str(out.get("dir", "results")),
                     out.get("dataset"), "")


def load_config(path, seed=None) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = parse_config(data if data is not None else {}, seed)
    digest = hashlib.sha256(text.encode())
    if seed is not None:
        digest.update(f"seed={seed}".encode())
    return dataclasses.replace(cfg, digest=digest.hexdigest())
