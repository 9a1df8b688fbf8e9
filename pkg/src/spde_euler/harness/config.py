"""Experiment configuration: a nested YAML document with a fixed schema.

Unknown keys anywhere are rejected.  See ``README.md`` for the schema.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..models import ModelSpec, build_model
from ..noise import REGIMES, ConfigurationError, NoiseSpec, make_psi, refinement
from ..operators import OperatorSet
from ..scheme import ForcingSpec, SchemeConfig, zero_forcing

FUNCTIONALS = ("energy_l2", "endpoint_h_norm", "mode_k_endpoint", "max_h_norm")
PSI_CATALOG = ("identity", "tanh-saturating", "constant")
TIME_FUNCTIONS = ("constant", "sin", "linear")


@dataclasses.dataclass
class PsiConfig:
    name: str = "identity"
    scale: float = 1.0


@dataclasses.dataclass
class NoiseConfig:
    regime: str = "additive"
    K: int | None = None
    # one mapping {mode index: coefficient} per noise direction
    alpha: list[dict[int, float]] = dataclasses.field(default_factory=list)
    psi: PsiConfig = dataclasses.field(default_factory=PsiConfig)
    strat_factor: float = 0.5
    # functional regime: one mapping per direction defining psi^k
    functionals: list[dict[int, float]] = dataclasses.field(default_factory=list)


@dataclasses.dataclass
class ForcingConfig:
    kind: str = "none"  # none | deterministic-function | wind-proxy-adapted
    profile: dict[int, float] = dataclasses.field(default_factory=dict)
    time_fn: str = "constant"
    frequency: float = 1.0
    base: float = 1.0
    amplitude: float = 0.0
    relaxation: float = 0.1


@dataclasses.dataclass
class InitialConfig:
    modes: dict[int, float] = dataclasses.field(default_factory=dict)
    # optional Gaussian part: amplitude * lam^-decay * xi with a fixed seed
    random_amplitude: float = 0.0
    random_decay: float = 1.0
    random_seed: int = 0


@dataclasses.dataclass
class SchemeBlock:
    T: float = 1.0
    solver: str = "newton"
    solve_tol: float = 1e-11
    max_iters: int = 50
    energy_tol: float = 1e-9


@dataclasses.dataclass
class SeminormConfig:
    j_max: int = 8
    alpha: float = 0.3
    p: float = 4.0


@dataclasses.dataclass
class BDGConfig:
    q: float = 1.0
    N: int = 64


@dataclasses.dataclass
class ExperimentConfig:
    model: ModelSpec = dataclasses.field(default_factory=ModelSpec)
    noise: NoiseConfig = dataclasses.field(default_factory=NoiseConfig)
    forcing: ForcingConfig = dataclasses.field(default_factory=ForcingConfig)
    initial: InitialConfig = dataclasses.field(default_factory=InitialConfig)
    scheme: SchemeBlock = dataclasses.field(default_factory=SchemeBlock)
    ladder: list[int] = dataclasses.field(default_factory=lambda: [16, 32, 64])
    master_refinement: int = 2
    ensemble_size: int = 100
    functionals: list[str] = dataclasses.field(default_factory=lambda: list(FUNCTIONALS))
    mode_k: int = 0
    seminorms: SeminormConfig = dataclasses.field(default_factory=SeminormConfig)
    bdg: BDGConfig = dataclasses.field(default_factory=BDGConfig)
    require_uniform: bool = True
    axiom_samples: int = 1000
    chunk_size: int = 50
    seed: int = 0
    output_dir: str = "runs/experiment"
    workers: int = 1
    independent_paths: bool = False

    # -- derived ---------------------------------------------------------------

    @property
    def master_steps(self) -> int:
        return self.master_refinement * max(self.ladder + [self.bdg.N])

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def validate(self) -> None:
        if not self.ladder:
            raise ConfigurationError("ladder must not be empty")
        if list(self.ladder) != sorted(set(self.ladder)):
            raise ConfigurationError("ladder must be strictly ascending")
        if self.master_refinement < 1:
            raise ConfigurationError("master_refinement must be >= 1")
        for N in self.ladder + [self.bdg.N]:
            refinement(self.master_steps, N)
        if self.ensemble_size < 1:
            raise ConfigurationError("ensemble_size must be >= 1")
        if self.workers < 1 or self.chunk_size < 1:
            raise ConfigurationError("workers and chunk_size must be >= 1")
        bad = set(self.functionals) - set(FUNCTIONALS)
        if bad:
            raise ConfigurationError(f"unknown functionals {sorted(bad)}")
        if self.noise.regime not in REGIMES:
            raise ConfigurationError(f"unknown noise regime {self.noise.regime!r}")
        if self.noise.psi.name not in PSI_CATALOG:
            raise ConfigurationError(f"unknown Nemytskii map {self.noise.psi.name!r}")
        if self.noise.K is not None and self.noise.K != len(self.noise.alpha):
            raise ConfigurationError("noise.K differs from the number of alpha profiles")
        if self.forcing.kind not in ("none", "deterministic-function", "wind-proxy-adapted"):
            raise ConfigurationError(f"unknown forcing kind {self.forcing.kind!r}")
        if self.forcing.time_fn not in TIME_FUNCTIONS:
            raise ConfigurationError(f"unknown forcing time function {self.forcing.time_fn!r}")
        if not (0 < self.seminorms.alpha < 1) or self.seminorms.alpha * self.seminorms.p <= 1:
            raise ConfigurationError("seminorm (alpha, p) must satisfy 0 < alpha < 1, alpha p > 1")
        if self.seminorms.j_max < 1:
            raise ConfigurationError("seminorms.j_max must be >= 1")


# ---------------------------------------------------------------------------
# parsing


def _build(cls, data: Any, where: str):
    if dataclasses.is_dataclass(cls):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{where}: expected a mapping")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(fields)
        if unknown:
            raise ConfigurationError(f"{where}: unknown keys {sorted(unknown)}")
        kwargs = {}
        for name, value in data.items():
            kwargs[name] = _convert(_FIELD_TYPES[cls][name], value, f"{where}.{name}")
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"{where}: {exc}") from exc
    raise TypeError(cls)


def _mode_map(value, where):
    if not isinstance(value, dict):
        raise ConfigurationError(f"{where}: expected a mapping of mode index to coefficient")
    try:
        return {int(k): float(v) for k, v in value.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def _convert(kind, value, where):
    try:
        if kind == "modemap":
            return _mode_map(value, where)
        if kind == "modemaps":
            if not isinstance(value, list):
                raise ConfigurationError(f"{where}: expected a list")
            return [_mode_map(v, f"{where}[{i}]") for i, v in enumerate(value)]
        if kind == "ints":
            return [int(v) for v in value]
        if kind == "strs":
            return [str(v) for v in value]
        if kind == "floats":
            return tuple(float(v) for v in value)
        if kind == "optint":
            return None if value is None else int(value)
        if kind in (int, float, str):
            if kind is int and isinstance(value, float) and not value.is_integer():
                raise ConfigurationError(f"{where}: expected an integer")
            return kind(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise ConfigurationError(f"{where}: expected true/false")
            return value
        return _build(kind, value, where)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


_FIELD_TYPES = {
    ModelSpec: {
        "kind": str, "nu": float, "kappa": float, "f": float, "c_buoy": float,
        "K_T": float, "radius": int, "weights": "floats",
    },
    PsiConfig: {"name": str, "scale": float},
    NoiseConfig: {
        "regime": str, "K": "optint", "alpha": "modemaps", "psi": PsiConfig,
        "strat_factor": float, "functionals": "modemaps",
    },
    ForcingConfig: {
        "kind": str, "profile": "modemap", "time_fn": str, "frequency": float,
        "base": float, "amplitude": float, "relaxation": float,
    },
    InitialConfig: {
        "modes": "modemap", "random_amplitude": float, "random_decay": float, "random_seed": int,
    },
    SchemeBlock: {
        "T": float, "solver": str, "solve_tol": float, "max_iters": int, "energy_tol": float,
    },
    SeminormConfig: {"j_max": int, "alpha": float, "p": float},
    BDGConfig: {"q": float, "N": int},
    ExperimentConfig: {
        "model": ModelSpec, "noise": NoiseConfig, "forcing": ForcingConfig,
        "initial": InitialConfig, "scheme": SchemeBlock, "ladder": "ints",
        "master_refinement": int, "ensemble_size": int, "functionals": "strs",
        "mode_k": int, "seminorms": SeminormConfig, "bdg": BDGConfig,
        "require_uniform": bool, "axiom_samples": int, "chunk_size": int, "seed": int,
        "output_dir": str, "workers": int, "independent_paths": bool,
    },
}


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "config")
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data or {})


# ---------------------------------------------------------------------------
# assembly


def _vector(modes: dict[int, float], dim: int, where: str) -> np.ndarray:
    v = np.zeros(dim)
    for k, c in modes.items():
        if not 0 <= k < dim:
            raise ConfigurationError(f"{where}: mode {k} outside 0..{dim - 1}")
        v[k] = c
    return v


@dataclasses.dataclass(eq=False)
class Assembled:
    ops: OperatorSet
    forcing: ForcingSpec
    u0: np.ndarray


def assemble(cfg: ExperimentConfig) -> Assembled:
    model = build_model(cfg.model)
    d = model.space.dim
    nc = cfg.noise
    alphas = np.array([_vector(a, d, "noise.alpha") for a in nc.alpha]).reshape(len(nc.alpha), d)
    psi = make_psi(nc.psi.name, nc.psi.scale) if nc.regime.startswith("nemytskii") else None
    funcs = None
    if nc.regime == "functional":
        funcs = np.array([_vector(f, d, "noise.functionals") for f in nc.functionals]).reshape(-1, d)
    noise = NoiseSpec(model, nc.regime, alphas, psi, funcs, nc.strat_factor)
    ops = OperatorSet(model, noise)

    fc = cfg.forcing
    if fc.kind == "none":
        forcing = zero_forcing(model.space)
    else:
        w = fc.frequency
        time_fn = {
            "constant": np.ones_like,
            "sin": lambda t: np.sin(w * t),
            "linear": lambda t: w * t,
        }[fc.time_fn]
        forcing = ForcingSpec(
            fc.kind, _vector(fc.profile, d, "forcing.profile"), time_fn,
            fc.base, fc.amplitude, fc.relaxation,
        )
    ic = cfg.initial
    u0 = _vector(ic.modes, d, "initial.modes")
    if ic.random_amplitude:
        rng = np.random.default_rng(ic.random_seed)
        u0 = u0 + ic.random_amplitude * model.space.random_state(rng, ic.random_decay)
    return Assembled(ops, forcing, u0)


def scheme_config(cfg: ExperimentConfig, N: int) -> SchemeConfig:
    s = cfg.scheme
    return SchemeConfig(s.T, N, s.solver, s.solve_tol, s.max_iters, s.energy_tol)
