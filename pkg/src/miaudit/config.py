"""Experiment configuration: ``key = value`` lines under ``[section]`` headers.

Sections: ``[experiment]``, ``[data]``, ``[target]``, ``[shadow]``,
``[attack:NAME]`` (repeatable), ``[mcmc]`` and ``[threshold]``. Unknown
sections or keys are errors, raised before any work starts.
"""
import configparser
import os
from dataclasses import dataclass, field, fields, replace

from .attacks import METHODS, AttackConfig
from .models import ARCHS, TrainConfig
from .sampling import SAMPLER_KINDS
from .synth import SbmSpec

__all__ = ["ConfigError", "ExperimentConfig", "AttackSpec", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    arch: str = "gcn2"
    lr: float = 0.01
    epochs: int = 200
    weight_decay: float = 0.0
    hidden: int = 32

    def train_config(self, seed):
        return TrainConfig(lr=self.lr, epochs=self.epochs, weight_decay=self.weight_decay, hidden=self.hidden, seed=seed)


@dataclass(frozen=True)
class AttackSpec:
    name: str
    config: AttackConfig
    auto_alpha: bool = False


@dataclass(frozen=True)
class McmcSpec:
    n: int = 8
    k: int = 4
    n_samples: int = 50000
    burn_in: int = 1000
    thinning: int = 500
    flip_fraction: float | None = None
    target_node: int = 0
    identical: bool = False
    dump_masks: int = 0


@dataclass(frozen=True)
class ThresholdSpec:
    k: int = 16
    simulated_targets: int = 10
    fresh_targets: int = 5
    fpr: float = 0.01
    attacks: tuple = ("base", "rmia")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    repetitions: int = 1
    jobs: int = 1
    out: str = "runs/audit"
    train_fraction: float = 0.5
    signal_mode: str = "zero_hop"
    eval_size: int = 0  # 0: as many balanced pairs as possible
    data: SbmSpec = field(default_factory=lambda: SbmSpec(n=400, num_classes=4, p_in=0.05, p_out=0.005, dim=32, radius=1.0, noise=1.2))
    edgeless: bool = False
    graph_file: str = ""
    target: ModelSpec = field(default_factory=ModelSpec)
    shadow: ModelSpec = field(default_factory=ModelSpec)
    k: int = 8
    attacks: tuple = ()
    mcmc: McmcSpec = field(default_factory=McmcSpec)
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)

    @property
    def mismatched(self):
        return self.shadow != self.target


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if s.strip().lower() in ("", "none", "default") else float(s)


_EXPERIMENT = {
    "seed": int, "repetitions": int, "jobs": int, "out": str, "train_fraction": float,
    "signal_mode": str, "eval_size": int,
}
_DATA = {
    "n": int, "num_classes": int, "p_in": float, "p_out": float, "dim": int, "radius": float,
    "noise": float, "edgeless": _bool, "graph_file": str,
}
_MODEL = {"arch": str, "lr": float, "epochs": int, "weight_decay": float, "hidden": int}
_ATTACK = {
    "method": str, "mode": str, "lam": float, "alpha": str, "gamma": float, "n_masks": int,
    "sampler": str, "lira_var_floor": float, "population_fraction": float, "hops": int,
}
_MCMC = {
    "n": int, "k": int, "n_samples": int, "burn_in": int, "thinning": int, "flip_fraction": _opt_float,
    "target_node": int, "identical": _bool, "dump_masks": int,
}
_THRESHOLD = {"k": int, "simulated_targets": int, "fresh_targets": int, "fpr": float, "attacks": str}


def _read_section(cp, name, schema):
    if not cp.has_section(name):
        return {}
    out = {}
    for key, raw in cp.items(name):
        if key not in schema:
            raise ConfigError(f"[{name}]: unknown key {key!r}")
        try:
            out[key] = schema[key](raw)
        except ValueError as e:
            raise ConfigError(f"[{name}] {key}: {e}") from None
    return out


def _check_model(spec, where):
    if spec.arch not in ARCHS:
        raise ConfigError(f"[{where}] arch must be one of {ARCHS}")
    if spec.lr < 0 or spec.epochs < 1 or spec.hidden < 1 or spec.weight_decay < 0:
        raise ConfigError(f"[{where}] invalid training hyperparameters")


def parse_config(text, base_dir="."):
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__", inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    known = {"experiment", "data", "target", "shadow", "mcmc", "threshold"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith("attack:"):
            raise ConfigError(f"unknown section [{sec}]")

    cfg = ExperimentConfig()
    exp = _read_section(cp, "experiment", _EXPERIMENT)
    data = _read_section(cp, "data", _DATA)
    edgeless = data.pop("edgeless", False)
    graph_file = data.pop("graph_file", "")
    if graph_file and not os.path.isabs(graph_file):
        graph_file = os.path.join(base_dir, graph_file)
    if graph_file and not os.path.exists(graph_file):
        raise ConfigError(f"[data] graph_file {graph_file!r} does not exist")
    target = replace(cfg.target, **_read_section(cp, "target", _MODEL))
    shadow_raw = _read_section(cp, "shadow", {**_MODEL, "k": int})
    k = shadow_raw.pop("k", cfg.k)
    shadow = replace(target, **shadow_raw)
    _check_model(target, "target")
    _check_model(shadow, "shadow")
    if k < 2 or k % 2:
        raise ConfigError("[shadow] k must be an even number >= 2")

    seed = exp.get("seed", cfg.seed)
    attacks = []
    for sec in cp.sections():
        if not sec.startswith("attack:"):
            continue
        name = sec.split(":", 1)[1].strip()
        if not name:
            raise ConfigError(f"[{sec}] needs a name")
        raw = _read_section(cp, sec, _ATTACK)
        raw.setdefault("method", name)
        alpha = raw.pop("alpha", "1.0").strip().lower()
        auto = alpha == "auto"
        try:
            ac = AttackConfig(**raw, alpha=1.0 if auto else float(alpha), seed=seed)
            ac.validate()
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[{sec}] {e}") from None
        if ac.sampler not in SAMPLER_KINDS:
            raise ConfigError(f"[{sec}] sampler must be one of {SAMPLER_KINDS}")
        if ac.method == "lira" and ac.mode == "online" and k < 4:
            raise ConfigError(f"[{sec}] online LiRA needs k >= 4")
        attacks.append(AttackSpec(name, ac, auto))
    if not attacks:
        attacks = [AttackSpec("base", AttackConfig(seed=seed))]
    if len({a.name for a in attacks}) != len(attacks):
        raise ConfigError("attack names must be unique")

    mc = replace(cfg.mcmc, **_read_section(cp, "mcmc", _MCMC))
    th_raw = _read_section(cp, "threshold", _THRESHOLD)
    if "attacks" in th_raw:
        th_raw["attacks"] = tuple(a.strip() for a in th_raw["attacks"].split(",") if a.strip())
    th = replace(cfg.threshold, **th_raw)
    for m in th.attacks:
        if m not in METHODS or m == "gbase":
            raise ConfigError(f"[threshold] unsupported attack {m!r}")
    if th.k < 4 or th.k % 2 or th.simulated_targets < 1 or th.simulated_targets > th.k or th.fresh_targets < 1:
        raise ConfigError("[threshold] needs an even k >= 4 and 1 <= simulated_targets <= k")
    if not 0 < th.fpr < 1:
        raise ConfigError("[threshold] fpr must lie in (0, 1)")

    out = replace(
        cfg,
        **exp,
        data=replace(cfg.data, **data, seed=seed),
        edgeless=edgeless,
        graph_file=graph_file,
        target=target,
        shadow=shadow,
        k=k,
        attacks=tuple(attacks),
        mcmc=mc,
        threshold=th,
    )
    _validate(out)
    return out


def _validate(cfg):
    if cfg.repetitions < 1:
        raise ConfigError("[experiment] repetitions must be >= 1")
    if cfg.jobs < 1:
        raise ConfigError("[experiment] jobs must be >= 1")
    if not 0.0 < cfg.train_fraction < 1.0:
        raise ConfigError("[experiment] train_fraction must lie in (0, 1)")
    if cfg.signal_mode not in ("zero_hop", "graph"):
        raise ConfigError("[experiment] signal_mode must be zero_hop or graph")
    if not cfg.graph_file:
        try:
            cfg.data.validate()
        except ValueError as e:
            raise ConfigError(f"[data] {e}") from None
    if cfg.mcmc.n < 2 or cfg.mcmc.k < 1 or cfg.mcmc.n_samples < 1 or cfg.mcmc.thinning < 1 or cfg.mcmc.burn_in < 0:
        raise ConfigError("[mcmc] invalid sampler settings")
    if not 0 <= cfg.mcmc.target_node < cfg.mcmc.n:
        raise ConfigError("[mcmc] target_node out of range")


def load_config(path):
    if path is None:
        return parse_config("")
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} not found")
    with open(path) as fh:
        return parse_config(fh.read(), os.path.dirname(os.path.abspath(path)))


def config_fields(obj):
    """Flat ``(key, value)`` pairs for the run manifest."""
    out = []
    for f in fields(obj):
        v = getattr(obj, f.name)
        if hasattr(v, "__dataclass_fields__") and not isinstance(v, type):
            out.extend((f"{f.name}.{k}", x) for k, x in config_fields(v))
        elif isinstance(v, tuple) and v and hasattr(v[0], "__dataclass_fields__"):
            for item in v:
                out.extend((f"{f.name}.{item.name}.{k}", x) for k, x in config_fields(item.config))
                out.append((f"{f.name}.{item.name}.auto_alpha", item.auto_alpha))
        else:
            out.append((f.name, v))
    return out
