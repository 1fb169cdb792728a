"""Run configuration: INI parsing with whole-config validation, presets and the effective-config dump."""
from __future__ import annotations

import configparser
import dataclasses
import itertools
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import PROTOCOLS, TIE_MODES
from .losses import LossSpec, LossSpecError
from .scoring import KINDS
from .training import ConfigError, TrainConfig

SEED_ENV = "TRANSBOUND_SEED"
REG_KINDS = ("symmetric", "equivalence", "implication", "inverse")


class ConfigValidationError(ValueError):
    """Collects every field-level problem found while validating a config."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {p}" for p in self.problems))


@dataclass
class RunConfig:
    train: str = ""
    valid: str = ""
    test: str = ""
    rules: str = ""
    min_confidence: float = 0.8
    kind: str = "TransComplEx"
    norm: str = "L2"
    training: TrainConfig = field(default_factory=TrainConfig)
    protocol: str = "filtered"
    ties: str = "mid"
    sweep: dict = field(default_factory=dict)

    @property
    def loss(self) -> LossSpec:
        return self.training.loss

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def with_training(self, **changes) -> "RunConfig":
        return self.replace(training=dataclasses.replace(self.training, **changes))

    def with_loss(self, **changes) -> "RunConfig":
        return self.with_training(loss=dataclasses.replace(self.loss, **changes))


# parsing

_DATA = {"train": str, "valid": str, "test": str, "rules": str, "min_confidence": float}
_MODEL = {"kind": str, "norm": str}
_TRAINING = {
    "dim": int,
    "neg_per_pos": int,
    "learning_rate": float,
    "batches_per_epoch": int,
    "max_epochs": int,
    "eval_every": int,
    "patience": int,
    "seed": int,
    "filter_negatives": bool,
    "unit_entity_norm": bool,
    "adagrad_eps": float,
}
_LOSS = {
    "condition": str,
    "gamma1": float,
    "gamma2": float,
    "lambda0": float,
    "lambda1": float,
    "lambda2": float,
    "margin": float,
    "use_slack": bool,
}
_REPORT = {"protocol": str, "ties": str}
_SECTIONS = {"data": _DATA, "model": _MODEL, "training": _TRAINING, "loss": _LOSS, "report": _REPORT}
_ALIASES = {"d": "dim", "alpha": "neg_per_pos", "alpha_neg": "neg_per_pos", "lr": "learning_rate"}


def _convert(raw: str, typ):
    if typ is bool:
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return typ(raw.strip())


def _resolve(path: str, base: Path | None) -> str:
    if not path or base is None or os.path.isabs(path):
        return path
    return str((base / path).resolve())


def parse_config(text: str, base_dir=None, preset: str | None = None, seed: int | None = None,
                 env=None) -> RunConfig:
    """Parse INI text into a validated RunConfig.

    Precedence, lowest first: built-in defaults, ``preset``, the file,
    ``TRANSBOUND_SEED`` from ``env`` and finally the explicit ``seed``.
    Every problem is collected and raised together.
    """
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigValidationError([f"syntax: {exc}"]) from None
    problems = []
    values = {name: {} for name in _SECTIONS}
    if preset is not None:
        if preset not in PRESETS:
            problems.append(f"--preset: unknown preset {preset!r} (known: {', '.join(sorted(PRESETS))})")
        else:
            for sec, kv in PRESETS[preset].items():
                values.setdefault(sec, {}).update(kv)
    regs = {}
    sweep = {}
    for sec in cp.sections():
        if sec == "regularizers":
            for key, raw in cp[sec].items():
                if key not in REG_KINDS:
                    problems.append(f"[regularizers] {key}: unknown rule kind (expected one of {', '.join(REG_KINDS)})")
                    continue
                try:
                    regs[key] = float(raw)
                except ValueError:
                    problems.append(f"[regularizers] {key}: not a number: {raw!r}")
            continue
        if sec == "sweep":
            sweep.update(cp[sec].items())
            continue
        if sec not in _SECTIONS:
            problems.append(f"[{sec}]: unknown section")
            continue
        spec = _SECTIONS[sec]
        for key, raw in cp[sec].items():
            key = _ALIASES.get(key, key)
            if key not in spec:
                problems.append(f"[{sec}] {key}: unknown key")
                continue
            try:
                values[sec][key] = _convert(raw, spec[key])
            except ValueError as exc:
                problems.append(f"[{sec}] {key}: {exc}")
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            values["training"]["seed"] = int(env[SEED_ENV])
        except ValueError:
            problems.append(f"{SEED_ENV}: not an integer: {env[SEED_ENV]!r}")
    if seed is not None:
        values["training"]["seed"] = int(seed)
    if preset in PRESETS and "regularizers" in PRESETS[preset]:
        regs = {**PRESETS[preset]["regularizers"], **regs}

    base = Path(base_dir) if base_dir is not None else None
    data = {k: _resolve(v, base) if k != "min_confidence" else v for k, v in values["data"].items()}
    cfg = None
    try:
        cfg = build_config(data, values["model"], values["training"], values["loss"], values["report"], regs, sweep)
    except ConfigValidationError as exc:
        problems.extend(exc.problems)
    if problems:
        raise ConfigValidationError(problems)
    return cfg


def build_config(data: dict, model: dict, training: dict, loss: dict, report: dict, regs: dict,
                 sweep: dict | None = None) -> RunConfig:
    problems = []
    kind = model.get("kind", "TransComplEx")
    if kind not in KINDS:
        problems.append(f"[model] kind: must be one of {', '.join(KINDS)}, got {kind!r}")
    nrm = model.get("norm", "L2")
    if nrm not in ("L1", "L2"):
        problems.append(f"[model] norm: must be L1 or L2, got {nrm!r}")
    if not data.get("train"):
        problems.append("[data] train: a training split path is required")
    mc = data.get("min_confidence", 0.8)
    if not 0.0 <= mc <= 1.0:
        problems.append(f"[data] min_confidence: must lie in [0, 1], got {mc}")
    protocol = report.get("protocol", "filtered")
    if protocol not in PROTOCOLS:
        problems.append(f"[report] protocol: must be one of {', '.join(PROTOCOLS)}")
    ties = report.get("ties", "mid")
    if ties not in TIE_MODES:
        problems.append(f"[report] ties: must be one of {', '.join(TIE_MODES)}")
    if any(w > 0 for w in regs.values()) and not data.get("rules"):
        problems.append("[regularizers]: non-zero weights need a [data] rules path")
    spec = None
    try:
        spec = LossSpec(**loss)
    except (LossSpecError, TypeError) as exc:
        problems.append(f"[loss] {exc}")
    tc = None
    try:
        # validate training fields even when the loss section is broken
        tc = TrainConfig(**training, loss=spec or LossSpec(), reg_weights={k: float(regs.get(k, 0.0)) for k in REG_KINDS})
    except (ConfigError, TypeError) as exc:
        problems.append(f"[training] {exc}")
    if problems:
        raise ConfigValidationError(problems)
    return RunConfig(
        data.get("train", ""), data.get("valid", ""), data.get("test", ""), data.get("rules", ""), mc,
        kind, nrm, tc, protocol, ties, dict(sweep or {}),
    )


def load_config(path, preset=None, seed=None, env=None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigValidationError([f"{path}: {exc.strerror}"]) from None
    return parse_config(text, path.parent, preset, seed, env)


def render_config(cfg: RunConfig) -> str:
    """Effective config with every field spelled out; parses back to an equal RunConfig."""
    tc, ls = cfg.training, cfg.loss
    cp = configparser.ConfigParser(interpolation=None)
    cp["data"] = {"train": cfg.train, "valid": cfg.valid, "test": cfg.test, "rules": cfg.rules,
                  "min_confidence": repr(cfg.min_confidence)}
    cp["model"] = {"kind": cfg.kind, "norm": cfg.norm}
    cp["training"] = {k: _fmt(getattr(tc, k)) for k in _TRAINING}
    cp["loss"] = {k: _fmt(getattr(ls, k)) for k in _LOSS}
    cp["regularizers"] = {k: _fmt(float(tc.reg_weights.get(k, 0.0))) for k in REG_KINDS}
    cp["report"] = {"protocol": cfg.protocol, "ties": cfg.ties}
    if cfg.sweep:
        cp["sweep"] = dict(cfg.sweep)
    lines = []
    for sec in cp.sections():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in cp[sec].items()]
        lines.append("")
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# presets: best published settings for the full benchmarks (learning rate and norm are not
# part of those configurations; 0.01 and L2 are used)

def _preset(kind, condition, dim, neg, gamma1=None, gamma2=None, lambda0=None, margin=None, rp=False):
    loss = {"condition": condition}
    if condition == "d":
        loss["margin"] = margin
    else:
        loss.update(gamma1=gamma1, gamma2=gamma2, lambda0=lambda0, use_slack=True)
    out = {
        "model": {"kind": kind, "norm": "L2"},
        "training": {"dim": dim, "neg_per_pos": neg, "learning_rate": 0.01},
        "loss": loss,
    }
    if rp:
        out["regularizers"] = {k: 1.0 for k in REG_KINDS}
    return out


PRESETS = {
    "fb15k-rp-lossAB": _preset("TransComplEx", "b", 200, 10, 0.4, 0.5, 100.0, rp=True),
    "fb15k237-rp-lossAB": _preset("TransComplEx", "b", 200, 10, 1.5, 2.0, 100.0, rp=True),
    "wn18-rp-lossAB": _preset("TransComplEx", "b", 200, 10, 1.0, 2.0, 100.0, rp=True),
    "fb15k-rp-lossC": _preset("TransComplEx", "c", 200, 10, 0.4, 0.5, 10.0, rp=True),
    "fb15k237-rp-lossC": _preset("TransComplEx", "c", 200, 10, 1.5, 2.0, 100.0, rp=True),
    "wn18-rp-lossC": _preset("TransComplEx", "c", 200, 2, 0.6, 1.7, 100.0, rp=True),
    "fb15k-rp-lossD": _preset("TransComplEx", "d", 200, 10, margin=5.0, rp=True),
    "fb15k237-rp-lossD": _preset("TransComplEx", "d", 200, 10, margin=10.0, rp=True),
    "wn18-rp-lossD": _preset("TransComplEx", "d", 200, 10, margin=10.0, rp=True),
    "fb15k-transcomplex-lossC": _preset("TransComplEx", "c", 200, 10, 0.4, 0.5, 10.0),
    "fb15k237-transcomplex-lossC": _preset("TransComplEx", "c", 200, 10, 1.5, 2.0, 100.0),
    "wn18-transcomplex-lossC": _preset("TransComplEx", "c", 200, 2, 0.6, 1.7, 100.0),
    "wn18rr-transcomplex-lossC": _preset("TransComplEx", "c", 200, 2, 1.6, 2.7, 1.0),
    "fb15k-transe-lossC": _preset("TransE", "c", 200, 10, 0.4, 0.5, 10.0),
    "fb15k237-transe-lossC": _preset("TransE", "c", 200, 10, 0.4, 0.5, 100.0),
    "wn18-transe-lossC": _preset("TransE", "c", 200, 10, 1.0, 2.0, 1.0),
    "wn18rr-transe-lossC": _preset("TransE", "c", 200, 2, 0.6, 1.7, 1.0),
}


def match_preset(cfg: RunConfig) -> list[str]:
    """Names of presets whose model, loss and size settings all equal those of ``cfg``."""
    hits = []
    for name, p in PRESETS.items():
        ok = cfg.kind == p["model"]["kind"]
        ok &= all(getattr(cfg.training, k) == v for k, v in p["training"].items() if k != "learning_rate")
        ok &= all(getattr(cfg.loss, k) == v for k, v in p["loss"].items() if k != "use_slack")
        ok &= bool(p.get("regularizers")) == any(w > 0 for w in cfg.training.reg_weights.values())
        if ok:
            hits.append(name)
    return hits


# sweep grids

PUBLISHED_GRID = {
    "gamma1": [round(0.1 * i, 1) for i in range(1, 21)],
    "lambda0": [0.01, 0.1, 1.0, 10.0, 100.0],
}


def _parse_values(raw: str) -> list:
    raw = raw.strip()
    if raw.count(":") == 2:
        start, stop, step = (float(x) for x in raw.split(":"))
        n = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(n)]
    return [float(x) for x in raw.replace(",", " ").split()]


def sweep_grid(cfg: RunConfig) -> list[RunConfig]:
    """Expand the ``[sweep]`` section into concrete run configs.

    ``preset = published`` loads the gamma1 x lambda0 search grid. Other keys
    name LossSpec or TrainConfig fields with a list (``0.1 0.2``) or a
    ``start:stop:step`` range. ``gamma_gap`` sets ``gamma2 = gamma1 + gap``
    whenever gamma1 is swept but gamma2 is not.
    """
    sweep = dict(cfg.sweep)
    axes = {}
    if sweep.pop("preset", "").strip() == "published":
        axes.update(PUBLISHED_GRID)
    gap = float(sweep.pop("gamma_gap", 0.1))
    problems = []
    for key, raw in sweep.items():
        key = _ALIASES.get(key, key)
        if key not in _LOSS and key not in _TRAINING:
            problems.append(f"[sweep] {key}: not a loss or training field")
            continue
        try:
            axes[key] = _parse_values(raw)
        except ValueError as exc:
            problems.append(f"[sweep] {key}: {exc}")
    if problems:
        raise ConfigValidationError(problems)
    if not axes:
        return [cfg.replace(sweep={})]
    keys = list(axes)
    runs = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        point = dict(zip(keys, combo))
        if "gamma1" in point and "gamma2" not in point:
            point["gamma2"] = round(point["gamma1"] + gap, 10)
        loss = {k: v for k, v in point.items() if k in _LOSS}
        train = {k: _TRAINING[k](v) for k, v in point.items() if k in _TRAINING}
        run = cfg.replace(sweep={})
        if train:
            run = run.with_training(**train)
        if loss:
            try:
                run = run.with_loss(**loss)
            except LossSpecError as exc:
                raise ConfigValidationError([f"[sweep] {point}: {exc}"]) from None
        runs.append(run)
    return runs


def leaderboard_order(rows: list[dict]) -> list[dict]:
    """Best validation MRR first, ties broken by lower MR; failed runs last."""
    def key(row):
        mrr = row.get("MRR")
        if mrr is None or not np.isfinite(mrr):
            return (1, 0.0, 0.0)
        return (0, -mrr, row.get("MR", np.inf))

    return sorted(rows, key=key)
