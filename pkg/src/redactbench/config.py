"""Run configuration for attack matrices, read from YAML with line-level diagnostics.

Example::

    seed: 7
    output: runs/demo
    dataset:
      synthetic: {n_ids: 8, per_id: 6, side: 64}
    methods:
      - gaussian: [5, 15]
      - p3: 10
      - scramble
    threat_models: [T1, T2, T3]
    attacks: [identification, verification]
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .dataset import DEFAULT_SIDE, LabeledDataset, generate_synthetic, load_folder, split_by_identity, split_by_image
from .harness import ATTACKS, THREAT_MODELS, AttackerConfig, MatrixConfig, derive_seed
from .methods import METHODS, ObscurationSpec, UnknownMethodError

SYNTHETIC_KEYS = {"n_ids": int, "per_id": int, "side": int, "seed": int, "noise": float, "max_shift": int, "color": bool}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int
    output: Path
    specs: list
    synthetic: Optional[dict] = None
    folder: Optional[Path] = None
    side: int = DEFAULT_SIDE
    split: str = "image"
    threat_models: tuple = THREAT_MODELS
    attacks: tuple = ("identification", "verification")
    attacker: AttackerConfig = field(default_factory=AttackerConfig)
    verification_repeats: int = 10
    verification_identities: int = 64
    t2_pool_settings: Optional[tuple] = None
    reconstructor: str = "ridge"
    ridge_lambda: float = 1e-2

    def load_dataset(self) -> LabeledDataset:
        if self.folder is not None:
            ds = load_folder(self.folder, self.side)
        else:
            params = {"seed": self.seed, **self.synthetic}
            ds = generate_synthetic(**params)
        split = split_by_image if self.split == "image" else split_by_identity
        return split(ds, seed=derive_seed(self.seed, "split"))

    def matrix(self) -> MatrixConfig:
        return MatrixConfig(
            specs=list(self.specs),
            threat_models=tuple(self.threat_models),
            attacks=tuple(self.attacks),
            master_seed=self.seed,
            attacker=self.attacker,
            verification_repeats=self.verification_repeats,
            verification_identities=self.verification_identities,
            t2_pool_settings=self.t2_pool_settings,
            reconstructor=self.reconstructor,
            ridge_lambda=self.ridge_lambda,
        )


class _Ctx:
    def __init__(self, source):
        self.source = source

    def fail(self, node, path, msg):
        line = node.start_mark.line + 1 if node is not None else 1
        raise ConfigError(f"{self.source}:{line}: {path or '<root>'}: {msg}")

    def mapping(self, node, path):
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, path, "expected a mapping")
        out = {}
        for k, v in node.value:
            if not isinstance(k, yaml.ScalarNode):
                self.fail(k, path, "keys must be plain names")
            if k.value in out:
                self.fail(k, f"{path}.{k.value}".lstrip("."), "duplicate key")
            out[k.value] = v
        return out

    def seq(self, node, path):
        if isinstance(node, yaml.ScalarNode):
            return [node]
        if not isinstance(node, yaml.SequenceNode):
            self.fail(node, path, "expected a list")
        return list(node.value)

    def scalar(self, node, path, kind):
        if not isinstance(node, yaml.ScalarNode):
            self.fail(node, path, f"expected a {kind.__name__}")
        value = yaml.safe_load(yaml.serialize(node))
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is str and value is not None:
            value = str(value)
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            self.fail(node, path, f"expected a {kind.__name__}, got {node.value!r}")
        return value


def _specs(ctx, node):
    specs = []
    for i, item in enumerate(ctx.seq(node, "methods")):
        path = f"methods[{i}]"
        if isinstance(item, yaml.ScalarNode):
            name = ctx.scalar(item, path, str)
            try:
                specs.append(ObscurationSpec.parse(name))
            except (UnknownMethodError, ValueError) as exc:
                ctx.fail(item, path, str(exc))
            continue
        entries = ctx.mapping(item, path)
        if len(entries) != 1:
            ctx.fail(item, path, "each entry is `method` or `method: settings`")
        (name, value), = entries.items()
        if name not in METHODS:
            ctx.fail(item, path, f"unknown obscuration method {name!r}; known: {', '.join(METHODS)}")
        for j, s in enumerate(ctx.seq(value, f"{path}.{name}")):
            try:
                specs.append(ObscurationSpec(name, ctx.scalar(s, f"{path}.{name}[{j}]", int)))
            except ValueError as exc:
                ctx.fail(s, f"{path}.{name}[{j}]", str(exc))
    if not specs:
        ctx.fail(node, "methods", "no methods listed")
    if len(set(specs)) != len(specs):
        ctx.fail(node, "methods", "duplicate method/setting")
    return specs


def _choices(ctx, node, path, allowed):
    out = []
    for i, item in enumerate(ctx.seq(node, path)):
        v = ctx.scalar(item, f"{path}[{i}]", str)
        if v not in allowed:
            ctx.fail(item, f"{path}[{i}]", f"unknown value {v!r}; expected one of {', '.join(allowed)}")
        out.append(v)
    if not out:
        ctx.fail(node, path, "empty list")
    return tuple(dict.fromkeys(out))


_TOP = {
    "seed", "output", "dataset", "methods", "threat_models", "attacks", "embedding_dim", "arcface",
    "epochs", "lr", "batch_size", "verification", "t2_pool_settings", "reconstructor", "ridge_lambda",
}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    ctx = _Ctx(source)
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigError(f"{source}:{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        raise ConfigError(f"{source}:1: empty config")
    top = ctx.mapping(root, "")
    for key, node in top.items():
        if key not in _TOP:
            ctx.fail(node, key, f"unknown field; expected one of {', '.join(sorted(_TOP))}")
    for key in ("seed", "output", "dataset", "methods"):
        if key not in top:
            ctx.fail(root, key, "missing required field")

    seed = ctx.scalar(top["seed"], "seed", int)
    if seed < 0:
        ctx.fail(top["seed"], "seed", "must be non-negative")
    cfg = RunConfig(seed=seed, output=Path(ctx.scalar(top["output"], "output", str)), specs=_specs(ctx, top["methods"]))

    ds = ctx.mapping(top["dataset"], "dataset")
    kinds = [k for k in ("synthetic", "folder") if k in ds]
    if len(kinds) != 1:
        ctx.fail(top["dataset"], "dataset", "give exactly one of `synthetic` or `folder`")
    for key, node in ds.items():
        if key not in ("synthetic", "folder", "side", "split"):
            ctx.fail(node, f"dataset.{key}", "unknown field")
    if "split" in ds:
        cfg.split = ctx.scalar(ds["split"], "dataset.split", str)
        if cfg.split not in ("image", "identity"):
            ctx.fail(ds["split"], "dataset.split", "expected `image` or `identity`")
    if "side" in ds:
        cfg.side = ctx.scalar(ds["side"], "dataset.side", int)
    if "folder" in ds:
        cfg.folder = Path(ctx.scalar(ds["folder"], "dataset.folder", str))
    else:
        params = {}
        for key, node in ctx.mapping(ds["synthetic"], "dataset.synthetic").items():
            if key not in SYNTHETIC_KEYS:
                ctx.fail(node, f"dataset.synthetic.{key}", f"unknown field; expected one of {', '.join(SYNTHETIC_KEYS)}")
            params[key] = ctx.scalar(node, f"dataset.synthetic.{key}", SYNTHETIC_KEYS[key])
        params.setdefault("side", cfg.side)
        if params.get("n_ids", 32) < 2 or params.get("per_id", 12) < 1:
            ctx.fail(ds["synthetic"], "dataset.synthetic", "need n_ids >= 2 and per_id >= 1")
        cfg.synthetic = params

    if "threat_models" in top:
        cfg.threat_models = _choices(ctx, top["threat_models"], "threat_models", THREAT_MODELS)
    if "attacks" in top:
        cfg.attacks = _choices(ctx, top["attacks"], "attacks", ATTACKS)

    att = cfg.attacker
    for key, kind in (("embedding_dim", int), ("epochs", int), ("batch_size", int), ("lr", float)):
        if key in top:
            value = ctx.scalar(top[key], key, kind)
            if value <= 0:
                ctx.fail(top[key], key, "must be positive")
            setattr(att, key, value)
    if "arcface" in top:
        for key, node in ctx.mapping(top["arcface"], "arcface").items():
            if key not in ("s", "m"):
                ctx.fail(node, f"arcface.{key}", "unknown field; expected s or m")
            setattr(att, f"arcface_{key}", ctx.scalar(node, f"arcface.{key}", float))
        if att.arcface_s <= 0 or not 0 <= att.arcface_m < 1.5707963:
            ctx.fail(top["arcface"], "arcface", "need s > 0 and 0 <= m < pi/2")
    if "verification" in top:
        for key, node in ctx.mapping(top["verification"], "verification").items():
            if key not in ("repeats", "identities"):
                ctx.fail(node, f"verification.{key}", "unknown field; expected repeats or identities")
            value = ctx.scalar(node, f"verification.{key}", int)
            if value < (1 if key == "repeats" else 2):
                ctx.fail(node, f"verification.{key}", "too small")
            setattr(cfg, f"verification_{key}", value)
    if "t2_pool_settings" in top:
        cfg.t2_pool_settings = tuple(
            ctx.scalar(n, f"t2_pool_settings[{i}]", int) for i, n in enumerate(ctx.seq(top["t2_pool_settings"], "t2_pool_settings"))
        )
        for i, s in enumerate(cfg.t2_pool_settings):
            if s < 1 or s % 2 == 0:
                ctx.fail(top["t2_pool_settings"], f"t2_pool_settings[{i}]", "pool sizes must be odd and positive")
    if "reconstructor" in top:
        cfg.reconstructor = ctx.scalar(top["reconstructor"], "reconstructor", str)
        if cfg.reconstructor not in ("ridge", "identity"):
            ctx.fail(top["reconstructor"], "reconstructor", "expected `ridge` or `identity`")
    if "ridge_lambda" in top:
        cfg.ridge_lambda = ctx.scalar(top["ridge_lambda"], "ridge_lambda", float)
        if cfg.ridge_lambda <= 0:
            ctx.fail(top["ridge_lambda"], "ridge_lambda", "must be positive")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror or exc})") from None
    return parse_config(text, str(path))
