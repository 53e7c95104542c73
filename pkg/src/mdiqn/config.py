"""Session configuration read from TOML, with strict key checking.

Example::

    [network]
    n_users = 4
    clock_hz = 1e8
    default_loss_db = 30.0          # optional: pairs missing below
    [network.loss_db]
    AB = 30.6

    [source]
    linewidth_hz = 1.1e5
    hom_visibility = 0.467          # or mode_overlap = 0.966

    [detectors]
    efficiency = 0.78
    dark_prob = 1e-6

    [protocol]
    n_pulses = 3e12
    mu = { z = 0.636, y = 0.204, x = 0.054 }
    probability = { z = 0.754, y = 0.036, x = 0.188, o = 0.022 }

    [analysis]
    epsilon = 1e-10
    f = 1.16
    n_cut = 7
    gain_table = "gains.csv"        # optional; relative to the config file
    workers = 1

    [sim]
    mode = "analytic"               # or "montecarlo"
    n_rounds = 3e12
    seed = 1
    shards = 1
    poisson = true

    [optimize]
    loss_db = 30.0
    restarts = 3
    seed = 0
    max_evals = 400

    [curve]
    losses = [0, 10, 20, 30, 40]
    mode = "fixed"

    [plan]
    scheme = "both"                 # "wdm", "tdm" or "both"

Every section is optional; omitted keys take the defaults above. Unknown
sections or keys are errors.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import IntensityProtocol, LinkModel, default_protocol
from .network import user_labels
from .photonic import coherence_factor, kappa_for_visibility


class ConfigError(ValueError):
    """The configuration is unreadable, misspelt or out of range."""


_SCHEMA: dict[str, set[str]] = {
    "network": {"n_users", "clock_hz", "loss_db", "default_loss_db"},
    "source": {"linewidth_hz", "hom_visibility", "mode_overlap"},
    "detectors": {"efficiency", "dark_prob"},
    "protocol": {"n_pulses", "mu", "probability"},
    "analysis": {"epsilon", "f", "n_cut", "gain_table", "workers"},
    "sim": {"mode", "n_rounds", "seed", "shards", "poisson"},
    "optimize": {"loss_db", "restarts", "seed", "max_evals"},
    "curve": {"losses", "mode"},
    "plan": {"scheme"},
}


@dataclass(frozen=True)
class SessionConfig:
    n_users: int = 4
    clock_hz: float = 100e6
    pair_loss_db: dict[str, float] = field(default_factory=dict)
    linewidth_hz: float = 0.0
    hom_visibility: float | None = None
    mode_overlap: float = 1.0
    detector_efficiency: float = 1.0
    dark_prob: float = 1e-6
    protocol: IntensityProtocol = field(default_factory=default_protocol)
    epsilon: float = 1e-10
    f: float = 1.16
    n_cut: int = 7
    gain_table: str | None = None
    workers: int = 1
    sim_mode: str = "analytic"
    n_rounds: int | None = None
    seed: int = 0
    shards: int = 1
    poisson: bool = False
    optimize_loss_db: float | None = None
    optimize_restarts: int = 3
    optimize_seed: int = 0
    optimize_max_evals: int = 400
    curve_losses: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0)
    curve_mode: str = "fixed"
    plan_scheme: str = "both"

    @property
    def pairs(self) -> list[str]:
        return list(self.pair_loss_db)

    def link(self, total_loss_db: float) -> LinkModel:
        kappa = (kappa_for_visibility(self.hom_visibility)
                 if self.hom_visibility is not None else self.mode_overlap)
        link = LinkModel.symmetric(
            total_loss_db,
            detector_efficiency=self.detector_efficiency,
            dark_prob=self.dark_prob,
            mode_overlap=kappa,
        )
        # early and late bins must stay phase coherent across one bin separation
        return link.replace(coherence_factor=coherence_factor(self.linewidth_hz, link.bin_separation_s))

    def pair_link(self, pair: str) -> LinkModel:
        return self.link(self.pair_loss_db[pair])

    def rounds(self) -> int:
        return self.n_rounds if self.n_rounds is not None else int(round(self.protocol.n_pulses))

    def replace(self, **changes) -> SessionConfig:
        from dataclasses import replace

        return replace(self, **changes)


def _number(section: str, key: str, value: Any, *, lo: float | None = None, hi: float | None = None,
            lo_open: bool = False, integer: bool = False) -> float:
    where = f"{section}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if math.isnan(value) or math.isinf(value):
        raise ConfigError(f"{where}: must be finite")
    if integer and value != int(value):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(f"{where}: must be {'>' if lo_open else '>='} {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(f"{where}: must be <= {hi}, got {value!r}")
    return int(value) if integer else float(value)


def _choice(section: str, key: str, value: Any, options: tuple[str, ...]) -> str:
    if value not in options:
        raise ConfigError(f"{section}.{key}: expected one of {options}, got {value!r}")
    return value


def _table(section: str, value: Any) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{section}: expected a table")
    return value


def _normalise_pair(label: str, users: list[str]) -> str:
    for i in range(1, len(label)):
        a, b = label[:i], label[i:]
        if a in users and b in users and a != b:
            return "".join(sorted((a, b), key=users.index))
    parts = label.split("-")
    if len(parts) == 2 and all(p in users for p in parts) and parts[0] != parts[1]:
        return "".join(sorted(parts, key=users.index))
    raise ConfigError(f"network.loss_db: {label!r} does not name a pair of users {users}")


def parse_config(data: dict, base_dir: Path | None = None) -> SessionConfig:
    """Validate a parsed TOML document into a :class:`SessionConfig`."""
    unknown = set(data) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    for sec, body in data.items():
        bad = set(_table(sec, body)) - _SCHEMA[sec]
        if bad:
            raise ConfigError(f"[{sec}]: unknown key(s) {sorted(bad)}")
    kw: dict[str, Any] = {}

    net = data.get("network", {})
    n = _number("network", "n_users", net.get("n_users", 4), lo=2, integer=True)
    kw["n_users"] = n
    kw["clock_hz"] = _number("network", "clock_hz", net.get("clock_hz", 100e6), lo=0, lo_open=True)
    users = user_labels(n)
    losses: dict[str, float] = {}
    for label, v in _table("network.loss_db", net.get("loss_db", {})).items():
        pair = _normalise_pair(label, users)
        if pair in losses:
            raise ConfigError(f"network.loss_db: pair {label!r} given twice")
        losses[pair] = _number("network.loss_db", label, v, lo=0)
    if "default_loss_db" in net:
        default = _number("network", "default_loss_db", net["default_loss_db"], lo=0)
        for i in range(n):
            for j in range(i + 1, n):
                losses.setdefault(users[i] + users[j], default)
    order = {users[i] + users[j]: (i, j) for i in range(n) for j in range(i + 1, n)}
    kw["pair_loss_db"] = dict(sorted(losses.items(), key=lambda kv: order[kv[0]]))

    src = data.get("source", {})
    kw["linewidth_hz"] = _number("source", "linewidth_hz", src.get("linewidth_hz", 0.0), lo=0)
    if "hom_visibility" in src and "mode_overlap" in src:
        raise ConfigError("[source]: give hom_visibility or mode_overlap, not both")
    if "hom_visibility" in src:
        kw["hom_visibility"] = _number("source", "hom_visibility", src["hom_visibility"], lo=0, hi=0.5)
    if "mode_overlap" in src:
        kw["mode_overlap"] = _number("source", "mode_overlap", src["mode_overlap"], lo=0, hi=1)

    det = data.get("detectors", {})
    kw["detector_efficiency"] = _number("detectors", "efficiency", det.get("efficiency", 1.0),
                                        lo=0, hi=1, lo_open=True)
    kw["dark_prob"] = _number("detectors", "dark_prob", det.get("dark_prob", 1e-6), lo=0, hi=1)

    pro = data.get("protocol", {})
    n_pulses = _number("protocol", "n_pulses", pro.get("n_pulses", 3e12), lo=0, lo_open=True)
    base = default_protocol()
    mu = {t: base.mu(t) for t in ("z", "y", "x")}
    prob = {t: base.p(t) for t in ("z", "y", "x", "o")}
    for name, target, tags in (("mu", mu, ("z", "y", "x")), ("probability", prob, ("z", "y", "x", "o"))):
        given = _table(f"protocol.{name}", pro.get(name, {}))
        bad = set(given) - set(tags)
        if bad:
            raise ConfigError(f"protocol.{name}: unknown class(es) {sorted(bad)}")
        for t, v in given.items():
            target[t] = _number(f"protocol.{name}", t, v, lo=0, hi=1)
    if "probability" in pro and "o" not in pro["probability"]:
        prob["o"] = 1.0 - prob["z"] - prob["y"] - prob["x"]
    try:
        kw["protocol"] = IntensityProtocol.from_values(
            mu["z"], mu["y"], mu["x"], prob["z"], prob["y"], prob["x"], prob["o"],
            clock_hz=kw["clock_hz"], n_pulses=n_pulses,
        )
    except ValueError as exc:
        raise ConfigError(f"[protocol]: {exc}") from None

    ana = data.get("analysis", {})
    kw["epsilon"] = _number("analysis", "epsilon", ana.get("epsilon", 1e-10), lo=0, hi=1, lo_open=True)
    kw["f"] = _number("analysis", "f", ana.get("f", 1.16), lo=1)
    kw["n_cut"] = _number("analysis", "n_cut", ana.get("n_cut", 7), lo=1, hi=30, integer=True)
    kw["workers"] = _number("analysis", "workers", ana.get("workers", 1), lo=1, integer=True)
    if "gain_table" in ana:
        gt = ana["gain_table"]
        if not isinstance(gt, str) or not gt:
            raise ConfigError("analysis.gain_table: expected a path")
        if gt != "bundled" and base_dir is not None and not Path(gt).is_absolute():
            gt = str(base_dir / gt)
        kw["gain_table"] = gt

    sim = data.get("sim", {})
    kw["sim_mode"] = _choice("sim", "mode", sim.get("mode", "analytic"), ("analytic", "montecarlo"))
    if "n_rounds" in sim:
        kw["n_rounds"] = _number("sim", "n_rounds", sim["n_rounds"], lo=1, integer=True)
    elif kw["sim_mode"] == "montecarlo":
        raise ConfigError("sim.n_rounds is required in montecarlo mode")
    kw["seed"] = _number("sim", "seed", sim.get("seed", 0), lo=0, integer=True)
    kw["shards"] = _number("sim", "shards", sim.get("shards", 1), lo=1, integer=True)
    poisson = sim.get("poisson", False)
    if not isinstance(poisson, bool):
        raise ConfigError("sim.poisson: expected true or false")
    kw["poisson"] = poisson

    opt = data.get("optimize", {})
    if "loss_db" in opt:
        kw["optimize_loss_db"] = _number("optimize", "loss_db", opt["loss_db"], lo=0)
    kw["optimize_restarts"] = _number("optimize", "restarts", opt.get("restarts", 3), lo=1, integer=True)
    kw["optimize_seed"] = _number("optimize", "seed", opt.get("seed", 0), lo=0, integer=True)
    kw["optimize_max_evals"] = _number("optimize", "max_evals", opt.get("max_evals", 400),
                                       lo=1, integer=True)

    cur = data.get("curve", {})
    if "losses" in cur:
        if not isinstance(cur["losses"], list) or not cur["losses"]:
            raise ConfigError("curve.losses: expected a non-empty list")
        ls = tuple(_number("curve", "losses", v, lo=0) for v in cur["losses"])
        if list(ls) != sorted(ls):
            raise ConfigError("curve.losses: must be sorted")
        kw["curve_losses"] = ls
    kw["curve_mode"] = _choice("curve", "mode", cur.get("mode", "fixed"), ("fixed", "reoptimized"))

    kw["plan_scheme"] = _choice("plan", "scheme", data.get("plan", {}).get("scheme", "both"),
                                ("wdm", "tdm", "both"))
    return SessionConfig(**kw)


def load_config(path) -> SessionConfig:
    """Read and validate a TOML configuration file; I/O errors propagate as ``OSError``."""
    p = Path(path)
    raw = p.read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return parse_config(data, base_dir=p.parent)
