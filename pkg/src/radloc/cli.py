"""Command-line front end: ``radloc <command> [options]``.

Every output embeds the resolved configuration, so a run can be repeated
from its own header.  Numbers are written with 17 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .model import (
    EnvironmentWord,
    InvalidDistribution,
    SingleGenDistribution,
    rbm,
    rkm,
    rlm,
    sample_word,
)

MODELS = ("rbm", "rlm", "rkm", "discrete-rbm", "discrete-rwm", "discrete-rso", "custom")
COMMANDS = ("lyapunov", "exceptional", "spectrum", "truncspec", "decay", "moment", "equiv")


class ConfigError(Exception):
    """Malformed flags or configuration file."""


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return format(float(x), ".17g")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _window(text, default: str = "0.5:40") -> tuple[float, float]:
    if text is None:
        text = default
    if isinstance(text, (list, tuple)):
        vals = list(text)
    else:
        vals = str(text).split(":")
    try:
        lo, hi = (float(v) for v in vals)
    except ValueError as exc:
        raise ConfigError(f"window must look like a:b, got {text!r}") from exc
    if not lo < hi:
        raise ConfigError("window must satisfy a < b")
    return lo, hi


def _custom_atoms(text) -> list:
    if isinstance(text, list):
        return [tuple(a) for a in text]
    text = str(text).strip()
    if text.startswith("["):
        try:
            return [tuple(a) for a in json.loads(text)]
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad atom list {text!r}") from exc
    try:
        return [tuple(float(x) for x in a.split(":")) for a in text.split(",") if a.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad atom list {text!r}") from exc


def build_distribution(cfg: dict) -> tuple[SingleGenDistribution, str]:
    """Distribution and step kind (``continuum`` or ``discrete``) of a configuration."""
    model = cfg["model"]
    atoms = cfg.get("atoms")
    weights = _floats(cfg["weights"]) if cfg.get("weights") else None
    b, ell = cfg.get("b", 2), cfg.get("ell", 1.0)
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}")
    if model == "custom":
        if atoms is None:
            raise ConfigError("the custom model needs --atoms b:ell:q,...")
        return SingleGenDistribution(_custom_atoms(atoms), weights), cfg.get("kind") or "continuum"
    vals = _floats(atoms) if atoms is not None else None
    if model in ("rbm", "discrete-rbm"):
        vals = vals or [2, 3]
        if any(not float(v).is_integer() for v in vals):
            raise ConfigError("branching atoms must be integers")
        dist = rbm([int(v) for v in vals], weights, ell=ell)
    elif model in ("rlm", "discrete-rwm"):
        dist = rlm(vals or [1.0, 2.0], weights, b=int(b))
    else:
        dist = rkm(vals or [0.0, 1.0], weights, b=int(b), ell=ell)
    return dist, ("discrete" if model.startswith("discrete") else "continuum")


def _word(cfg: dict, dist, length: int) -> EnvironmentWord:
    spec = cfg.get("word")
    if spec is None:
        return sample_word(dist, length, seed=cfg["seed"])
    if spec == "free":
        return EnvironmentWord.constant((1, 1.0, 0.0), length)
    with open(spec) as fh:
        word = EnvironmentWord.from_json(fh.read())
    if len(word) < length:
        raise ConfigError(f"word file has {len(word)} sites, {length} needed")
    return word


# Output --------------------------------------------------------------------------------


def _header(cfg: dict) -> str:
    return "# radloc " + json.dumps(cfg, sort_keys=True)


def _csv(cfg: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(_header(cfg) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(x) if not isinstance(x, str) else x for x in r])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _json(cfg: dict, payload: dict) -> str:
    out = {"config": cfg, **payload}
    return json.dumps(out, indent=2, sort_keys=True, default=_json_default) + "\n"


def _emit(text: str, path: str | None) -> None:
    if not path:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".radloc-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# Commands ------------------------------------------------------------------------------


def cmd_lyapunov(cfg: dict) -> str:
    from .cocycle import lyapunov_curve

    dist, kind = build_distribution(cfg)
    lo, hi = _window(cfg["window"])
    E = np.linspace(lo, hi, cfg["grid"])
    est = lyapunov_curve(E, dist, kind=kind, n=cfg["n"], trials=cfg["trials"], seed=cfg["seed"])
    return _csv(cfg, ["energy", "value", "stderr", "n", "trials", "seed"], [e.as_row() for e in est])


def cmd_exceptional(cfg: dict) -> str:
    from .furstenberg import exceptional_set_continuum, exceptional_set_discrete

    dist, kind = build_distribution(cfg)
    if kind == "discrete":
        res = exceptional_set_discrete(dist, regime=cfg["regime"])
    else:
        res = exceptional_set_continuum(dist, window=_window(cfg["window"]))
    return _json(cfg, res.to_dict())


def cmd_spectrum(cfg: dict) -> str:
    from .discrete import BandSet, almost_sure_spectrum_discrete, periodic_spectrum_continuum

    dist, kind = build_distribution(cfg)
    win = _window(cfg["window"]) if cfg.get("window") else None
    if kind == "discrete":
        bands = almost_sure_spectrum_discrete(dist, cfg["period"], win, regime=cfg["regime"])
    else:
        if win is None:
            raise ConfigError("continuum spectra need --window")
        bands = BandSet([])
        atoms = list(dist.atoms)
        for L in range(1, cfg["period"] + 1):
            for cell in itertools.product(atoms, repeat=L):
                bands = bands.union(periodic_spectrum_continuum(cell, win))
    return _csv(cfg, ["lo", "hi"], bands.to_rows())


def cmd_truncspec(cfg: dict) -> str:
    from .halfline import truncated_eigenvalues

    dist, kind = _dist_or_free(cfg)
    word = _word(cfg, dist, cfg["n"])
    spec = truncated_eigenvalues(word, cfg["n"], _window(cfg["window"]))
    res = spec.residuals if spec.residuals is not None else [None] * len(spec.eigenvalues)
    return _csv(cfg, ["index", "energy", "residual"],
                [(i, e, r) for i, (e, r) in enumerate(zip(spec.eigenvalues, res))])


def _dist_or_free(cfg):
    if cfg.get("word") == "free":
        return None, "continuum"
    return build_distribution(cfg)


def cmd_decay(cfg: dict) -> str:
    from .cocycle import lyapunov_curve
    from .halfline import decay_rate_fit, eigenpairs, truncated_eigenvalues

    dist, kind = build_distribution(cfg)
    if kind != "continuum":
        raise ConfigError("decay fits are for continuum models; use the library for discrete suites")
    word = _word(cfg, dist, cfg["n"])
    spec = truncated_eigenvalues(word, cfg["n"], _window(cfg["window"]), with_residuals=False)
    profs = eigenpairs(word, cfg["n"], spec.eigenvalues) if len(spec.eigenvalues) else []
    Ls = lyapunov_curve(spec.eigenvalues, dist, n=cfg["lyapunov_n"], trials=cfg["trials"], seed=cfg["seed"]) \
        if len(spec.eigenvalues) else []
    mean_ell = dist.mean("ell")
    rows = []
    for prof, L in zip(profs, Ls):
        fit = decay_rate_fit(prof)
        rows.append((prof.energy, fit.lam, L.value, L.value / mean_ell, fit.r_squared, fit.localized))
    return _csv(cfg, ["energy", "lambda_hat", "lyapunov", "rate", "r_squared", "localized"], rows)


def cmd_moment(cfg: dict) -> str:
    from .halfline import dynamical_moment
    from .treeops import tree_dynamical_moment

    dist, _ = build_distribution(cfg)
    depth = cfg["depth"]
    word = _word(cfg, dist, depth)
    win = _window(cfg["window"])
    R = cfg["radius"]
    tree, terms = tree_dynamical_moment(word, depth, win, cfg["p"], R, return_terms=True)
    psi = lambda x: (np.asarray(x) <= R).astype(float)
    half = dynamical_moment(word, depth, win, cfg["p"], psi, absolute=True)
    return _json(cfg, {"tree_moment": tree, "halfline_moment": half,
                       "terms": [{"generation": g, "multiplicity": m, "eigenvalues": k, "sum": s}
                                 for g, m, k, s in terms]})


def cmd_equiv(cfg: dict) -> str:
    from .discrete import build_finite_tree, decomposition_equivalence

    dist, _ = build_distribution(cfg)
    depth = cfg["depth"]
    word = _word(cfg, dist, depth + 1)
    tree = build_finite_tree(word, depth)
    rep = decomposition_equivalence(tree, word, regime=cfg["regime"])
    return _json(cfg, rep.to_dict())


_DISPATCH = {
    "lyapunov": cmd_lyapunov,
    "exceptional": cmd_exceptional,
    "spectrum": cmd_spectrum,
    "truncspec": cmd_truncspec,
    "decay": cmd_decay,
    "moment": cmd_moment,
    "equiv": cmd_equiv,
}

_DEFAULTS = {
    "model": "rbm", "atoms": None, "weights": None, "b": 2, "ell": 1.0, "kind": None,
    "window": None, "grid": 100, "n": 10000, "lyapunov_n": 10000, "trials": 50, "seed": 0,
    "depth": 6, "p": 1.0, "radius": 3.0, "regime": None, "period": 4, "word": None,
}
_TYPES = {"b": int, "ell": float, "grid": int, "n": int, "lyapunov_n": int, "trials": int, "seed": int,
          "depth": int, "p": float, "radius": float, "period": int}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(2, "usage", message)


def _fail(code: int, kind: str, message: str):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit": code}) + "\n")
    raise SystemExit(code)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="radloc", description="Localization diagnostics for random radial trees.")
    ap.add_argument("--version", action="version", version=f"radloc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--model", choices=MODELS)
        sp.add_argument("--atoms", help="comma separated atom values (custom: b:ell:q,...)")
        sp.add_argument("--weights", help="comma separated probabilities")
        sp.add_argument("--b", type=int, help="fixed branching for length/coupling models")
        sp.add_argument("--ell", type=float, help="fixed edge length (or weight)")
        sp.add_argument("--kind", choices=("continuum", "discrete"), help="step kind for the custom model")
        sp.add_argument("--window", help="energy window a:b")
        sp.add_argument("--grid", type=int)
        sp.add_argument("--n", type=int)
        sp.add_argument("--lyapunov-n", dest="lyapunov_n", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--depth", type=int)
        sp.add_argument("--p", type=float)
        sp.add_argument("--radius", type=float)
        sp.add_argument("--regime", choices=("adjacency", "schroedinger"))
        sp.add_argument("--period", type=int)
        sp.add_argument("--word", help="'free' or a JSON word file")
        sp.add_argument("--out")
        sp.add_argument("--config", help="JSON file; its values override flags")
    return ap


def resolve_config(ns: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS)
    for k in _DEFAULTS:
        v = getattr(ns, k, None)
        if v is not None:
            cfg[k] = v
    if ns.config:
        try:
            with open(ns.config) as fh:
                extra = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc}") from exc
        if not isinstance(extra, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(extra) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        cfg.update(extra)
    for k, t in _TYPES.items():
        try:
            cfg[k] = t(cfg[k])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{k} must be {t.__name__}") from exc
    if cfg["grid"] < 1 or cfg["n"] < 1 or cfg["trials"] < 1 or cfg["depth"] < 1:
        raise ConfigError("grid, n, trials and depth must be positive")
    if cfg["regime"] is None:
        cfg["regime"] = "schroedinger" if cfg["model"] == "discrete-rso" else "adjacency"
    cfg["command"] = ns.command
    cfg["version"] = __version__
    return cfg


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(ns)
        text = _DISPATCH[ns.command](cfg)
    except ConfigError as exc:
        _fail(2, "config", str(exc))
    except InvalidDistribution as exc:
        _fail(3, "distribution", str(exc))
    except (ValueError, RuntimeError) as exc:
        _fail(1, type(exc).__name__, str(exc))
    _emit(text, ns.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
