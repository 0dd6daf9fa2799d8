"""Command-line front end.

Configuration files are INI-style.  Keys may be written dotted at the top
level (``kernel.type = fbm``) or inside sections (``[kernel]`` then
``type = fbm``).  Every report is a JSON document with one entry per gated
case; the exit status is 0 when every case passes, 2 when a gate fails, 3 on
configuration errors and 4 on numerical failures.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import functionals as fn
from . import __version__
from .errors import (
    ConfigError,
    DomainError,
    FGaussError,
    NumericalError,
    ParseError,
    UnknownKey,
    UnsupportedKernel,
)
from .expr import parse_expression
from .finance import (
    MarketParams,
    PayoffSpec,
    bel_delta,
    bismut_v0_delta,
    black_scholes_call,
    black_scholes_put,
    fd_delta,
    gaussian_delta_oracle,
    price_roughvol,
)
from .girsanov import ShiftDirection, girsanov_density, ibp_check, quasi_invariance_check
from .grid import TimeGrid
from .grid_ops import adjointness_residual, build_KF, build_RF_matrix, round_trip_residuals
from .kernels import (
    Constant,
    Custom,
    FbmLiouville,
    Identity,
    RiemannLiouville,
    Separable,
    covariance,
)
from .martingale import martingale_check
from .sampling import RngConfig, cholesky_sample, sample_brownian, sample_fgaussian, volterra_transform
from .stats import MCEstimate, loglog_slope

EXIT_PASS, EXIT_GATE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3, 4
ROOT = "__root__"

# ------------------------------------------------------------------ schema

FLOAT, INT, STR, EXPR, LIST = "float", "int", "str", "expr", "list"

KERNEL_TYPES = ("identity", "constant", "separable", "fbm", "rl", "custom")

# key -> (kind, default, choices)
KEYS = {
    "kernel.type": (STR, "identity", KERNEL_TYPES),
    "kernel.H": (FLOAT, None, None),
    "kernel.c_H": (FLOAT, None, None),
    "kernel.b_H": (FLOAT, None, None),
    "kernel.alpha": (FLOAT, None, None),
    "kernel.c": (FLOAT, None, None),
    "kernel.scale": (FLOAT, None, None),
    "kernel.f": (EXPR, None, None),
    "kernel.f1": (EXPR, None, None),
    "kernel.f2": (EXPR, None, None),
    "kernel.F": (EXPR, None, None),
    "kernel.dF": (EXPR, None, None),
    "kernel.origin_power": (FLOAT, None, None),
    "kernel.diag_power": (FLOAT, None, None),
    "kernel.f1_origin_power": (FLOAT, None, None),
    "kernel.f2_origin_power": (FLOAT, None, None),
    "grid.T": (FLOAT, 1.0, None),
    "grid.n": (INT, 64, None),
    "mc.paths": (INT, 10_000, None),
    "mc.seed": (INT, 0, None),
    "mc.workers": (INT, 1, None),
    "simulate.method": (STR, "volterra", ("volterra", "cholesky")),
    "girsanov.shifts": (LIST, "0.5; t; sin(pi*t)", None),
    "girsanov.functionals": (LIST, "linear, square, cosine, product", None),
    "girsanov.z_gate": (FLOAT, 4.0, None),
    "lsi.kinds": (LIST, "damped, ou, l2", None),
    "lsi.functionals": (LIST, "point, square, cosine, exp_truncated, smooth_bump, arctan_sum", None),
    "lsi.l2_functionals": (LIST, "l2_tanh_mean, l2_integral, l2_square_integral, l2_sin_mean, l2_two_integrals", None),
    "lsi.delta": (FLOAT, 1.0, None),
    "lsi.z_gate": (FLOAT, 3.0, None),
    "martingale.pairs": (LIST, "0.25:0.5, 0.5:1, 0.25:1, 0.75:1", None),
    "martingale.z_gate": (FLOAT, 3.0, None),
    "operators.h": (EXPR, "sin(pi*t)*(1+t)", None),
    "operators.sizes": (LIST, "64, 128, 256, 512", None),
    "operators.pairs": (INT, 5, None),
    "operators.tolerance": (FLOAT, 1e-12, None),
    "price.model": (STR, "bs", ("bs", "roughvol")),
    "market.S0": (FLOAT, 100.0, None),
    "market.K": (FLOAT, 100.0, None),
    "market.r": (FLOAT, 0.05, None),
    "market.sigma": (FLOAT, 0.2, None),
    "market.T": (FLOAT, 1.0, None),
    "payoff.type": (STR, "call", ("call", "put", "digital")),
    "payoff.K": (FLOAT, 1.0, None),
    "rough.v0": (FLOAT, 1.0, None),
    "rough.t": (FLOAT, None, None),
    "greeks.method": (STR, "bel", ("bel", "bismut-v0", "fd")),
    "greeks.x": (FLOAT, 0.0, None),
    "greeks.bump": (FLOAT, None, None),
    "greeks.z_gate": (FLOAT, 4.0, None),
}

# Keys that only tune execution and are left out of reports.
EXECUTION_KEYS = ("mc.workers",)


@dataclass
class RunConfig:
    """Validated configuration: typed values for the keys that were set."""

    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    def get(self, key):
        if key in self.values:
            return self.values[key]
        kind, default, _ = KEYS[key]
        if kind == EXPR and default is not None:
            return parse_expression(default)
        return default

    def has(self, key):
        return key in self.values

    def where(self, key):
        return self.lines.get(key, (None, None))

    def echo(self, include_execution=False):
        """Canonical string form of every set key."""
        return {
            k: _format(KEYS[k][0], v)
            for k, v in sorted(self.values.items())
            if include_execution or k not in EXECUTION_KEYS
        }

    def to_text(self):
        """Config text that parses back to an equal RunConfig."""
        out = []
        for k, v in self.echo(include_execution=True).items():
            out.append(f"{k} = {v}")
        return "\n".join(out) + "\n"

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.echo(True) == other.echo(True)


def _format(kind, v):
    if kind == FLOAT:
        return repr(float(v))
    if kind == INT:
        return str(int(v))
    return str(v)


_KEY_LINE = re.compile(r"^(?P<key>[^=\s#;\[][^=]*?)\s*=\s*(?P<value>.*)$")
_SECTION_LINE = re.compile(r"^\s*\[(?P<name>[^\]]+)\]\s*$")


def _scan_lines(text):
    """Map dotted key -> (line, column of the value), 1-based."""
    where = {}
    section = None
    for no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = _SECTION_LINE.match(line)
        if m:
            section = m.group("name").strip()
            continue
        m = _KEY_LINE.match(line.strip())
        if m:
            key = m.group("key").strip()
            dotted = key if section is None else f"{section}.{key}"
            col = line.index("=") + 1
            while col < len(line) and line[col] == " ":
                col += 1
            where.setdefault(dotted, (no, col + 1))
    return where


def _convert(key, raw, line, col):
    kind, _, choices = KEYS[key]
    raw = raw.strip()
    try:
        if kind == FLOAT:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
        elif kind == INT:
            v = int(raw)
        elif kind == EXPR:
            v = parse_expression(raw)
        else:
            v = raw
    except ValueError:
        raise ParseError(f"{key}: cannot read {raw!r} as {kind}", line, col) from None
    except ParseError as exc:
        raise ParseError(f"{key}: {exc}", line, col) from None
    if choices is not None and v not in choices:
        raise DomainError(f"{key} must be one of {', '.join(choices)} (line {line})")
    return v


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text.

    Raises
    ------
    ParseError
        Malformed lines, duplicate keys or values of the wrong type.
    UnknownKey
        Keys outside the documented set.
    DomainError
        Values outside their allowed range (for example H outside (0, 1)).
    """
    parser = configparser.ConfigParser(
        strict=True, interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"), empty_lines_in_values=False
    )
    parser.optionxform = str
    try:
        parser.read_string(f"[{ROOT}]\n" + text)
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r}", (exc.lineno or 1) - 1) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section {exc.section!r}", (exc.lineno or 1) - 1) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] - 1 if exc.errors else None
        raise ParseError("malformed line", lineno) from None
    where = _scan_lines(text)
    raw = {}
    for section in parser.sections():
        for key, value in parser.items(section, raw=True):
            dotted = key if section == ROOT else f"{section}.{key}"
            line, col = where.get(dotted, (None, None))
            if dotted in raw:
                raise ParseError(f"duplicate key {dotted!r}", line)
            if dotted not in KEYS:
                raise UnknownKey(f"unknown key {dotted!r}" + (f" (line {line})" if line else ""))
            raw[dotted] = (value, line, col)
    cfg = RunConfig()
    for key, (value, line, col) in raw.items():
        cfg.values[key] = _convert(key, value, line, col)
        cfg.lines[key] = (line, col)
    validate(cfg)
    return cfg


def parse_kernel_flag(text: str) -> dict:
    """Compact kernel form ``type:key=value,...`` (for example ``fbm:H=0.7``)."""
    head, _, rest = text.partition(":")
    out = {"kernel.type": head.strip().lower()}
    if rest.strip():
        for part in rest.split(","):
            k, eq, v = part.partition("=")
            if not eq:
                raise ParseError(f"--kernel: expected key=value, got {part!r}")
            out[f"kernel.{k.strip()}"] = v.strip()
    return out


def apply_overrides(cfg: RunConfig, pairs: dict) -> RunConfig:
    """Set keys from command-line strings; a ``kernel.type`` override drops the other kernel keys."""
    if "kernel.type" in pairs:
        for k in [k for k in cfg.values if k.startswith("kernel.")]:
            del cfg.values[k]
            cfg.lines.pop(k, None)
    for key, raw in pairs.items():
        if key not in KEYS:
            raise UnknownKey(f"unknown key {key!r}")
        cfg.values[key] = _convert(key, str(raw), None, None)
        cfg.lines.pop(key, None)
    validate(cfg)
    return cfg


def _fail(cfg, key, message):
    line, _ = cfg.where(key)
    raise DomainError(message + (f" (line {line})" if line else ""))


def validate(cfg: RunConfig):
    if cfg.get("grid.T") <= 0:
        _fail(cfg, "grid.T", "grid.T must be positive")
    if cfg.get("grid.n") < 2:
        _fail(cfg, "grid.n", "grid.n must be at least 2")
    if cfg.get("mc.paths") < 2:
        _fail(cfg, "mc.paths", "mc.paths must be at least 2")
    if not 0 <= cfg.get("mc.seed") < 2**64:
        _fail(cfg, "mc.seed", "mc.seed must be a 64-bit unsigned integer")
    if cfg.get("mc.workers") < 1:
        _fail(cfg, "mc.workers", "mc.workers must be at least 1")
    kind = cfg.get("kernel.type")
    required = {"fbm": ("kernel.H",), "rl": ("kernel.alpha",), "constant": ("kernel.c",), "separable": ("kernel.f",), "custom": ("kernel.F",)}
    for key in required.get(kind, ()):
        if not cfg.has(key):
            _fail(cfg, "kernel.type", f"kernel.type={kind} needs {key}")
    if kind == "fbm" and not 0 < cfg.get("kernel.H") < 1:
        _fail(cfg, "kernel.H", "kernel.H must lie in (0, 1)")
    if kind == "rl" and not 0 < cfg.get("kernel.alpha") < 1:
        _fail(cfg, "kernel.alpha", "kernel.alpha must lie in (0, 1)")
    allowed = {
        "identity": (),
        "constant": ("c",),
        "separable": ("f", "origin_power"),
        "fbm": ("H", "c_H", "b_H"),
        "rl": ("alpha", "f1", "f2", "scale", "f1_origin_power", "f2_origin_power"),
        "custom": ("F", "dF", "diag_power", "origin_power"),
    }[kind]
    for key in cfg.values:
        if key.startswith("kernel.") and key != "kernel.type" and key[7:] not in allowed:
            _fail(cfg, key, f"{key} does not apply to kernel.type={kind}")
    return cfg


# ------------------------------------------------------------- builders


def build_kernel(cfg: RunConfig):
    kind, T = cfg.get("kernel.type"), cfg.get("grid.T")
    g = cfg.get
    if kind == "identity":
        return Identity(T=T)
    if kind == "constant":
        return Constant(g("kernel.c"), T=T)
    if kind == "separable":
        return Separable(g("kernel.f"), T=T, origin_power=g("kernel.origin_power"))
    if kind == "fbm":
        return FbmLiouville(g("kernel.H"), c_H=g("kernel.c_H"), b_H=g("kernel.b_H"), T=T)
    if kind == "rl":
        return RiemannLiouville(
            g("kernel.alpha"),
            f1=g("kernel.f1"),
            f2=g("kernel.f2"),
            T=T,
            scale=1.0 if g("kernel.scale") is None else g("kernel.scale"),
            f1_origin_power=g("kernel.f1_origin_power"),
            f2_origin_power=g("kernel.f2_origin_power"),
        )
    return Custom(
        g("kernel.F"), g("kernel.dF"), T=T, diag_power=g("kernel.diag_power"), origin_power=g("kernel.origin_power")
    )


def _grid(cfg):
    return TimeGrid(cfg.get("grid.T"), cfg.get("grid.n"))


def _rng(cfg):
    return RngConfig(cfg.get("mc.seed"), cfg.get("mc.workers"))


def _split(cfg, key, sep=None):
    text = cfg.get(key)
    sep = sep or (";" if ";" in text else ",")
    return [p.strip() for p in text.split(sep) if p.strip()]


def cylinder_functional(name, T):
    table = {
        "point": lambda: fn.point(T),
        "linear": lambda: fn.linear((T / 2, T), (1.0, -0.5), "linear"),
        "square": lambda: fn.square(T),
        "cosine": lambda: fn.cosine(T / 2),
        "product": lambda: fn.product(T / 2, T),
        "exp_truncated": lambda: fn.exp_truncated(T, 0.5),
        "smooth_bump": lambda: fn.smooth_bump(T / 2, T),
        "arctan_sum": lambda: fn.arctan_sum((T / 4, T / 2, T)),
    }
    if name not in table:
        raise DomainError(f"unknown functional {name!r}; choose from {', '.join(table)}")
    return table[name]()


def l2_functional(name):
    table = {
        "l2_tanh_mean": fn.l2_tanh_mean,
        "l2_integral": lambda: fn.l2_integral("identity"),
        "l2_square_integral": lambda: fn.l2_integral("square"),
        "l2_sin_mean": fn.l2_sin_mean,
        "l2_two_integrals": fn.l2_two_integrals,
        "l2_exp_truncated": fn.l2_exp_truncated,
    }
    if name not in table:
        raise DomainError(f"unknown L2 functional {name!r}; choose from {', '.join(table)}")
    return table[name]()


def _payoff(cfg, strike_key="payoff.K"):
    kind = cfg.get("payoff.type")
    return {"call": PayoffSpec.call, "put": PayoffSpec.put, "digital": PayoffSpec.digital}[kind](cfg.get(strike_key))


# ------------------------------------------------------------- commands


def _est(e: MCEstimate):
    return {"mean": e.mean, "stderr": e.stderr}


def cmd_simulate(cfg, out):
    spec, grid, rng = build_kernel(cfg), _grid(cfg), _rng(cfg)
    n_paths = cfg.get("mc.paths")
    if cfg.get("simulate.method") == "cholesky":
        batch = cholesky_sample(spec, grid, rng, n_paths)
    else:
        batch = volterra_transform(spec, sample_brownian(grid, rng, n_paths))
    X = batch.nodes
    R = build_RF_matrix(spec, grid)
    cases = []
    for i in sorted({grid.n // 4, grid.n // 2, grid.n}):
        est = MCEstimate.from_samples(X[:, i] ** 2, R[i, i])
        cases.append(
            {"name": f"variance at t={grid.nodes[i]:g}", "estimate": est.mean, "reference": R[i, i], "stderr": est.stderr, "z": est.zscore, "pass": bool(abs(est.zscore) < 4)}
        )
    out.csv["paths.csv"] = _paths_csv(X, grid.nodes)
    return cases, {"method": batch.provenance, "paths": n_paths, "jitter": batch.jitter}


def cmd_covariance(cfg, out):
    spec, grid = build_kernel(cfg), _grid(cfg)
    R = build_RF_matrix(spec, grid)
    asym = float(np.max(np.abs(R - R.T)))
    lam = np.linalg.eigvalsh((R + R.T)[1:, 1:] / 2)
    cases = [
        {"name": "symmetry", "value": asym, "pass": asym <= 1e-12 * max(1.0, float(np.max(np.abs(R))))},
        {"name": "positive semidefinite", "value": float(lam[0]), "largest": float(lam[-1]), "pass": bool(lam[0] >= -1e-8 * lam[-1])},
    ]
    idx = np.unique(np.linspace(1, grid.n, 8).round().astype(int))
    worst = 0.0
    for i in idx:
        for j in idx:
            ref = covariance(spec, grid.nodes[i], grid.nodes[j])
            worst = max(worst, abs(R[i, j] - ref) / max(abs(ref), 1e-300))
    cases.append({"name": "matrix vs pointwise quadrature", "value": worst, "pass": bool(worst <= 1e-6)})
    if isinstance(spec, FbmLiouville):
        ts = np.array([0.1, 0.2, 0.4]) * grid.T
        slope = float(np.polyfit(np.log(ts), np.log([covariance(spec, t, t) for t in ts]), 1)[0])
        cases.append(
            {"name": "self-similarity slope", "value": slope, "reference": 2 * spec.H, "pass": bool(abs(slope - 2 * spec.H) <= 1e-4 * 2 * spec.H)}
        )
    out.csv["covariance.csv"] = _matrix_csv(R, [f"t={t:.12g}" for t in grid.nodes])
    return cases, {}


def _exact_inverse(spec):
    data = spec.inversion_data
    return data is None or isinstance(spec, (Constant, Separable)) or (isinstance(spec, FbmLiouville) and spec.H <= 0.5)


def _round_trip_target(spec):
    """Expected minimum L2 order of the round trips for power-singular kernels."""
    a = spec.alpha if isinstance(spec, RiemannLiouville) else spec.H - 0.5
    return min(1.0, 1.0 - a) - 0.1


def cmd_operators(cfg, out):
    spec, grid = build_kernel(cfg), _grid(cfg)
    h = cfg.get("operators.h")
    cases = []
    if _exact_inverse(spec):
        tol = cfg.get("operators.tolerance")
        res = round_trip_residuals(spec, grid, h)
        for key in ("KF_sup", "KF_star_sup"):
            cases.append({"name": f"round trip {key[:-4]} (sup)", "value": res[key], "tolerance": tol, "pass": bool(res[key] <= tol)})
    else:
        sizes = [int(s) for s in _split(cfg, "operators.sizes", ",")]
        res = [round_trip_residuals(spec, TimeGrid(grid.T, n), h) for n in sizes]
        target = _round_trip_target(spec)
        for key in ("KF", "KF_star"):
            errs = [r[key] for r in res]
            order = loglog_slope(sizes, errs)
            cases.append({"name": f"round trip {key} order", "value": order, "target": target, "errors": errs, "sizes": sizes, "pass": bool(order >= target)})
    rng = np.random.default_rng(cfg.get("mc.seed"))
    sizes = [16, 32, 64, 128]
    slopes = []
    for _ in range(cfg.get("operators.pairs")):
        a, b, c, d = rng.uniform(0.5, 2.0, 4)

        def g(t, a=a, b=b):
            return np.sin(a * t + b)

        def hh(t, c=c, d=d):
            return np.cos(c * t) + d * t

        errs = [adjointness_residual(spec, TimeGrid(grid.T, n), g, hh) for n in sizes]
        slopes.append(loglog_slope(sizes, errs))
    cases.append({"name": "adjointness order", "value": float(min(slopes)), "slopes": slopes, "target": 0.9, "pass": bool(min(slopes) >= 0.9)})
    out.csv["KF.csv"] = _matrix_csv(build_KF(spec, grid).dense(), [f"cell{j}" for j in range(grid.n)])
    return cases, {}


def cmd_girsanov(cfg, out):
    spec, grid, rng = build_kernel(cfg), _grid(cfg), _rng(cfg)
    gate = cfg.get("girsanov.z_gate")
    bm = sample_brownian(grid, rng, cfg.get("mc.paths"))
    funcs = [cylinder_functional(name, grid.T) for name in _split(cfg, "girsanov.functionals", ",")]
    cases = []
    for text in _split(cfg, "girsanov.shifts", ";"):
        shift = ShiftDirection.from_hdot(spec, parse_expression(text), grid)
        alpha = MCEstimate.from_samples(girsanov_density(shift, bm), 1.0)
        cases.append({"name": f"E[alpha] hdot={text}", "estimate": alpha.mean, "stderr": alpha.stderr, "z": alpha.zscore, "pass": bool(abs(alpha.zscore) < 3)})
        for G in funcs:
            for check in (quasi_invariance_check, ibp_check):
                r = check(spec, G, shift, batch=bm, z_gate=gate)
                d = r.as_dict()
                d["name"] = f"{d['name']} hdot={text}"
                cases.append(d)
    return cases, {}


def cmd_lsi(cfg, out):
    spec, grid, rng = build_kernel(cfg), _grid(cfg), _rng(cfg)
    _, fg = sample_fgaussian(spec, grid, rng, cfg.get("mc.paths"))
    cases = []
    for kind in _split(cfg, "lsi.kinds", ","):
        if kind not in fn.KINDS:
            raise DomainError(f"unknown LSI kind {kind!r}")
        if kind == fn.L2:
            funcs = [l2_functional(n) for n in _split(cfg, "lsi.l2_functionals", ",")]
        else:
            funcs = [cylinder_functional(n, grid.T) for n in _split(cfg, "lsi.functionals", ",")]
        try:
            fn.lsi_constants(kind, spec, cfg.get("lsi.delta"))
        except UnsupportedKernel as exc:
            cases.append({"name": f"lsi {kind}", "skipped": str(exc), "pass": True})
            continue
        for G in funcs:
            r = fn.lsi_check(kind, spec, G, grid, delta=cfg.get("lsi.delta"), paths=fg, z_gate=cfg.get("lsi.z_gate"))
            for label, m in r.margins.items():
                cases.append(
                    {
                        "name": f"lsi {kind} {G.name} {label}",
                        "entropy": _est(r.entropy),
                        "energy": _est(r.energy),
                        "C": m["C"],
                        "margin": m["margin"],
                        "stderr": m["stderr"],
                        "z": m["z"],
                        "pass": m["pass"],
                    }
                )
    return cases, {}


def _pairs(cfg):
    out = []
    for item in _split(cfg, "martingale.pairs", ","):
        s, sep, t = item.partition(":")
        try:
            out.append((float(s), float(t)))
        except ValueError:
            raise ParseError(f"martingale.pairs: cannot read {item!r} as s:t", cfg.where("martingale.pairs")[0]) from None
    return out


def cmd_martingale(cfg, out):
    spec, grid, rng = build_kernel(cfg), _grid(cfg), _rng(cfg)
    rep = martingale_check(spec, grid, rng, cfg.get("mc.paths"), _pairs(cfg), z_gate=cfg.get("martingale.z_gate"))
    cases = [
        {"name": "zeta1 reduction t-independence", "value": rep.reduction.max_deviation, "tolerance": 1e-4, "pass": bool(rep.reduction.max_deviation <= 1e-4)}
    ]
    cases.extend(dict(c) for c in rep.cases)
    return cases, {"reduction_mismatch": rep.reduction.max_mismatch}


def cmd_price(cfg, out):
    if cfg.get("price.model") == "bs":
        p = MarketParams(cfg.get("market.S0"), cfg.get("market.K"), cfg.get("market.r"), cfg.get("market.sigma"), cfg.get("market.T"))
        call, put = black_scholes_call(p), black_scholes_put(p)
        parity = call - put - (p.S0 - p.K * np.exp(-p.r * p.T))
        value = put if cfg.get("payoff.type") == "put" else call
        if cfg.get("payoff.type") == "digital":
            raise DomainError("the bs model prices call and put payoffs only")
        return [{"name": "put-call parity", "value": float(parity), "pass": bool(abs(parity) <= 1e-12 * max(p.S0, p.K))}], {
            "price": value,
            "call": call,
            "put": put,
        }
    spec, grid, rng = build_kernel(cfg), _grid(cfg), _rng(cfg)
    t = cfg.get("rough.t") if cfg.has("rough.t") else grid.T
    v0 = cfg.get("rough.v0")
    est, clamped = price_roughvol(spec, _payoff(cfg), v0, t, grid, rng, cfg.get("mc.paths"))
    mean_est, _ = price_roughvol(spec, PayoffSpec.custom(lambda v: v, name="v"), v0, t, grid, rng, cfg.get("mc.paths"))
    ref = v0 * np.exp(0.5 * covariance(spec, t, t))
    z = (mean_est.mean - ref) / mean_est.stderr
    cases = [{"name": "E[v_t] vs v0 exp(R_F(t,t)/2)", "estimate": mean_est.mean, "reference": float(ref), "stderr": mean_est.stderr, "z": float(z), "pass": bool(abs(z) < 4)}]
    return cases, {"price": est.mean, "stderr": est.stderr, "clamped": clamped}


def cmd_greeks(cfg, out):
    spec, grid, rng = build_kernel(cfg), _grid(cfg), _rng(cfg)
    method, n_paths = cfg.get("greeks.method"), cfg.get("mc.paths")
    bump, gate = cfg.get("greeks.bump"), cfg.get("greeks.z_gate")
    payoff = _payoff(cfg)
    if method == "bel":
        rep = bel_delta(spec, payoff, cfg.get("greeks.x"), grid, rng, n_paths, bump=bump, oracle="gaussian", z_gate=gate)
    elif method == "bismut-v0":
        t = cfg.get("rough.t") if cfg.has("rough.t") else grid.T
        rep = bismut_v0_delta(spec, payoff, cfg.get("rough.v0"), t, grid, rng, n_paths, bump=bump, z_gate=gate)
    else:
        x = cfg.get("greeks.x")
        _, fg = sample_fgaussian(spec, grid, rng, n_paths)
        XT = fg.nodes[:, -1]
        est, samples = fd_delta(lambda y: payoff(y + XT), x, bump)
        oracle = gaussian_delta_oracle(payoff, x, covariance(spec, grid.T, grid.T))
        z = (est.mean - oracle) / est.stderr if est.stderr > 0 else 0.0
        case = {"name": "fd delta", "value": est.mean, "stderr": est.stderr, "oracle": oracle, "z_oracle": float(z), "pass": bool(abs(z) < gate)}
        out.csv["per_path.csv"] = _matrix_csv(samples[:, None], ["fd_sample"])
        return [case], {}
    d = rep.as_dict()
    d["name"] = f"{method} delta {payoff.label}"
    if rep.per_path is not None:
        keys = sorted(rep.per_path)
        out.csv["per_path.csv"] = _matrix_csv(np.column_stack([rep.per_path[k] for k in keys]), keys)
    return [d], {}


COMMANDS = {
    "simulate": cmd_simulate,
    "covariance": cmd_covariance,
    "check operators": cmd_operators,
    "check girsanov": cmd_girsanov,
    "check lsi": cmd_lsi,
    "check martingale": cmd_martingale,
    "price": cmd_price,
    "greeks": cmd_greeks,
}


# --------------------------------------------------------------- reports

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fgauss report",
    "type": "object",
    "required": ["command", "version", "config", "cases", "pass"],
    "additionalProperties": False,
    "properties": {
        "command": {"type": "string", "enum": sorted(COMMANDS)},
        "version": {"type": "string"},
        "config": {"type": "object", "additionalProperties": {"type": "string"}},
        "summary": {"type": "object"},
        "cases": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "pass"],
                "properties": {"name": {"type": "string"}, "pass": {"type": "boolean"}},
            },
        },
        "pass": {"type": "boolean"},
    },
}


def _clean(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def report_json(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _matrix_csv(M, header):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in np.atleast_2d(M):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _paths_csv(X, nodes):
    """Long format: one row per (path, node)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "t", "value"])
    ts = [repr(float(t)) for t in nodes]
    for p, row in enumerate(X):
        w.writerows((p, t, repr(float(v))) for t, v in zip(ts, row))
    return buf.getvalue()


@dataclass
class Outputs:
    csv: dict = field(default_factory=dict)


def run(command: str, cfg: RunConfig):
    """Execute ``command``; returns (report dict, {filename: csv text})."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    out = Outputs()
    cases, summary = COMMANDS[command](cfg, out)
    report = {
        "command": command,
        "version": __version__,
        "config": cfg.echo(),
        "summary": summary,
        "cases": cases,
        "pass": all(bool(c["pass"]) for c in cases),
    }
    return _clean(report), out.csv


# -------------------------------------------------------------------- main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="config file")
    common.add_argument("--out", type=Path, help="directory for report.json and CSV files")
    common.add_argument("--seed", type=int, help="overrides mc.seed")
    common.add_argument("--paths", type=int, help="overrides mc.paths")
    common.add_argument("--workers", type=int, help="overrides mc.workers (never changes results)")
    common.add_argument("--kernel", help="compact kernel, e.g. fbm:H=0.7 or rl:alpha=0.5")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="set any config key")
    common.add_argument("--json", action="store_true", help="emit the JSON report")
    common.add_argument("--csv", action="store_true", help="write CSV artifacts (needs --out)")

    p = _Parser(prog="fgauss", description="Volterra-Gaussian processes: sampling, checks, pricing.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="sample paths")
    sub.add_parser("covariance", parents=[common], help="covariance matrix and sanity gates")
    chk = sub.add_parser("check", help="verification batteries")
    chk_sub = chk.add_subparsers(dest="check", required=True, parser_class=_Parser)
    for name in ("girsanov", "lsi", "martingale", "operators"):
        chk_sub.add_parser(name, parents=[common])
    price = sub.add_parser("price", parents=[common], help="Black-Scholes or rough-variance prices")
    price.add_argument("--model", choices=("bs", "roughvol"))
    price.add_argument("--payoff", choices=("call", "put", "digital"))
    price.add_argument("--K", type=float, help="strike")
    greeks = sub.add_parser("greeks", parents=[common], help="Monte Carlo deltas")
    greeks.add_argument("--method", choices=("bel", "bismut-v0", "fd"))
    greeks.add_argument("--payoff", choices=("call", "put", "digital"))
    greeks.add_argument("--K", type=float, help="strike")
    return p


def _overrides(args):
    pairs = {}
    if args.kernel:
        pairs.update(parse_kernel_flag(args.kernel))
    for item in args.set:
        k, eq, v = item.partition("=")
        if not eq:
            raise ParseError(f"--set expects KEY=VALUE, got {item!r}")
        pairs[k.strip()] = v.strip()
    for flag, key in (("seed", "mc.seed"), ("paths", "mc.paths"), ("workers", "mc.workers")):
        if getattr(args, flag) is not None:
            pairs[key] = getattr(args, flag)
    if getattr(args, "model", None):
        pairs["price.model"] = args.model
    if getattr(args, "method", None):
        pairs["greeks.method"] = args.method
    if getattr(args, "payoff", None):
        pairs["payoff.type"] = args.payoff
    if getattr(args, "K", None) is not None:
        key = "market.K" if args.command == "price" and pairs.get("price.model", "bs") == "bs" else "payoff.K"
        pairs[key] = args.K
    return pairs


def _summary_lines(report):
    lines = [f"{report['command']}: {'PASS' if report['pass'] else 'FAIL'}"]
    for k, v in sorted(report.get("summary", {}).items()):
        lines.append(f"  {k} = {v}")
    for c in report["cases"]:
        extra = ""
        for key in ("z", "value", "z_oracle"):
            if c.get(key) is not None and not isinstance(c.get(key), (dict, list)):
                extra = f" {key}={c[key]:.4g}"
                break
        lines.append(f"  {'PASS' if c['pass'] else 'FAIL'} {c['name']}{extra}")
    return "\n".join(lines) + "\n"


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = _parser().parse_args(argv)
        command = args.command if args.command != "check" else f"check {args.check}"
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        cfg = apply_overrides(parse_config(text), _overrides(args))
        if args.csv and args.out is None:
            raise ConfigError("--csv needs --out")
        report, files = run(command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except (NumericalError, FGaussError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_NUMERICAL
    body = report_json(report)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.json:
            (args.out / "report.json").write_text(body, encoding="utf-8")
        if args.csv:
            for name, content in files.items():
                (args.out / name).write_text(content, encoding="utf-8")
    if args.json and args.out is None:
        stdout.write(body)
    else:
        stdout.write(_summary_lines(report))
    return EXIT_PASS if report["pass"] else EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
