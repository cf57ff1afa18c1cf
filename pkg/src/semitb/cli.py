"""Command-line entry point: config parsing, caching, subcommands.

Configuration is an INI file with [potential], [numerics], [sweep] and
[io] sections.  Cache bundles are keyed by a hash of the potential and
numerics fields plus hbar, so a stale cache is never silently reused.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import bloch, dnls, nlse, scan, tightbinding, wannier
from .errors import ConfigError, Error, NonConvergenceError, SolverError
from .potential import PotentialSpec, make_potential, tunneling_action

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

CACHE_VERSION = 1


@dataclasses.dataclass(frozen=True)
class RunConfig:
    family: str
    v0: float
    a: float
    coeffs: tuple
    n_pw: int
    n_kappa: int
    cells: int
    points_per_cell: int
    lowdin_band: int
    n_bands: int
    delta0: float
    hbar_ladder: tuple
    eta_values: tuple
    sigma: float
    n_sites: int
    seed_site: int
    output_dir: str
    cache_dir: str
    formats: tuple

    def numerics(self) -> scan.Numerics:
        return scan.Numerics(
            n_pw=self.n_pw, n_kappa=self.n_kappa, cells=self.cells,
            points_per_cell=self.points_per_cell, lowdin_band=self.lowdin_band,
            n_bands=self.n_bands, delta0=self.delta0,
        )

    def potential(self) -> PotentialSpec:
        if self.family == "sin2":
            return make_potential("sin2", v0=self.v0, a=self.a)
        if self.family in ("cos-series", "cos_series"):
            return make_potential("cos-series", a=self.a, coeffs=list(self.coeffs))
        raise ConfigError(f"potential.family: unsupported family {self.family!r}")

    def plan(self, out_dir=None) -> scan.SweepPlan:
        return scan.SweepPlan(
            spec=self.potential(), hbar_ladder=self.hbar_ladder,
            eta_values=self.eta_values, sigma=self.sigma, n_sites=self.n_sites,
            seed_site=self.seed_site, numerics=self.numerics(),
            out_dir=out_dir if out_dir is not None else self.output_dir,
        )


_SCHEMA = {
    "potential": {"family": str, "v0": float, "a": float, "coeffs": "floats"},
    "numerics": {"n_pw": int, "n_kappa": int, "cells": int,
                 "points_per_cell": int, "lowdin_band": int, "n_bands": int,
                 "delta0": float},
    "sweep": {"hbar": "floats", "eta": "floats", "sigma": float,
              "n_sites": int, "seed_site": int},
    "io": {"output_dir": str, "cache_dir": str, "formats": "strs"},
}

_DEFAULTS = {
    ("potential", "coeffs"): (),
    ("numerics", "n_pw"): 129,
    ("numerics", "n_kappa"): 64,
    ("numerics", "cells"): 32,
    ("numerics", "points_per_cell"): 64,
    ("numerics", "lowdin_band"): 6,
    ("numerics", "n_bands"): 5,
    ("numerics", "delta0"): 2.0,
    ("sweep", "n_sites"): 41,
    ("sweep", "seed_site"): 0,
    ("io", "output_dir"): "out",
    ("io", "cache_dir"): "cache",
    ("io", "formats"): ("csv", "json"),
}


def _convert(section, key, kind, raw):
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is str:
            return raw.strip()
        if kind == "floats":
            return tuple(float(t) for t in raw.replace(",", " ").split())
        if kind == "strs":
            return tuple(t.strip() for t in raw.replace(",", " ").split() if t.strip())
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc
    raise ConfigError(f"{section}.{key}: unknown field kind")


def parse_config(path: str, allow_low_sigma: bool = False) -> RunConfig:
    """Parse and validate a run configuration file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    values = {}
    for section, fields in _SCHEMA.items():
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}]")
        for key in cp.options(section):
            if key not in fields:
                raise ConfigError(f"{section}.{key}: unknown field")
        for key, kind in fields.items():
            if cp.has_option(section, key):
                values[(section, key)] = _convert(section, key, kind,
                                                  cp.get(section, key))
            elif (section, key) in _DEFAULTS:
                values[(section, key)] = _DEFAULTS[(section, key)]
            else:
                raise ConfigError(f"{section}.{key}: required field missing")

    cfg = RunConfig(
        family=values[("potential", "family")],
        v0=values[("potential", "v0")],
        a=values[("potential", "a")],
        coeffs=values[("potential", "coeffs")],
        n_pw=values[("numerics", "n_pw")],
        n_kappa=values[("numerics", "n_kappa")],
        cells=values[("numerics", "cells")],
        points_per_cell=values[("numerics", "points_per_cell")],
        lowdin_band=values[("numerics", "lowdin_band")],
        n_bands=values[("numerics", "n_bands")],
        delta0=values[("numerics", "delta0")],
        hbar_ladder=values[("sweep", "hbar")],
        eta_values=values[("sweep", "eta")],
        sigma=values[("sweep", "sigma")],
        n_sites=values[("sweep", "n_sites")],
        seed_site=values[("sweep", "seed_site")],
        output_dir=values[("io", "output_dir")],
        cache_dir=values[("io", "cache_dir")],
        formats=values[("io", "formats")],
    )
    _validate(cfg, allow_low_sigma)
    return cfg


def _validate(cfg: RunConfig, allow_low_sigma: bool):
    if cfg.sigma <= 0:
        raise ConfigError("sweep.sigma: must be positive")
    if cfg.sigma < 0.5 and not allow_low_sigma:
        raise ConfigError(
            "sweep.sigma: below 1/2 needs --allow-low-sigma (reduced-model "
            "regularity is not guaranteed there)")
    if cfg.delta0 <= 0:
        raise ConfigError("numerics.delta0: must be positive")
    if any(h <= 0 for h in cfg.hbar_ladder):
        raise ConfigError("sweep.hbar: entries must be positive")
    if cfg.a <= 0:
        raise ConfigError("potential.a: must be positive")


def serialize_config(cfg: RunConfig) -> str:
    """Round-trippable INI text for a RunConfig."""
    cp = configparser.ConfigParser()
    cp["potential"] = {
        "family": cfg.family,
        "v0": repr(cfg.v0),
        "a": repr(cfg.a),
    }
    if cfg.coeffs:
        cp["potential"]["coeffs"] = ", ".join(repr(c) for c in cfg.coeffs)
    cp["numerics"] = {
        "n_pw": str(cfg.n_pw), "n_kappa": str(cfg.n_kappa),
        "cells": str(cfg.cells), "points_per_cell": str(cfg.points_per_cell),
        "lowdin_band": str(cfg.lowdin_band), "n_bands": str(cfg.n_bands),
        "delta0": repr(cfg.delta0),
    }
    cp["sweep"] = {
        "hbar": ", ".join(repr(h) for h in cfg.hbar_ladder),
        "eta": ", ".join(repr(e) for e in cfg.eta_values),
        "sigma": repr(cfg.sigma),
        "n_sites": str(cfg.n_sites),
        "seed_site": str(cfg.seed_site),
    }
    cp["io"] = {
        "output_dir": cfg.output_dir,
        "cache_dir": cfg.cache_dir,
        "formats": ", ".join(cfg.formats),
    }
    import io as _io
    buf = _io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_hash(cfg: RunConfig, hbar: float | None = None) -> str:
    """Short hash over potential + numerics fields (and hbar when given)."""
    payload = {
        "version": CACHE_VERSION,
        "family": cfg.family, "v0": cfg.v0, "a": cfg.a, "coeffs": cfg.coeffs,
        "n_pw": cfg.n_pw, "n_kappa": cfg.n_kappa, "cells": cfg.cells,
        "points_per_cell": cfg.points_per_cell, "lowdin_band": cfg.lowdin_band,
        "n_bands": cfg.n_bands, "sigma": cfg.sigma,
    }
    if hbar is not None:
        payload["hbar"] = hbar
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class BundleCache:
    """Band and basis bundles on disk, keyed by configuration hash."""

    def __init__(self, cache_dir: str):
        self.dir = cache_dir

    def band_path(self, key: str) -> str:
        return os.path.join(self.dir, f"bands_{key}.npz")

    def basis_path(self, key: str) -> str:
        return os.path.join(self.dir, f"basis_{key}.npz")

    def _load(self, path, loader):
        if not os.path.exists(path):
            return None
        try:
            return loader(path)
        except (Error, OSError, ValueError, KeyError) as exc:
            log.warning("cache bundle %s unusable (%s); rebuilding", path, exc)
            return None

    def load_bands(self, key: str):
        return self._load(self.band_path(key), bloch.load_band_data)

    def store_bands(self, key: str, bd) -> None:
        os.makedirs(self.dir, exist_ok=True)
        bloch.save_band_data(bd, self.band_path(key))

    def load_basis(self, key: str):
        return self._load(self.basis_path(key), wannier.load_basis)

    def store_basis(self, key: str, wb) -> None:
        os.makedirs(self.dir, exist_ok=True)
        wannier.save_basis(wb, self.basis_path(key))


def _pipeline_bundles(cfg: RunConfig, cache: BundleCache | None, jobs: int = 1):
    """Build (or load from cache) one PipelineBundle per ladder hbar."""
    spec = cfg.potential()
    agmon = tunneling_action(spec)
    bundles = {}
    for hb in cfg.hbar_ladder:
        key = config_hash(cfg, hb)
        bd = cache.load_bands(key) if cache else None
        cached = bd is not None
        if bd is None:
            fc = bloch.FloquetConfig(hbar=hb, n_pw=cfg.n_pw, n_kappa=cfg.n_kappa,
                                     n_bands=cfg.n_bands)
            bd = wannier.fix_gauge(bloch.solve_bands(spec, fc, jobs=jobs))
            if cache:
                cache.store_bands(key, bd)
        wb = cache.load_basis(key) if cache else None
        if wb is None:
            wb = wannier.build_orthonormal_basis(bd, spec, cfg.cells,
                                                 cfg.points_per_cell,
                                                 cfg.lowdin_band)
            if cache:
                cache.store_basis(key, wb)
        from .operators import PeriodicDomain
        dom = PeriodicDomain(spec, hb, cfg.cells, cfg.points_per_cell)
        tbp = tightbinding.extract_params(wb, spec, hb, sigma=cfg.sigma, bd=bd)
        m = bloch.band_metrics(bd, 1)
        bundles[hb] = scan.PipelineBundle(
            spec=spec, hbar=hb, bd=bd, wb=wb, dom=dom, tbp=tbp, agmon=agmon,
            width1=m["width"], gap1=m["gap_above"])
        log.info("pipeline hbar=%g %s", hb, "(cached bands)" if cached else "")
    return bundles


# -- subcommands ----------------------------------------------------------------


def cmd_bands(cfg: RunConfig, args) -> int:
    cache = BundleCache(args.cache or cfg.cache_dir)
    spec = cfg.potential()
    os.makedirs(cfg.output_dir, exist_ok=True)
    for hb in cfg.hbar_ladder:
        key = config_hash(cfg, hb)
        bd = cache.load_bands(key)
        if bd is None:
            fc = bloch.FloquetConfig(hbar=hb, n_pw=cfg.n_pw, n_kappa=cfg.n_kappa,
                                     n_bands=cfg.n_bands)
            bd = wannier.fix_gauge(bloch.solve_bands(spec, fc))
            cache.store_bands(key, bd)
        else:
            print(f"bands hbar={hb:g}: served from cache")
        out = os.path.join(cfg.output_dir, f"bands_h{hb:g}.csv")
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(bloch.band_csv(bd))
        print(f"wrote {out}")
    return EXIT_OK


def cmd_wannier(cfg: RunConfig, args) -> int:
    cache = BundleCache(args.cache or cfg.cache_dir)
    bundles = _pipeline_bundles(cfg, cache)
    os.makedirs(cfg.output_dir, exist_ok=True)
    for hb, bun in bundles.items():
        out = os.path.join(cfg.output_dir, f"wannier_h{hb:g}.csv")
        wb = bun.wb
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x,W,u0\n")
            u0 = wb.orbital(0)
            for i in range(wb.n_grid):
                fh.write(f"{wb.x[i]!r},{wb.w[i]!r},{u0[i]!r}\n")
        print(f"wrote {out}")
    return EXIT_OK


def cmd_params(cfg: RunConfig, args) -> int:
    cache = BundleCache(args.cache or cfg.cache_dir)
    bundles = _pipeline_bundles(cfg, cache)
    os.makedirs(cfg.output_dir, exist_ok=True)
    s0 = tunneling_action(cfg.potential()).s0
    rows = []
    for hb in cfg.hbar_ladder:
        bun = bundles[hb]
        for eta in sorted(cfg.eta_values, key=lambda e: (-abs(e), e)):
            tbp = tightbinding.with_eta(bun.tbp, eta)
            rows.append([hb, tbp.lambda1, tbp.beta, tbp.c0, tbp.gamma, tbp.eta,
                         tbp.dtilde_norm, s0, bun.gap1, bun.width1])
    out = os.path.join(cfg.output_dir, "params.csv")
    scan._write_csv(out, ["hbar", "lambda1", "beta", "C0", "gamma", "eta",
                          "D_norm", "S0", "gap", "width"], rows)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_dnls(cfg: RunConfig, args) -> int:
    plan = cfg.plan(out_dir=None)
    states, turning = scan._dnls_ladder(plan)
    os.makedirs(cfg.output_dir, exist_ok=True)
    rows, records = [], []
    for eta in sorted(states, key=lambda e: (-abs(e), e)):
        s = states[eta]
        try:
            tau = dnls.decay_rate(s.f)
        except Error:
            tau = None
        rows.append([s.eta, s.e, s.residual_norm, s.participation, tau]
                    + [float(v) for v in s.f])
        records.append({"eta": s.eta, "E": s.e, "residual": s.residual_norm,
                        "P": s.participation, "tau": tau,
                        "F": [float(v) for v in s.f]})
    out = os.path.join(cfg.output_dir, "dnls_ladder.csv")
    scan._write_csv(out, ["eta", "E", "residual", "P", "tau"]
                    + [f"F{j}" for j in range(cfg.n_sites)], rows)
    written = [out]
    if "json" in cfg.formats:
        jout = os.path.join(cfg.output_dir, "dnls_ladder.json")
        with open(jout, "w", encoding="utf-8") as fh:
            json.dump(records, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(jout)
    if turning:
        print("warning: continuation stopped at a turning point")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig, args) -> int:
    cache = BundleCache(args.cache or cfg.cache_dir)
    bundles = _pipeline_bundles(cfg, cache)
    report = scan.run_sweep(cfg.plan(), bundles=bundles, jobs=args.jobs)
    for path in report.written:
        print(f"wrote {path}")
    if report.gaps:
        print(f"{len(report.gaps)} sweep points failed; see fits.json gaps")
    return EXIT_OK


def cmd_scan(cfg: RunConfig, args) -> int:
    return cmd_reconstruct(cfg, args)


def cmd_verify(cfg: RunConfig, args) -> int:
    from . import acceptance
    results = acceptance.run_all(cfg, jobs=args.jobs)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        print(f"[{tag}] {r.name:<{width}}  {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="semitb",
        description="Semiclassical tight-binding reduction of the periodic "
                    "stationary NLSE: bands, localized bases, lattice "
                    "parameters, DNLS branches, continuum reconstruction.")
    p.add_argument("--config", default="run.ini", help="run configuration file")
    p.add_argument("--jobs", type=int, default=1, help="worker pool size")
    p.add_argument("--cache", default=None, help="override cache directory")
    p.add_argument("--allow-low-sigma", action="store_true",
                   help="permit sigma < 1/2 (exploratory lattice-only mode)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__)
        sp.set_defaults(func=fn)
    return p


_COMMANDS = {
    "bands": cmd_bands,
    "wannier": cmd_wannier,
    "params": cmd_params,
    "dnls": cmd_dnls,
    "reconstruct": cmd_reconstruct,
    "scan": cmd_scan,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, allow_low_sigma=args.allow_low_sigma)
        return args.func(cfg, args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, SolverError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
