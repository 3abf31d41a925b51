"""Command-line front end.

Study subcommands read an optional INI config (sections ``[study]``,
``[spec]``, ``[bundle]``), apply command-line overrides, run the study,
write its tables and summary plus a ``manifest.ini`` that embeds the
effective configuration.  ``mfglab replay manifest.ini`` reruns it.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 an
acceptance check failed under ``--check``.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError, MfgLabError
from .experiments import StudyConfig, default_config, run_study
from .lq.spec import LqSpec
from .metrics import RateQuery, theoretical_rate

SUBCOMMANDS = {
    "mfg-gap": "nash_gap",
    "offdiag": "offdiag",
    "concentration": "concentration",
    "coop-gap": "cooperative_gap",
    "master-gap": "master_gap",
    "price-impact": "price_impact",
    "fbsde": "fbsde",
}
EXIT_CHECK = 4
MANIFEST = "manifest.ini"
MANIFEST_SECTIONS = ("run", "outputs")

# how each [study] key is parsed
_INT_TUPLE = "int_tuple"
_FLOAT_TUPLE = "float_tuple"
_OPT_FLOAT_TUPLE = "optional_float_tuple"
STUDY_KEYS = {
    "N_list": _INT_TUPLE, "replications": int, "n_steps": int, "noise_substeps": int, "seed": int,
    "thresholds": _FLOAT_TUPLE, "threshold_units": str, "eval_times": _OPT_FLOAT_TUPLE,
    "k_moment": float, "reference_size": int, "law_particles": int, "picard_tol": float,
    "picard_max_iter": int, "picard_degree": int, "chunk_size": int,
}
SPEC_KEYS = tuple(f.name for f in fields(LqSpec))


# ---------------------------------------------------------------- config text

def _parse(kind, text: str, key: str):
    text = text.strip()
    try:
        if kind == _INT_TUPLE:
            return tuple(int(v) for v in text.split(",") if v.strip())
        if kind == _FLOAT_TUPLE:
            return tuple(float(v) for v in text.split(",") if v.strip())
        if kind == _OPT_FLOAT_TUPLE:
            return None if text.lower() == "none" else tuple(float(v) for v in text.split(",") if v.strip())
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {text!r}") from None


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _reader() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (Abar, QT, ...)
    return cp


def parse_config_text(text: str, study: str, base: StudyConfig | None = None) -> StudyConfig:
    """Apply an INI document on top of ``base`` (the study defaults).

    Raises
    ------
    ConfigError
        Unknown sections or keys, unparsable values, or a study mismatch.
    """
    cp = _reader()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = base if base is not None else default_config(study)
    changes = {}
    for section in cp.sections():
        if section in MANIFEST_SECTIONS:
            continue
        items = dict(cp.items(section))
        if section == "study":
            for key, value in items.items():
                if key == "study":
                    if value.strip() != study:
                        raise ConfigError(f"config is for study {value.strip()!r}, not {study!r}")
                    continue
                if key not in STUDY_KEYS:
                    raise ConfigError(f"unknown key [study] {key}; known: {sorted(STUDY_KEYS)}")
                changes[key] = _parse(STUDY_KEYS[key], value, key)
        elif section == "spec":
            unknown = set(items) - set(SPEC_KEYS)
            if unknown:
                raise ConfigError(f"unknown key(s) [spec] {sorted(unknown)}; known: {list(SPEC_KEYS)}")
            spec = changes.get("spec", cfg.spec)
            changes["spec"] = spec.replace(**{k: _parse(float, v, k) for k, v in items.items()})
        elif section == "bundle":
            # parameters merge into the current ones unless the bundle changes
            current = changes.get("bundle", cfg.bundle)
            params = dict(changes.get("bundle_params", cfg.bundle_params))
            name = items.pop("name", None)
            if name is not None:
                name = None if name.strip().lower() == "none" else name.strip()
                if name != current:
                    params = {}
                changes["bundle"] = name
            params.update({k: _parse(float, v, k) for k, v in items.items()})
            changes["bundle_params"] = tuple(params.items())
        else:
            raise ConfigError(f"unknown section [{section}]")
    try:
        return cfg.replace(**changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def config_to_text(cfg: StudyConfig) -> str:
    """Effective configuration as INI text (runtime-only fields excluded)."""
    cp = _reader()
    cp["study"] = {"study": cfg.study}
    for key in STUDY_KEYS:
        cp["study"][key] = _format(getattr(cfg, key))
    cp["spec"] = {k: _format(float(v)) for k, v in cfg.spec.as_dict().items()}
    cp["bundle"] = {"name": _format(cfg.bundle)}
    for k, v in cfg.bundle_params:
        cp["bundle"][k] = _format(v)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------- argument parsing

def _add_study_arguments(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file (sections [study], [spec], [bundle])")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")
    p.add_argument("--out-dir", default=None, help="output directory (default mfglab-out/<subcommand>)")
    p.add_argument("--check", action="store_true", help="exit 4 when an acceptance check fails")
    p.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    p.add_argument("--N-list", dest="N_list", help="comma-separated population sizes")
    p.add_argument("--replications", type=int)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--noise-substeps", dest="noise_substeps", type=int)
    p.add_argument("--eval-times", dest="eval_times", help="comma-separated grid times")
    p.add_argument("--thresholds", help="comma-separated tail thresholds")
    p.add_argument("--threshold-units", dest="threshold_units", choices=("std", "absolute"))
    p.add_argument("--k-moment", dest="k_moment", type=float)
    p.add_argument("--reference-size", dest="reference_size", type=int)
    p.add_argument("--law-particles", dest="law_particles", type=int)
    p.add_argument("--chunk-size", dest="chunk_size", type=int)
    p.add_argument("--picard-tol", dest="picard_tol", type=float)
    p.add_argument("--picard-max-iter", dest="picard_max_iter", type=int)
    p.add_argument("--picard-degree", dest="picard_degree", type=int)
    p.add_argument("--bundle", help="registered coefficient bundle (selects the Picard path)")
    p.add_argument("--set", dest="assignments", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key, e.g. spec.A=0.2 or bundle.T=0.5; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfglab", description="Mean-field game convergence laboratory")
    parser.add_argument("--version", action="version", version=f"mfglab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    rate = sub.add_parser("rate", help="evaluate the theoretical rate r_{N,M,k,p}")
    rate.add_argument("--N", type=int, required=True)
    rate.add_argument("--M", type=float, required=True)
    rate.add_argument("--k", type=float, required=True)
    rate.add_argument("--p", type=float, default=2.0)
    for name, study in SUBCOMMANDS.items():
        _add_study_arguments(sub.add_parser(name, help=f"run the {study} study"))
    replay = sub.add_parser("replay", help="rerun a study from its manifest")
    replay.add_argument("manifest")
    replay.add_argument("--threads", type=int, default=1)
    replay.add_argument("--out-dir", required=True)
    replay.add_argument("--check", action="store_true")
    return parser


def _override_text(args) -> str:
    """Command-line overrides rendered as an INI document."""
    study = {}
    for key in STUDY_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            study[key] = str(v)
    sections = {"study": study, "spec": {}, "bundle": {}}
    if args.bundle is not None:
        sections["bundle"]["name"] = args.bundle
    for item in args.assignments:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or section not in sections:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE with SECTION in study/spec/bundle, got {item!r}")
        sections[section][name] = value
    lines = []
    for section, items in sections.items():
        if items:
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in items.items()]
    return "\n".join(lines) + "\n"


def resolve_config(args, study: str) -> tuple:
    """Defaults, then the config file, then flags.  Returns the config and
    the config file's (path, sha256) or ``(None, None)``."""
    cfg = default_config(study)
    path = digest = None
    if args.config:
        path = Path(args.config)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        digest = hashlib.sha256(raw).hexdigest()
        cfg = parse_config_text(raw.decode("utf-8"), study, cfg)
    text = _override_text(args)
    if text.strip():
        cfg = parse_config_text(text, study, cfg)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg, path, digest


# ---------------------------------------------------------------- running

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, cfg: StudyConfig, config_path, config_digest,
                   threads: int, runtime: float, outputs: list) -> Path:
    cp = _reader()
    cp["run"] = {
        "subcommand": command,
        "config_path": str(config_path) if config_path else "none",
        "config_file_sha256": config_digest or "none",
        "config_hash": cfg.config_hash(),
        "seed": str(cfg.seed),
        "threads": str(threads),
        "mfglab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
        "wall_clock_seconds": f"{runtime:.3f}",
    }
    cp["outputs"] = {p.name: _sha256(p) for p in outputs}
    buf = io.StringIO()
    cp.write(buf)
    path = out_dir / MANIFEST
    path.write_text(buf.getvalue() + config_to_text(cfg), encoding="utf-8")
    return path


def run(command: str, cfg: StudyConfig, out_dir: Path, *, threads=1, check=False,
        config_path=None, config_digest=None, stdout=None) -> int:
    """Run a study, write its artifacts and manifest; return the exit status."""
    stdout = stdout or sys.stdout
    report = run_study(cfg, threads=threads)
    outputs = report.write(out_dir)
    manifest = write_manifest(out_dir, command, cfg, config_path, config_digest, threads, report.runtime, outputs)
    stdout.write(report.summary())
    stdout.write(f"wrote {len(outputs)} files and {manifest.name} to {out_dir}\n")
    if check and not report.passed:
        failed = [k for k, ok in report.checks.items() if not ok]
        stdout.write(f"acceptance check failed: {'; '.join(failed)}\n")
        return EXIT_CHECK
    return 0


def read_manifest(path) -> tuple:
    """Subcommand and effective config stored in a manifest."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    cp = _reader()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed manifest: {exc}") from None
    if not cp.has_section("run"):
        raise ConfigError(f"{path} is not a manifest (no [run] section)")
    command = cp["run"]["subcommand"]
    if command not in SUBCOMMANDS:
        raise ConfigError(f"manifest names unknown subcommand {command!r}")
    return command, parse_config_text(text, SUBCOMMANDS[command])


def _dispatch(args) -> int:
    if args.command == "rate":
        try:
            q = RateQuery(args.N, args.M, args.k, args.p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        print(f"{theoretical_rate(q):.5g}")
        return 0
    if args.command == "replay":
        command, cfg = read_manifest(args.manifest)
        return run(command, cfg, Path(args.out_dir), threads=args.threads, check=args.check,
                   config_path=args.manifest, config_digest=_sha256(Path(args.manifest)))
    study = SUBCOMMANDS[args.command]
    cfg, path, digest = resolve_config(args, study)
    if args.print_config:
        sys.stdout.write(config_to_text(cfg))
        return 0
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    out_dir = Path(args.out_dir) if args.out_dir else Path("mfglab-out") / args.command
    return run(args.command, cfg.replace(out_dir=str(out_dir)), out_dir, threads=args.threads,
               check=args.check, config_path=path, config_digest=digest)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except MfgLabError as exc:
        sys.stderr.write(f"mfglab: {type(exc).__name__}: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
