"""Study reports: tables, slope fits, acceptance checks and provenance."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..metrics import SlopeFit, loglog_slope
from ..tabular import Table, dumps
from .config import StudyConfig

TAIL_POINTS = 4


@dataclass
class StudyReport:
    """Outcome of a study.

    ``tables`` map a name to a :class:`Table` whose estimate columns come
    with a ``<name>_ci95`` half-width column; ``checks`` record whether each
    acceptance window was met.  The wall-clock ``runtime`` is kept out of
    every written file so reruns are byte-identical.
    """

    study: str
    config: StudyConfig
    tables: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def provenance(self) -> dict:
        return {"study": self.study, "config_hash": self.config.config_hash(), "seed": self.config.seed,
                "mfglab": __version__, "numpy": np.__version__, "scipy": scipy.__version__}

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def add_table(self, name: str, columns: dict, units: dict | None = None, **meta):
        info = {"kind": f"{self.study}.{name}", **self.provenance, **meta}
        for col, unit in (units or {}).items():
            info[f"unit.{col}"] = unit
        self.tables[name] = Table(columns, info)
        return self.tables[name]

    def add_fit(self, name: str, ns, values, half_widths=None) -> SlopeFit:
        fit = loglog_slope(ns, values, half_widths)
        self.fits[name] = fit
        return fit

    def fits_table(self) -> Table:
        names = list(self.fits)
        cols = {"fit": np.array(names, dtype=object)}
        cols["slope"] = np.array([self.fits[n].slope for n in names])
        cols["slope_stderr"] = np.array([self.fits[n].slope_stderr for n in names])
        cols["intercept"] = np.array([self.fits[n].intercept for n in names])
        cols["r2"] = np.array([self.fits[n].r2 for n in names])
        cols["points"] = np.array([self.fits[n].log_n.size for n in names])
        cols["tail_slope"] = np.array([_tail_slope(self.fits[n]) for n in names])
        cols["smallest_n_residual"] = np.array([self.fits[n].residuals()[0] for n in names])
        return Table(cols, {"kind": f"{self.study}.fits", **self.provenance,
                            "tail_slope": f"slope over the largest {TAIL_POINTS} N"})

    def summary(self) -> str:
        lines = [f"study {self.study}"]
        lines += [f"  {k}: {v}" for k, v in self.provenance.items()]
        lines += [f"  {n}" for n in self.notes]
        for name, fit in self.fits.items():
            lines.append(f"  fit {name}: slope {fit.slope:.4f} +- {fit.slope_stderr:.4f}, R^2 {fit.r2:.4f}, "
                         f"tail slope {_tail_slope(fit):.4f}")
        for name, ok in self.checks.items():
            lines.append(f"  check {name}: {'pass' if ok else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> list:
        """Write every table, the fit table and the summary; return the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        files = {f"{self.study}.{name}.csv": dumps(t) for name, t in self.tables.items()}
        if self.fits:
            files[f"{self.study}.fits.csv"] = dumps(self.fits_table())
        files[f"{self.study}.summary.txt"] = self.summary()
        for name, text in files.items():
            p = out / name
            p.write_text(text, encoding="utf-8")
            paths.append(p)
        return paths


def _tail_slope(fit: SlopeFit) -> float:
    if fit.log_n.size < TAIL_POINTS + 1:
        return fit.slope
    x, y = fit.log_n[-TAIL_POINTS:], fit.log_value[-TAIL_POINTS:]
    return float(np.polyfit(x, y, 1)[0])
