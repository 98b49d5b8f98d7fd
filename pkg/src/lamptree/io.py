"""Experiment configuration files and result emission (CSV, plot data, JSON lines)."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

# flat key=value config keys and their types
CONFIG_KEYS: dict[str, type] = {
    "subcommand": str,
    "d": int,
    "n": int,
    "r": int,
    "a": float,
    "delta": float,
    "radius": int,
    "samples": int,
    "seed": int,
    "threads": int,
    "out": str,
    "format": str,
    "eta": float,
    "mask": str,
    "depth": int,
    "size": int,
    "K": int,
    "theta_grid": int,
    "r_inner": int,
    "r_outer": int,
    "n_list": str,
    "sources": str,
    "tail_mass": float,
    "budget": int,
}

SCHEMAS: dict[str, tuple[str, ...]] = {
    "walks": ("method", "d", "n", "value", "std_error", "samples", "seed", "wall_time_ms", "log_value"),
    "percolation": ("d", "r", "a", "samples", "estimate", "ci_low", "ci_high", "seed"),
    "spectral": ("instance_id", "n_vertices", "top_eig", "root_mass", "residual", "method"),
    "correction": ("n", "source", "L", "value_log"),
    "witness": ("sample_id", "W", "count", "max_component_eig", "hypothesis_ok", "implication_ok"),
    "trap": ("d", "r", "n", "log_value", "value", "log_prefactor", "log_trap_cost", "log_spectral"),
    "optimize_trap": ("d", "n", "r_best", "log_best", "r_prescribed", "log_prescribed"),
    "upper_split": ("d", "n", "delta", "tail_mass", "log_I1", "log_I2", "log_total", "log_rho_2n"),
    "shift": ("instance_id", "n_vertices", "k", "shift_norm_sq", "w_gauge", "w_sweep"),
    "calibration": ("mask_id", "n_vertices", "m", "shift_norm", "numerical_radius", "scaled_gap"),
    "certificate": (
        "d", "r", "a", "delta", "n_vertices", "max_ball_count", "density", "top_eig", "threshold",
        "hypothesis", "conclusion",
    ),
    "trap_spectrum": ("d", "r", "k", "eigenvalue", "closed_form", "root_mass", "closed_form_root_mass"),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    subcommand: str | None = None
    params: dict[str, object] = field(default_factory=dict)

    @staticmethod
    def coerce(key: str, value: object) -> object:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        typ = CONFIG_KEYS[key]
        try:
            return typ(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: cannot read {value!r} as {typ.__name__}") from exc

    @classmethod
    def from_mapping(cls, data: dict[str, object]) -> ExperimentConfig:
        params = {}
        sub = None
        for k, v in data.items():
            v = cls.coerce(k, v)
            if k == "subcommand":
                sub = v
            else:
                params[k] = v
        return cls(sub, params)

    @classmethod
    def loads(cls, text: str) -> ExperimentConfig:
        data = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            data[k] = v
        return cls.from_mapping(data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> ExperimentConfig:
        return cls.loads(Path(path).read_text())

    def dumps(self) -> str:
        lines = []
        if self.subcommand is not None:
            lines.append(f"subcommand={self.subcommand}")
        for k, v in self.params.items():
            lines.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
        return "\n".join(lines) + "\n"

    def to_record(self) -> dict[str, object]:
        rec: dict[str, object] = {} if self.subcommand is None else {"subcommand": self.subcommand}
        rec.update(self.params)
        return rec


def _fmt(v: object) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def to_csv(rows: list[dict], schema: str) -> str:
    cols = SCHEMAS[schema]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in cols])
    return buf.getvalue()


def to_plotdata(rows: list[dict], x: str, y: str) -> str:
    lines = [f"# {x} {y}"]
    lines += [f"{_fmt(r[x])} {_fmt(r[y])}" for r in rows if r.get(y) is not None]
    return "\n".join(lines) + "\n"


def to_jsonl(rows: list[dict], config: ExperimentConfig | None = None) -> str:
    out = []
    if config is not None:
        out.append(json.dumps({"config": config.to_record()}, sort_keys=True))
    out += [json.dumps(r, sort_keys=True) for r in rows]
    return "\n".join(out) + "\n"


def config_from_jsonl(text: str) -> ExperimentConfig:
    first = json.loads(text.splitlines()[0])
    return ExperimentConfig.from_mapping(first["config"])


def emit(
    rows: list[dict],
    schema: str,
    path: str | os.PathLike,
    fmt: str = "csv",
    plot: tuple[str, str] | None = None,
    config: ExperimentConfig | None = None,
) -> Path:
    path = Path(path)
    if not path.parent.exists():
        raise FileNotFoundError(f"--out: directory {str(path.parent)!r} does not exist")
    if fmt == "csv":
        text = to_csv(rows, schema)
    elif fmt == "plotdata":
        if plot is None:
            raise ValueError(f"no plot-data columns defined for {schema}")
        text = to_plotdata(rows, *plot)
    elif fmt == "json-lines":
        text = to_jsonl(rows, config)
    else:
        raise ValueError(f"--format: unknown format {fmt!r}")
    try:
        path.write_text(text)
    except OSError as exc:
        raise PermissionError(f"--out: cannot write {str(path)!r}: {exc.strerror}") from exc
    return path
