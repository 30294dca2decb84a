"""Command-line experiment runner writing CSV or JSON tables."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .chirality import (
    _phase_table_from_theta,
    chiral_complete_closed_form,
    chiral_complete_scan,
    chiral_ring_max,
    chiral_ring_scan,
    complete_family_theta,
)
from .graphs import Topology, TopologySpec, build_hamiltonian, load_edge_list
from .noise import NoiseModel, work_trajectory
from .thermo import (
    bandwidth,
    eigen_state,
    ergotropy,
    inverse_thermal_state,
    localized_state,
    thermal_inverse_ergotropy_closed_form,
    thermal_state,
)

COMMANDS = ("spectrum", "scaling", "thermal", "noise-trajectory", "chiral-sweep")

DEFAULTS = {
    "topology": "ring",
    "n": None,
    "coupling_j": 1.0,
    "gamma_phase": 0.0,
    "noise": "dephasing",
    "gamma": 1.0,
    "p": 0.0,
    "state": "top-eigenstate",
    "site": 0,
    "beta": "0.1,0.5,1,2,5",
    "t_max": 10.0,
    "dt": 1e-3,
    "samples": None,
    "strategy": "all",
    "out": "-",
    "format": "csv",
    "jobs": None,
    "edge_list": None,
    "seed": 0,
}

N_DEFAULTS = {"scaling": "3..32", "thermal": "3"}
SAMPLE_DEFAULTS = {"noise-trajectory": 201, "chiral-sweep": 720}

COLUMNS = {
    "spectrum": ["l", "E_l", "degeneracy_group"],
    "scaling": ["n", "topology", "W_max", "W_localized"],
    "thermal": ["beta", "W_generic", "W_closed_form", "abs_diff"],
    "noise-trajectory": ["t", "strategy", "work", "ergotropy"],
    "chiral-sweep": ["gamma", "bandwidth"],
}

# Keys that do not change results and stay out of the metadata echo.
NON_RESULT_KEYS = {"out", "jobs", "config"}


def parse_n(text) -> list[int]:
    """'5', '3..32' or '3,4,9'."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split(".."))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"cannot parse --n {text!r}; use 5, 3..32 or 3,4,9") from None


def parse_beta(text) -> list[float]:
    out = []
    for tok in str(text).split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        val = math.inf if tok in ("inf", "+inf", "infinity") else float(tok)
        if not val >= 0:
            raise ValueError(f"beta must be >= 0, got {tok!r}")
        out.append(val)
    if not out:
        raise ValueError("beta grid is empty")
    return out


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        x = 0.0  # drop negative zero
    return f"{x:.12g}"


def _json_value(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if not math.isfinite(x):
        return fmt(x)
    return float(fmt(x))


def read_config(path) -> dict:
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS and key != "command":
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        cfg[key] = value
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--topology", choices=[t.value for t in Topology if t is not Topology.CIRCULANT])
    common.add_argument("--n", help="size: 5, a range 3..32 or a list 3,4,9")
    common.add_argument("--coupling-j", type=float)
    common.add_argument("--gamma-phase", type=float, help="chiral phase (ring) or family parameter (complete)")
    common.add_argument("--noise", choices=["dephasing", "haken-strobl", "qsw"])
    common.add_argument("--gamma", type=float, help="dephasing or Haken-Strobl rate")
    common.add_argument("--p", type=float, help="stochastic-walk mixing weight")
    common.add_argument("--state", choices=["top-eigenstate", "localized", "thermal", "inverse-thermal"])
    common.add_argument("--site", type=int)
    common.add_argument("--beta", help="comma list of inverse temperatures; 'inf' allowed")
    common.add_argument("--t-max", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--samples", type=int)
    common.add_argument("--strategy", choices=["erg", "free", "zero", "all"])
    common.add_argument("--out", help="output file, '-' for stdout")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--jobs", type=int)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--edge-list", help="edge list for --topology custom")
    common.add_argument("--seed", type=int)

    parser = argparse.ArgumentParser(prog="qwbattery", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then command-line flags."""
    cfg = dict(DEFAULTS)
    cli = {k: v for k, v in vars(args).items() if k != "command"}
    if "config" in cli:
        cfg.update(read_config(cli["config"]))
    cfg.update(cli)
    cfg["command"] = args.command
    if cfg["n"] is None:
        cfg["n"] = N_DEFAULTS.get(args.command, "4")
    if cfg["samples"] is None:
        cfg["samples"] = SAMPLE_DEFAULTS.get(args.command, 201)
    for key in ("coupling_j", "gamma_phase", "gamma", "p", "t_max", "dt"):
        cfg[key] = float(cfg[key])
    for key in ("site", "samples", "seed"):
        cfg[key] = int(cfg[key])
    cfg["jobs"] = int(cfg["jobs"]) if cfg["jobs"] is not None else (os.cpu_count() or 1)
    if cfg["jobs"] < 1:
        raise ValueError("--jobs must be >= 1")
    if cfg["samples"] < 1:
        raise ValueError("--samples must be >= 1")
    cfg["n_list"] = parse_n(cfg["n"])
    cfg["beta_list"] = parse_beta(cfg["beta"])
    return cfg


def _topology_spec(cfg: dict, n: int) -> TopologySpec:
    kind = Topology(cfg["topology"])
    j = cfg["coupling_j"]
    if kind is Topology.CUSTOM:
        if not cfg["edge_list"]:
            raise ValueError("--topology custom requires --edge-list")
        adj = load_edge_list(cfg["edge_list"])
        return TopologySpec(kind, adj.shape[0], coupling_j=j, adjacency=adj)
    if kind is Topology.CHIRAL_RING:
        return TopologySpec(kind, n, coupling_j=j, gamma_phase=cfg["gamma_phase"])
    if kind is Topology.CHIRAL_COMPLETE:
        table = _phase_table_from_theta(complete_family_theta(n, cfg["gamma_phase"]))
        return TopologySpec(kind, n, coupling_j=j, phase_table=table)
    return TopologySpec(kind, n, coupling_j=j)


def _single_n(cfg: dict) -> int:
    if cfg["topology"] == Topology.CUSTOM.value:
        return 0
    if len(cfg["n_list"]) != 1:
        raise ValueError(f"{cfg['command']} needs a single --n, got {cfg['n']!r}")
    return cfg["n_list"][0]


def _map(func, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
            return list(pool.map(func, items))
    return [func(x) for x in items]


def cmd_spectrum(cfg: dict):
    h = build_hamiltonian(_topology_spec(cfg, _single_n(cfg)))
    spec = h.spectrum
    rows = [[l, spec.eigenvalues[l], int(spec.group_of[l])] for l in range(spec.n)]
    return rows, None


def _scaling_row(args):
    cfg, n = args
    h = build_hamiltonian(_topology_spec(cfg, n))
    site = cfg["site"]
    return [n, cfg["topology"], bandwidth(h), ergotropy(localized_state(h.n, site), h)]


def cmd_scaling(cfg: dict):
    return _map(_scaling_row, [(cfg, n) for n in cfg["n_list"]], cfg["jobs"]), None


def _closed_form_kind(cfg: dict, n: int) -> str:
    kind = cfg["topology"]
    if kind == "ring" and n in (3, 4):
        return f"ring{n}"
    if kind == "complete":
        return "complete"
    raise ValueError("thermal closed forms exist for ring n=3, ring n=4 and complete cells")


def _thermal_row(args):
    cfg, beta = args
    n = _single_n(cfg)
    h = build_hamiltonian(_topology_spec(cfg, n))
    generic = ergotropy(inverse_thermal_state(h, beta), h)
    closed = thermal_inverse_ergotropy_closed_form(_closed_form_kind(cfg, n), n, beta, cfg["coupling_j"])
    return [beta, generic, closed, abs(generic - closed)]


def cmd_thermal(cfg: dict):
    _closed_form_kind(cfg, _single_n(cfg))
    return _map(_thermal_row, [(cfg, b) for b in cfg["beta_list"]], cfg["jobs"]), None


def _initial_state(cfg: dict, h):
    state = cfg["state"]
    if state == "top-eigenstate":
        return eigen_state(h.spectrum, h.n - 1)
    if state == "localized":
        return localized_state(h.n, cfg["site"])
    if len(cfg["beta_list"]) != 1:
        raise ValueError(f"--state {state} needs a single --beta")
    beta = cfg["beta_list"][0]
    return thermal_state(h, beta) if state == "thermal" else inverse_thermal_state(h, beta)


def cmd_noise_trajectory(cfg: dict):
    h = build_hamiltonian(_topology_spec(cfg, _single_n(cfg)))
    model = NoiseModel(cfg["noise"], gamma=cfg["gamma"], p=cfg["p"])
    strategies = ["erg", "free", "zero"] if cfg["strategy"] == "all" else [cfg["strategy"]]
    t_grid = np.linspace(0.0, cfg["t_max"], cfg["samples"])
    traj = work_trajectory(h, _initial_state(cfg, h), model, strategies, t_grid, dt=cfg["dt"])
    rows = []
    for i, t in enumerate(traj.times):
        for s in strategies:
            rows.append([t, s, traj.work[s][i], traj.ergotropy[i]])
    return rows, None


def cmd_chiral_sweep(cfg: dict):
    n = _single_n(cfg)
    kind = cfg["topology"]
    if kind == Topology.CHIRAL_RING.value:
        scan = chiral_ring_scan(n, cfg["coupling_j"], cfg["samples"])
        closed = chiral_ring_max(n, cfg["coupling_j"])[0]
    elif kind == Topology.CHIRAL_COMPLETE.value:
        scan = chiral_complete_scan(n, cfg["coupling_j"], cfg["samples"])
        closed = chiral_complete_closed_form(n, cfg["coupling_j"])
    else:
        raise ValueError("chiral-sweep needs --topology chiral-ring or chiral-complete")
    rows = [[g, b] for g, b in zip(scan.gamma_grid, scan.bandwidth)]
    summary = {
        "argmax": scan.argmax_gamma,
        "max_bandwidth": scan.max_bandwidth,
        "closed_form": closed,
        "diff": abs(scan.max_bandwidth - closed),
    }
    return rows, summary


HANDLERS = {
    "spectrum": cmd_spectrum,
    "scaling": cmd_scaling,
    "thermal": cmd_thermal,
    "noise-trajectory": cmd_noise_trajectory,
    "chiral-sweep": cmd_chiral_sweep,
}


def _metadata(cfg: dict) -> dict:
    echo = {k: v for k, v in cfg.items() if k not in NON_RESULT_KEYS and k not in ("n_list", "beta_list")}
    grid = {"n": cfg["n_list"], "beta": [fmt(b) for b in cfg["beta_list"]]}
    if cfg["command"] == "noise-trajectory":
        grid.update(t_max=cfg["t_max"], samples=cfg["samples"], dt=cfg["dt"])
    if cfg["command"] == "chiral-sweep":
        grid.update(samples=cfg["samples"])
    return {"config": echo, "version": __version__, "grid": grid}


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(x) for x in row])
    return buf.getvalue()


def render_json(cfg: dict, columns, rows, summary) -> str:
    doc = {
        "metadata": _metadata(cfg),
        "columns": columns,
        "rows": [[_json_value(x) for x in row] for row in rows],
    }
    if summary is not None:
        doc["summary"] = {k: _json_value(v) for k, v in summary.items()}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def run(cfg: dict) -> tuple[str, str | None]:
    """Execute a resolved config; returns (main output, csv summary or None)."""
    columns = COLUMNS[cfg["command"]]
    rows, summary = HANDLERS[cfg["command"]](cfg)
    if cfg["format"] == "json":
        return render_json(cfg, columns, rows, summary), None
    side = None
    if summary is not None:
        side = render_csv(list(summary), [list(summary.values())])
    return render_csv(columns, rows), side


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        text, side = run(cfg)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    out = cfg["out"]
    if out == "-":
        sys.stdout.write(text)
        if side is not None:
            sys.stderr.write(side)
    else:
        Path(out).write_text(text)
        if side is not None:
            Path(out).with_suffix(".summary.csv").write_text(side)
    return 0


if __name__ == "__main__":
    sys.exit(main())
