"""Parameter sweeps behind the trend checks (covertness, jamming power, uncertainty radius, period).

    python3 scripts/sweeps.py --slots 20 --out runs/sweeps
"""

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from uav_csee import default_scenario
from uav_csee.experiments import SWEEP_COLUMNS, SweepSpec, run_sweep, to_csv
from uav_csee.scenario import read_scenario

DEFAULT_SWEEPS = {
    "epsilon_covert": (0.005, 0.01, 0.05, 0.1),
    "p_jam_max": (0.5, 1.0, 2.0),
    "r_uncertainty": (5.0, 15.0, 30.0),
    "period": (30.0, 50.0, 100.0, 150.0),
}


@dataclass
class Config:
    scenario: str | None = None
    slots: int | None = 20
    modes: tuple[str, ...] = ("prop", "ben1", "ben2")
    max_iterations: int = 30
    workers: int | None = None
    sweeps: dict = field(default_factory=lambda: dict(DEFAULT_SWEEPS))
    out: Path = Path("runs/sweeps")


def main(cfg: Config) -> None:
    scn = read_scenario(cfg.scenario) if cfg.scenario else default_scenario()
    if cfg.slots:
        scn = scn.replace(n1=cfg.slots, n2=cfg.slots)
    cfg.out.mkdir(parents=True, exist_ok=True)
    for param, values in cfg.sweeps.items():
        rows = run_sweep(scn, SweepSpec(param, values, cfg.modes), cfg.max_iterations, cfg.workers)
        (cfg.out / f"{param}.csv").write_text(to_csv(SWEEP_COLUMNS, rows), encoding="utf-8")
        for r in rows:
            print(f"{param:15s} {r['mode']:5s} {r['value']:<8g} csee={r['csee']:.6g} "
                  f"rate/energy={r['acsr_lb'] / r['energy']:.6g} {r['status']}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario")
    p.add_argument("--slots", type=int, default=20, help="slots per phase; 0 keeps the scenario's")
    p.add_argument("--modes", default="prop,ben1,ben2")
    p.add_argument("--max-iterations", type=int, default=30)
    p.add_argument("--workers", type=int)
    p.add_argument("--only", help="comma-separated subset of " + ",".join(DEFAULT_SWEEPS))
    p.add_argument("--out", type=Path, default=Path("runs/sweeps"))
    a = p.parse_args()
    sweeps = {k: v for k, v in DEFAULT_SWEEPS.items()
              if not a.only or k in a.only.split(",")}
    main(Config(a.scenario, a.slots, tuple(a.modes.split(",")), a.max_iterations, a.workers,
                sweeps, a.out))
