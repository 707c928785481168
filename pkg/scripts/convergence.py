"""Run the optimizer and both benchmarks on one scenario and write their traces.

    python3 scripts/convergence.py --slots 20 --out runs/convergence
"""

import argparse
from dataclasses import dataclass
from pathlib import Path

from uav_csee import default_scenario
from uav_csee.ao import AoConfig, ao_solve
from uav_csee.experiments import solution_csv, summary_line
from uav_csee.scenario import read_scenario


@dataclass
class Config:
    scenario: str | None = None
    slots: int | None = 20
    max_iterations: int = 30
    out: Path = Path("runs/convergence")


def main(cfg: Config) -> None:
    scn = read_scenario(cfg.scenario) if cfg.scenario else default_scenario()
    if cfg.slots:
        scn = scn.replace(n1=cfg.slots, n2=cfg.slots)
    cfg.out.mkdir(parents=True, exist_ok=True)
    for mode in ("prop", "ben1", "ben2"):
        sol, trace = ao_solve(scn, AoConfig(cfg.max_iterations, scn.conv_tol, mode))
        (cfg.out / f"{mode}.trace.csv").write_text(trace.to_csv(), encoding="utf-8")
        (cfg.out / f"{mode}.solution.csv").write_text(solution_csv(scn, sol), encoding="utf-8")
        print(f"{mode:5s} {summary_line(sol, trace)}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario")
    p.add_argument("--slots", type=int, default=20, help="slots per phase; 0 keeps the scenario's")
    p.add_argument("--max-iterations", type=int, default=30)
    p.add_argument("--out", type=Path, default=Path("runs/convergence"))
    a = p.parse_args()
    main(Config(a.scenario, a.slots, a.max_iterations, a.out))
