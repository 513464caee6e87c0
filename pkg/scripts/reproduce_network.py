"""Network experiments on the synthetic radial feeder.

Scales the case so the lowest voltage sits at its limit, then compares the
network capacity with the copperplate one and sweeps curtailment and delay
budgets at the far-end attachment bus.

    python3 scripts/reproduce_network.py --out results/network
"""

import argparse
import time
from collections import Counter
from pathlib import Path

from flexhca.capacity import capacity_copperplate, write_capacity_csv
from flexhca.cf import gain_percent, solve_cf, sweep_cf
from flexhca.cli import format_table, write_atomic
from flexhca.data_model import scale_case_study, write_feeder_json
from flexhca.df import solve_df
from flexhca.fixtures import feeder_case
from flexhca.network import capacity_network, write_binding_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/network")
    ap.add_argument("--buses", type=int, default=123)
    ap.add_argument("--slots", type=int, default=672)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--headroom", type=float, default=0.10)
    ap.add_argument("--delays", default="1,4,16,48")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    fc = feeder_case(args.buses, args.slots, args.seed)
    loads, feeder = scale_case_study(fc.loads, fc.feeder, args.headroom)
    write_feeder_json(feeder, out / "scaled_feeder.json")
    net = capacity_network(loads, fc.spec, feeder)
    cp = capacity_copperplate(loads, fc.spec, feeder.p0_max_kw)
    write_capacity_csv(net, out / "capacity_network.csv")
    write_binding_csv(net, out / "binding.csv")

    K_list = list(range(0, net.T // 50 + 1))
    rows = []
    for name, s in (("network", net), ("copperplate", cp)):
        for r in sweep_cf(s, K_list, [None, 0.3]):
            rows.append((name, r.K, "none" if r.mu is None else r.mu, r.capacity, r.gain_percent))
    write_atomic(out / "cf_gain.csv", format_table(["model", "K", "mu", "capacity_kw", "gain_percent"], rows))

    C0 = solve_cf(net, 0).capacity
    df_rows = []
    for D in (int(d) for d in args.delays.split(",")):
        for K in K_list:
            c = solve_df(net, K, D, restrict_candidates=True).capacity
            df_rows.append((K, D, c, gain_percent(c, C0)))
    write_atomic(out / "df_gain.csv", format_table(["K", "D", "capacity_kw", "gain_percent"], df_rows))

    tally = Counter(net.binding)
    print(f"scaling factor {feeder.metadata['scaling_gamma']:.4g}, transformer limit {feeder.p0_max_kw:.2f} kW")
    print(f"baseline capacity: network {C0:.2f} kW, copperplate {solve_cf(cp, 0).capacity:.2f} kW")
    print("binding limits:", ", ".join(f"{k} x{v}" for k, v in tally.most_common(5)))
    for K in K_list[:: max(1, len(K_list) // 6)]:
        print(f"K={K:>3}  CF gain {gain_percent(solve_cf(net, K).capacity, C0):6.2f}%")
    print(f"done in {time.perf_counter() - t0:.1f}s; results in {out}/")


if __name__ == "__main__":
    main()
