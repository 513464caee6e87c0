"""Write the synthetic year and feeder cases to disk as CLI inputs.

    python3 scripts/make_fixtures.py --out data
"""

import argparse
from pathlib import Path

from flexhca.data_model import write_csv, write_feeder_json, write_profile_csv
from flexhca.fixtures import feeder_case, year_case


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--feeder-seed", type=int, default=3)
    ap.add_argument("--feeder-slots", type=int, default=672)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    y = year_case(args.seed)
    write_csv(y.loads, out / "year_loads.csv")
    write_profile_csv(y.spec, out / "year_profile.csv")

    f = feeder_case(T=args.feeder_slots, seed=args.feeder_seed)
    write_csv(f.loads, out / "feeder_loads.csv")
    write_profile_csv(f.spec, out / "feeder_profile.csv")
    write_feeder_json(f.feeder, out / "feeder.json")
    print(f"wrote year case (T={y.loads.grid.T}, p0_max={y.p0_max} kW) and feeder case "
          f"({f.feeder.n} buses, attach bus {f.spec.attach_bus}) to {out}/")


if __name__ == "__main__":
    main()
