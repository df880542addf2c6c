"""Sample the analytic Moon/Sun provider into ``moon.csv`` and ``sun.csv`` tables.

The files use the same format as externally generated tables, so they can
stand in for them when exercising the tabulated code path.
"""
import argparse
from pathlib import Path

from etdcapture.ephemeris import T_ETD_J2000_S, AnalyticEphemeris, TabulatedEphemeris


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/ephemeris"))
    ap.add_argument("--days-before", type=float, default=60.0)
    ap.add_argument("--days-after", type=float, default=600.0)
    ap.add_argument("--step-s", type=float, default=3600.0)
    args = ap.parse_args()

    t0 = T_ETD_J2000_S - args.days_before * 86400.0
    t1 = T_ETD_J2000_S + args.days_after * 86400.0
    tab = TabulatedEphemeris.sample(AnalyticEphemeris(), t0, t1, args.step_s)
    args.out.mkdir(parents=True, exist_ok=True)
    tab.moon.to_csv(args.out / "moon.csv")
    tab.sun.to_csv(args.out / "sun.csv")
    print(f"wrote {len(tab.moon.t)} epochs per body to {args.out}")


if __name__ == "__main__":
    main()
