#!/usr/bin/env python3
"""Global Terrorism Database export -> events.csv (count = killed + wounded).

    python3 scripts/gtd_to_events.py globalterrorismdb.xlsx events.csv --start 2002-01-01
"""
import argparse

import pandas as pd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--start")
    ap.add_argument("--end")
    a = ap.parse_args()

    cols = ["iyear", "imonth", "iday", "latitude", "longitude", "attacktype1_txt", "nkill", "nwound"]
    read = pd.read_excel if a.src.endswith((".xls", ".xlsx")) else pd.read_csv
    df = read(a.src, usecols=cols).dropna(subset=["latitude", "longitude"])
    # unknown month or day means the event cannot be placed on a day
    df = df[(df.imonth > 0) & (df.iday > 0)]
    df["date"] = pd.to_datetime(dict(year=df.iyear, month=df.imonth, day=df.iday), errors="coerce")
    df = df.dropna(subset=["date"])
    if a.start:
        df = df[df.date >= a.start]
    if a.end:
        df = df[df.date <= a.end]
    casualties = df.nkill.fillna(0) + df.nwound.fillna(0)
    out = pd.DataFrame(
        {
            "date": df.date.dt.strftime("%Y-%m-%d"),
            "latitude": df.latitude,
            "longitude": df.longitude,
            "category": df.attacktype1_txt.str.upper(),
            "count": casualties.astype(int),
        }
    ).sort_values(["date", "latitude", "longitude"], kind="stable")
    out.to_csv(a.dst, index=False)
    print(f"{len(out)} events")


if __name__ == "__main__":
    main()
