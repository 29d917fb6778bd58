#!/usr/bin/env python3
"""Chicago "Crimes - 2001 to present" export -> events.csv.

    python3 scripts/chicago_to_events.py Crimes.csv events.csv \
        --start 2014-01-01 --end 2017-12-31 --bbox 41.85 -87.70 41.89 -87.62
"""
import argparse

import pandas as pd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--start")
    ap.add_argument("--end")
    ap.add_argument("--bbox", nargs=4, type=float, metavar=("SOUTH", "WEST", "NORTH", "EAST"))
    a = ap.parse_args()

    cols = ["Date", "Primary Type", "Arrest", "Latitude", "Longitude"]
    df = pd.read_csv(a.src, usecols=cols).dropna(subset=["Latitude", "Longitude"])
    df["date"] = pd.to_datetime(df["Date"], format="%m/%d/%Y %I:%M:%S %p").dt.date
    if a.start:
        df = df[df["date"] >= pd.Timestamp(a.start).date()]
    if a.end:
        df = df[df["date"] <= pd.Timestamp(a.end).date()]
    if a.bbox:
        s, w, n, e = a.bbox
        df = df[df.Latitude.between(s, n) & df.Longitude.between(w, e)]
    arrest = df["Arrest"].astype(str).str.lower().isin(["true", "1", "y"])
    out = pd.DataFrame(
        {
            "date": df["date"].astype(str),
            "latitude": df["Latitude"],
            "longitude": df["Longitude"],
            "category": df["Primary Type"].str.upper(),
            "count": arrest.astype(int),
        }
    ).sort_values(["date", "latitude", "longitude"], kind="stable")
    out.to_csv(a.dst, index=False)
    print(f"{len(out)} events")


if __name__ == "__main__":
    main()
