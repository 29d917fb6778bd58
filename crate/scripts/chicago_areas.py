#!/usr/bin/env python3
"""Chicago community-area tables -> ses.csv and regions.geojson.

    python3 scripts/chicago_areas.py Census_Socioeconomic.csv Boundaries.geojson out_dir
"""
import argparse
import json
from pathlib import Path

import pandas as pd

SES = {
    "Community Area Number": "region_id",
    "PERCENT OF HOUSING CROWDED": "crowded_pct",
    "PERCENT HOUSEHOLDS BELOW POVERTY": "poverty_pct",
    "PERCENT AGED 16+ UNEMPLOYED": "unemployed_pct",
    "PER CAPITA INCOME ": "income_pc",
    "HARDSHIP INDEX": "hardship",
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("ses")
    ap.add_argument("boundaries")
    ap.add_argument("out")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)

    df = pd.read_csv(a.ses).rename(columns=lambda c: c if c in SES else c.strip())
    df = df.rename(columns={k.strip(): v for k, v in SES.items()} | SES)
    df = df.dropna(subset=["region_id"])
    df["region_id"] = df["region_id"].astype(int).astype(str)
    df[list(SES.values())].to_csv(out / "ses.csv", index=False)

    g = json.loads(Path(a.boundaries).read_text())
    for f in g["features"]:
        p = f["properties"]
        key = p.get("area_numbe") or p.get("area_num_1")
        p["region_id"] = str(int(key))
    (out / "regions.geojson").write_text(json.dumps(g))
    print(f"{len(df)} areas, {len(g['features'])} polygons")


if __name__ == "__main__":
    main()
