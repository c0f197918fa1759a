"""Regenerate the sample CSVs under fixtures/ from their DGP specs.

Each CSV is written with a ``.schema.json`` sidecar; the seeds are fixed, so
rerunning reproduces the committed files byte for byte.
"""

from pathlib import Path

from infoval.cli import run

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

# (DGP spec, output stem, rows, seed)
PLAN = [("xor.json", "xor", 20_000, 7),
        ("garbling_chain.json", "garbling_chain", 20_000, 3),
        ("weather.json", "weather", 5_000, 5)]


def main():
    for spec, stem, n, seed in PLAN:
        code = run(["simulate", "--dgp", str(FIXTURES / spec), "--n", str(n), "--seed", str(seed),
                    "--out", str(FIXTURES / f"{stem}.csv")])
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    main()
