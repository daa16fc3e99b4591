"""Shared argument handling for the experiment scripts."""
import argparse
import json
import sys
import time


def parser(description):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    p.add_argument("--out", help="write per-seed results as JSON lines here")
    return p


def run_seeds(trial, seeds, out=None, **kw):
    rows = []
    sink = open(out, "w") if out else None
    t0 = time.perf_counter()
    for s in seeds:
        row = trial(s, **kw)
        rows.append(row)
        line = json.dumps(row, sort_keys=True)
        print(f"[{time.perf_counter() - t0:7.1f}s] {line}", file=sys.stderr, flush=True)
        if sink:
            sink.write(line + "\n")
            sink.flush()
    if sink:
        sink.close()
    return rows
