#!/usr/bin/env python3
"""
Synthetic suite generation with a per-domain anomaly summary
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
from pmad.ingest import build_domain_index
from pmad.synth import default_suite, write_corpus


def make_suite(out_dir: str = "data/synthetic", seed: int = 42):
    records = default_suite(seed=seed)
    write_corpus(records, out_dir)

    index = build_domain_index(records)
    print(f"Wrote {len(records)} series over {len(index)} domains to {out_dir}")
    print()
    for dataset, subdomain in index.labels:
        group = [r for r in records if r.domain == (dataset, subdomain)]
        test_labels = np.concatenate([r.labels[r.train_len:] for r in group])
        print(f"{dataset}/{subdomain}: {len(group)} series, "
              f"test anomaly ratio {100.0 * test_labels.mean():.2f}%")


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "data/synthetic"
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 42
    make_suite(out, seed)
