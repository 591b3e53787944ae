#!/usr/bin/env python3
"""
Benchmark data generation script for kconc
Writes the synthetic taxonomy and dataset, then prints a per-vertical summary
"""

import sys
from pathlib import Path

import numpy as np

from kconc.datasets import write_synthetic, load_dataset
from kconc.models import Split, SyntheticSpec
from kconc.taxonomy import load_taxonomy


def summarize(tax_path: Path, data_path: Path):
    """Print sample counts and class counts for every vertical"""
    tax = load_taxonomy(tax_path)
    dataset = load_dataset(data_path)
    labels = {split: dataset.split(split).labels() for split in Split}

    print(f"{'vertical':<16}{'classes':>8}{'train':>8}{'test':>8}")
    for v in tax.vertical_roots:
        leaves = tax.vertical_leaves(v)
        counts = [int(np.isin(labels[split], leaves).sum()) for split in (Split.TRAIN, Split.TEST)]
        print(f"{tax.node(v).name:<16}{len(leaves):>8}{counts[0]:>8}{counts[1]:>8}")
    print(f"{'total':<16}{tax.num_classes:>8}{len(labels[Split.TRAIN]):>8}{len(labels[Split.TEST]):>8}")


def main():
    """Main function to generate benchmark data"""
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/data")
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0

    print("kconc Benchmark Data Generator")
    print("=" * 40)

    spec = SyntheticSpec(seed=seed)
    tax_path, data_path = write_synthetic(spec, out_dir)
    print(f"Taxonomy: {tax_path}")
    print(f"Dataset:  {data_path}\n")
    summarize(tax_path, data_path)

    print("\nBenchmark data generation complete!")
    print("\nYou can now:")
    print(f"1. Train teachers: kconc train-teacher --out {out_dir} --vertical <id>")
    print(f"2. Generate soft targets: kconc gen-soft-targets --out {out_dir}")
    print(f"3. Train the student: kconc train-student --out {out_dir}")


if __name__ == "__main__":
    main()
