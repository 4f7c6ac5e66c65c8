"""Shared fixtures.

The true Wisconsin breast-cancer (original) file is not redistributable
inside this repository, so tests that need a file in that format use a
deterministic stand-in produced by ``write_cancer_format_file``: 699 rows,
11 comma-separated columns, 16 rows with a '?' in the bare-nuclei column,
and the real dataset's class balance (458 benign / 241 malignant).  Feature
marginals are chosen so the two classes overlap about as much as in the real
data (a small classifier reaches the mid-0.9s, not 1.0).  The loader accepts
the genuine UCI file unchanged.
"""

import numpy as np
import pytest


def write_cancer_format_file(path, seed=773):
    rng = np.random.default_rng(seed)
    rows = []
    for cls, count, mu, sd in ((2, 458, 2.2, 1.5), (4, 241, 5.2, 2.8)):
        for _ in range(count):
            shared = rng.normal(0.0, 1.0)
            raw = rng.normal(mu, sd, 9) + shared
            feats = np.clip(np.rint(raw), 1, 10).astype(int)
            rows.append((1000000 + int(rng.integers(0, 8999999)), feats, cls))
    rng.shuffle(rows)
    benign = [i for i, r in enumerate(rows) if r[2] == 2][:14]
    malignant = [i for i, r in enumerate(rows) if r[2] == 4][:2]
    missing = set(benign + malignant)  # the real file has 16 '?' rows, mostly benign
    with open(path, "w", encoding="ascii") as fh:
        for i, (rid, feats, cls) in enumerate(rows):
            fields = [str(v) for v in feats]
            if i in missing:
                fields[5] = "?"
            fh.write(f"{rid}," + ",".join(fields) + f",{cls}\n")
    return path


@pytest.fixture(scope="session")
def cancer_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "breast-cancer-wisconsin.data"
    return str(write_cancer_format_file(path))


@pytest.fixture(scope="session")
def cancer_splits(cancer_file):
    from dpbudget import data

    dataset = data.load_cancer_csv(cancer_file)
    return data.train_test_split(dataset, 560, seed=20)
