"""Smoke test for the `ctf` extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`,
then run `python crates/py/python/smoke_test.py`.
"""

import json
import math
import tempfile
from pathlib import Path

import ctf


def main():
    truth = ctf.TimeSeriesMatrix([[math.sin(0.1 * t + 0.3 * j) for j in range(8)] for t in range(64)])
    zeros = ctf.TimeSeriesMatrix.zeros(64, 8)
    assert truth.shape == (64, 8)
    assert ctf.short_term_error(zeros, truth, 16) == 1.0
    assert ctf.short_term_error(truth, truth, 16) == 0.0
    assert ctf.to_score(0.0) == 100.0 and ctf.to_score(5.0) == -100.0
    assert ctf.long_term_error(truth, truth, 16, 2) == 0.0

    normed, mean, std = truth.normalize()
    assert abs(normed.frobenius_norm() ** 2 / (64 * 8) - 1.0) < 1e-9
    noisy = truth.add_noise(0.1, seed=7)
    assert noisy.to_list() == truth.add_noise(0.1, seed=7).to_list()

    dmd = ctf.Dmd(truth, rank=2)
    assert all(abs(abs(l) - 1.0) < 1e-8 for l in dmd.eigenvalues)
    assert ctf.short_term_error(dmd.reconstruct(), truth, 64) < 1e-8

    esn = ctf.Esn(truth, N_h=50, N_spin=10, seed=1)
    assert esn.forecast(5).shape == (5, 8)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        name = ctf.generate_bundle("pulse-small", tmp / "ref", seed=0, participant_out=tmp / "pub")
        manifest = ctf.run_baseline("zeros", tmp / "pub", tmp / "sub")
        report = ctf.score(tmp / "ref", manifest, ledger=tmp / "scores.jsonl")
        assert report["dataset"] == name
        assert all(v == 0.0 for v in report["scores"].values()), report
        board = json.loads(ctf.leaderboard(tmp / "scores.jsonl", name))
        assert board["rows"][0]["Method"] == "zeros"

    print("python smoke test passed")


if __name__ == "__main__":
    main()
