"""Acceptance suite: one test per criterion, each with its runtime budget.

Every test prints a single ``[PASS]``/``[FAIL]`` line to the terminal,
including the measured runtime and the key numbers behind the verdict.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from tensor_reid.cli import main
from tensor_reid.harness import ExperimentConfig, SyntheticSpec, generate_synthetic, run_experiment
from tensor_reid.hdff import FusionConfig, hdff_pipeline
from tensor_reid.matching import RankingResult, cmc, score_and_rank
from tensor_reid.spectral import gen_eig, sym_eig
from tensor_reid.tensor_core import fold, mode_product, project, unfold
from tensor_reid.txqda import CrossViewSet, TxqdaConfig, fit, scatter_pair

from conftest import pair_scatter_oracle, random_cross_view

FUSED = "block1+block2"


@contextmanager
def criterion(capsys, number, title, budget):
    """Time the body, enforce the budget and report one verdict line."""
    notes = {}
    start = time.perf_counter()
    verdict = "FAIL"
    try:
        yield notes
        elapsed = time.perf_counter() - start
        assert elapsed < budget, f"took {elapsed:.2f} s, budget {budget} s"
        verdict = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        detail = ", ".join(f"{k}={v}" for k, v in notes.items())
        with capsys.disabled():
            print(f"\n[{verdict}] criterion {number}: {title} ({elapsed:.2f} s / {budget} s)"
                  + (f" {detail}" if detail else ""))


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_criterion_01_tensor_algebra(capsys):
    with criterion(capsys, 1, "tensor algebra", 5.0) as notes:
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(200):
            dims = tuple(int(x) for x in rng.integers(1, [8, 7, 6]))
            t = rng.standard_normal(dims)
            for k in (1, 2, 3):
                assert np.array_equal(fold(unfold(t, k), k, dims), t)
                u = rng.standard_normal((int(rng.integers(1, 6)), dims[k - 1]))
                err = _rel(unfold(mode_product(t, u, k), k), u @ unfold(t, k))
                assert err < 1e-12
                worst = max(worst, err)
            a = rng.standard_normal((3, dims[0]))
            b = rng.standard_normal((2, dims[1]))
            lhs = mode_product(mode_product(t, a, 1), b, 2)
            rhs = mode_product(mode_product(t, b, 2), a, 1)
            assert _rel(lhs, rhs) < 1e-12
            u1 = rng.standard_normal((dims[0], int(rng.integers(1, dims[0] + 1))))
            u2 = rng.standard_normal((dims[1], int(rng.integers(1, dims[1] + 1))))
            p = project(t, u1, u2)
            kron = np.kron(u2, u1).T
            for i in range(dims[2]):
                assert _rel(p[:, :, i], u1.T @ t[:, :, i] @ u2) < 1e-10
                assert _rel(p[:, :, i].ravel(order="F"), kron @ t[:, :, i].ravel(order="F")) < 1e-10
        notes["tensors"] = 200
        notes["worst_mode_product_rel"] = f"{worst:.1e}"


def test_criterion_02_spectral(capsys):
    with criterion(capsys, 2, "spectral solvers", 10.0) as notes:
        rng = np.random.default_rng(2)
        worst = 0.0
        for n in range(1, 31):
            a = rng.standard_normal((n, n))
            a = a + a.T
            for method in ("jacobi", "lapack"):
                pairs = sym_eig(a, method)
                rec = pairs.vectors @ np.diag(pairs.values) @ pairs.vectors.T
                err = np.linalg.norm(rec - a) / np.linalg.norm(a)
                assert err < 1e-9
                worst = max(worst, err)
            b = rng.standard_normal((n, n))
            e = b @ b.T
            c = rng.standard_normal((n, n))
            spd = c @ c.T + n * np.eye(n)
            g = gen_eig(e, spd)
            scale = np.linalg.norm(e) + np.linalg.norm(spd)
            for j in range(n):
                v = g.vectors[:, j]
                assert np.linalg.norm(e @ v - g.values[j] * spd @ v) < 1e-8 * scale
            np.testing.assert_allclose(
                gen_eig(a, np.eye(n)).values, sym_eig(a).values, rtol=0, atol=1e-10
            )
        notes["sizes"] = "1..30"
        notes["worst_reconstruction_rel"] = f"{worst:.1e}"


def test_criterion_03_hdff_lossless(capsys):
    with criterion(capsys, 3, "HDFF losslessness", 2.0) as notes:
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 9))
            j = n * int(rng.integers(1, 20))
            v = n * int(rng.integers(1, 20))
            m = int(rng.integers(1, 10))
            x, y = rng.standard_normal((m, j)), rng.standard_normal((m, v))
            t = hdff_pipeline([x, y], FusionConfig(n_parts=n, normalize="none"))
            assert t.shape == (j // n + v // n, n, m)
            # coordinate q of a length-d vector sits at row q mod (d/n), part q div (d/n)
            for block, offset, d in ((x, 0, j), (y, j // n, v)):
                q = np.arange(d)
                rows = d // n
                assert np.array_equal(t[offset + q % rows, q // rows, :], block.T)
        notes["cases"] = 100


def test_criterion_04_scatter_oracle(capsys):
    with criterion(capsys, 4, "class-sum scatter equals pair enumeration", 10.0) as notes:
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(50):
            n_ids = int(rng.integers(2, 9))
            counts = [tuple(rng.integers(1, 3, size=2)) for _ in range(n_ids)]
            shape = (int(rng.integers(1, 7)), int(rng.integers(1, 5)))
            t, p, c = random_cross_view(rng, n_ids, counts, shape)
            assert t.shape[2] <= 40
            data = CrossViewSet(t, p, c, gallery_camera=0)
            for k in (1, 2):
                other = shape[1] if k == 1 else shape[0]
                u = rng.standard_normal((other, int(rng.integers(1, other + 1))))
                got = scatter_pair(data, u, k)
                want = pair_scatter_oracle(t, p, c, u, k, 0)
                for g, w in zip(got, want):
                    err = _rel(g, w)
                    assert err < 1e-9
                    worst = max(worst, err)
        notes["sets"] = 50
        notes["worst_rel"] = f"{worst:.1e}"


def test_criterion_05_monotone_and_invariant(capsys):
    with criterion(capsys, 5, "TXQDA monotone objective and permutation invariance", 30.0) as notes:
        worst_drop = worst_gap = 0.0
        for seed in range(20):
            rng = np.random.default_rng(500 + seed)
            spec = SyntheticSpec(
                n_identities=int(rng.integers(6, 16)), seed=seed,
                noise=float(rng.uniform(0.2, 1.0)), view_offset=float(rng.uniform(0, 3)),
            )
            blocks, labels = generate_synthetic(spec)
            data = CrossViewSet(hdff_pipeline(blocks), labels.person_ids, labels.camera_ids)
            cfg = TxqdaConfig(target_dims=(int(rng.integers(2, 12)), int(rng.integers(1, 5))),
                              max_iters=8, tol=0.0)
            model = fit(data, cfg)
            for trace in model.objective_trace:
                drop = -min(0.0, float(np.min(np.diff(trace))))
                worst_drop = max(worst_drop, drop)
                assert drop <= 1e-9
            perm = rng.permutation(data.tensor.shape[2])
            moved = fit(data.subset(perm), cfg)
            for a, b in ((model.u1, moved.u1), (model.u2, moved.u2)):
                gap = float(np.abs(a @ a.T - b @ b.T).max())
                worst_gap = max(worst_gap, gap)
                assert gap < 1e-9
        notes["sets"] = 20
        notes["worst_drop"] = f"{worst_drop:.1e}"
        notes["worst_projector_gap"] = f"{worst_gap:.1e}"


def test_criterion_06_learning_efficacy(capsys):
    with criterion(capsys, 6, "TXQDA beats raw cosine on default synthetic data", 60.0) as notes:
        blocks, labels = generate_synthetic(SyntheticSpec(seed=0))
        res = run_experiment(blocks, labels, ExperimentConfig(trials=10, seed=0))
        learned = float(res.mean[(FUSED, "auto")][0])
        raw = float(res.mean[(FUSED, "raw")][0])
        notes["txqda_rank1"] = f"{100 * learned:.2f}"
        notes["raw_rank1"] = f"{100 * raw:.2f}"
        notes["seeds"] = "data 0, splits 0"
        assert learned >= 0.95
        assert learned - raw >= 0.10


def test_criterion_07_fusion_benefit(capsys):
    with criterion(capsys, 7, "fused tensor at least as good as each block", 60.0) as notes:
        wins = []
        for seed in range(10):
            blocks, labels = generate_synthetic(SyntheticSpec(seed=seed))
            res = run_experiment(blocks, labels, ExperimentConfig(trials=10, seed=seed, baseline=False))
            fused = res.mean[(FUSED, "auto")][0]
            singles = [res.mean[(b, "auto")][0] for b in ("block1", "block2")]
            wins.append(bool(fused >= max(singles)))
        notes["wins"] = f"{sum(wins)}/10"
        notes["seeds"] = "0..9"
        assert sum(wins) >= 9


def test_criterion_08_cmc(capsys):
    with criterion(capsys, 8, "CMC correctness", 1.0) as notes:
        order = np.tile(np.arange(5), (4, 1))
        hand = RankingResult(order, np.zeros((4, 5)), np.array([0, 1, 1, 4]), np.arange(5))
        assert cmc(hand, 5).values.tolist() == [0.25, 0.75, 0.75, 0.75, 1.0]
        rng = np.random.default_rng(8)
        for _ in range(100):
            n_ids = int(rng.integers(2, 10))
            gids = np.concatenate([np.arange(n_ids), rng.integers(0, n_ids, rng.integers(0, 5))])
            pids = rng.integers(0, n_ids, rng.integers(1, 15))
            r = score_and_rank(rng.standard_normal((2, 3, len(gids))), gids,
                               rng.standard_normal((2, 3, len(pids))), pids)
            values = cmc(r).values
            assert np.all(np.diff(values) >= 0) and values[-1] == 1.0
            assert values.min() >= 0.0 and values.max() <= 1.0
        notes["fixtures"] = 100


def test_criterion_09_end_to_end_determinism(capsys, tmp_path):
    with criterion(capsys, 9, "synth and evaluate reproduce bitwise", 30.0) as notes:
        outputs = []
        for run in ("a", "b"):
            data = tmp_path / run / "data"
            out = tmp_path / run / "eval"
            assert main(["-q", "synth", "--out-dir", str(data), "--seed", "11"]) == 0
            assert main([
                "-q", "evaluate", "--features", str(data / "block1.feat"), str(data / "block2.feat"),
                "--labels", str(data / "labels.csv"), "--out-dir", str(out), "--seed", "11",
                "--emit-plot-data",
            ]) == 0
            files = sorted(p for p in (tmp_path / run).rglob("*")
                           if p.is_file() and p.suffix in (".csv", ".json"))
            outputs.append({p.relative_to(tmp_path / run): p.read_bytes() for p in files})
        assert outputs[0].keys() == outputs[1].keys()
        for name in outputs[0]:
            assert outputs[0][name] == outputs[1][name], name
        notes["files_compared"] = len(outputs[0])


def test_criterion_10_table_format(capsys, tmp_path):
    with criterion(capsys, 10, "CMC table layout", 30.0) as notes:
        data, out = tmp_path / "data", tmp_path / "eval"
        assert main(["-q", "synth", "--out-dir", str(data)]) == 0
        assert main([
            "-q", "evaluate", "--features", str(data / "block1.feat"), str(data / "block2.feat"),
            "--labels", str(data / "labels.csv"), "--out-dir", str(out), "--trials", "2",
            "--dims", "4", "8", "auto",
        ]) == 0
        heads = ["Dim", "Rank-1", "Rank-5", "Rank-10", "Rank-15", "Rank-20"]
        md = (out / "table.md").read_text()
        sections = md.split("\n## ")[1:]
        names = [s.splitlines()[0] for s in sections]
        assert names == ["block1", "block2", FUSED]
        for section in sections:
            table = [ln for ln in section.splitlines() if ln.startswith("|")]
            assert [c.strip() for c in table[0].strip("|").split("|")] == heads
            dims = []
            for line in table[2:]:
                cells = [c.strip() for c in line.strip("|").split("|")]
                dims.append(cells[0])
                for value in cells[1:]:
                    whole, frac = value.split(".")
                    assert len(frac) == 2 and 0 <= float(value) <= 100
            assert dims == ["raw", "4", "8", "auto"]
        csv = (out / "table.csv").read_text().splitlines()
        assert csv[0].split(",") == ["configuration"] + heads
        assert len(csv) == 1 + 3 * 4
        summary = json.loads((out / "summary.json").read_text())
        assert {r["configuration"] for r in summary["results"]} == set(names)
        notes["configurations"] = len(names)
