#!/usr/bin/env python3
"""
Test eval bench: AP/mAP, synthetic data, streaming checkpoints, variant comparison, cost profile, acceptance runs
"""

import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.eval_bench import (
    BITS_GRID,
    DEFAULT_NOISE,
    Dataset,
    GroundTruth,
    StreamConfig,
    average_precision,
    compare_variants,
    mean_average_precision,
    run_stream,
    split_queries,
    synth_benchmark,
    synth_dataset,
    update_cost_profile,
    write_cost_tsv,
    write_report_tsv,
    write_timeline_jsonl,
    write_timeline_tsv,
)


FULL = os.environ.get('OHSL_FULL_ACCEPTANCE') == '1'


def _small_bench(seed=0):
    return synth_benchmark(num_classes=6, dim=32, points=1500, queries_per_class=10, rng_seed=seed)


def _small_config(**overrides):
    values = dict(chunk_size=300, init_sample=100, bits=16, itq_iterations=10, workers=2)
    values.update(overrides)
    return StreamConfig(**values)


def _variant_maps(seeds, points, queries_per_class, chunk_size):
    """(asymmetric, hamming, symmetric) final mAP per seed on the 8-class, 64-D set"""
    rows = []
    for seed in seeds:
        db, queries = synth_benchmark(num_classes=8, dim=64, points=points,
                                      queries_per_class=queries_per_class, rng_seed=seed)
        config = StreamConfig(chunk_size=chunk_size, init_sample=300, bits=32, rng_seed=seed)
        asym = run_stream(config, db, queries)
        sym = run_stream(replace(config, variant='symmetric', hamming_baseline=False), db, queries, asym.hash_model)
        last = asym.state.checkpoints[-1]
        rows.append((last.map, last.map_hamming, sym.state.checkpoints[-1].map))
    return np.array(rows)


def _l_sweep_maps(seeds, points, queries_per_class, chunk_size, multipliers=(1, 2, 3)):
    """Final mAP per seed (rows) and l = mult * b (columns), one hash model per seed"""
    rows = []
    for seed in seeds:
        db, queries = synth_benchmark(num_classes=8, dim=64, points=points,
                                      queries_per_class=queries_per_class, rng_seed=seed)
        config = StreamConfig(chunk_size=chunk_size, init_sample=300, bits=32, rng_seed=seed, hamming_baseline=False)
        hash_model = None
        maps = []
        for mult in multipliers:
            result = run_stream(replace(config, target_len=mult * config.bits), db, queries, hash_model)
            hash_model = result.hash_model
            maps.append(result.state.checkpoints[-1].map)
        rows.append(maps)
    return np.array(rows)


def _literal_ap(ranking, relevant):
    hits = 0
    total = 0.0
    for k, r in enumerate(ranking, start=1):
        if r in relevant:
            hits += 1
            total += hits / k
    return total / len(relevant) if relevant else 0.0


def test_average_precision():
    """Test AP and mAP"""
    print("Test 1: Average precision")
    print("-" * 60)

    assert average_precision(['a', 'b', 'c'], {'a'}) == 1.0
    assert average_precision(['a', 'b', 'c'], {'b'}) == 0.5
    assert average_precision(['a', 'b', 'c'], set()) == 0.0
    assert abs(average_precision([1, 2, 3, 4], {2, 4}) - (0.5 + 0.5) / 2) < 1e-12
    print("✅ Worked examples")

    rng = np.random.default_rng(0)
    for _ in range(50):
        ranking = list(rng.permutation(20))
        relevant = set(int(r) for r in rng.choice(20, size=5, replace=False))
        assert abs(average_precision(ranking, relevant) - _literal_ap(ranking, relevant)) < 1e-12
    print("✅ Matches the literal precision-at-hit sum")

    try:
        average_precision([1, 1, 2], {1})
        assert False, "duplicate ids"
    except ValueError:
        pass
    print("✅ Duplicate ids rejected")

    truth = GroundTruth((frozenset({1}), frozenset()))
    assert mean_average_precision([[2, 1], [1, 2]], truth) == 0.5
    assert mean_average_precision([[1], [1]], GroundTruth((frozenset(), frozenset()))) is None
    print("✅ Queries without neighbors are excluded from the mean")

    truth = GroundTruth.build([{0}, {1}], [10, 11, 12], [{0}, {0, 1}, {2}], query_ids=[10, 99])
    assert truth.neighbors == (frozenset({11}), frozenset({11}))
    print("✅ Ground truth shares a label and drops the query itself")
    print()


def test_synthetic_data():
    """Test synthetic generation and query splitting"""
    print("Test 2: Synthetic data")
    print("-" * 60)

    empty = synth_dataset(4, 16, 0)
    assert len(empty) == 0 and empty.features.shape == (0, 16)
    print("✅ Zero points gives an empty dataset")

    clean = synth_dataset(5, 16, 200, labels_per_point=(1.0,), noise=0.0, rng_seed=3)
    prototypes = np.random.default_rng(3).standard_normal((5, 16))
    for x, labels in zip(clean.features, clean.labels):
        (c,) = labels
        assert np.array_equal(x, prototypes[c])
    print("✅ Noise 0 with one label per point reproduces the prototypes")

    data = synth_dataset(8, 64, 2000, noise=0.3, rng_seed=1)
    assert all(1 <= len(ls) <= 3 for ls in data.labels)
    prototypes = np.random.default_rng(1).standard_normal((8, 64))
    single = [i for i, ls in enumerate(data.labels) if len(ls) == 1]
    nearest = np.argmin(((data.features[single, None, :] - prototypes[None]) ** 2).sum(axis=2), axis=1)
    accuracy = np.mean([nearest[j] in data.labels[i] for j, i in enumerate(single)])
    assert accuracy > 0.9
    print(f"✅ Nearest prototype accuracy {accuracy:.3f}")

    hard = synth_dataset(8, 64, 2000, rng_seed=1)
    assert hard.labels == data.labels
    signal = np.array([prototypes[sorted(ls)].sum(axis=0) for ls in data.labels])
    assert np.allclose(hard.features - signal, DEFAULT_NOISE / 0.3 * (data.features - signal))
    print("✅ Noise scale changes only the noise term")
    nearest = np.argmin(((hard.features[single, None, :] - prototypes[None]) ** 2).sum(axis=2), axis=1)
    accuracy = np.mean([nearest[j] in hard.labels[i] for j, i in enumerate(single)])
    assert accuracy > 0.9
    print(f"✅ Default noise {DEFAULT_NOISE}: nearest prototype accuracy {accuracy:.3f}")

    query_pos, db_pos = split_queries(data.labels, 20, rng_seed=2)
    assert set(query_pos.tolist()).isdisjoint(db_pos.tolist())
    assert len(query_pos) + len(db_pos) == 2000
    assert len(query_pos) <= 8 * 20
    for c in range(8):
        assert sum(1 for p in query_pos if c in data.labels[p]) >= 20
    again = split_queries(data.labels, 20, rng_seed=2)
    assert np.array_equal(again[0], query_pos)
    print("✅ Per-class query split is disjoint and deterministic")

    db, queries = synth_benchmark(num_classes=4, dim=16, points=300, queries_per_class=5)
    assert len(db) + len(queries) == 320
    assert db.ids.tolist() == list(range(len(db)))
    print("✅ synth_benchmark returns renumbered database and queries")
    print()


def test_checkpoint_zero():
    """Test mAP before any update against a tie-broken oracle"""
    print("Test 3: Checkpoint 0")
    print("-" * 60)

    db, queries = _small_bench()
    config = _small_config(eval_schedule=[0])
    result = run_stream(config, db, queries)

    first = result.state.checkpoints[0]
    assert first.checkpoint == 0
    assert first.database_size == 100

    ranking = list(range(100))
    values = []
    for labels in queries.labels:
        relevant = {i for i in ranking if db.labels[i] & labels}
        if relevant:
            values.append(_literal_ap(ranking, relevant))
    assert abs(first.map - float(np.mean(values))) < 1e-12
    assert first.queries_evaluated == len(values)
    print(f"✅ M = 0 ranks by id; mAP {first.map:.4f} matches the oracle")
    print()


def test_stream_timeline():
    """Test a full stream with several checkpoints"""
    print("Test 4: Stream timeline")
    print("-" * 60)

    db, queries = _small_bench(seed=1)
    config = _small_config(eval_schedule=[0, 600, 1500, 99999])
    result = run_stream(config, db, queries)
    state = result.state

    assert [c.checkpoint for c in state.checkpoints] == [0, 600, 1500]
    assert state.unreached_checkpoints == [99999]
    assert state.points_observed == 1500
    assert len(state.chunks) == 5
    assert len(result.database) == 1500
    assert state.checkpoints[-1].chunks == 5.0
    for record in state.checkpoints:
        assert 0.0 <= record.map <= 1.0
        assert record.map_hamming is not None
    assert state.checkpoints[-1].map > state.checkpoints[0].map
    print(f"✅ mAP {state.checkpoints[0].map:.3f} -> {state.checkpoints[-1].map:.3f}")

    again = run_stream(config, db, queries)
    assert [c.deterministic_dict() for c in again.state.checkpoints] == [c.deterministic_dict() for c in state.checkpoints]
    assert np.array_equal(again.model.M, result.model.M)
    print("✅ Reruns reproduce the timeline and the model")

    single = run_stream(_small_config(chunk_size=1500, eval_schedule=[1500]), db, queries)
    assert len(single.state.chunks) == 1 and len(single.state.checkpoints) == 1
    print("✅ One-chunk stream evaluates once")
    print()


def test_compare_and_cost():
    """Test variant comparison rows and the cost profile"""
    print("Test 5: Variant comparison and cost")
    print("-" * 60)

    db, queries = synth_benchmark(num_classes=6, dim=32, points=800, queries_per_class=8, rng_seed=4)
    config = _small_config(chunk_size=200)
    report = compare_variants(config, db, queries)

    assert [r['variant'] for r in report.group('variant')] == ['asymmetric', 'hamming', 'symmetric']
    assert [r['C'] for r in report.group('C')] == [0.001, 0.01, 0.1, 1.0]
    assert [r['l_mult'] for r in report.group('l')] == [1.0, 2.0, 3.0, 4.0]
    assert all(r['map'] is not None and 0.0 <= r['map'] <= 1.0 for r in report.rows)
    assert report.group('bits') == []
    print("✅ Variant, C and l groups all reported")

    assert BITS_GRID == (16, 32, 64, 96)
    sized = compare_variants(config, db, queries, bits_grid=[8, 16, 64])
    grid = sized.group('bits')
    assert [(r['bits'], r['variant']) for r in grid] == [(b, v) for b in (8, 16, 64) for v in ('asymmetric', 'hamming')]
    assert [r['l'] for r in grid if r['variant'] == 'asymmetric'] == [24, 48, None]
    assert all(0.0 <= r['map'] <= 1.0 for r in grid if r['bits'] <= 32)
    assert all(r['map'] is None for r in grid if r['bits'] == 64)
    same = [r for r in grid if r['bits'] == 16]
    assert same[0]['map'] == report.group('variant')[0]['map']
    assert same[1]['map'] == report.group('variant')[1]['map']
    print("✅ Bits grid: one retrained hash per length; the configured length repeats the variant rows")

    profile = update_cost_profile(_small_config(chunk_size=200, simulate_io=True), db)
    assert len(profile) == 4
    assert profile.chunk_points == [200, 200, 200, 200]
    assert np.isfinite(profile.slope_ms_per_chunk)
    assert profile.cumulative_ms[-1] >= profile.per_chunk_ms[0]
    assert profile.rehash_io_ms[-1] == 3970.0 * 800 / 1000.0
    print(f"✅ Cost profile: mean {profile.mean_ms:.2f} ms/chunk")

    empty = update_cost_profile(_small_config(), Dataset(np.zeros((0, 32)), []))
    assert len(empty) == 0 and empty.to_rows() == []
    print("✅ Empty stream gives an empty profile")

    with tempfile.TemporaryDirectory() as tmp:
        write_report_tsv(report, f"{tmp}/variants.tsv")
        lines = Path(f"{tmp}/variants.tsv").read_text().splitlines()
        assert lines[0] == "group\tvariant\tbits\tC\tl\tl_mult\tmap"
        assert len(lines) == 1 + len(report.rows)

        write_cost_tsv(profile, f"{tmp}/cost.tsv")
        header = Path(f"{tmp}/cost.tsv").read_text().splitlines()[0]
        assert header.endswith("cum_io_ms\tcum_rehash_io_ms")

        result = run_stream(_small_config(chunk_size=200, eval_schedule=[0, 800]), db, queries)
        write_timeline_jsonl(result.state.checkpoints, f"{tmp}/t.jsonl", deterministic=True)
        rows = [json.loads(line) for line in Path(f"{tmp}/t.jsonl").read_text().splitlines()]
        assert [r['checkpoint'] for r in rows] == [0, 800]
        assert 'cum_learn_ms' not in rows[0]
        write_timeline_tsv(result.state.checkpoints, f"{tmp}/t.tsv")
        assert len(Path(f"{tmp}/t.tsv").read_text().splitlines()) == 3
    print("✅ TSV and JSONL writers")
    print()


def test_reduced_acceptance():
    """Reduced-scale dominance and l sweep on the default synthetic set"""
    print("Test 6: Reduced-scale dominance and l sweep")
    print("-" * 60)

    maps = _variant_maps(range(3), points=4000, queries_per_class=20, chunk_size=500)
    asym, ham, sym = maps.mean(axis=0)
    assert asym > ham, (asym, ham)
    assert asym >= sym - 0.02, (asym, sym)
    print(f"✅ Asymmetric {asym:.4f}, Hamming {ham:.4f}, symmetric {sym:.4f} (mean of 3 seeds)")

    sweep = _l_sweep_maps(range(3), points=4000, queries_per_class=20, chunk_size=500).mean(axis=0)
    assert sweep[1] >= sweep[0] - 0.01, sweep
    assert sweep[2] >= sweep[0] - 0.01, sweep
    print(f"✅ l = b, 2b, 3b: {sweep[0]:.4f}, {sweep[1]:.4f}, {sweep[2]:.4f}")
    print()


def test_cost_scales_with_l():
    """Doubling l roughly doubles the per-chunk learner time"""
    print("Test 7: Update cost against l")
    print("-" * 60)

    stream = synth_dataset(4, 256, 400, rng_seed=5)
    timings = {}
    for l in (1024, 2048):
        config = StreamConfig(chunk_size=60, init_sample=100, bits=32, target_len=l, itq_iterations=5, workers=1)
        profile = update_cost_profile(config, stream)
        assert len(profile) == 7
        timings[l] = float(np.median(profile.per_chunk_ms))

    ratio = timings[2048] / timings[1024]
    assert 1.3 <= ratio <= 3.5, timings
    print(f"✅ Median ms/chunk {timings[1024]:.1f} -> {timings[2048]:.1f} (x{ratio:.2f})")
    print()


def test_full_acceptance():
    """Full-size dominance, l sweep and cost-flatness runs"""
    if not FULL:
        print("Test 8: Full acceptance (skipped, set OHSL_FULL_ACCEPTANCE=1)")
        print()
        return

    print("Test 8: Full acceptance")
    print("-" * 60)

    seeds = range(10)
    maps = _variant_maps(seeds, points=20000, queries_per_class=50, chunk_size=1000)
    asym, ham, sym = maps.mean(axis=0)
    assert asym >= ham + 0.03, (asym, ham)
    assert asym >= sym, (asym, sym)
    print(f"✅ Over 10 seeds: asymmetric {asym:.4f}, Hamming {ham:.4f}, symmetric {sym:.4f}")

    sweep = _l_sweep_maps(seeds, points=20000, queries_per_class=50, chunk_size=1000)
    for lower, upper in ((0, 1), (1, 2)):
        if sweep[:, upper].mean() < sweep[:, lower].mean():
            p = stats.ttest_rel(sweep[:, upper], sweep[:, lower], alternative='less').pvalue
            assert p > 0.05, (lower, upper, p)
    means = sweep.mean(axis=0)
    print(f"✅ l sweep non-decreasing within seed noise: {means[0]:.4f}, {means[1]:.4f}, {means[2]:.4f}")

    stream, _ = synth_benchmark(num_classes=8, dim=64, points=50000, queries_per_class=0)
    profile = update_cost_profile(StreamConfig(chunk_size=1000, init_sample=300, bits=32), stream)
    assert profile.relative_slope < 0.05, profile.relative_slope
    print(f"✅ Per-chunk cost flat (relative slope {profile.relative_slope:.4f})")
    print()


def main():
    """Run all tests"""
    print("\n")
    print("╔" + "=" * 78 + "╗")
    print("║" + " Eval Bench Tests ".center(78) + "║")
    print("╚" + "=" * 78 + "╝")
    print()

    try:
        test_average_precision()
        test_synthetic_data()
        test_checkpoint_zero()
        test_stream_timeline()
        test_compare_and_cost()
        test_reduced_acceptance()
        test_cost_scales_with_l()
        test_full_acceptance()

        print("=" * 80)
        print("✅ ALL TESTS PASSED")
        print("=" * 80)

    except AssertionError as e:
        print(f"❌ TEST FAILED: {e}")
        sys.exit(1)
    except Exception as e:
        print(f"❌ ERROR: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)


if __name__ == '__main__':
    main()
