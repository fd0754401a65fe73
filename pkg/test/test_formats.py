#!/usr/bin/env python3
"""
Test artifact formats: byte-stable round trips, error context, feature and label files
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import FormatError
from src.formats import (
    load_database,
    load_hash_model,
    load_similarity_model,
    read_features,
    read_labels,
    save_database,
    save_hash_model,
    save_similarity_model,
    sha256_file,
    write_features,
    write_labels,
)
from src.hash_core import encode_batch, train_itq
from src.manifest import RunManifest
from src.online_learner import SimilarityModel, observe
from src.search import CodeDatabase
from src.target_codes import assign_class_codes


def _artifacts(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((120, 12))
    hash_model = train_itq(X, bits=10, iterations=5)
    codebook = assign_class_codes(3, 20, rng_seed=seed)
    model = SimilarityModel.zeros(20, 12, 10, C=0.05, pa_norm_exponent=1)
    labels = [frozenset({int(i % 3)}) | ({2} if i % 5 == 0 else set()) for i in range(120)]
    for x, ls in zip(X[:40], labels[:40]):
        observe(model, x, ls, hash_model, codebook)
    db = CodeDatabase(10)
    db.append(np.arange(120) * 7, encode_batch(hash_model, X), labels)
    return X, labels, hash_model, codebook, model, db


def test_round_trips():
    """Test save -> load -> save is byte-identical"""
    print("Test 1: Round trips")
    print("-" * 60)

    X, labels, hash_model, codebook, model, db = _artifacts()
    with tempfile.TemporaryDirectory() as tmp:
        save_hash_model(hash_model, f"{tmp}/a.ohsl")
        loaded = load_hash_model(f"{tmp}/a.ohsl")
        assert loaded == hash_model
        save_hash_model(loaded, f"{tmp}/b.ohsl")
        assert sha256_file(f"{tmp}/a.ohsl") == sha256_file(f"{tmp}/b.ohsl")
        print("✅ Hash model")

        save_similarity_model(model, codebook, f"{tmp}/a.ohsm")
        loaded_model, loaded_book = load_similarity_model(f"{tmp}/a.ohsm")
        assert np.array_equal(loaded_model.M, model.M)
        assert loaded_model.update_count == 40
        assert loaded_model.pa_norm_exponent == 1 and loaded_model.C == 0.05
        assert loaded_book == codebook
        save_similarity_model(loaded_model, loaded_book, f"{tmp}/b.ohsm")
        assert Path(f"{tmp}/a.ohsm").read_bytes() == Path(f"{tmp}/b.ohsm").read_bytes()
        print("✅ Similarity model with codebook")

        save_database(db, f"{tmp}/a.ohdb")
        loaded_db = load_database(f"{tmp}/a.ohdb")
        snap, again = db.snapshot(), loaded_db.snapshot()
        assert np.array_equal(snap.words, again.words)
        assert np.array_equal(snap.ids, again.ids)
        assert snap.labels == again.labels
        save_database(loaded_db, f"{tmp}/b.ohdb")
        assert Path(f"{tmp}/a.ohdb").read_bytes() == Path(f"{tmp}/b.ohdb").read_bytes()
        print("✅ Code database")

        save_database(CodeDatabase(65), f"{tmp}/empty.ohdb")
        empty = load_database(f"{tmp}/empty.ohdb")
        assert len(empty) == 0 and empty.bits == 65
        print("✅ Empty database")
    print()


def test_format_errors():
    """Test error context for damaged files"""
    print("Test 2: Damaged files")
    print("-" * 60)

    _, _, hash_model, _, _, db = _artifacts(seed=1)
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/m.ohsl"
        save_hash_model(hash_model, path)
        data = Path(path).read_bytes()

        Path(path).write_bytes(b'XXXX' + data[4:])
        try:
            load_hash_model(path)
            assert False, "bad magic"
        except FormatError as e:
            assert e.offset == 0 and e.path == path
        print("✅ Bad magic reported at byte 0")

        Path(path).write_bytes(data[:30])
        try:
            load_hash_model(path)
            assert False, "truncated"
        except FormatError as e:
            assert e.offset == 14
            assert 'truncated' in str(e)
        print("✅ Truncation reported at the failing offset")

        Path(path).write_bytes(data + b'\x00')
        try:
            load_hash_model(path)
            assert False, "trailing bytes"
        except FormatError as e:
            assert e.offset == len(data)
        print("✅ Trailing bytes rejected")

        save_database(db, f"{tmp}/d.ohdb")
        try:
            load_similarity_model(f"{tmp}/d.ohdb")
            assert False, "database is not a similarity model"
        except FormatError:
            pass
        print("✅ Wrong artifact kind rejected")
    print()


def test_feature_and_label_files():
    """Test feature and label text/binary files"""
    print("Test 3: Features and labels")
    print("-" * 60)

    with tempfile.TemporaryDirectory() as tmp:
        X = np.array([[0.5, -1.25, 3.0], [2.0, 0.0, -0.75]])
        write_features(X, f"{tmp}/x.ohfv")
        write_features(X, f"{tmp}/x.csv", fmt='csv')
        assert np.array_equal(read_features(f"{tmp}/x.ohfv"), X)
        assert np.array_equal(read_features(f"{tmp}/x.csv"), X)
        print("✅ Binary and CSV features detected and read")

        Path(f"{tmp}/bad.csv").write_text("1.0,2.0\n3.0,abc\n")
        try:
            read_features(f"{tmp}/bad.csv")
            assert False, "non-numeric value"
        except FormatError as e:
            assert e.line == 2
        Path(f"{tmp}/ragged.csv").write_text("1.0,2.0\n3.0\n")
        try:
            read_features(f"{tmp}/ragged.csv")
            assert False, "ragged rows"
        except FormatError as e:
            assert e.line == 2
        print("✅ CSV errors carry the line number")

        write_labels([{3, 1}, set(), {2}], f"{tmp}/y.txt")
        assert Path(f"{tmp}/y.txt").read_text() == "1,3\n\n2\n"
        assert read_labels(f"{tmp}/y.txt") == [frozenset({1, 3}), frozenset(), frozenset({2})]
        print("✅ Labels sorted on write, blank line is an empty set")

        Path(f"{tmp}/bad.txt").write_text("1\n2\nx\n")
        try:
            read_labels(f"{tmp}/bad.txt")
            assert False, "bad label"
        except FormatError as e:
            assert e.line == 3
        print("✅ Bad label reported with its line")
    print()


def test_manifest():
    """Test run manifests"""
    print("Test 4: Run manifest")
    print("-" * 60)

    _, _, hash_model, _, _, _ = _artifacts(seed=2)
    with tempfile.TemporaryDirectory() as tmp:
        out = f"{tmp}/h.ohsl"
        save_hash_model(hash_model, out)

        manifest = RunManifest(command='init-hash', config={'hash': {'bits': 10}}, seeds={'hash': 0})
        manifest.add_output(out, 'hash_model')
        written = manifest.write_all()
        assert written == [f"{out}.manifest.json"]

        loaded = RunManifest.load(written[0])
        assert loaded.outputs[0].sha256 == sha256_file(out)
        assert loaded.format_versions['hash_model'] == 1
        assert loaded.verify() == []
        print("✅ Manifest records checksums and versions")

        data = bytearray(Path(out).read_bytes())
        data[-1] ^= 0xFF
        Path(out).write_bytes(bytes(data))
        assert loaded.verify() == [out]
        print("✅ Changed artifacts detected")
    print()


def main():
    """Run all tests"""
    print("\n")
    print("╔" + "=" * 78 + "╗")
    print("║" + " Format Tests ".center(78) + "║")
    print("╚" + "=" * 78 + "╝")
    print()

    try:
        test_round_trips()
        test_format_errors()
        test_feature_and_label_files()
        test_manifest()

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
