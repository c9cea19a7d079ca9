import struct

import numpy as np
import pytest

from daforest.cascade import DaForestClassifier
from daforest.persistence import (ArchiveError, FORMAT_VERSION, MAGIC,
                                  load_model, save_model)

from conftest import make_blobs


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    X, y = make_blobs(40, [(-2.0, 0.0), (2.0, 0.0), (0.0, 3.0)], seed=14)
    clf = DaForestClassifier(slots_per_kind=1, n_estimators=3, search=False,
                             k_folds=2, max_layers=2, force_layers=2,
                             random_state=11).fit(X, y)
    path = tmp_path_factory.mktemp("arch") / "model.daf"
    save_model(clf, path)
    return clf, path, X


class TestRoundTrip:
    def test_decisions_bit_identical_on_random_inputs(self, fitted):
        clf, path, X = fitted
        loaded = load_model(path)
        rng = np.random.default_rng(0)
        probe = rng.normal(size=(100, X.shape[1]))
        np.testing.assert_array_equal(loaded.decision_function(probe),
                                      clf.decision_function(probe))
        np.testing.assert_array_equal(loaded.predict(probe), clf.predict(probe))

    def test_save_load_save_identical_bytes(self, fitted, tmp_path):
        _, path, _ = fitted
        loaded = load_model(path)
        again = tmp_path / "again.daf"
        save_model(loaded, again)
        assert again.read_bytes() == path.read_bytes()

    def test_byte_count_returned(self, fitted, tmp_path):
        clf, path, _ = fitted
        n = save_model(clf, tmp_path / "m.daf")
        assert n == (tmp_path / "m.daf").stat().st_size

    def test_header_fields_survive(self, fitted):
        clf, path, _ = fitted
        loaded = load_model(path)
        assert loaded.n_classes_ == clf.n_classes_
        assert loaded.n_features_in_ == clf.n_features_in_
        assert loaded.connectivity == clf.connectivity
        assert loaded.learning_rate == clf.learning_rate
        assert loaded.n_per_kind_ == clf.n_per_kind_
        np.testing.assert_array_equal(loaded.classes_, clf.classes_)

    def test_variant_flags_roundtrip(self, tmp_path):
        # score features + refit-full change the inference path; the loaded
        # model must follow the same path bit for bit
        X, y = make_blobs(30, [(-2.0, 0.0), (2.0, 0.0)], seed=16)
        clf = DaForestClassifier(slots_per_kind=1, n_estimators=2, search=False,
                                 k_folds=2, force_layers=2, score_features=True,
                                 refit_full=True, random_state=3).fit(X, y)
        path = tmp_path / "v.daf"
        save_model(clf, path)
        loaded = load_model(path)
        assert loaded.score_features and loaded.refit_full
        probe = np.random.default_rng(2).normal(size=(40, 2))
        np.testing.assert_array_equal(loaded.decision_function(probe),
                                      clf.decision_function(probe))

    def test_string_class_labels_roundtrip(self, tmp_path):
        X, y = make_blobs(30, [(-2.0, 0.0), (2.0, 0.0)], seed=15)
        labels = np.where(y == 0, "benign", "malignant")
        clf = DaForestClassifier(slots_per_kind=1, n_estimators=2, search=False,
                                 k_folds=2, max_layers=1,
                                 random_state=0).fit(X, labels)
        path = tmp_path / "s.daf"
        save_model(clf, path)
        loaded = load_model(path)
        assert set(loaded.predict(X)) <= {"benign", "malignant"}
        np.testing.assert_array_equal(loaded.predict(X), clf.predict(X))


class TestCorruption:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.daf"
        p.write_bytes(b"")
        with pytest.raises(ArchiveError, match="too small"):
            load_model(p)

    def test_bad_magic(self, tmp_path, fitted):
        _, path, _ = fitted
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        p = tmp_path / "bad.daf"
        p.write_bytes(bytes(blob))
        with pytest.raises(ArchiveError, match="bad magic"):
            load_model(p)

    def test_future_version_rejected(self, tmp_path, fitted):
        _, path, _ = fitted
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
        p = tmp_path / "v2.daf"
        p.write_bytes(bytes(blob))
        with pytest.raises(ArchiveError, match="unsupported archive version"):
            load_model(p)

    def test_truncation_detected(self, tmp_path, fitted):
        _, path, _ = fitted
        blob = path.read_bytes()
        p = tmp_path / "trunc.daf"
        p.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(ArchiveError, match="checksum|truncated"):
            load_model(p)

    def test_payload_corruption_detected(self, tmp_path, fitted):
        _, path, _ = fitted
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        p = tmp_path / "flip.daf"
        p.write_bytes(bytes(blob))
        with pytest.raises(ArchiveError, match="checksum"):
            load_model(p)

    def test_magic_prefix_matches_spec(self, fitted):
        _, path, _ = fitted
        assert path.read_bytes()[:4] == MAGIC == b"DAF1"

    def test_unfitted_model_rejected(self, tmp_path):
        with pytest.raises(ArchiveError, match="not fitted"):
            save_model(DaForestClassifier(), tmp_path / "x.daf")
