import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hakw.audio_io import AudioClip, encode_wav
from hakw.augment import (AugmentPolicy, BadFactor, amplify, augment_manifest,
                          change_speed, time_shift)
from hakw.corpus import Manifest, ingest, read_clip
from oracles import dominant_freq


def tone(freq=440.0, amp=0.4, duration_s=1.0, rate=16000):
    t = np.arange(int(duration_s * rate)) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)


class TestTimeShift:
    def test_zero_shift_identity(self):
        clip = tone()
        out = time_shift(clip, 0)
        assert np.array_equal(out.samples, clip.samples)

    def test_positive_shift(self):
        clip = tone()
        out = time_shift(clip, 100)
        assert len(out) == len(clip)
        assert np.all(out.samples[:1600] == 0)
        assert np.array_equal(out.samples[1600:], clip.samples[:-1600])

    def test_negative_shift(self):
        clip = tone()
        out = time_shift(clip, -50)
        assert np.array_equal(out.samples[:-800], clip.samples[800:])
        assert np.all(out.samples[-800:] == 0)

    def test_full_displacement_all_zero(self):
        clip = tone(duration_s=0.5)
        for ms in (500, 600, -500):
            assert np.all(time_shift(clip, ms).samples == 0)

    @given(st.floats(-2000, 2000))
    @settings(max_examples=40, deadline=None)
    def test_length_preserved(self, ms):
        clip = tone(duration_s=0.1)
        assert len(time_shift(clip, ms)) == len(clip)


class TestChangeSpeed:
    def test_identity_factor(self):
        clip = tone()
        assert change_speed(clip, 1.0) is clip

    def test_double_speed_doubles_pitch(self):
        clip = tone(freq=440.0)
        fast = change_speed(clip, 2.0)
        assert len(fast) == len(clip) // 2
        freq = dominant_freq(fast.samples, 16000, max_freq=2000)
        assert abs(freq - 880.0) <= 2 * 16000 / len(fast)

    def test_bad_factor(self):
        with pytest.raises(BadFactor):
            change_speed(tone(), 0.0)
        with pytest.raises(BadFactor):
            change_speed(tone(), -1.0)

    @given(st.floats(0.5, 2.0))
    @settings(max_examples=40, deadline=None)
    def test_length_rule(self, factor):
        clip = tone(duration_s=0.2)
        assert len(change_speed(clip, factor)) == int(len(clip) / factor)


class TestAmplify:
    def test_zero_db_identity(self):
        clip = tone()
        assert np.array_equal(amplify(clip, 0.0).samples, clip.samples)

    def test_six_db_doubles(self):
        clip = tone(amp=0.4)
        out = amplify(clip, 6.0206)
        assert np.max(np.abs(out.samples)) == pytest.approx(0.8, rel=1e-4)
        rms_in = np.sqrt(np.mean(clip.samples**2))
        rms_out = np.sqrt(np.mean(out.samples**2))
        assert rms_out / rms_in == pytest.approx(2.0, rel=1e-5)

    def test_rms_scales_exactly_preclip(self):
        rng = np.random.default_rng(4)
        clip = AudioClip(rng.uniform(-0.05, 0.05, 8000), 16000)
        for db in (-6.0, -1.5, 0.0, 3.0, 12.0):
            out = amplify(clip, db)
            expected = np.sqrt(np.mean(clip.samples**2)) * 10 ** (db / 20)
            assert np.sqrt(np.mean(out.samples**2)) == pytest.approx(expected, rel=1e-9)

    def test_clamps_at_unity(self):
        clip = tone(amp=0.5)
        out = amplify(clip, 20.0)
        assert np.max(out.samples) == 1.0
        assert np.min(out.samples) == -1.0

    @given(st.floats(-20, 20))
    @settings(max_examples=40, deadline=None)
    def test_stays_in_range_and_length(self, db):
        clip = tone(duration_s=0.05)
        out = amplify(clip, db)
        assert len(out) == len(clip)
        assert np.all(np.abs(out.samples) <= 1.0)


def corpus_tree(tmp_path, labels=("yego", "oya"), speakers=4, clips=5):
    rng = np.random.default_rng(0)
    for label in labels:
        d = tmp_path / label
        d.mkdir(parents=True, exist_ok=True)
        for s in range(speakers):
            for c in range(clips):
                freq = 300 + 200 * hash(label) % 800 + 17 * c
                samples = 0.3 * np.sin(2 * np.pi * freq * np.arange(16000) / 16000)
                samples += rng.normal(0, 0.005, 16000)
                clip = AudioClip(np.clip(samples, -1, 1), 16000)
                (d / f"spk{s}__{c}.wav").write_bytes(encode_wav(clip))
    return ingest(tmp_path, "local")


class TestAugmentManifest:
    def test_emits_configured_fraction(self, tmp_path):
        manifest = corpus_tree(tmp_path)  # 40 records, all train by default
        policy = AugmentPolicy(fraction=0.8, seed=5)
        out = augment_manifest(manifest, policy, tmp_path)
        originals = [r for r in out if "augment" not in r.extra]
        augmented = [r for r in out if "augment" in r.extra]
        assert len(originals) == 40
        assert len(augmented) == round(0.8 * 40)
        assert all(r.split == "train" for r in augmented)
        assert all(r.path.endswith(".aug1.wav") for r in augmented)

    def test_fraction_zero_unchanged(self, tmp_path):
        manifest = corpus_tree(tmp_path)
        out = augment_manifest(manifest, AugmentPolicy(fraction=0.0, seed=1), tmp_path)
        assert len(out) == len(manifest)

    def test_seed_determinism(self, tmp_path):
        manifest = corpus_tree(tmp_path)
        policy = AugmentPolicy(fraction=0.5, seed=9)
        a = augment_manifest(manifest, policy, tmp_path)
        b = augment_manifest(manifest, policy, tmp_path)
        assert [(r.id, r.checksum, r.extra.get("augment")) for r in a] == \
               [(r.id, r.checksum, r.extra.get("augment")) for r in b]

    def test_different_seed_differs(self, tmp_path):
        manifest = corpus_tree(tmp_path)
        a = augment_manifest(manifest, AugmentPolicy(fraction=0.5, seed=1), tmp_path)
        b = augment_manifest(manifest, AugmentPolicy(fraction=0.5, seed=2), tmp_path)
        assert [r.id for r in a if "augment" in r.extra] != \
               [r.id for r in b if "augment" in r.extra] or \
               [r.checksum for r in a] != [r.checksum for r in b]

    def test_augmented_clips_keep_parent_length(self, tmp_path):
        manifest = corpus_tree(tmp_path)
        out = augment_manifest(manifest, AugmentPolicy(fraction=1.0, seed=3), tmp_path)
        for record in out:
            if "augment" in record.extra:
                clip = read_clip(tmp_path / record.path)
                assert len(clip) == 16000
                assert np.all(np.abs(clip.samples) <= 1.0)

    def test_provenance_recorded(self, tmp_path):
        manifest = corpus_tree(tmp_path)
        out = augment_manifest(manifest, AugmentPolicy(fraction=1.0, seed=3), tmp_path)
        parents = {r.id for r in manifest}
        for record in out:
            if "augment" in record.extra:
                prov = record.extra["augment"]
                assert prov["parent"] in parents
                assert prov["kind"] in ("shift", "speed", "gain")

    def test_never_targets_val_or_test(self, tmp_path):
        manifest = corpus_tree(tmp_path)
        for i, r in enumerate(manifest.records):
            r.split = "val" if i % 2 else "test"
        manifest.records[0].split = "train"
        out = augment_manifest(manifest, AugmentPolicy(fraction=1.0, seed=3), tmp_path)
        augmented = [r for r in out if "augment" in r.extra]
        assert len(augmented) == 1  # only the lone train record
        assert augmented[0].split == "train"
