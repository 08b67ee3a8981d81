"""Corpus generation and reference style operator tests."""

import numpy as np
import pytest

from stylematch.corpus import (
    CLASS_NAMES,
    CorpusSpec,
    conditioning_dataset,
    edit_target,
    gen_corpus,
    load_corpus_images,
    load_manifest,
    manifest_hash,
    stylize_reference,
    write_corpus,
)
from stylematch.errors import ParameterError
from stylematch.spectrum import band_power, mean_rapsd, rapsd

SMALL = CorpusSpec(size=32, n_train=24, n_test=8, seed=0)


def test_gen_corpus_deterministic():
    t1, e1 = gen_corpus(SMALL)
    t2, e2 = gen_corpus(SMALL)
    assert len(t1) == 24 and len(e1) == 8
    for a, b in zip(t1 + e1, t2 + e2):
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.fg_mask, b.fg_mask)
        assert a.class_id == b.class_id
    t3, _ = gen_corpus(CorpusSpec(size=32, n_train=24, n_test=8, seed=1))
    assert not np.array_equal(t1[0].image, t3[0].image)


def test_class_balance_round_robin():
    train, test = gen_corpus(CorpusSpec(size=32, n_train=26, n_test=9, seed=0))
    for recs, n in ((train, 26), (test, 9)):
        counts = np.bincount([r.class_id for r in recs], minlength=len(CLASS_NAMES))
        assert counts.sum() == n
        assert counts.max() - counts.min() <= 1


def test_record_invariants():
    train, _ = gen_corpus(SMALL)
    for rec in train:
        assert rec.image.shape == (32, 32, 3)
        assert rec.image.dtype == np.float64
        assert rec.image.min() >= -1.0 and rec.image.max() <= 1.0
        assert rec.fg_mask.shape == (32, 32)
        assert rec.fg_mask.dtype == np.bool_
        assert 0 < rec.fg_mask.sum() < 32 * 32  # shape present, not full-frame


def test_style_suppresses_high_band():
    spec = CorpusSpec(size=64, n_train=16, n_test=0, seed=3)
    train, _ = gen_corpus(spec)
    real_curve = mean_rapsd([r.image for r in train])
    style_curve = mean_rapsd([stylize_reference(r.image, spec) for r in train])
    hb_real = band_power(real_curve, 0.25, float(real_curve.freqs[-1]))
    hb_style = band_power(style_curve, 0.25, float(style_curve.freqs[-1]))
    assert hb_style < hb_real
    # top-quartile attenuation is substantial, not marginal
    assert hb_style / hb_real < 0.7, (hb_style, hb_real)


def test_style_identity_config():
    spec = CorpusSpec(size=32, n_train=4, n_test=0, seed=0,
                      blur_sigma=0.0, palette_levels=256, edge_strength=0.0,
                      posterize_iters=1)
    train, _ = gen_corpus(spec)
    for rec in train:
        out = stylize_reference(rec.image, spec)
        assert np.allclose(out, rec.image, atol=1e-12)


def test_style_idempotent():
    spec = CorpusSpec(size=64, n_train=12, n_test=0, seed=4)
    train, _ = gen_corpus(spec)
    for rec in train:
        once = stylize_reference(rec.image, spec)
        twice = stylize_reference(once, spec)
        rms = float(np.sqrt(np.mean((twice - once) ** 2)))
        assert rms < 0.02, rms


def test_edit_target_fill_and_background():
    spec = CorpusSpec(size=32, n_train=8, n_test=0, seed=5)
    train, _ = gen_corpus(spec)
    fill = np.asarray(spec.edit_fill)
    for rec in train:
        tgt = edit_target(rec, spec)
        assert np.all(tgt[rec.fg_mask] == fill)
        assert np.array_equal(tgt[~rec.fg_mask], rec.image[~rec.fg_mask])


def test_foreground_color_shell():
    # fg colors stay inside the configured distance band from the fill color,
    # so the flat-fill edit is never a no-op; checked noise-free so interior
    # pixels carry the drawn color exactly
    spec = CorpusSpec(size=32, n_train=40, n_test=0, seed=6, noise_sigma=0.0, blur_sigma=0.0)
    lo, hi = spec.fg_shell
    fill = np.asarray(spec.edit_fill)
    train, _ = gen_corpus(spec)
    checked = 0
    for rec in train:
        m = rec.fg_mask
        interior = m.copy()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                interior &= np.roll(np.roll(m, dy, axis=0), dx, axis=1)
        ys, xs = np.where(interior)
        if len(ys) == 0:
            continue
        color = rec.image[ys[0], xs[0]]
        dist = float(np.linalg.norm(color - fill))
        assert lo <= dist <= hi, (rec.class_id, dist)
        checked += 1
    assert checked >= 20


def test_conditioning_dataset_shapes():
    spec = CorpusSpec(size=32, n_train=6, n_test=0, seed=0)
    train, _ = gen_corpus(spec)
    real = conditioning_dataset(train, spec, "real")
    style = conditioning_dataset(train, spec, "style")
    assert len(real) == 3 * 6 and len(style) == 2 * 6
    kinds = {c.kind for _, c in real}
    assert kinds == {"content", "null", "edit"}
    assert {c.kind for _, c in style} == {"content", "null"}
    with pytest.raises(ParameterError):
        conditioning_dataset(train, spec, "both")


def test_spec_validation():
    with pytest.raises(ParameterError):
        CorpusSpec(size=4)
    with pytest.raises(ParameterError):
        CorpusSpec(n_train=0)
    with pytest.raises(ParameterError):
        CorpusSpec(n_test=-1)
    with pytest.raises(ParameterError):
        CorpusSpec(classes=("disk", "triangle"))
    with pytest.raises(ParameterError):
        CorpusSpec(blur_sigma=-0.1)
    with pytest.raises(ParameterError):
        CorpusSpec(palette_levels=1)
    with pytest.raises(ParameterError):
        CorpusSpec(posterize_iters=0)
    with pytest.raises(ParameterError):
        CorpusSpec(edit_fill=(0.9, 0.9))
    with pytest.raises(ParameterError):
        CorpusSpec(edit_fill=(0.9, 0.9, 1.5))
    with pytest.raises(ParameterError):
        CorpusSpec(fg_shell=(1.1, 0.25))


def test_spec_roundtrip():
    spec = CorpusSpec(size=48, n_train=10, n_test=2, seed=9, edit_fill=(0.1, 0.2, 0.3))
    back = CorpusSpec.from_dict(spec.to_dict())
    assert back == spec


def test_write_corpus_and_reload(tmp_path):
    spec = CorpusSpec(size=32, n_train=6, n_test=2, seed=0)
    m1 = write_corpus(str(tmp_path / "a"), spec)
    m2 = write_corpus(str(tmp_path / "b"), spec)
    assert manifest_hash(m1) == manifest_hash(m2)
    assert load_manifest(str(tmp_path / "a" / "manifest.json")) == m1

    train, _ = gen_corpus(spec)
    loaded = load_corpus_images(str(tmp_path / "a" / "manifest.json"), "train", "real")
    assert len(loaded) == 6
    for (img, cid), rec in zip(loaded, train):
        assert cid == rec.class_id
        # PNG quantizes to 8 bits per channel
        assert np.max(np.abs(img - rec.image)) <= 1.0 / 255 + 1e-12
    test_loaded = load_corpus_images(str(tmp_path / "a" / "manifest.json"), "test", "style")
    assert len(test_loaded) == 2
