"""Dense-CRF refinement: kernel spot values, energy decomposition by brute
force, oracle equivalence of the message passes, and inference invariants."""

import numpy as np
import pytest

from deepcontrast.crf import (
    CrfParams,
    crf_energy,
    exact_message_oracle,
    mean_field_infer,
    pairwise_kernel,
    pairwise_theta,
    unary_from_map,
)


def rand_instance(rng, h, w):
    image = rng.random((h, w, 3))
    s = rng.uniform(0.05, 0.95, (h, w))
    return image, s


def test_theta_spot_value_same_pixel():
    """At zero positional and color distance both Gaussians are 1, so the
    kernel value is w1 + w2 = 8.0 with the default weights."""
    p = CrfParams()
    k = pairwise_kernel(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(3), p)
    assert k == 8.0


def test_theta_adjacent_same_color():
    """Unit spatial offset, identical color: 3*exp(-1/18) + 5*exp(-1/18)."""
    p = CrfParams()
    img = np.full((1, 2, 3), 0.5)
    v = pairwise_theta((0, 0), (0, 1), 0, 1, img, p)
    assert abs(v - 8.0 * np.exp(-1.0 / 18.0)) < 1e-12
    assert abs(v - 7.567675751254123) < 1e-12


def test_theta_potts_zero_for_equal_labels():
    p = CrfParams()
    img = np.random.default_rng(0).random((2, 2, 3))
    assert pairwise_theta((0, 0), (1, 1), 1, 1, img, p) == 0.0
    assert pairwise_theta((0, 0), (1, 1), 0, 0, img, p) == 0.0


def test_params_validation():
    with pytest.raises(ValueError):
        CrfParams(sigma_alpha=0.0)
    with pytest.raises(ValueError):
        CrfParams(w1=-1.0)
    CrfParams(w1=0.0, w2=0.0)  # zero weights are legal (unary-only)


def test_energy_brute_force_decomposition():
    """All 512 labelings of a 3x3 instance: the energy equals the unary sum
    plus the pairwise sum computed independently via pairwise_theta."""
    rng = np.random.default_rng(1)
    image, s = rand_instance(rng, 3, 3)
    params = CrfParams()
    unary = unary_from_map(s)
    coords = [(y, x) for y in range(3) for x in range(3)]
    for code in range(512):
        lab = np.array([(code >> i) & 1 for i in range(9)]).reshape(3, 3)
        e = crf_energy(lab, unary, image, params)
        ref = sum(unary[lab[y, x]][y, x] for y, x in coords)
        for a in range(9):
            for b in range(a + 1, 9):
                ref += pairwise_theta(coords[a], coords[b],
                                      lab[coords[a]], lab[coords[b]],
                                      image, params)
        assert abs(e - ref) < 1e-10


def test_energy_rejects_huge_instances():
    params = CrfParams()
    big = np.zeros((80, 80))
    with pytest.raises(ValueError):
        crf_energy(big, (big, big), np.zeros((80, 80, 3)), params)


def test_production_messages_match_oracle():
    from deepcontrast.crf import _flatten, _messages
    rng = np.random.default_rng(2)
    params = CrfParams()
    for h, w in ((5, 7), (8, 8), (12, 3)):
        image, s = rand_instance(rng, h, w)
        q1 = np.clip(s, 1e-8, 1 - 1e-8)
        pos, col = _flatten(image)
        m0p, m1p = _messages(q1, pos, col, params, chunk=16)
        m0o, m1o = exact_message_oracle(q1, image, params)
        assert np.max(np.abs(m0p - m0o)) < 1e-12
        assert np.max(np.abs(m1p - m1o)) < 1e-12


def test_messages_bounded_by_weights():
    """Normalized messages are convex combinations scaled by w1 + w2."""
    rng = np.random.default_rng(3)
    image, s = rand_instance(rng, 6, 6)
    params = CrfParams()
    m0, m1 = exact_message_oracle(s, image, params)
    assert np.all(m0 >= 0) and np.all(m1 >= 0)
    assert np.all(m0 + m1 <= params.w1 + params.w2 + 1e-12)


def test_unary_only_identity():
    """Zero pairwise weights leave the (clipped) input map unchanged."""
    rng = np.random.default_rng(4)
    image, s = rand_instance(rng, 6, 6)
    params = CrfParams(w1=0.0, w2=0.0, iterations=5)
    out = mean_field_infer(s, image, params)
    assert np.array_equal(out, np.clip(s, 1e-8, 1 - 1e-8))


def test_q_normalization():
    """q0 + q1 = 1 to machine precision at every iteration."""
    rng = np.random.default_rng(5)
    image, s = rand_instance(rng, 8, 8)
    out, hist = mean_field_infer(s, image, CrfParams(iterations=4),
                                 return_q_history=True)
    for q1 in hist:
        assert np.all((q1 >= 0) & (q1 <= 1))
    assert np.array_equal(out, hist[-1])


def test_smoothing_monotone_on_block():
    """On a noisy two-block image, mean-field iterations never increase the
    8-neighborhood label disagreement of the thresholded map."""
    rng = np.random.default_rng(6)
    image = np.zeros((16, 16, 3))
    image[:, 8:] = [0.9, 0.1, 0.1]
    image[:, :8] = [0.1, 0.2, 0.9]
    s = np.where(np.arange(16)[None, :] >= 8, 0.8, 0.2) \
        + rng.normal(0, 0.15, (16, 16))
    s = np.clip(s, 0.01, 0.99)

    def disagreement(q):
        b = q > 0.5
        d = 0
        for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
            a = b[max(0, dy):, max(0, dx):] if dx >= 0 else b[dy:, :dx]
            c = b[:b.shape[0] - dy, :b.shape[1] - dx] if dx >= 0 \
                else b[:b.shape[0] - dy, -dx:]
            d += int(np.sum(a != c))
        return d

    _, hist = mean_field_infer(s, image, CrfParams(iterations=6),
                               return_q_history=True)
    ds = [disagreement(q) for q in hist]
    assert all(b <= a for a, b in zip(ds, ds[1:]))
    assert ds[-1] < ds[0]


def test_refinement_decreases_energy_on_small_instance():
    """Thresholded labelings: the refined labeling's energy is no worse than
    the initial thresholded labeling's."""
    rng = np.random.default_rng(7)
    image, _ = rand_instance(rng, 5, 5)
    image[:, :2] = 0.1
    image[:, 2:] = 0.9
    s = np.clip(np.where(np.arange(5)[None, :] >= 2, 0.7, 0.3)
                + rng.normal(0, 0.2, (5, 5)), 0.02, 0.98)
    params = CrfParams(iterations=8)
    unary = unary_from_map(s)
    out = mean_field_infer(s, image, params)
    e_before = crf_energy(s > 0.5, unary, image, params)
    e_after = crf_energy(out > 0.5, unary, image, params)
    assert e_after <= e_before + 1e-9


def test_truncated_equals_exact_when_radius_covers_image():
    """With the truncation radius larger than the image diagonal, the
    approximate path is the exact path."""
    rng = np.random.default_rng(8)
    image, s = rand_instance(rng, 6, 6)
    params = CrfParams(iterations=3)
    exact = mean_field_infer(s, image, params)
    trunc = mean_field_infer(s, image, params, radius=20)
    assert np.max(np.abs(exact - trunc)) < 1e-12


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        mean_field_infer(np.zeros((4, 4)), np.zeros((5, 5, 3)), CrfParams())
