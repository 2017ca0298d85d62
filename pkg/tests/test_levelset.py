import numpy as np
import pytest

from ugseg import geodesic
from ugseg.core import RefineConfig
from ugseg.levelset import (
    dirac,
    double_well,
    energy,
    evolve,
    extract_mask,
    gradient_band_mean,
    heaviside,
    init_phi,
    region_stats,
)
from ugseg.metrics import dice


def disk(h, w, cy, cx, r):
    rr, cc = np.mgrid[0:h, 0:w]
    return ((rr - cy) ** 2 + (cc - cx) ** 2 <= r * r)


def test_kernels_basic_identities():
    eps = 1.5
    x = np.linspace(-4, 4, 201)
    assert np.allclose(heaviside(x, eps) + heaviside(-x, eps), 1.0, atol=1e-12)
    assert np.all(dirac(x, eps)[np.abs(x) > eps] == 0.0)
    # double-well minima at 0 and 1
    assert double_well(np.array([0.0]))[0] == pytest.approx(0.0)
    assert double_well(np.array([1.0]))[0] == pytest.approx(0.0, abs=1e-15)
    assert double_well(np.array([0.5]))[0] > 0
    assert double_well(np.array([2.0]))[0] == pytest.approx(0.5)


def test_init_phi_disk():
    mask = disk(64, 64, 32, 32, 10)
    phi = init_phi(mask)
    assert abs(phi[32, 32] - 10) <= 0.5
    # just outside the boundary
    assert -2.0 < phi[32, 43] < 0.0


def test_init_phi_sign_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(10):
        mask = rng.random((16, 16)) > 0.6
        assert np.array_equal(extract_mask(init_phi(mask)), mask.astype(np.uint8))


def test_init_phi_degenerate_masks():
    assert (init_phi(np.zeros((8, 8))) <= 0).all()
    assert (init_phi(np.ones((8, 8))) > 0).all()


def test_extract_mask_constants():
    assert extract_mask(-np.ones((4, 4))).sum() == 0
    assert extract_mask(np.ones((4, 4))).sum() == 16


def test_region_stats():
    mask = disk(32, 32, 16, 16, 8)
    phi = init_phi(mask)
    p = np.where(mask, 0.8, 0.1)
    stats = region_stats(p, phi)
    assert stats.c1 == pytest.approx(0.8)
    assert stats.c2 == pytest.approx(0.1)
    # empty-inside fallback
    stats = region_stats(p, -np.ones((32, 32)))
    assert stats.c1 == 1.0 and stats.c2 == pytest.approx(p.mean())
    # uniform map
    stats = region_stats(np.full((32, 32), 0.3), phi)
    assert stats.c1 == pytest.approx(0.3) and stats.c2 == pytest.approx(0.3)


def test_energy_distance_term_near_zero_on_sdf():
    phi = init_phi(disk(64, 64, 32, 32, 12))
    cfg = RefineConfig()
    e = energy(phi, np.full((64, 64), 0.5), np.full((64, 64), 0.5), cfg)
    # |grad phi| ~ 1 away from the medial axis, so p(|grad phi|) ~ 0
    assert e.e_distance / phi.size < 0.01


def test_energy_user_term_at_half():
    phi = init_phi(disk(32, 32, 16, 16, 6))
    cfg = RefineConfig()
    e = energy(phi, np.full((32, 32), 0.5), np.full((32, 32), 0.5), cfg)
    # H(x) + H(-x) = 1, so -sum log(0.5) = ln 2 per pixel
    assert e.e_user == pytest.approx(np.log(2) * phi.size, rel=1e-12)


def test_energy_region_zero_on_matching_sharp_interface():
    mask = disk(32, 32, 16, 16, 7)
    p = mask.astype(float)
    phi = np.where(mask, 4.0, -4.0)  # sharp: |phi| > epsilon everywhere
    e = energy(phi, p, np.full((32, 32), 0.5), RefineConfig())
    assert e.e_region == pytest.approx(0.0, abs=1e-12)


def test_energy_additivity():
    cfg = RefineConfig()
    phi = init_phi(disk(24, 24, 12, 12, 6))
    rng = np.random.default_rng(1)
    p = rng.random((24, 24))
    eta = 0.2 + 0.6 * rng.random((24, 24))
    e = energy(phi, p, eta, cfg)
    assert e.e_total == pytest.approx(
        cfg.alpha * e.e_region + cfg.beta * e.e_user
        + cfg.lam * e.e_length + cfg.mu * e.e_distance)
    assert e.e_length >= 0 and e.e_distance >= 0


def test_energy_rejects_saturated_eta():
    phi = init_phi(disk(8, 8, 4, 4, 2))
    with pytest.raises(ValueError, match="eta"):
        energy(phi, np.full((8, 8), 0.5), np.ones((8, 8)), RefineConfig())


def test_evolve_recovers_shifted_disk():
    target = disk(64, 64, 32, 32, 12)
    shifted = disk(64, 64, 35, 32, 12)
    cfg = RefineConfig()
    phi = evolve(init_phi(shifted), target.astype(float),
                 np.full((64, 64), 0.5), cfg)
    assert dice(extract_mask(phi), target) >= 0.95


def test_evolve_curvature_shrinks_circle():
    circ = disk(64, 64, 32, 32, 8)
    p = np.full((64, 64), 0.5)  # region term vanishes
    eta = np.full((64, 64), 0.5)  # user term vanishes
    cfg = RefineConfig(max_steps=20)
    phi = init_phi(circ)
    areas = [int(circ.sum())]
    for _ in range(10):
        phi = evolve(phi, p, eta, cfg)
        areas.append(int(extract_mask(phi).sum()))
    assert all(a >= b for a, b in zip(areas, areas[1:]))
    assert areas[-1] < areas[0]


def test_evolve_scribble_projection():
    body = disk(64, 64, 32, 30, 12)
    lobe = disk(64, 64, 32, 45, 6)
    gt = body | lobe
    p = gt.astype(float) * 0.9 + 0.05
    fg = np.zeros((64, 64), dtype=bool)
    fg[30:35, 44:47] = True
    bg = np.zeros((64, 64), dtype=bool)
    bg[5:8, 5:8] = True
    img = 0.25 + 0.5 * gt
    eta = geodesic.scribble_likelihood(img, fg, bg, 1.0, 4.0)
    cfg = RefineConfig()
    phi = evolve(init_phi(body), p, eta, cfg, fg_mask=fg, bg_mask=bg)
    assert (phi[fg] > 0).all()
    assert (phi[bg] <= 0).all()
    assert dice(extract_mask(phi), gt) > dice(body, gt)


def test_no_interaction_neutrality():
    # eta == 0.5 contributes an exactly zero update term
    eta = np.full((32, 32), 0.5)
    assert np.all(np.log(eta) - np.log1p(-eta) == 0.0)
    target = disk(32, 32, 16, 16, 8)
    cfg_b0 = RefineConfig(beta=0.0)
    cfg_b5 = RefineConfig(beta=5.0)
    phi0 = init_phi(disk(32, 32, 17, 16, 8))
    p = target.astype(float)
    a = evolve(phi0, p, eta, cfg_b0)
    b = evolve(phi0, p, eta, cfg_b5)
    assert np.allclose(a, b, atol=1e-12)


def test_band_gradient_after_evolution():
    target = disk(64, 64, 32, 32, 12)
    cfg = RefineConfig()
    phi = evolve(init_phi(disk(64, 64, 35, 33, 11)), target.astype(float),
                 np.full((64, 64), 0.5), cfg)
    assert 0.8 <= gradient_band_mean(phi, cfg.epsilon) <= 1.2


def test_analytic_gradient_matches_finite_differences():
    """The region and user variational derivatives (c1, c2, eta fixed) match
    central finite differences of the discrete energy to <= 1e-3 relative."""
    rng = np.random.default_rng(7)
    cfg = RefineConfig()
    p = rng.random((8, 8))
    eta = 0.1 + 0.8 * rng.random((8, 8))
    phi = rng.uniform(-1.0, 1.0, (8, 8))
    c1, c2 = 0.7, 0.2

    def discrete_energy(ph):
        h_in = heaviside(ph, cfg.epsilon)
        h_out = heaviside(-ph, cfg.epsilon)
        e_r = np.sum((p - c1) ** 2 * h_in + (p - c2) ** 2 * h_out)
        e_u = -np.sum(h_in * np.log(eta) + h_out * np.log(1 - eta))
        return cfg.alpha * e_r + cfg.beta * e_u

    delta = dirac(phi, cfg.epsilon)
    analytic = (cfg.alpha * delta * ((p - c1) ** 2 - (p - c2) ** 2)
                + cfg.beta * delta * (np.log(1 - eta) - np.log(eta)))

    h = 1e-6
    fd = np.zeros_like(phi)
    for r in range(8):
        for c in range(8):
            plus = phi.copy(); plus[r, c] += h
            minus = phi.copy(); minus[r, c] -= h
            fd[r, c] = (discrete_energy(plus) - discrete_energy(minus)) / (2 * h)
    rel = np.abs(analytic - fd).max() / max(np.abs(fd).max(), 1e-12)
    assert rel <= 1e-3


def test_evolve_rejects_unstable_config():
    with pytest.raises(ValueError):
        RefineConfig(mu=0.1, dt=5.0)
