import numpy as np
import pytest

from adaptmhe.model import ConstraintSets, Jacobians, SystemModel
from adaptmhe.monitor import MonitorConfig, is_observable, observability_gramian


class _Window:
    def __init__(self, Nt, n_x, n_z, n_u=0, n_wp=1):
        self.x = np.zeros((Nt + 1, n_x))
        self.z = np.zeros((Nt + 1, n_z))
        self.u = np.zeros((Nt, n_u))
        self.w = np.zeros((Nt, n_wp))


def _const_sens_model(dfdz):
    dfdz = np.atleast_2d(np.asarray(dfdz, dtype=float))
    n_x, n_z = dfdz.shape
    return SystemModel(
        n_x=n_x, n_z=n_z, n_u=0, n_w_proc=1, n_w_meas=0, n_y=1,
        f=lambda x, z, u, w: x, g=lambda z, u, w: z,
        h=lambda x, z, u, w: x[:1],
        constraints=ConstraintSets.unbounded(n_x, n_z, 0, 1),
        jacobians=Jacobians(f_z=lambda x, z, u, w: dfdz),
    )


def test_scalar_unrolled_recursion():
    # Phi = 0, C = 1, df/dz = b constant, Nt = 3:
    #   Y: 0, b, b, b  ->  O = mu^3 b^2 + mu^2 b^2
    b, mu = 0.7, 0.95
    cfg = MonitorConfig(mu_mon=mu, Phi=np.array([[0.0]]), C=np.array([[1.0]]), alpha=1e-4)
    out = observability_gramian(cfg, _const_sens_model([[b]]), _Window(3, 1, 1))
    assert out.alpha_t == pytest.approx(b ** 2 * (mu ** 3 + mu ** 2), abs=1e-12)


def test_zero_sensitivity_gives_zero_alpha():
    cfg = MonitorConfig.default(n_x=1, C=np.array([[1.0]]))
    out = observability_gramian(cfg, _const_sens_model([[0.0]]), _Window(5, 1, 1))
    assert out.alpha_t == 0.0
    assert not is_observable(out, 1e-12)


def test_threshold_boundary_inclusive():
    b, mu = 1.0, 0.5
    cfg = MonitorConfig(mu_mon=mu, Phi=np.array([[0.0]]), C=np.array([[1.0]]), alpha=1e-4)
    out = observability_gramian(cfg, _const_sens_model([[b]]), _Window(2, 1, 1))
    assert is_observable(out, out.alpha_t)
    assert not is_observable(out, np.nextafter(out.alpha_t, np.inf))


def test_gramian_psd_and_c_scaling():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n_x, n_z = rng.integers(1, 4), rng.integers(1, 3)
        dfdz = rng.normal(size=(n_x, n_z))
        C = rng.normal(size=(1, n_x))
        Phi = 0.4 * np.eye(n_x)
        Nt = int(rng.integers(2, 7))
        cfg1 = MonitorConfig(mu_mon=0.9, Phi=Phi, C=C, alpha=1e-6)
        cfg2 = MonitorConfig(mu_mon=0.9, Phi=Phi, C=2.0 * C, alpha=1e-6)
        m = _const_sens_model(dfdz)
        win = _Window(Nt, n_x, n_z)
        o1 = observability_gramian(cfg1, m, win)
        o2 = observability_gramian(cfg2, m, win)
        assert np.all(np.linalg.eigvalsh(o1.O) >= -1e-12)
        assert np.allclose(o2.O, 4.0 * o1.O, atol=1e-10)
        assert o2.alpha_t == pytest.approx(4.0 * o1.alpha_t, rel=1e-9, abs=1e-12)


def test_appended_step_discounts_existing_terms_by_mu():
    # with Phi = 0, growing the window re-discounts every existing term by
    # mu, so alpha never shrinks by more than that factor
    b, mu = 0.3, 0.8
    cfg = MonitorConfig(mu_mon=mu, Phi=np.array([[0.0]]), C=np.array([[1.0]]), alpha=1e-9)
    model_b = _const_sens_model([[b]])
    o3 = observability_gramian(cfg, model_b, _Window(3, 1, 1))
    o4 = observability_gramian(cfg, model_b, _Window(4, 1, 1))
    # Y-sequence 0, b, b, b: O4 = mu*O3 + mu^2 b^2 (the newest term)
    assert o4.alpha_t == pytest.approx(mu * o3.alpha_t + mu ** 2 * b ** 2, abs=1e-15)
    assert o4.alpha_t >= mu * o3.alpha_t


def test_config_validation():
    C = np.array([[1.0]])
    with pytest.raises(ValueError, match="mu_mon"):
        MonitorConfig(mu_mon=1.0, Phi=np.array([[0.0]]), C=C, alpha=1e-4)
    with pytest.raises(ValueError, match="Schur"):
        MonitorConfig(mu_mon=0.9, Phi=np.array([[1.0]]), C=C, alpha=1e-4)
    with pytest.raises(ValueError, match="alpha"):
        MonitorConfig(mu_mon=0.9, Phi=np.array([[0.0]]), C=C, alpha=0.0)
