import numpy as np
import pytest

from adaptmhe.certificates import (MARGIN_TOL, IossCertificate, ObservabilityCertificate,
                                   ParamUbebsCertificate, check_ioss, check_ubebs,
                                   membership_E, wnorm, wnorm2)
from adaptmhe.model import Trajectory, simulate_truth
from adaptmhe.systems import toy_certificates, toy_model


def test_weighted_norms():
    M = np.array([[4.0, 0.0], [0.0, 9.0]])
    v = np.array([1.0, 2.0])
    assert wnorm2(v, M) == pytest.approx(40.0)
    assert wnorm(v, M) == pytest.approx(np.sqrt(40.0))


def test_spd_validation():
    with pytest.raises(ValueError, match="positive definite"):
        IossCertificate(P_w=np.array([[0.0]]), W_low=np.eye(1), W_high=np.eye(1),
                        S_w=np.eye(1), Q_w=np.eye(3), R_w=np.eye(1), eta_w=0.5)
    with pytest.raises(ValueError, match="eta_w"):
        IossCertificate(P_w=np.eye(1), W_low=np.eye(1), W_high=np.eye(1),
                        S_w=np.eye(1), Q_w=np.eye(3), R_w=np.eye(1), eta_w=1.0)
    with pytest.raises(ValueError, match="symmetric"):
        ObservabilityCertificate(S_o=np.array([[1.0, 2.0], [0.0, 1.0]]),
                                 P_o=np.eye(2), Q_o=np.eye(2), R_o=np.eye(1), eta_o=0.5)


def test_additive_drift_constructor():
    B_z = np.array([[0.0, 1.0, 0.0]])
    cert = ParamUbebsCertificate.for_additive_drift(B_z, n_z=1)
    assert np.allclose(cert.Q_v, np.diag([0.0, 1.0, 0.0]))
    assert cert.V(np.array([0.7]), np.array([0.2])) == pytest.approx(0.5)


def test_toy_certificates_verify():
    m = toy_model()
    certs = toy_certificates()
    rep_u = check_ubebs(certs.ubebs, m, n_samples=300, rng_seed=1)
    rep_i = check_ioss(certs.ioss, m, n_samples=300, rng_seed=2)
    assert rep_u.ok and rep_i.ok
    assert rep_u.worst_margin >= -MARGIN_TOL
    assert rep_i.worst_margin >= -MARGIN_TOL


def test_invalid_certificate_detected():
    # claiming a faster decay rate than the dynamics support must fail
    m = toy_model()
    certs = toy_certificates()
    io = certs.ioss
    bad = IossCertificate(P_w=io.P_w, W_low=io.W_low, W_high=io.W_high,
                          S_w=1e-8 * np.eye(1), Q_w=1e-8 * np.eye(3),
                          R_w=1e-8 * np.eye(1), eta_w=1e-6)
    rep = check_ioss(bad, m, n_samples=300, rng_seed=3)
    assert not rep.ok
    assert rep.worst_margin < -MARGIN_TOL


def test_report_serialization():
    rep = check_ubebs(toy_certificates().ubebs, toy_model(), n_samples=10, rng_seed=0)
    d = rep.as_dict()
    assert d["ok"] and d["n_samples"] == 10
    assert "ubebs" in rep.as_text()


def _toy_pair(w_a, w_b, x0_a=1.0, x0_b=0.0, z0_a=0.5, z0_b=0.5):
    m = toy_model()
    a = simulate_truth(m, np.array([x0_a]), np.array([z0_a]), None, w_a)
    b = simulate_truth(m, np.array([x0_b]), np.array([z0_b]), None, w_b)
    return a, b


def test_membership_identical_pair():
    w = np.zeros((5, 3))
    a, b = _toy_pair(w, w, x0_b=1.0)
    certs = toy_certificates()
    assert membership_E(certs.obs, (a, b))  # lhs = 0


def test_membership_rejects_unexcited_parameter_difference():
    # identical outputs forced by measurement disturbance cancellation is
    # impossible here; instead: equal everything except z0 with zero output
    # weight contribution small -> craft a clear non-member
    certs = toy_certificates()
    obs = ObservabilityCertificate(S_o=certs.obs.S_o, P_o=certs.obs.P_o,
                                   Q_o=1e-12 * np.eye(3), R_o=1e-12 * np.eye(1),
                                   eta_o=certs.obs.eta_o)
    w = np.zeros((8, 3))
    a, b = _toy_pair(w, w, x0_a=0.0, x0_b=0.0, z0_a=0.7, z0_b=0.2)
    assert not membership_E(obs, (a, b))


def test_membership_requires_equal_lengths():
    w5 = np.zeros((5, 3))
    w6 = np.zeros((6, 3))
    a, _ = _toy_pair(w5, w5)
    _, b = _toy_pair(w6, w6)
    with pytest.raises(ValueError):
        membership_E(toy_certificates().obs, (a, b))
