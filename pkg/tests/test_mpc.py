import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import solve_discrete_are

from fxmpc.control_model import DiscreteModel, build_continuous_model, discretize_zoh
from fxmpc.dynamics import InertiaParams
from fxmpc.errors import ConvergenceError, DimensionError
from fxmpc.mpc import (
    ConstraintSpec,
    MpcConfig,
    ReferenceGovernor,
    condense,
    dare_residual,
    extract_control,
    governor_update,
    lift_reference,
    default_weights,
    terminal_weight_dare,
    update_qp_vectors,
)
from oracles import active_set_enumeration, rollout_cost, standard_tracking_qp

MODEL = discretize_zoh(build_continuous_model(InertiaParams()), 0.5)
CFG = MpcConfig.default(MODEL)


# -- Riccati -----------------------------------------------------------------


def test_dare_scalar_closed_form():
    m = DiscreteModel(np.zeros((1, 1)), np.ones((1, 1)), 1.0)
    assert terminal_weight_dare(m, np.eye(1), np.eye(1))[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_dare_against_scipy_and_residual():
    Q1, _, R = default_weights()
    P = terminal_weight_dare(MODEL, Q1, R)
    ref = solve_discrete_are(MODEL.A, MODEL.B, Q1, R)
    assert np.abs(P - ref).max() <= 1e-8 * np.abs(ref).max()
    assert np.abs(dare_residual(P, MODEL.A, MODEL.B, Q1, R)).max() <= 1e-8 * np.abs(P).max()
    assert np.abs(P - P.T).max() <= 1e-12 * np.abs(P).max()
    assert np.linalg.eigvalsh(P - Q1).min() >= -1e-9 * np.abs(P).max()


def test_dare_convergence_error():
    # unstable and uncontrollable: no stabilizing solution exists
    m = DiscreteModel(np.array([[2.0]]), np.zeros((1, 1)), 1.0)
    with pytest.raises(ConvergenceError):
        terminal_weight_dare(m, np.eye(1), np.eye(1), max_iter=30)


# -- configuration -----------------------------------------------------------


def test_config_validation():
    Q1, Q2, R = default_weights()
    with pytest.raises(ValueError):
        MpcConfig(N=2, Nc=3, Q1=Q1, Q2=Q2, R=R, Pf=Q1, Ts=0.5)
    with pytest.raises(DimensionError):
        MpcConfig(N=10, Nc=2, Q1=np.eye(5), Q2=Q2, R=R, Pf=Q1, Ts=0.5)
    with pytest.raises(ValueError):
        MpcConfig(N=10, Nc=2, Q1=Q1, Q2=Q2, R=np.zeros((3, 3)), Pf=Q1, Ts=0.5)
    bad = Q1.copy()
    bad[0, 1] = 1.0
    with pytest.raises(ValueError):
        MpcConfig(N=10, Nc=2, Q1=bad, Q2=Q2, R=R, Pf=Q1, Ts=0.5)


def test_constraint_validation():
    with pytest.raises(DimensionError):
        ConstraintSpec(np.zeros((2, 6)), np.zeros((1, 3)), [0, 0], [1, 1], ("control", "control"))
    with pytest.raises(ValueError):
        ConstraintSpec(np.zeros((1, 6)), np.zeros((1, 3)), [1], [0], ("control",))
    with pytest.raises(ValueError):
        ConstraintSpec(np.zeros((1, 6)), np.zeros((1, 3)), [0], [1], ("sometimes",))
    with pytest.raises(ValueError):
        ConstraintSpec(np.zeros((1, 6)), np.zeros((1, 3)), [0], [1], ("control",), du_lo=[-1, -1, -1])


# -- condensing --------------------------------------------------------------


@pytest.mark.parametrize("cons,m", [
    (ConstraintSpec.box(u=1.0), 12),
    (ConstraintSpec.box(u=1.0, du=0.5), 24),
    (ConstraintSpec.box(u=1.0, du=0.5, attitude=np.pi / 3, wheel=10.0), 144),
])
def test_qp_dimensions(cons, m):
    qp = condense(MODEL, CFG, cons)
    assert (qp.n, qp.m) == (18, m)
    assert cons.n_dual(CFG.N, CFG.Nc) == m
    np.linalg.cholesky(qp.H)


def test_condense_rejects_wrong_model():
    bad = DiscreteModel(np.eye(4), np.zeros((4, 3)), 0.5)
    with pytest.raises(DimensionError):
        condense(bad, CFG, ConstraintSpec.box())


@pytest.mark.parametrize("virtual", [True, False])
def test_cost_matches_rollout(virtual):
    cfg = MpcConfig.default(MODEL, virtual=virtual)
    qp = condense(MODEL, cfg, ConstraintSpec.box())
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        x = rng.normal(size=6)
        r = rng.normal(size=6)
        up = rng.normal(size=3)
        z = rng.normal(size=qp.n)
        ref = rollout_cost(MODEL.A, MODEL.B, cfg.Q1, cfg.Q2, cfg.R, cfg.Pf, cfg.N, cfg.Nc, z, x, r, up, virtual)
        worst = max(worst, abs(qp.objective(z, x, r, up) - ref) / abs(ref))
    assert worst <= 1e-9


def test_zero_correction_on_reference():
    qp = condense(MODEL, CFG, ConstraintSpec.box())
    x = np.array([0.1, -0.2, 0.05, 0.0, 0.0, 0.0])
    h, _ = update_qp_vectors(qp, x, x, np.zeros(3))
    z = np.linalg.solve(qp.H, -h)
    assert np.abs(z).max() <= 1e-10


def test_input_bound_offsets():
    qp = condense(MODEL, CFG, ConstraintSpec.box(u=1.0))
    rng = np.random.default_rng(0)
    x, r = rng.normal(size=6), rng.normal(size=6)
    _, d = update_qp_vectors(qp, x, r, np.zeros(3))
    assert np.allclose(d, 1.0, rtol=0, atol=1e-15)
    up = np.array([0.3, -0.2, 0.1])
    _, d = update_qp_vectors(qp, x, r, up)
    # rows come in (upper, lower) pairs for each input at k = 0 and k = 1
    expected = np.concatenate([[1 - up[i], 1 + up[i]] for i in range(3)] * 2)
    assert np.allclose(d, expected, rtol=0, atol=1e-15)


def test_update_vectors_are_affine():
    qp = condense(MODEL, CFG, ConstraintSpec.box(u=1.0, du=0.5, wheel=10.0))
    rng = np.random.default_rng(4)
    a = [rng.normal(size=6), rng.normal(size=6), rng.normal(size=3)]
    b = [rng.normal(size=6), rng.normal(size=6), rng.normal(size=3)]
    ha, da = update_qp_vectors(qp, *a)
    hb, db = update_qp_vectors(qp, *b)
    hm, dm = update_qp_vectors(qp, *[0.5 * (u + v) for u, v in zip(a, b)])
    assert np.allclose(hm, 0.5 * (ha + hb), atol=1e-10)
    assert np.allclose(dm, 0.5 * (da + db), atol=1e-12)
    with pytest.raises(DimensionError):
        update_qp_vectors(qp, np.zeros(5), np.zeros(6), np.zeros(3))


def _solve_exact(H, h, D, d):
    z, _, _ = active_set_enumeration(H, h, D, d)
    return z


def test_standard_formulation_matches_independent_oracle():
    cfg = MpcConfig.default(MODEL, virtual=False)
    qp = condense(MODEL, cfg, ConstraintSpec.box(u=1.0))
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.normal(scale=0.3, size=6)
        r = lift_reference(rng.normal(scale=0.3, size=3))
        up = rng.uniform(-0.5, 0.5, 3)
        h, d = update_qp_vectors(qp, x, r, up)
        H2, h2, D2, d2 = standard_tracking_qp(MODEL.A, MODEL.B, cfg.Q1, cfg.R, cfg.Pf, cfg.N, cfg.Nc, x, r, up, 1.0)
        assert np.allclose(qp.H, H2, rtol=1e-10, atol=1e-9)
        assert np.allclose(h, h2, rtol=1e-10, atol=1e-9)
        assert np.allclose(_solve_exact(qp.H, h, qp.D, d), _solve_exact(H2, h2, D2, d2), atol=1e-8)


def test_heavy_virtual_weight_recovers_standard_mpc():
    Q1, _, R = default_weights()
    cfg = MpcConfig(N=10, Nc=2, Q1=Q1, Q2=1e8 * np.eye(6), R=R, Pf=CFG.Pf, Ts=0.5)
    qp = condense(MODEL, cfg, ConstraintSpec.box(u=1.0))
    rng = np.random.default_rng(9)
    for _ in range(10):
        x = rng.normal(scale=0.3, size=6)
        r = lift_reference(rng.normal(scale=0.3, size=3))
        up = rng.uniform(-0.5, 0.5, 3)
        h, d = update_qp_vectors(qp, x, r, up)
        z = _solve_exact(qp.H, h, qp.D, d)
        H2, h2, D2, d2 = standard_tracking_qp(MODEL.A, MODEL.B, Q1, R, CFG.Pf, 10, 2, x, r, up, 1.0)
        z2 = _solve_exact(H2, h2, D2, d2)
        assert np.abs(z[:6] - z2).max() <= 1e-4


# -- reference integrator and helpers ----------------------------------------


def test_governor_examples():
    g = ReferenceGovernor(Ts=0.5)
    rb = np.array([0.1, 0.2, 0.3])
    for _ in range(5):
        assert np.array_equal(governor_update(g, rb, rb), rb)
    g = ReferenceGovernor(Ts=0.5)
    e = np.array([0.01, -0.02, 0.03])
    assert np.allclose(g.update(rb + e, rb), rb - 0.5 * e, rtol=0, atol=1e-16)
    g = ReferenceGovernor(Ts=0.5, windup_limit=0.2)
    for _ in range(100):
        r = g.update(rb + 1.0, rb)
    assert np.allclose(r, rb - 0.2)
    g.reset()
    assert np.array_equal(g.accumulated_error, np.zeros(3))
    with pytest.raises(ValueError):
        ReferenceGovernor(Ts=0.5, windup_limit=-1.0)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=60), st.floats(0.0, 1.0), st.floats(0.01, 2.0))
def test_governor_clamp_invariant(errors, limit, gain):
    g = ReferenceGovernor(Ts=0.5, integral_gain=gain, windup_limit=limit)
    for e in errors:
        r = g.update(np.full(3, e), np.zeros(3))
        assert np.all(np.abs(g.accumulated_error) <= limit)
        assert np.array_equal(r, -g.accumulated_error)


def test_lift_reference():
    assert np.array_equal(lift_reference(np.zeros(3)), np.zeros(6))
    assert lift_reference([0.08, -0.03, -0.1]).tolist() == [0.08, -0.03, -0.1, 0, 0, 0]
    r = np.array([0.3, -0.1, 0.2])
    assert np.array_equal(lift_reference(2.5 * r), 2.5 * lift_reference(r))
    with pytest.raises(DimensionError):
        lift_reference([1.0, 2.0])


def test_extract_control():
    assert np.array_equal(extract_control(np.zeros(18), [0.1, 0.2, 0.3]), [0.1, 0.2, 0.3])
    z = np.zeros(18)
    z[0] = 0.1
    assert np.array_equal(extract_control(z, np.zeros(3)), [0.1, 0.0, 0.0])
