import numpy as np
import pytest
from scipy import integrate, stats

from stackkit.geometry import Orientation, Shape
from stackkit.predictor import (
    ConstantPredictor,
    DegenerateDataset,
    LogisticModel,
    NoisyOraclePredictor,
    OraclePredictor,
    PredictorFactory,
    TrainHyper,
    accuracy,
    extract_features,
    feature_matrix,
    fit_logistic,
    interface_features,
    logistic_grad,
    logistic_loss,
    noisy_predict,
    oracle_predict,
    predictor_accuracy,
    sigmoid,
    train_logistic,
)
from stackkit.scenegen import ScenarioSpec, generate, random_stack
from stackkit.stability import Stack, check_stability

CUBE = Shape.cube(1.0)
H = Orientation.HEIGHT_C


def two_cubes(dx):
    return Stack.build([(CUBE, H, 0.0, 0.0), (CUBE, H, dx, 0.0)])


def cube_sphere_cube():
    return Stack.build([(CUBE, H, 0, 0), (Shape.sphere(0.3), Orientation.ONLY, 0, 0), (CUBE, H, 0, 0)])


def test_oracle_examples():
    assert oracle_predict(two_cubes(0.0)) == 1.0
    assert oracle_predict(cube_sphere_cube()) == 0.0
    assert oracle_predict(two_cubes(0.6)) == 0.0


def test_oracle_agrees_with_checker():
    rng = np.random.default_rng(8)
    p = OraclePredictor()
    for _ in range(2000):
        s = random_stack(rng, int(rng.integers(2, 7)))
        assert p.predict(s) == float(check_stability(s).stable)


def test_noisy_zero_sigma_is_oracle():
    assert noisy_predict(two_cubes(0.6), 0.0, 3) == 0.0
    assert noisy_predict(two_cubes(0.1), 0.0, 3) == 1.0


def test_noisy_reproducible_and_bounded():
    s = two_cubes(0.1)
    assert noisy_predict(s, 0.2, 5) == noisy_predict(s, 0.2, 5)
    vals = [noisy_predict(s, 0.5, k) for k in range(200)]
    assert all(0.0 <= v <= 1.0 for v in vals)
    with pytest.raises(ValueError):
        noisy_predict(s, -0.1, 0)


def clamped_gaussian_mean(mu, sigma):
    """E[clip(mu + sigma Z, 0, 1)] by quadrature."""
    f = lambda x: min(1.0, max(0.0, x)) * stats.norm.pdf(x, mu, sigma)
    lo, hi = mu - 12 * sigma, mu + 12 * sigma
    return integrate.quad(f, lo, hi, points=[0.0, 1.0], limit=200)[0]


@pytest.mark.parametrize("dx", [0.1, 0.6])
def test_noisy_monte_carlo_mean(dx):
    s = two_cubes(dx)
    sigma = 0.2
    draws = np.array([noisy_predict(s, sigma, k) for k in range(10_000)])
    want = clamped_gaussian_mean(oracle_predict(s), sigma)
    assert abs(draws.mean() - want) <= 3 * sigma / np.sqrt(10_000)


def test_noisy_predictor_stream():
    a, b = NoisyOraclePredictor(0.2, seed=1), NoisyOraclePredictor(0.2, seed=1)
    s = two_cubes(0.0)
    assert [a.predict(s) for _ in range(5)] == [b.predict(s) for _ in range(5)]
    with pytest.raises(ValueError):
        NoisyOraclePredictor(-1.0)


def test_constant_predictor_clamps():
    assert ConstantPredictor(3.0).predict(two_cubes(0)) == 1.0
    assert ConstantPredictor(0.25).predict(two_cubes(0)) == 0.25


def test_feature_length_and_padding():
    phi = extract_features(two_cubes(0.2))
    assert phi.shape == (20,)
    assert np.all(phi[4:] == 0.0)
    assert phi[0] == pytest.approx(0.3)
    assert phi[1] == 0.0 and phi[2] == pytest.approx(1.0) and phi[3] == 0.0


def test_stable_stack_has_positive_margins():
    sc = generate(ScenarioSpec("cubes", 5, "stable", None, 2))
    rows = interface_features(sc.stack)
    assert np.all(rows[:, 0] > 0) and np.all(rows[:, 1] == 0)


def test_degenerate_interface_flag():
    rows = interface_features(cube_sphere_cube())
    assert rows[0, 3] == 1.0 and rows[0, 0] == 0.0
    assert rows[1, 3] == 1.0 and rows[1, 0] == 0.0


def test_unstable_shortfall_is_negative():
    rows = interface_features(two_cubes(0.6))
    assert rows[0, 0] == pytest.approx(-0.1)
    assert rows[0, 1] == pytest.approx(-0.2)


def test_observation_noise_is_seeded():
    s = two_cubes(0.2)
    a = extract_features(s, 0.1, 4)
    assert np.array_equal(a, extract_features(s, 0.1, 4))
    assert not np.array_equal(a, extract_features(s, 0.1, 5))


def test_too_tall_rejected():
    s = Stack.build([(CUBE, H, 0, 0)] * 7)
    with pytest.raises(ValueError):
        extract_features(s)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 20))
    y = (rng.random(40) < 0.5).astype(float)
    for _ in range(20):
        w = rng.normal(size=20)
        b = float(rng.normal())
        gw, gb = logistic_grad(w, b, X, y, l2=0.3)
        h = 1e-6
        num = np.array([
            (logistic_loss(w + h * e, b, X, y, 0.3) - logistic_loss(w - h * e, b, X, y, 0.3)) / (2 * h)
            for e in np.eye(20)
        ])
        nb = (logistic_loss(w, b + h, X, y, 0.3) - logistic_loss(w, b - h, X, y, 0.3)) / (2 * h)
        assert np.linalg.norm(num - gw) <= 1e-6 * max(np.linalg.norm(gw), 1.0)
        assert abs(nb - gb) <= 1e-6 * max(abs(gb), 1.0)


def test_loss_matches_direct_formula():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(10, 3))
    y = np.array([0, 1] * 5, dtype=float)
    w, b = rng.normal(size=3), 0.4
    p = 1 / (1 + np.exp(-(X @ w + b)))
    direct = -np.sum(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert logistic_loss(w, b, X, y) == pytest.approx(direct, rel=1e-12)


def test_separable_toy_set():
    rng = np.random.default_rng(3)
    m = rng.uniform(-1, 1, size=400)
    m = m[np.abs(m) > 0.05]
    X = m[:, None]
    y = (m < 0).astype(float)
    w, b, trace = fit_logistic(X[:300], y[:300], TrainHyper(epochs=200))
    pred_unstable = X[300:] @ w + b > 0
    assert np.all(pred_unstable == (y[300:] == 1))
    assert trace[-1] < trace[0]


def test_full_batch_trace_non_increasing():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(200, 5))
    y = (X @ np.array([1.0, -2.0, 0.5, 0.0, 0.3]) + 0.3 * rng.normal(size=200) > 0).astype(float)
    _, _, trace = fit_logistic(X, y, TrainHyper(lr=0.1, epochs=100, batch=200, l2=0.0))
    assert np.all(np.diff(trace) <= 1e-12)


def test_single_class_rejected():
    with pytest.raises(DegenerateDataset):
        fit_logistic(np.ones((5, 2)), np.zeros(5))
    with pytest.raises(DegenerateDataset):
        train_logistic([])


@pytest.fixture(scope="module")
def small_data():
    stacks, labels = [], []
    targets = ["stable", "unstable_vcom", "stable", "unstable_vpsf"]
    for k in range(400):
        sc = generate(ScenarioSpec("ccs", 2 + k % 5, targets[k % 4], None, 500 + k))
        stacks.append(sc.stack)
        labels.append(sc.report.stable)
    return stacks, labels


def test_training_learns_the_criterion(small_data):
    stacks, labels = small_data
    model = train_logistic(list(zip(stacks[:300], labels[:300])), TrainHyper(epochs=150))
    assert accuracy(model, stacks[300:], labels[300:]) >= 0.95
    assert predictor_accuracy(model, stacks[300:], labels[300:]) >= 0.95


def test_training_is_deterministic(small_data):
    stacks, labels = small_data
    data = list(zip(stacks[:200], labels[:200]))
    a = train_logistic(data, TrainHyper(epochs=20, seed=7), sigma_obs=0.05, seed=3)
    b = train_logistic(data, TrainHyper(epochs=20, seed=7), sigma_obs=0.05, seed=3)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias and a.loss_trace == b.loss_trace


def test_model_save_load_exact(tmp_path, small_data):
    stacks, labels = small_data
    model = train_logistic(list(zip(stacks[:200], labels[:200])), TrainHyper(epochs=10), sigma_obs=0.1, seed=2)
    model.save(tmp_path / "m.json")
    back = LogisticModel.load(tmp_path / "m.json")
    assert np.array_equal(back.weights, model.weights) and back.bias == model.bias
    assert back.feature_config == model.feature_config
    assert back.loss_trace == model.loss_trace


def test_predict_is_probability_of_stable():
    w = np.zeros(20)
    w[0] = -10.0  # positive margin lowers the unstable logit
    model = LogisticModel(w, 0.0)
    assert model.predict(two_cubes(0.1)) > 0.5
    assert model.predict(two_cubes(0.7)) < 0.5
    phi = extract_features(two_cubes(0.1))
    assert model.predict(two_cubes(0.1)) == pytest.approx(1 - sigmoid(float(phi @ w)))


def test_padding_order_invariance():
    model = LogisticModel(np.arange(20, dtype=float), -1.0)
    phi = extract_features(two_cubes(0.2))
    # absent interfaces are all zero, so permuting them changes nothing
    rows = phi.reshape(5, 4)
    perm = np.concatenate([rows[:1], rows[1:][::-1]]).ravel()
    assert model.predict_features(phi) == model.predict_features(perm)


def test_tall_stack_uses_windows():
    w = np.zeros(20)
    w[0] = -10.0
    model = LogisticModel(w, 0.0)
    tall = Stack.build([(CUBE, H, 0, 0)] * 8)
    assert model.predict(tall) > 0.5
    shifted = Stack.build([(CUBE, H, 0, 0)] * 7 + [(CUBE, H, 0.7, 0)])
    # the failure is in the last window; weights only look at a window's first contact
    w2 = np.zeros(20)
    w2[16] = -10.0
    assert LogisticModel(w2, 0.0).predict(shifted) < 0.5


def test_feature_matrix_rows_independent_seeds():
    s = two_cubes(0.2)
    X = feature_matrix([s, s], 0.1, 0)
    assert not np.array_equal(X[0], X[1])


def test_factory():
    assert isinstance(PredictorFactory("oracle")(0), OraclePredictor)
    assert PredictorFactory("constant", value=0.3)(0).predict(two_cubes(0)) == 0.3
    noisy = PredictorFactory("noisy", sigma_score=0.2)
    s = two_cubes(0.0)
    assert noisy(4).predict(s) == noisy(4).predict(s)
    with pytest.raises(ValueError):
        PredictorFactory("cnn")(0)
    with pytest.raises(ValueError):
        PredictorFactory("logistic")(0)
