"""Tests for the dense network core."""

import sys
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest
from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from model_triage.errors import DivergenceError, ShapeError
from model_triage.nn import (
    Activation,
    LabeledDataset,
    LayerSpec,
    Model,
    NetworkSpec,
    TrainConfig,
    accuracy,
    forward_capture,
    gradient_check,
    init_model,
    layer_forward,
    parameter_gradients,
    predict,
    predict_batch,
    softmax,
    train,
    train_with_history,
)


def _fixed_output_model(probabilities):
    """A model whose output is ``probabilities`` for every input."""
    spec = NetworkSpec.dense(2, [2], len(probabilities))
    return Model(
        spec,
        (np.ones((2, 2)), np.zeros((len(probabilities), 2))),
        (np.zeros(2), np.log(np.asarray(probabilities, dtype=np.float64))),
    )


class TestSoftmax:
    """Tests for the safe softmax."""

    def test_equal_logits_give_uniform(self):
        """Equal logits produce a uniform distribution."""
        np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]), [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    def test_known_values(self):
        """Matches hand-computed values."""
        np.testing.assert_allclose(
            softmax([1.0, 2.0, 3.0]), [0.09003057, 0.24472847, 0.66524096], atol=1e-8
        )

    def test_large_logits_do_not_overflow(self):
        """Large logits stay finite."""
        result = softmax([1000.0, 0.0])
        assert np.all(np.isfinite(result))
        np.testing.assert_allclose(result, [1.0, 0.0], atol=1e-12)

    def test_empty_vector_rejected(self):
        """An empty vector is an error."""
        with pytest.raises(ValueError):
            softmax([])

    @pytest.mark.parametrize("logits", [[float("nan"), 1.0], [float("inf"), 0.0], [0.0, -float("inf")]])
    def test_non_finite_rejected(self, logits):
        """NaN and Inf inputs are errors."""
        with pytest.raises(ValueError):
            softmax(logits)

    def test_outputs_are_probability_vectors(self, rng):
        """Every output sums to 1 with entries in [0, 1]."""
        for _ in range(10_000):
            size = int(rng.integers(1, 11))
            scale = float(rng.uniform(0.0, 1000.0))
            result = softmax(rng.normal(size=size) * scale)
            assert abs(result.sum() - 1.0) <= 1e-9
            assert np.all(result >= 0.0) and np.all(result <= 1.0)

    def test_shift_invariance(self, rng):
        """Adding a constant to every logit leaves the output unchanged."""
        for _ in range(1000):
            logits = rng.uniform(-10.0, 10.0, size=int(rng.integers(1, 8)))
            shift = float(rng.uniform(-100.0, 100.0))
            np.testing.assert_allclose(softmax(logits + shift), softmax(logits), atol=1e-12)

    def test_order_preserving(self, rng):
        """Larger logits get larger probabilities."""
        for _ in range(200):
            logits = rng.permutation(np.arange(6, dtype=np.float64)) * 0.5
            np.testing.assert_array_equal(np.argsort(softmax(logits)), np.argsort(logits))


class TestLayerForward:
    """Tests for a single dense layer."""

    def test_identity_layer(self):
        """Identity weights with zero bias return the input."""
        result = layer_forward(np.eye(2), np.zeros(2), Activation.IDENTITY, np.array([1.0, 2.0]))
        np.testing.assert_array_equal(result, [1.0, 2.0])

    def test_relu_clamps_negatives(self):
        """ReLU zeroes negative pre-activations."""
        result = layer_forward(np.eye(2), np.zeros(2), Activation.RELU, np.array([1.0, -2.0]))
        np.testing.assert_array_equal(result, [1.0, 0.0])

    def test_softmax_of_zero_weights_is_uniform(self):
        """Zero weights feed equal logits into softmax."""
        result = layer_forward(np.zeros((2, 3)), np.zeros(2), Activation.SOFTMAX, np.array([5.0, 1.0, 2.0]))
        np.testing.assert_allclose(result, [0.5, 0.5])

    def test_accepts_batches(self):
        """A 2-D input is a batch of row vectors."""
        result = layer_forward(np.eye(2), np.ones(2), "identity", np.array([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(result, [[2.0, 3.0], [4.0, 5.0]])

    def test_width_mismatch_raises(self):
        """Input width must match the weight matrix."""
        with pytest.raises(ShapeError):
            layer_forward(np.eye(2), np.zeros(2), Activation.RELU, np.array([1.0, 2.0, 3.0]))

    def test_bias_mismatch_raises(self):
        """Bias length must match the output width."""
        with pytest.raises(ShapeError):
            layer_forward(np.eye(2), np.zeros(3), Activation.RELU, np.array([1.0, 2.0]))


class TestNetworkSpec:
    """Tests for structural validation of network specs."""

    def test_dense_builder(self):
        """dense() chains widths and ends in a softmax layer."""
        spec = NetworkSpec.dense(4, [8, 6], 3)
        assert spec.layer_count == 3
        assert spec.hidden_count == 2
        assert spec.input_width == 4
        assert [layer.output_width for layer in spec.layers] == [8, 6, 3]
        assert spec.layers[-1].activation is Activation.SOFTMAX

    def test_broken_chain_rejected(self):
        """Adjacent layers must agree on width."""
        with pytest.raises(ValidationError):
            NetworkSpec(
                layers=(
                    LayerSpec(input_width=2, output_width=4),
                    LayerSpec(input_width=5, output_width=2, activation=Activation.SOFTMAX),
                ),
                class_count=2,
            )

    def test_hidden_softmax_rejected(self):
        """Softmax is only allowed on the output layer."""
        with pytest.raises(ValidationError):
            NetworkSpec.dense(2, [3], 2, activation=Activation.SOFTMAX)

    def test_output_must_be_softmax(self):
        """The final layer must use softmax."""
        with pytest.raises(ValidationError):
            NetworkSpec(
                layers=(
                    LayerSpec(input_width=2, output_width=4),
                    LayerSpec(input_width=4, output_width=2),
                ),
                class_count=2,
            )

    def test_needs_a_hidden_layer(self):
        """A single layer is not a network we can probe."""
        with pytest.raises(ValidationError):
            NetworkSpec(
                layers=(LayerSpec(input_width=2, output_width=2, activation=Activation.SOFTMAX),),
                class_count=2,
            )

    def test_output_width_matches_class_count(self):
        """The output width is the class count."""
        with pytest.raises(ValidationError):
            NetworkSpec(
                layers=(
                    LayerSpec(input_width=2, output_width=4),
                    LayerSpec(input_width=4, output_width=3, activation=Activation.SOFTMAX),
                ),
                class_count=2,
            )


class TestLabeledDataset:
    """Tests for dataset invariants."""

    def test_label_out_of_range(self):
        """Labels must lie in [0, class_count)."""
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((2, 2)), np.array([0, 2]), 2)

    def test_non_finite_inputs(self):
        """NaN inputs are rejected."""
        with pytest.raises(ValueError):
            LabeledDataset(np.array([[np.nan, 0.0]]), np.array([0]), 2)

    def test_label_count_mismatch(self):
        """One label per case."""
        with pytest.raises(ShapeError):
            LabeledDataset(np.zeros((3, 2)), np.array([0, 1]), 2)

    def test_subset_keeps_case_ids(self):
        """Subsets remember where cases came from."""
        data = LabeledDataset(np.arange(8.0).reshape(4, 2), np.array([0, 1, 0, 1]), 2)
        part = data.subset([1, 3])
        np.testing.assert_array_equal(part.case_ids, [1, 3])
        np.testing.assert_array_equal(part.labels, [1, 1])

    def test_arrays_are_read_only(self):
        """Datasets cannot be mutated in place."""
        data = LabeledDataset(np.zeros((2, 2)), np.array([0, 1]), 2)
        with pytest.raises(ValueError):
            data.inputs[0, 0] = 1.0


class TestForwardAndPredict:
    """Tests for layer capture and prediction."""

    def test_capture_has_one_output_per_layer(self):
        """forward_capture returns n vectors, the last a probability vector."""
        model = init_model(NetworkSpec.dense(4, [5, 3], 2), seed=1)
        outputs = forward_capture(model, np.ones(4))
        assert [o.shape for o in outputs] == [(5,), (3,), (2,)]
        assert abs(outputs[-1].sum() - 1.0) <= 1e-12

    def test_identity_hidden_layer(self):
        """With identity weights a ReLU layer passes non-negative input through."""
        spec = NetworkSpec.dense(3, [3], 2)
        model = Model(spec, (np.eye(3), np.ones((2, 3))), (np.zeros(3), np.zeros(2)))
        case = np.array([0.5, 1.5, 2.0])
        np.testing.assert_array_equal(forward_capture(model, case)[0], case)

    def test_last_capture_equals_predict(self, rng):
        """The final captured output is exactly the prediction."""
        model = init_model(NetworkSpec.dense(3, [4, 4], 3), seed=5)
        for _ in range(20):
            case = rng.normal(size=3)
            np.testing.assert_array_equal(forward_capture(model, case)[-1], predict(model, case).probabilities)

    def test_folding_layers_reproduces_predict(self, rng):
        """Applying layer_forward layer by layer gives predict's output."""
        model = init_model(NetworkSpec.dense(3, [4, 2], 2), seed=2)
        case = rng.normal(size=3)
        current = case
        for layer, w, b in zip(model.spec.layers, model.weights, model.biases):
            current = layer_forward(w, b, layer.activation, current)
        np.testing.assert_array_equal(current, predict(model, case).probabilities)

    def test_wrong_width_raises(self):
        """The case width must match the input layer."""
        model = init_model(NetworkSpec.dense(3, [4], 2), seed=0)
        with pytest.raises(ShapeError):
            forward_capture(model, np.ones(4))

    def test_argmax_prediction(self):
        """The predicted class is the most likely one."""
        model = _fixed_output_model([0.1, 0.7, 0.2])
        assert predict(model, np.zeros(2)).predicted_class == 1

    def test_ties_pick_lowest_index(self):
        """Ties resolve to the lowest class index."""
        model = _fixed_output_model([0.5, 0.5])
        assert predict(model, np.zeros(2)).predicted_class == 0

    def test_prediction_is_deterministic(self, rng):
        """Repeated calls return identical results."""
        model = init_model(NetworkSpec.dense(3, [4], 3), seed=9)
        case = rng.normal(size=3)
        first, second = predict(model, case), predict(model, case)
        np.testing.assert_array_equal(first.probabilities, second.probabilities)
        assert first.predicted_class == second.predicted_class

    def test_batch_agrees_with_single(self, rng):
        """predict_batch matches per-case prediction."""
        model = init_model(NetworkSpec.dense(3, [4], 3), seed=4)
        cases = rng.normal(size=(10, 3))
        singles = [predict(model, case) for case in cases]
        batch = predict_batch(model, cases)
        assert batch.shape == (10, 3)
        np.testing.assert_allclose(batch, [p.probabilities for p in singles], rtol=0, atol=1e-12)
        np.testing.assert_array_equal(np.argmax(batch, axis=1), [p.predicted_class for p in singles])


class TestTrain:
    """Tests for mini-batch SGD training."""

    def test_blobs_are_linearly_separable(self, blobs, linear_oracle):
        """The blob fixture is solvable by a linear classifier."""
        assert linear_oracle(blobs) >= 0.99

    def test_learns_separable_blobs(self, blobs, fast_cfg):
        """A small network fits two separated blobs."""
        model = train(NetworkSpec.dense(2, [8], 2), blobs, fast_cfg)
        assert accuracy(model, blobs) >= 0.95

    def test_loss_decreases(self, blobs, fast_cfg):
        """The last epoch's loss is below the first."""
        run = train_with_history(NetworkSpec.dense(2, [8], 2), blobs, fast_cfg)
        assert len(run.epoch_losses) == fast_cfg.epochs
        assert run.epoch_losses[-1] < run.epoch_losses[0]

    def test_same_seed_is_bit_identical(self, blobs, fast_cfg):
        """Training is a pure function of its inputs and seed."""
        spec = NetworkSpec.dense(2, [8], 2)
        first, second = train(spec, blobs, fast_cfg), train(spec, blobs, fast_cfg)
        for a, b in zip(first.weights + first.biases, second.weights + second.biases):
            np.testing.assert_array_equal(a, b)

    def test_zero_epochs_rejected(self):
        """epochs must be positive."""
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_empty_dataset_rejected(self, fast_cfg):
        """There is nothing to learn from an empty dataset."""
        empty = LabeledDataset(np.zeros((0, 2)), np.zeros(0), 2)
        with pytest.raises(ValueError):
            train(NetworkSpec.dense(2, [4], 2), empty, fast_cfg)

    def test_batch_larger_than_dataset_rejected(self, blobs):
        """batch_size may not exceed the dataset size."""
        with pytest.raises(ValueError):
            train(NetworkSpec.dense(2, [4], 2), blobs, TrainConfig(batch_size=len(blobs) + 1))

    def test_width_mismatch_rejected(self, blobs, fast_cfg):
        """The network input must match the data width."""
        with pytest.raises(ShapeError):
            train(NetworkSpec.dense(3, [4], 2), blobs, fast_cfg)

    @patch("model_triage.nn.cross_entropy", return_value=float("nan"))
    def test_nan_loss_raises_divergence(self, mock_loss, blobs, fast_cfg):
        """A non-finite epoch loss stops training."""
        with pytest.raises(DivergenceError) as exc_info:
            train(NetworkSpec.dense(2, [4], 2), blobs, fast_cfg)
        assert exc_info.value.epoch == 1
        assert "epoch 1" in str(exc_info.value)


class TestGradientCheck:
    """Tests for the central-difference gradient check."""

    @staticmethod
    def _away_from_kinks(model, case, margin=1e-3):
        current = case
        for layer, w, b in zip(model.spec.layers[:-1], model.weights, model.biases):
            z = w @ current + b
            if np.any(np.abs(z) < margin):
                return False
            current = np.maximum(z, 0.0)
        return True

    def test_random_models_agree(self, rng):
        """Analytic gradients match numeric ones on random small models."""
        for seed in range(20):
            hidden = [int(w) for w in rng.integers(1, 9, size=int(rng.integers(1, 4)))]
            spec = NetworkSpec.dense(int(rng.integers(1, 9)), hidden, int(rng.integers(2, 9)))
            base = init_model(spec, seed)
            model = Model(spec, base.weights, tuple(rng.normal(size=b.shape) * 0.1 for b in base.biases))
            case = rng.normal(size=spec.input_width)
            while not self._away_from_kinks(model, case):
                case = rng.normal(size=spec.input_width)
            label = int(rng.integers(0, spec.class_count))
            assert gradient_check(model, case, label) < 1e-4

    def test_zero_weights(self):
        """An all-zero model still checks out, with zero hidden bias gradients."""
        spec = NetworkSpec.dense(3, [4], 3)
        model = Model(spec, (np.zeros((4, 3)), np.zeros((3, 4))), (np.zeros(4), np.zeros(3)))
        case = np.array([0.3, -0.2, 0.5])
        assert gradient_check(model, case, 1) < 1e-9
        _, grad_b = parameter_gradients(model, case, 1)
        np.testing.assert_array_equal(grad_b[0], np.zeros(4))

    def test_corrupted_gradient_is_caught(self, rng):
        """A wrong analytic gradient produces a large error."""

        def corrupted(model, case, label):
            grad_w, grad_b = parameter_gradients(model, case, label)
            grad_b = [g.copy() for g in grad_b]
            grad_b[-1][0] += 1.0
            return grad_w, grad_b

        model = init_model(NetworkSpec.dense(3, [4], 3), seed=0)
        assert gradient_check(model, rng.normal(size=3), 0, gradient_fn=corrupted) > 1e-2

    @pytest.mark.parametrize("epsilon", [0.0, 0.1, -1e-5])
    def test_epsilon_range(self, epsilon):
        """epsilon must lie in (0, 1e-2]."""
        model = init_model(NetworkSpec.dense(2, [2], 2), seed=0)
        with pytest.raises(ValueError):
            gradient_check(model, np.zeros(2), 0, epsilon)
