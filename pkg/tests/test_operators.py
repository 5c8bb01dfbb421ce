import json

import numpy as np
import pytest

from conftest import seeded_layer
from subdeq.activations import Domain, Relu, ShiftedTanh, Sigmoid, Tanh, power_scale
from subdeq.deq import build_layer
from subdeq.exceptions import (
    ConeViolationError,
    DimensionError,
    DomainViolationError,
    NoCertificateError,
    ParameterError,
)
from subdeq.numerics import RngSpec, log_uniform
from subdeq.operators import (
    AbsLinear,
    Compose,
    Entrywise,
    Linear,
    PlanarCounterexample,
    Power,
    Translation,
    VectorActivation,
    apply,
    certified_degree,
    compose,
    jacobian,
    operator_from_dict,
    subhom_check_at,
    value_and_jvp,
    verify_scaling,
    verify_subhom,
)
from subdeq.activations import Approxmax

GEN = RngSpec(37).generator()


def fd_jacobian(tree, z, h=1e-6):
    """Central finite differences, the independent Jacobian oracle."""
    z = np.asarray(z, dtype=np.float64)
    cols = []
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        cols.append((apply(tree, zp) - apply(tree, zm)) / (2 * h))
    return np.stack(cols, axis=1)


class TestApply:
    def test_identity_linear(self):
        z = GEN.standard_normal(4)
        np.testing.assert_array_equal(apply(Linear(np.eye(4)), z), z)

    def test_translation(self):
        y = np.array([1.0, 2.0])
        np.testing.assert_array_equal(apply(Translation(y), np.array([3.0, 4.0])), [4.0, 6.0])

    def test_constant_collapse(self):
        tree = compose(Entrywise(ShiftedTanh(1.603)), Linear(np.zeros((3, 3))))
        z = GEN.standard_normal(3)
        np.testing.assert_allclose(apply(tree, z), np.full(3, 1.603))

    def test_batched_columns(self):
        W = GEN.standard_normal((3, 3))
        tree = compose(Entrywise(Sigmoid()), Linear(W))
        Z = GEN.standard_normal((3, 5))
        batched = apply(tree, Z)
        for j in range(5):
            np.testing.assert_allclose(batched[:, j], apply(tree, Z[:, j]))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            apply(Linear(np.eye(3)), np.ones(4))
        with pytest.raises(DimensionError):
            Compose(Linear(np.eye(3)), Linear(np.ones((2, 2))))


class TestJacobian:
    def test_linear_is_its_matrix(self):
        W = GEN.standard_normal((3, 3))
        np.testing.assert_array_equal(jacobian(Linear(W), np.ones(3)), W)

    def test_abs_linear_is_abs_matrix(self):
        W = GEN.standard_normal((3, 3))
        np.testing.assert_array_equal(jacobian(AbsLinear(W), np.ones(3)), np.abs(W))

    def test_sigmoid_diagonal(self):
        got = jacobian(Entrywise(Sigmoid()), np.zeros(2))
        np.testing.assert_allclose(got, np.diag([0.25, 0.25]))

    @pytest.mark.parametrize(
        "tree,dim",
        [
            (Linear(GEN.standard_normal((4, 4))), 4),
            (AbsLinear(GEN.standard_normal((4, 4))), 4),
            (Translation(np.abs(GEN.standard_normal(4))), 4),
            (Entrywise(Sigmoid()), 4),
            (Entrywise(ShiftedTanh(1.603)), 4),
            (VectorActivation(Approxmax()), 4),
            (Power(0.7), 4),
        ],
    )
    def test_every_node_kind_matches_finite_differences(self, tree, dim):
        for _ in range(20):
            z = log_uniform((dim,), GEN, 0.1, 10.0)
            ana = jacobian(tree, z)
            num = fd_jacobian(tree, z)
            np.testing.assert_allclose(ana, num, rtol=1e-5, atol=1e-7)

    def test_three_deep_composition_matches_finite_differences(self):
        W1 = GEN.standard_normal((5, 5)) / 3.0
        W2 = GEN.standard_normal((5, 5)) / 3.0
        tree = compose(
            Entrywise(ShiftedTanh(1.603)),
            Linear(W1),
            Entrywise(Sigmoid()),
            Linear(W2),
        )
        for _ in range(100):
            z = GEN.standard_normal(5)
            ana = jacobian(tree, z)
            num = fd_jacobian(tree, z)
            # relative to the Jacobian scale; entrywise ratios are dominated
            # by finite-difference noise wherever an entry is ~0
            assert np.max(np.abs(ana - num)) / np.max(np.abs(num)) < 1e-6

    def test_jvp_consistent_with_jacobian(self):
        W = GEN.standard_normal((4, 4))
        tree = compose(Entrywise(Tanh()), AbsLinear(W), Power(0.9))
        z = log_uniform((4,), GEN, 0.5, 2.0)
        v = GEN.standard_normal(4)
        _, jv = value_and_jvp(tree, z, v)
        np.testing.assert_allclose(jv, jacobian(tree, z) @ v, rtol=1e-12)


class TestHomogeneity:
    @pytest.mark.parametrize("node_cls", [Linear, AbsLinear])
    def test_linear_nodes_scale_exactly(self, node_cls):
        W = GEN.standard_normal((4, 4))
        node = node_cls(W)
        z = log_uniform((4,), GEN)
        for alpha in (0.5, 2.0, 64.0):
            np.testing.assert_allclose(
                apply(node, alpha * z), alpha * apply(node, z), rtol=1e-13
            )


class TestCertifiedDegree:
    def test_eq5_chain(self):
        W = GEN.standard_normal((6, 6))
        y = np.abs(GEN.standard_normal(6))
        tree = compose(Translation(y), Entrywise(ShiftedTanh(1.603)), Linear(W))
        cert = certified_degree(tree)
        assert cert.mu == pytest.approx(0.4993)
        assert not cert.positive_jacobian
        assert cert.differentiable
        assert cert.contraction_bound == pytest.approx(0.9986)

    def test_power_scaled_abs_chain(self):
        W = GEN.standard_normal((6, 6))
        y = np.abs(GEN.standard_normal(6))
        tree = compose(Power(0.99), Entrywise(Tanh()), Translation(y), AbsLinear(W))
        cert = certified_degree(tree)
        assert cert.mu == pytest.approx(0.99)
        assert cert.positive_jacobian and cert.differentiable
        assert cert.contraction_bound == pytest.approx(0.99)

    def test_pure_homogeneous_has_no_certificate(self):
        tree = compose(Linear(np.eye(3)), Linear(np.eye(3)))
        with pytest.raises(NoCertificateError) as err:
            certified_degree(tree)
        assert err.value.homogeneity == pytest.approx(1.0)

    def test_negative_translation_named(self):
        tree = compose(Translation(np.array([-1.0, 0.0])), Entrywise(Sigmoid()), AbsLinear(np.eye(2)))
        with pytest.raises(NoCertificateError, match="translation"):
            certified_degree(tree)

    def test_tanh_needs_positive_prefix(self):
        tree = compose(Entrywise(Tanh()), Linear(GEN.standard_normal((3, 3))))
        with pytest.raises(NoCertificateError, match="tanh"):
            certified_degree(tree)

    def test_linear_after_activation_refused(self):
        tree = compose(Linear(np.eye(2)), Entrywise(Sigmoid()), AbsLinear(np.eye(2)))
        with pytest.raises(NoCertificateError, match="linear"):
            certified_degree(tree)

    def test_bare_activation_returns_catalog_record(self):
        cert = certified_degree(Entrywise(ShiftedTanh(1.25)))
        assert cert.mu == 0.9992
        assert cert.domain is Domain.ALL_REALS

    def test_power_after_activation_multiplies(self):
        tree = compose(Power(0.5), Entrywise(Sigmoid()), AbsLinear(np.abs(GEN.standard_normal((3, 3))) + 0.1))
        assert certified_degree(tree).mu == pytest.approx(0.5)


class TestDegreeCalculusSoundness:
    """Whenever the calculus grants mu, the sampled verifier agrees."""

    @pytest.mark.parametrize("variant", ["eq5", "abs-shift12", "abs-power"])
    def test_layer_trees_verify_at_granted_degree(self, variant):
        cfg, x = seeded_layer(seed=5, n=20, d=6, variant=variant)
        layer = build_layer(cfg)
        tree = layer.operator_tree(layer.injection(x))
        cert = layer.certificate
        report = verify_subhom(tree, cert.mu, cert.domain, 10_000, RngSpec(17))
        assert report.passed, f"{variant}: violation {report.max_violation}"


class TestVerifiers:
    def test_domain_violation_reported(self):
        # tanh goes negative on negative inputs, so F > 0 fails on all-reals
        with pytest.raises(DomainViolationError):
            verify_subhom(Entrywise(Tanh()), 1.0, Domain.ALL_REALS, 100, RngSpec(2), dim=1)

    def test_zero_weight_layer_passes_trivially(self):
        cfg, x = seeded_layer(seed=6, n=8, d=4)
        cfg_zero = type(cfg)(
            weights=np.zeros((8, 8)),
            injection_weights=cfg.injection_weights,
            injection_bias=cfg.injection_bias,
            injection_activation=cfg.injection_activation,
            sigma2=cfg.sigma2,
        )
        layer = build_layer(cfg_zero)
        tree = layer.operator_tree(layer.injection(x))
        report = verify_subhom(tree, layer.certificate.mu, Domain.POSITIVE_OPEN, 2_000, RngSpec(3))
        assert report.passed
        assert report.max_violation <= 0.0  # the Jacobian term vanishes

    def test_scaling_lambda_below_one_rejected(self):
        with pytest.raises(ParameterError):
            verify_scaling(Entrywise(Sigmoid()), 1.0, lambda_grid=(0.5, 2.0), dim=1)

    def test_scaling_abs_tanh_layer(self):
        W = GEN.standard_normal((5, 5))
        tree = compose(Entrywise(Tanh()), AbsLinear(W))
        report = verify_scaling(tree, 1.0, lambda_grid=(1.0, 2.0, 10.0), rng=RngSpec(4))
        assert report.passed

    def test_scaling_homogeneous_equality(self):
        tree = AbsLinear(np.abs(GEN.standard_normal((4, 4))) + 0.05)
        report = verify_scaling(tree, 1.0, lambda_grid=(1.0, 3.0), rng=RngSpec(5))
        assert report.passed
        assert abs(report.max_violation) < 1e-12  # equality up to rounding

    def test_report_invariant(self):
        report = verify_subhom(
            Entrywise(ShiftedTanh(1.603)), 0.4993, Domain.ALL_REALS, 500, RngSpec(6), dim=1
        )
        assert report.passed == (report.max_violation <= report.tolerance)


class TestCounterexampleRegression:
    """A 1-homogeneous map that defeats the strong inequality.

    At z = (1, 2) the exact values are F = (2/5, 0) and |F'||z| = (22/25, 0);
    Euler's identity makes the plain inequality an equality there.
    """

    def setup_method(self):
        self.map = PlanarCounterexample()
        self.z = np.array([1.0, 2.0])

    def test_plain_subhom_holds_by_euler(self):
        lhs, values, slack = subhom_check_at(self.map, self.z, 1.0, strong=False)
        np.testing.assert_allclose(lhs, values, atol=1e-15)
        assert np.all(slack >= -1e-15)

    def test_strong_subhom_fails_with_exact_values(self):
        lhs, values, slack = subhom_check_at(self.map, self.z, 1.0, strong=True)
        np.testing.assert_allclose(lhs, [22.0 / 25.0, 0.0], atol=1e-10)
        np.testing.assert_allclose(values, [2.0 / 5.0, 0.0], atol=1e-10)
        assert slack[0] < 0.0  # |F'||z| exceeds mu F in the first component

    def test_jacobian_against_finite_differences(self):
        num = fd_jacobian(self.map, self.z)
        np.testing.assert_allclose(self.map.jacobian(self.z), num, rtol=1e-6, atol=1e-9)

    def test_one_homogeneous(self):
        for alpha in (0.5, 2.0, 7.0):
            np.testing.assert_allclose(
                self.map.apply(alpha * self.z), alpha * self.map.apply(self.z), rtol=1e-12
            )


class TestSerialization:
    def test_round_trip_preserves_semantics(self):
        W = GEN.standard_normal((4, 4))
        y = np.abs(GEN.standard_normal(4))
        tree = compose(
            Power(0.9),
            Entrywise(power_scale(Tanh(), 0.95)),
            Translation(y),
            AbsLinear(W),
        )
        payload = json.dumps(tree.to_dict())
        rebuilt = operator_from_dict(json.loads(payload))
        z = log_uniform((4,), GEN, 0.5, 2.0)
        np.testing.assert_allclose(apply(rebuilt, z), apply(tree, z), rtol=1e-15)
        assert certified_degree(rebuilt).mu == pytest.approx(certified_degree(tree).mu)

    def test_vector_activation_round_trip(self):
        tree = compose(VectorActivation(Approxmax()), AbsLinear(np.abs(GEN.standard_normal((3, 3))) + 0.1))
        rebuilt = operator_from_dict(tree.to_dict())
        z = log_uniform((3,), GEN)
        np.testing.assert_allclose(apply(rebuilt, z), apply(tree, z))

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            operator_from_dict({"kind": "conv2d"})


class TestNodeValidation:
    def test_power_range(self):
        with pytest.raises(ParameterError):
            Power(1.5)

    def test_power_off_cone(self):
        with pytest.raises(ConeViolationError):
            apply(Power(0.5), np.array([1.0, -1.0]))

    def test_nonfinite_matrix(self):
        with pytest.raises(ParameterError):
            Linear(np.array([[np.inf, 0.0], [0.0, 1.0]]))

    def test_entrywise_rejects_approxmax(self):
        with pytest.raises(ParameterError):
            Entrywise(Approxmax())
        with pytest.raises(ParameterError):
            VectorActivation(Sigmoid())
