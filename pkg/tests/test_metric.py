import math

import numpy as np
import pytest

from conftest import seeded_layer
from subdeq.deq import build_layer
from subdeq.exceptions import ConeViolationError, DimensionError, ParameterError
from subdeq.metric import (
    NormalizationSpec,
    contraction_probe,
    normalize,
    normalize_columns,
    thompson_distance,
)
from subdeq.numerics import RngSpec, log_uniform

INF_SPEC = NormalizationSpec(p=math.inf)


class TestThompsonDistance:
    def test_identity(self):
        v = np.array([0.5, 2.0, 7.0])
        assert thompson_distance(v, v) == 0.0

    def test_log_gap(self):
        assert thompson_distance([1.0, 1.0], [math.e, 1.0]) == pytest.approx(1.0)

    def test_scaling_invariance(self):
        gen = RngSpec(1).generator()
        x = log_uniform((6,), gen)
        y = log_uniform((6,), gen)
        base = thompson_distance(x, y)
        for alpha in (0.25, 3.0, 100.0):
            assert thompson_distance(alpha * x, alpha * y) == pytest.approx(base, rel=1e-12)

    def test_cone_violation(self):
        with pytest.raises(ConeViolationError):
            thompson_distance([1.0, 0.0], [1.0, 1.0])
        with pytest.raises(ConeViolationError):
            thompson_distance([1.0, -2.0], [1.0, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            thompson_distance([1.0], [1.0, 2.0])

    def test_metric_axioms_on_sampled_triples(self):
        gen = RngSpec(2).generator()
        for _ in range(200):
            x, y, z = (log_uniform((5,), gen) for _ in range(3))
            dxy = thompson_distance(x, y)
            assert dxy == pytest.approx(thompson_distance(y, x), abs=1e-14)
            assert dxy <= thompson_distance(x, z) + thompson_distance(z, y) + 1e-10
            assert thompson_distance(x, x) <= 1e-12

    def test_matrix_distance_is_max_over_columns(self):
        gen = RngSpec(3).generator()
        X = log_uniform((4, 6), gen)
        Y = log_uniform((4, 6), gen)
        per_column = max(thompson_distance(X[:, j], Y[:, j]) for j in range(6))
        assert thompson_distance(X, Y) == pytest.approx(per_column, rel=1e-15)


class TestNormalize:
    def test_sup_norm_example(self):
        np.testing.assert_allclose(normalize([2.0, 4.0], INF_SPEC), [0.5, 1.0])

    def test_euclidean_example(self):
        np.testing.assert_allclose(normalize([3.0, 4.0], NormalizationSpec(p=2)), [0.6, 0.8])

    def test_idempotent(self):
        gen = RngSpec(4).generator()
        for p in (1.0, 2.0, 7.0, math.inf):
            spec = NormalizationSpec(p=p)
            z = log_uniform((8,), gen)
            once = normalize(z, spec)
            np.testing.assert_allclose(normalize(once, spec), once, rtol=1e-14)

    def test_commutes_with_positive_scaling(self):
        gen = RngSpec(5).generator()
        z = log_uniform((8,), gen)
        spec = NormalizationSpec(p=3.0)
        np.testing.assert_allclose(normalize(2.0 * z, spec), normalize(z, spec), rtol=1e-14)

    def test_slice_postcondition(self):
        gen = RngSpec(6).generator()
        for p in (1.0, 2.5, math.inf):
            spec = NormalizationSpec(p=p)
            out = normalize(log_uniform((9,), gen), spec)
            from subdeq.numerics import pnorm

            assert pnorm(out, p) == pytest.approx(1.0, rel=1e-14)

    def test_cone_violation(self):
        with pytest.raises(ConeViolationError):
            normalize([1.0, 0.0], INF_SPEC)

    def test_rejects_columnwise_scope(self):
        with pytest.raises(ParameterError):
            normalize([1.0, 2.0], NormalizationSpec(p=2, scope="columnwise"))


class TestNormalizeColumns:
    def test_two_column_example(self):
        Z = np.array([[2.0, 10.0], [4.0, 10.0]])
        expected = np.array([[0.5, 1.0], [1.0, 1.0]])
        np.testing.assert_allclose(
            normalize_columns(Z, NormalizationSpec(p=math.inf, scope="columnwise")), expected
        )

    def test_single_column_reduces_to_normalize(self):
        z = np.array([3.0, 4.0])
        spec = NormalizationSpec(p=2, scope="columnwise")
        np.testing.assert_allclose(
            normalize_columns(z[:, None], spec)[:, 0], normalize(z, NormalizationSpec(p=2))
        )

    def test_all_ones_under_p1(self):
        n = 5
        Z = np.ones((n, 3))
        out = normalize_columns(Z, NormalizationSpec(p=1, scope="columnwise"))
        np.testing.assert_allclose(out, np.full((n, 3), 1.0 / n))

    def test_bad_column_is_named(self):
        Z = np.ones((3, 4))
        Z[1, 2] = -1.0
        with pytest.raises(ConeViolationError, match="column 2"):
            normalize_columns(Z, NormalizationSpec(p=2, scope="columnwise"))


class TestNormalizationSpecSerde:
    def test_round_trip_inf(self):
        spec = NormalizationSpec(p=math.inf, scope="columnwise")
        assert spec.to_dict() == {"p": "inf", "scope": "columnwise"}
        assert NormalizationSpec.from_dict(spec.to_dict()) == spec

    def test_round_trip_finite(self):
        spec = NormalizationSpec(p=10.0)
        assert NormalizationSpec.from_dict(spec.to_dict()) == spec

    def test_validation(self):
        with pytest.raises(ParameterError):
            NormalizationSpec(p=0.5)
        with pytest.raises(ParameterError):
            NormalizationSpec(p=2, scope="rowwise")


class TestContractionProbe:
    def test_identity_then_normalize_is_nonexpansive_on_slice(self):
        spec = NormalizationSpec(p=math.inf)

        def G(z):
            return normalize(z, spec)

        report = contraction_probe(
            G, 400, 2, RngSpec(7), mu=1.0, positive_jacobian=True, slice_spec=spec
        )
        assert report.passed
        assert report.max_ratio <= 1.0 + 1e-9

    def test_eq5_layer_within_general_bound(self):
        cfg, x = seeded_layer(seed=42, n=60, d=30)
        layer = build_layer(cfg)
        G = layer.equilibrium_map(x)
        cert = layer.certificate
        report = contraction_probe(
            G, 1000, cfg.width, RngSpec(8), cert.mu, False, slice_spec=cfg.normalization
        )
        assert report.passed
        assert report.bound_used == pytest.approx(2 * cert.mu)

    def test_positive_jacobian_layer_within_sharp_bound(self):
        cfg, x = seeded_layer(seed=43, n=60, d=30, variant="abs-power")
        layer = build_layer(cfg)
        report = contraction_probe(
            layer.equilibrium_map(x),
            1000,
            cfg.width,
            RngSpec(9),
            layer.certificate.mu,
            True,
            slice_spec=cfg.normalization,
        )
        assert report.passed
        assert report.bound_used == pytest.approx(0.99)

    def test_positive_jacobian_bound_holds_even_off_slice(self):
        # with an entrywise nonnegative Jacobian the mu bound covers the
        # whole cone, not just the slice
        cfg, x = seeded_layer(seed=44, n=40, d=20, variant="abs-power")
        layer = build_layer(cfg)
        report = contraction_probe(
            layer.equilibrium_map(x), 500, cfg.width, RngSpec(10), layer.certificate.mu, True
        )
        assert report.passed

    def test_general_weights_amplify_off_slice(self):
        """Off the slice, plain subhomogeneity does not bound the ratios: it
        controls |J z| but not |J| |z|, and signed weights can amplify far
        beyond 2 mu. This pins the reason probes project onto the slice."""
        cfg, x = seeded_layer(seed=42, n=60, d=30)
        layer = build_layer(cfg)
        report = contraction_probe(
            layer.equilibrium_map(x), 300, cfg.width, RngSpec(11), layer.certificate.mu, False
        )
        assert not report.passed
        assert report.max_ratio > 1.0

    def test_cone_violation_reports_input(self):
        def G(z):
            out = np.array(z)
            out[0] = -1.0
            return out

        with pytest.raises(ConeViolationError, match="positive cone"):
            contraction_probe(G, 10, 3, RngSpec(12), 1.0, False)

    def test_near_pairs_excluded(self):
        spec = NormalizationSpec(p=math.inf)

        def G(z):
            return normalize(z, spec)

        # in one dimension every slice point is exactly (1,), so all pairs
        # are coincident: they must be excluded (not divided by), and an
        # empty probe is an error rather than a vacuous pass
        with pytest.raises(ParameterError, match="near-coincident"):
            contraction_probe(G, 50, 1, RngSpec(13), 1.0, True, slice_spec=spec)
