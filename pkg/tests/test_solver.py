import numpy as np
import pytest

import kerneldebias as kd
from kerneldebias.dependence import dep_features
from kerneldebias.solver import constraint_matrix


def make_problem(rng, n=30, dim=10, classes=2):
    x = rng.standard_normal((n, 4))
    lx = kd.rff_factor(x, kd.KernelConfig(1.0 + rng.random(), dim, int(rng.integers(1 << 16))))
    ly = kd.label_factor(kd.LabelVector.from_values(rng.integers(0, classes, n), classes))
    ls = kd.label_factor(kd.LabelVector.from_values(rng.integers(0, classes, n), classes))
    return x, lx, ly, ls


def direct_objective(weights, lx, ly, ls, spec):
    z = lx.matrix @ weights.T
    value = dep_features(z, ly.matrix) - spec.tau * dep_features(z, ls.matrix)
    if spec.z_other is not None and spec.tau_z:
        value += spec.tau_z * dep_features(z, spec.z_other)
    return value


def random_feasible_weights(rng, constraint, r, count):
    """C-orthonormal bases: rows of C^{-1/2} Q with Q a random orthonormal D x r."""
    vals, vecs = np.linalg.eigh(constraint)
    inv_half = vecs @ np.diag(vals**-0.5) @ vecs.T
    gaussians = rng.standard_normal((count, constraint.shape[0], r))
    q, _ = np.linalg.qr(gaussians)
    return np.einsum("ij,bjr->bri", inv_half, q)


class TestSolveEncoder:
    def test_constant_labels_give_zero_objective(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((12, 3))
        lx = kd.rff_factor(x, kd.KernelConfig(1.0, 8, 1))
        ones = kd.label_factor(kd.LabelVector(values=np.zeros(12, dtype=np.int64), num_classes=1))
        enc, eig = kd.solve_encoder(lx, ones, ones, kd.SolveSpec(tau=0.5, r=2))
        assert eig.objective == pytest.approx(0.0, abs=1e-10)
        # any feasible encoder is optimal; the returned one must be feasible
        assert kd.constraint_residual(enc, lx) < 1e-6

    def test_objective_certificate_and_dominance(self):
        rng = np.random.default_rng(1)
        x, lx, ly, ls = make_problem(rng, n=30, dim=10)
        spec = kd.SolveSpec(tau=0.5, gamma=1e-3, r=2)
        enc, eig = kd.solve_encoder(lx, ly, ls, spec)
        direct = direct_objective(enc.weights, lx, ly, ls, spec)
        assert eig.objective == pytest.approx(direct, rel=1e-8)
        constraint = constraint_matrix(lx.matrix, spec.gamma)
        for weights in random_feasible_weights(rng, constraint, 2, 1000):
            assert direct_objective(weights, lx, ly, ls, spec) <= eig.objective + 1e-9

    def test_profile_config_accepted(self):
        # large-data profile: tau 0.8, tau_z 0.5, 8000 random features, r=1
        spec = kd.SolveSpec(tau=0.8, tau_z=0.5, gamma=1e-4, r=1)
        assert spec.tau == 0.8 and spec.tau_z == 0.5
        cfg = kd.KernelConfig(bandwidth=1.0, rff_dim=8000, seed=0)
        assert cfg.rff_dim == 8000

    def test_constraint_satisfied_on_random_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            x, lx, ly, ls = make_problem(rng, n=int(rng.integers(10, 60)), dim=int(rng.integers(4, 16)))
            r = int(rng.integers(1, 4))
            enc, _ = kd.solve_encoder(lx, ly, ls, kd.SolveSpec(tau=rng.random(), r=r))
            assert kd.constraint_residual(enc, lx) < 1e-6

    def test_objective_monotone_in_r(self):
        rng = np.random.default_rng(3)
        x, lx, ly, ls = make_problem(rng, n=40, dim=12, classes=3)
        values = [
            kd.solve_encoder(lx, ly, ls, kd.SolveSpec(tau=0.3, r=r))[1].objective
            for r in (1, 2, 3)
        ]
        assert values[0] <= values[1] + 1e-12 <= values[2] + 2e-12

    def test_deterministic_including_sign(self):
        rng = np.random.default_rng(4)
        x, lx, ly, ls = make_problem(rng)
        spec = kd.SolveSpec(tau=0.7, r=2)
        enc_a, eig_a = kd.solve_encoder(lx, ly, ls, spec)
        enc_b, eig_b = kd.solve_encoder(lx, ly, ls, spec)
        assert np.array_equal(enc_a.weights, enc_b.weights)
        assert np.array_equal(eig_a.eigenvalues, eig_b.eigenvalues)
        # sign convention: first non-negligible component of each row positive
        for row in enc_a.weights:
            lead = row[np.abs(row) > 1e-12 * np.abs(row).max()][0]
            assert lead > 0

    def test_eigenvalues_sorted_descending(self):
        rng = np.random.default_rng(5)
        x, lx, ly, ls = make_problem(rng)
        _, eig = kd.solve_encoder(lx, ly, ls, kd.SolveSpec(tau=0.5, r=1))
        assert np.all(np.diff(eig.eigenvalues) <= 1e-12)

    def test_retained_eigenpair_residuals(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            n, dim, r = int(rng.integers(20, 60)), int(rng.integers(6, 14)), 2
            x, lx, ly, ls = make_problem(rng, n=n, dim=dim)
            tau = float(rng.random())
            spec = kd.SolveSpec(tau=tau, gamma=1e-3, r=r)
            _, eig = kd.solve_encoder(lx, ly, ls, spec)
            lc = kd.center(lx.matrix)
            constraint = (lc.T @ lc) / n + spec.gamma * np.eye(dim)
            half_y = lx.matrix.T @ kd.center(ly.matrix)
            half_s = lx.matrix.T @ kd.center(ls.matrix)
            objective_mat = (half_y @ half_y.T - tau * (half_s @ half_s.T)) / n**2
            scale = np.linalg.norm(objective_mat)
            for j in range(r):
                u = eig.eigenvectors[:, j]
                residual = np.linalg.norm(
                    objective_mat @ u - eig.eigenvalues[j] * (constraint @ u)
                )
                assert residual < 1e-8 * max(scale, 1e-30)

    def test_config_errors(self):
        with pytest.raises(kd.ConfigError):
            kd.SolveSpec(tau=0.5, gamma=0.0)
        with pytest.raises(kd.ConfigError):
            kd.SolveSpec(tau=-0.1)
        with pytest.raises(kd.ConfigError):
            kd.SolveSpec(tau=0.5, r=0)
        rng = np.random.default_rng(6)
        x, lx, ly, ls = make_problem(rng, dim=8)
        with pytest.raises(kd.ConfigError):
            kd.solve_encoder(lx, ly, ls, kd.SolveSpec(tau=0.5, r=9))

    def test_row_count_mismatch(self):
        rng = np.random.default_rng(7)
        x, lx, ly, ls = make_problem(rng, n=20)
        short = kd.label_factor(kd.LabelVector.from_values(rng.integers(0, 2, 19)))
        with pytest.raises(kd.ShapeError):
            kd.solve_encoder(lx, short, ls, kd.SolveSpec(tau=0.5))

    def test_z_other_row_mismatch(self):
        rng = np.random.default_rng(8)
        x, lx, ly, ls = make_problem(rng, n=20)
        with pytest.raises(kd.ShapeError):
            kd.solve_encoder(
                lx, ly, ls, kd.SolveSpec(tau=0.5, tau_z=0.5, z_other=np.zeros((19, 2)))
            )

    def test_solver_clean_under_allocation_audit(self):
        rng = np.random.default_rng(9)
        n = 1600
        x = rng.standard_normal((n, 4))
        with kd.allocation_audit(n):
            lx = kd.rff_factor(x, kd.KernelConfig(1.5, 32, 0))
            ly = kd.label_factor(kd.LabelVector.from_values(rng.integers(0, 2, n)))
            ls = kd.label_factor(kd.LabelVector.from_values(rng.integers(0, 2, n)))
            kd.solve_encoder(lx, ly, ls, kd.SolveSpec(tau=0.5, tau_z=0.3,
                                                      z_other=np.ones((n, 1))))


class TestApplyEncoder:
    def test_zero_weights_zero_representation(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((9, 3))
        enc = kd.Encoder(weights=np.zeros((2, 16)),
                         kernel=kd.KernelConfig(1.0, 16, 0), input_dim=3, gamma=1e-4)
        assert np.all(kd.apply_encoder(enc, x) == 0.0)

    def test_training_set_reproduction_bitwise(self):
        rng = np.random.default_rng(11)
        x, lx, ly, ls = make_problem(rng, n=20)
        enc, _ = kd.solve_encoder(lx, ly, ls, kd.SolveSpec(tau=0.4, r=2))
        once = kd.apply_encoder(enc, x)
        again = kd.apply_encoder(enc, x)
        assert np.array_equal(once, again)
        assert np.array_equal(once, lx.matrix @ enc.weights.T)

    def test_weights_identity_oracle(self):
        rng = np.random.default_rng(12)
        x, lx, ly, ls = make_problem(rng, n=20)
        enc, _ = kd.solve_encoder(lx, ly, ls, kd.SolveSpec(tau=0.4, r=2))
        applied = kd.apply_encoder(enc, x)
        assert np.allclose(enc.weights @ lx.matrix.T, applied.T, atol=1e-12)

    def test_dimension_guard(self):
        enc = kd.Encoder(weights=np.zeros((1, 8)),
                         kernel=kd.KernelConfig(1.0, 8, 0), input_dim=4, gamma=1e-4)
        with pytest.raises(kd.ShapeError):
            kd.apply_encoder(enc, np.zeros((3, 5)))


class TestObjectiveValue:
    def _encoders(self, rng, n=25):
        x_i, lx_i, ly, ls = make_problem(rng, n=n, dim=8)
        x_t = rng.standard_normal((n, 4))
        lx_t = kd.rff_factor(x_t, kd.KernelConfig(1.3, 8, 5))
        enc_i, _ = kd.solve_encoder(lx_i, ly, ls, kd.SolveSpec(tau=0.5, r=2))
        enc_t, _ = kd.solve_encoder(lx_t, ly, ls, kd.SolveSpec(tau=0.5, r=2))
        return enc_i, enc_t, lx_i, lx_t, ly, ls

    def test_zero_weights_gives_zero(self):
        rng = np.random.default_rng(13)
        enc_i, enc_t, lx_i, lx_t, ly, ls = self._encoders(rng)
        zero_i = kd.Encoder(np.zeros_like(enc_i.weights), enc_i.kernel, enc_i.input_dim, enc_i.gamma)
        zero_t = kd.Encoder(np.zeros_like(enc_t.weights), enc_t.kernel, enc_t.input_dim, enc_t.gamma)
        assert kd.objective_value(zero_i, zero_t, lx_i, lx_t, ly, ls, 0.5, 0.5, 0.5) == 0.0

    def test_tau_zero_isolates_target_terms(self):
        rng = np.random.default_rng(14)
        enc_i, enc_t, lx_i, lx_t, ly, ls = self._encoders(rng)
        value = kd.objective_value(enc_i, enc_t, lx_i, lx_t, ly, ls, 0.0, 0.0, 0.0)
        expected = kd.dep_vs_labels(enc_i.weights, lx_i, ly) + kd.dep_vs_labels(
            enc_t.weights, lx_t, ly
        )
        assert value == pytest.approx(expected, rel=1e-12)

    def test_half_step_does_not_decrease_objective(self):
        rng = np.random.default_rng(15)
        enc_i, enc_t, lx_i, lx_t, ly, ls = self._encoders(rng)
        tau, tau_z = 0.5, 0.7
        z_t = lx_t.matrix @ enc_t.weights.T
        solved, _ = kd.solve_encoder(
            lx_i, ly, ls, kd.SolveSpec(tau=tau, tau_z=tau_z, r=enc_i.r, z_other=z_t)
        )
        j_after = kd.objective_value(solved, enc_t, lx_i, lx_t, ly, ls, tau, tau, tau_z)
        constraint = constraint_matrix(lx_i.matrix, 1e-4)
        for before_weights in random_feasible_weights(rng, constraint, enc_i.r, 50):
            before_enc = kd.Encoder(np.ascontiguousarray(before_weights), enc_i.kernel,
                                    enc_i.input_dim, enc_i.gamma)
            j_before = kd.objective_value(before_enc, enc_t, lx_i, lx_t, ly, ls,
                                          tau, tau, tau_z)
            assert j_after >= j_before - 1e-9

    def test_eigensolver_failure_reports_conditioning(self):
        from kerneldebias.solver import solve_weights_from_parts

        bad_constraint = -np.eye(4)  # not positive definite
        with pytest.raises(kd.NumericalError, match="condition"):
            solve_weights_from_parts(np.eye(4), bad_constraint, r=1)

    def test_sample_count_mismatch(self):
        rng = np.random.default_rng(16)
        enc_i, enc_t, lx_i, lx_t, ly, ls = self._encoders(rng)
        other = kd.RffFactor(matrix=lx_t.matrix[:-1], config=lx_t.config)
        with pytest.raises(kd.ShapeError):
            kd.objective_value(enc_i, enc_t, lx_i, other, ly, ls, 0.5, 0.5, 0.5)
