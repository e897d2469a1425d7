import numpy as np
import pytest

from membrane_homog.corrector import CorrectorConfig, solve_truncated
from membrane_homog.effective import (
    EffectiveTensor,
    corrector_runs,
    effective_tensor,
    ellipticity_check,
    energy_identity_residual,
    read_effective_json,
    volume_stats,
    write_effective_json,
)
from membrane_homog.errors import EllipticityViolation, InsufficientSamples
from membrane_homog.geometry import BernoulliCellwiseMap, BumpMap, IdentityMap, InterfaceSpec

SPEC = InterfaceSpec()
QUICK = CorrectorConfig(n=2, m=1, h=0.1, delta=1e-3)


def dense_disk_integral(dmap, center=(0.5, 0.5), radius=0.25, n_rad=1000, n_ang=1000):
    """Midpoint-rule oracle for int over the disk of det(grad Phi)."""
    rho = (np.arange(n_rad) + 0.5) * radius / n_rad
    ang = (np.arange(n_ang) + 0.5) * 2.0 * np.pi / n_ang
    pts = np.asarray(center) + np.stack(
        [np.outer(rho, np.cos(ang)), np.outer(rho, np.sin(ang))], axis=-1
    ).reshape(-1, 2)
    J = dmap.jacobian(pts)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    w = np.outer(rho, np.ones(n_ang)).ravel() * (radius / n_rad) * (2.0 * np.pi / n_ang)
    return float(det @ w)


class TestVolumeStats:
    def test_identity(self):
        vs = volume_stats(lambda s: IdentityMap(), [0])
        assert abs(vs["rho"] - 1.0) < 1e-9
        assert abs(vs["theta"] - np.pi / 16.0) < 1e-6

    def test_bump_against_dense_oracle(self):
        dmap = BumpMap()
        vs = volume_stats(lambda s: dmap, [0])
        oracle = dense_disk_integral(dmap)
        assert abs(vs["theta"] * vs["rho"] - oracle) < 1e-6
        # the full-cell integral is exactly 1: the map fixes the cell boundary
        assert abs(vs["rho"] - 1.0) < 1e-9

    def test_bernoulli_matches_mixture(self):
        vs = volume_stats(lambda s: BernoulliCellwiseMap(seed=s), range(64))
        v_id = volume_stats(lambda s: IdentityMap(), [0])
        v_bp = volume_stats(lambda s: BumpMap(), [0])
        mixture = 0.5 * (v_id["theta"] + v_bp["theta"])
        tol = max(3.0 * vs["theta_stderr"], 1e-9)
        assert abs(vs["theta"] - mixture) <= tol
        assert 0.0 < vs["theta"] < 1.0

    def test_requires_seed(self):
        with pytest.raises(ValueError):
            volume_stats(lambda s: IdentityMap(), [])


class TestEffectiveTensor:
    def test_no_membranes_identity(self):
        cfg = CorrectorConfig(n=2, m=1, h=0.1, delta=1e-3, membranes=False)
        runs = corrector_runs(lambda s: IdentityMap(), [0, 1], cfg)
        t = effective_tensor(runs, rho=1.0)
        assert np.abs(t.A0 - np.eye(2)).max() < 1e-6

    def test_membranes_reduce_conduction(self):
        runs = corrector_runs(lambda s: IdentityMap(), [0, 1], QUICK)
        t = effective_tensor(runs, rho=1.0)
        assert t.A0[0, 0] < 1.0
        assert abs(t.A0[0, 0] - t.A0[1, 1]) <= 1e-3
        assert abs(t.A0[0, 1]) <= 1e-3 and abs(t.A0[1, 0]) <= 1e-3

    def test_linearity_in_direction(self):
        run = corrector_runs(lambda s: IdentityMap(), [0], QUICK)[0]
        cfg = CorrectorConfig(p=[1.0, 1.0], n=2, m=1, h=0.1, delta=1e-3)
        combo = solve_truncated(cfg, IdentityMap())
        expected = run.corr["e1"].window_flux() + run.corr["e2"].window_flux()
        assert np.abs(combo.window_flux() - expected).max() < 1e-6

    def test_bernoulli_symmetry_within_stderr(self):
        runs = corrector_runs(lambda s: BernoulliCellwiseMap(seed=s), range(4), QUICK)
        t = effective_tensor(runs, rho=1.0)
        gap = abs(t.A0[0, 1] - t.A0[1, 0])
        assert gap <= 2.0 * (t.stderr[0, 1] + t.stderr[1, 0]) + 1e-9
        eig = np.linalg.eigvalsh(0.5 * (t.A0 + t.A0.T))
        assert eig.min() > 0.0
        assert eig.max() <= 1.5 + 3.0 * t.stderr.max()

    def test_insufficient_samples(self):
        runs = corrector_runs(lambda s: IdentityMap(), [0], QUICK)
        with pytest.raises(InsufficientSamples):
            effective_tensor(runs, rho=1.0)

    def test_stderr_scales_like_inverse_sqrt_n(self):
        counts = (4, 16, 64)
        errs = []
        offset = 0
        for N in counts:
            runs = corrector_runs(
                lambda s: BernoulliCellwiseMap(seed=s), range(offset, offset + N), QUICK
            )
            errs.append(effective_tensor(runs, rho=1.0).stderr[0, 0])
            offset += N
        slope = np.polyfit(np.log(counts), np.log(errs), 1)[0]
        assert abs(slope + 0.5) < 0.25 * 0.5


class TestEllipticity:
    def test_no_membrane_eigenvalues(self):
        cfg = CorrectorConfig(n=2, m=1, h=0.1, delta=1e-3, membranes=False)
        runs = corrector_runs(lambda s: IdentityMap(), [0, 1], cfg)
        t = effective_tensor(runs, rho=1.0)
        verdict = ellipticity_check(t, 1.0, 1.5)
        assert np.abs(np.array(verdict["eigenvalues"]) - 1.0).max() < 1e-6

    def test_energy_identity_residual_small(self):
        runs = corrector_runs(lambda s: IdentityMap(), [0, 1], QUICK)
        t = effective_tensor(runs, rho=1.0)
        s = 1.0 / np.sqrt(2.0)
        for xi in ([1.0, 0.0], [0.0, 1.0], [s, s]):
            assert energy_identity_residual(runs, t, xi) <= 5e-3

    def test_rejects_non_spd(self):
        bad = EffectiveTensor(
            A0=np.array([[1.0, 2.0], [2.0, 1.0]]),
            stderr=np.zeros((2, 2)),
            N=2, rho=1.0, theta=0.2,
        )
        with pytest.raises(EllipticityViolation):
            ellipticity_check(bad, 1.0, 1.5)

    def test_rejects_too_large(self):
        bad = EffectiveTensor(
            A0=3.0 * np.eye(2), stderr=np.zeros((2, 2)), N=2, rho=1.0, theta=0.2
        )
        with pytest.raises(EllipticityViolation):
            ellipticity_check(bad, 1.0, 1.5)


class TestJsonRoundTrip:
    def test_round_trip(self, tmp_path):
        t = EffectiveTensor(
            A0=np.array([[0.77, 0.0], [0.0, 0.77]]),
            stderr=np.full((2, 2), 1e-4),
            N=16, rho=1.0, theta=float(np.pi / 16.0), config_hash="abc123",
        )
        path = tmp_path / "effective.json"
        write_effective_json(path, t)
        back = read_effective_json(path)
        assert np.array_equal(back.A0, t.A0)
        assert np.array_equal(back.stderr, t.stderr)
        assert back.N == 16
        assert back.rho == t.rho
        assert back.theta == t.theta
        assert back.config_hash == "abc123"

    def test_rewrite_is_byte_identical(self, tmp_path):
        t = EffectiveTensor(
            A0=np.eye(2), stderr=np.zeros((2, 2)), N=2, rho=1.0, theta=0.2
        )
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_effective_json(p1, t)
        write_effective_json(p2, read_effective_json(p1))
        assert p1.read_bytes() == p2.read_bytes()
