import numpy as np
import pytest

from rotlab.data import PRESETS, load_data, make_data
from rotlab.errors import ConfigError
from rotlab.pressureless import threshold_analyze
from rotlab.spectral import save_snapshot


class TestPresets:
    @pytest.mark.parametrize("name", PRESETS)
    def test_shapes_and_finiteness(self, name):
        d = make_data(name, 32)
        assert d.h.values.shape == (32, 32)
        assert d.u.values.shape == (2, 32, 32)
        assert d.S.values.shape == (32, 32)
        assert d.h.is_finite() and np.all(np.isfinite(d.u.values))
        assert d.descriptor["name"] == name

    def test_shear_and_steepen(self):
        X, Y = make_data("zero", 32).grid.mesh
        assert np.allclose(make_data("shear", 32, amplitude=2.0).u.values[0], 2 * np.sin(Y))
        assert np.allclose(make_data("steepen", 32).u.values[0], 0.5 * np.sin(X))

    def test_storm_core_rotates_clockwise(self):
        d = make_data("storm", 64)
        M = d.grid.jacobian(d.u.values)
        omega = M[0, 1] - M[1, 0]
        assert omega[0, 0] < 0
        assert np.max(np.abs(d.grid.div(d.u.values))) < 1e-12

    @pytest.mark.parametrize("tau,sigma", [(0.1, 1.0), (0.1, 2.0), (0.5, 0.5)])
    def test_random_bandlimited_is_admissible(self, tau, sigma):
        d = make_data("random-bandlimited", 32, tau=tau, sigma=sigma)
        rep = threshold_analyze(d.u, tau)
        assert rep.margin >= 0.5 and rep.flow_margin >= 0.5
        assert np.min(1 + sigma * d.h.values) >= 0.5 - 1e-12
        coef = np.abs(d.grid.coefficients(d.u.values[0]))
        k = np.abs(d.grid.k)
        assert np.all(coef[np.maximum(k[:, None], k[None, :]) > 4] < 1e-14)

    def test_seeded(self):
        a = make_data("random-bandlimited", 32, seed=3)
        b = make_data("random-bandlimited", 32, seed=3)
        c = make_data("random-bandlimited", 32, seed=4)
        assert np.array_equal(a.u.values, b.u.values)
        assert not np.array_equal(a.u.values, c.u.values)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="data"):
            make_data("hurricane", 32)


class TestSnapshotData:
    @pytest.mark.parametrize("count", [3, 4])
    def test_load(self, tmp_path, count):
        rng = np.random.default_rng(0)
        arrays = [rng.standard_normal((16, 16)) for _ in range(count)]
        path = save_snapshot(tmp_path / "init.bin", arrays)
        d = load_data(path)
        assert np.array_equal(d.h.values, arrays[0])
        assert np.array_equal(d.u.values, np.stack(arrays[1:3]))
        assert np.array_equal(d.S.values, arrays[3] if count == 4 else np.zeros((16, 16)))
        assert np.array_equal(make_data(str(path)).h.values, arrays[0])

    def test_wrong_component_count(self, tmp_path):
        path = save_snapshot(tmp_path / "init.bin", [np.zeros((16, 16))] * 2)
        with pytest.raises(ConfigError):
            load_data(path)
