import json
import math

import numpy as np
import pytest

import morsedef as md


def test_reference_values():
    assert md.radial_field([0.0, 0.0], "norm").value([3.0, 4.0]) == pytest.approx(5.0)
    q = md.quadrifolium_field()
    assert q.value([0.5, 0.5]) == pytest.approx(-64.0)
    with pytest.raises(md.OnSingularSet):
        q.value([math.sqrt(2) / 2, math.sqrt(2) / 2])
    knot = md.knot_energy_field()
    assert knot.value([0.0, 0.0, 0.0]) == pytest.approx(-2 * math.pi)
    assert md.gradient_check(knot, [0.0, 0.0, 1.0], 1e-4) < 1e-5


def test_profiles_and_transform():
    p = md.DecayProfile.power(-1.0, 13 / 12)
    assert p.primitive(-1.0) == pytest.approx(12.0)
    with pytest.raises(md.InvalidProfile):
        md.DecayProfile.power(-1.0, 1.0)
    f = md.transform(md.radial_field([0.0, 0.0]), md.DecayProfile.power(-1.0, 2.0))
    assert f.value([0.3, 0.4]) == pytest.approx(0.5)
    assert f.level_cap == pytest.approx(1.0)
    with pytest.raises(md.OutOfRange):
        f.value([2.0, 0.0])


def test_condition_report():
    report = md.check_fast_decreasing(
        md.quadrifolium_field(),
        md.DecayProfile.power(-1e4, 13 / 12),
        [-1.3, -1.3],
        [1.3, 1.3],
        grid_samples=20000,
        ring_samples=5000,
        ring_radius=0.02,
    )
    assert report["holds"]
    assert report["worst_margin"] > 0
    assert report["sample_count"] > 1000


def test_flow_closed_forms():
    f = md.radial_field([0.0, 0.0], "norm")
    traj = md.descend(f, [2.0, 0.0], 0.5)
    assert np.allclose(traj["x"][-1], [1.5, 0.0], atol=1e-9)
    assert traj["x"].shape[1] == 2
    assert np.all(np.diff(traj["t"]) > 0)
    assert np.allclose(md.retract(f, [2.0, 0.0], 0.5), [1.0, 0.0], atol=1e-9)
    assert np.allclose(md.ascend_to_level(f, [0.5, 0.0], 1.0), [1.0, 0.0], atol=1e-9)
    lip = md.verify_lipschitz(f, [2.0, 0.0], [(0.0, 0.5)])
    assert lip["holds"]
    with pytest.raises(md.PreconditionViolation):
        md.descend(f, [2.0, 0.0], 2.5)


def test_transformed_quadrifolium_retraction():
    f = md.transform(md.quadrifolium_field(), md.DecayProfile.power(-1e4, 13 / 12))
    seed = [0.3, 0.0]
    while True:
        try:
            f.value(seed)
            break
        except md.OutOfRange:
            seed[1] += 0.002
    r = md.retract_detailed(f, seed, 1.0, md.FlowConfig(sigma_stop=1e-4))
    assert r["f_end"] < 1e-4
    assert r["sigma_distance"] < 1e-6
    batch = md.retract_batch(f, [seed, [0.0, 0.0]], 1.0)
    assert batch[1]["endpoint"] == [0.0, 0.0]


def test_topology():
    region = md.voxelize(md.quadrifolium_field(), -1e6, md.GridSpec.cube(2, -1.3, 1.3, 256))
    b = md.betti(region)
    assert (b.b0, b.b1) == (1, 4)
    assert region.flags.shape == (256, 256)
    shell = np.ones((3, 3, 3), dtype=np.uint8)
    shell[1, 1, 1] = 0
    s = md.betti_mask(shell)
    assert (s.b0, s.b1, s.b2, s.euler) == (1, 0, 1, 2)
    with pytest.raises(md.GridTooSmall):
        md.voxelize(md.radial_field([0.0, 0.0]), -0.5, md.GridSpec.cube(2, -1.0, 1.0, 32))


def test_cli_entry_point(tmp_path):
    cfg = {
        "field": {"type": "quadrifolium"},
        "grid": {"lower": [-1.3, -1.3], "upper": [1.3, 1.3], "resolution": 256},
        "homology": {"level_b": -1e5, "expected": {"b0": 1, "b1": 4}},
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    code, _, err = md.run_cli(["homology", str(path)])
    assert code == 0, err
    betti = json.loads((tmp_path / "out" / "betti.json").read_text())
    assert betti["b1"] == 4
    code, out, _ = md.run_cli(["--help"])
    assert code == 0 and "homology" in out
