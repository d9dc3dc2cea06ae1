import numpy as np

from fdtof.scene_sim import (
    FdTof,
    constant_baseline,
    depth_metrics,
    psnr,
    ramp_scene,
    reconstruct,
    simulate_capture,
    with_multipath,
)
from fdtof.signal_model import NoiseSpec


def test_ramp_at_20db(fd_sweep):
    scene = ramp_scene(64, 64, 0.5, 3.0)
    cube = simulate_capture(scene, FdTof(fd_sweep), NoiseSpec(20.0, 0))
    depth_map = reconstruct(cube, 'qf')
    metrics = depth_metrics(depth_map, scene.truth())
    assert metrics['invalid_pixels'] == 0
    assert metrics['fraction_within_1_percent'] >= 0.99


def test_ramp_at_1db_beats_baseline(fd_sweep):
    scene = ramp_scene(16, 16, 0.5, 3.0)
    truth = scene.truth()
    cube = simulate_capture(scene, FdTof(fd_sweep), NoiseSpec(1.0, 3))
    depth_map = reconstruct(cube, 'qf')
    assert psnr(depth_map, truth) > psnr(constant_baseline(truth), truth)


def test_multipath_bias(fd_sweep):
    # a weak second return 2 m further barely moves the QF estimate
    scene = with_multipath(ramp_scene(4, 8, 1.0, 2.0), 4.0, 0.1)
    depth_map = reconstruct(simulate_capture(scene, FdTof(fd_sweep)), 'qf')
    assert np.allclose(depth_map.depth, scene.depth, atol=0.02)
