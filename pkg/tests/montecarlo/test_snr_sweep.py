import pytest

from fdtof.freq_domain import FdConfig
from fdtof.scene_sim import snr_sweep_experiment


def non_increasing(values):
    return all(b <= a for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("estimator", ['four_bucket', 'qf'])
def test_error_falls_with_snr(qf_report, estimator):
    medians = qf_report.medians(estimator)
    assert len(medians) == 5
    assert non_increasing(medians), medians


def test_fd_beats_phase_at_low_snr(qf_report):
    assert qf_report.row('qf', 1.0).median_percent_error <= (
        qf_report.row('four_bucket', 1.0).median_percent_error
    )


def test_every_trial_counted(qf_report):
    for row in qf_report.rows:
        assert row.trials == 1000
        assert row.failures == 0


def test_qf_beats_interp(qf_report, interp_report):
    assert qf_report.row('qf', 20.0).median_percent_error < (
        interp_report.row('interp', 20.0).median_percent_error
    )


def test_phase_arm_shared(qf_report, interp_report):
    # both reports drew the same noise for the phase arm
    assert interp_report.row('four_bucket', 20.0) == qf_report.row('four_bucket', 20.0)


def test_sweep_deterministic(fd_sweep):
    cfg = FdConfig(fd_sweep, 'qf')
    first = snr_sweep_experiment(2.0, [5.0, 15.0], 200, fd_cfg=cfg, seed=4)
    second = snr_sweep_experiment(2.0, [5.0, 15.0], 200, fd_cfg=cfg, seed=4)
    assert first.rows == second.rows
    other = snr_sweep_experiment(2.0, [5.0, 15.0], 200, fd_cfg=cfg, seed=5)
    assert other.rows != first.rows
