import logging

import pytest

from fdtof.freq_domain import FdConfig
from fdtof.scene_sim import snr_sweep_experiment
from fdtof.signal_model import FrequencySweep

SNR_LEVELS = [1.0, 5.0, 10.0, 20.0, 30.0]


@pytest.fixture(scope='session')
def fd_sweep():
    return FrequencySweep(10e6, 1e9, 256)


@pytest.fixture(scope='session')
def qf_report(fd_sweep):
    """1000 trials at 1 m, phase arm against Quinn-Fernandes"""
    report = snr_sweep_experiment(1.0, SNR_LEVELS, 1000, fd_cfg=FdConfig(fd_sweep, 'qf'), seed=0)
    logging.info("QF medians %s", report.medians('qf'))
    return report


@pytest.fixture(scope='session')
def interp_report(fd_sweep):
    return snr_sweep_experiment(1.0, [20.0], 1000, fd_cfg=FdConfig(fd_sweep, 'interp'), seed=0)
