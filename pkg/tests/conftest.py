import math
from dataclasses import dataclass, field

import pytest

from pgcs.config import bundled_config, load_config
from pgcs.evalsuite import SweepSpec, evaluate
from pgcs.trainer import TrainConfig, TrainState, train

# Probe used to track training progress: one channel point, evaluated after
# the first and last five epochs.
PROBE_SNR_DB = 18.0
PROBE_LINEWIDTH_HZ = 100e3
PROBE_EPOCHS = 5
PROBE_SYMBOLS = 1 << 15

ACCEPTANCE_LINES = []


def desk_config(**changes) -> TrainConfig:
    config, _ = load_config(bundled_config("desk"))
    return config.replace(**changes)


def eval_spec(config: TrainConfig, symbols: int = 1 << 17, seed: int = 1) -> SweepSpec:
    return SweepSpec(
        symbols_per_point=symbols,
        seed=seed,
        symbol_rate=config.symbol_rate,
        bps=config.bps,
        frame_length=config.batch_end,
    )


@dataclass
class DeskRun:
    config: TrainConfig
    state: TrainState
    history: list
    probe: dict = field(default_factory=dict)  # completed epochs -> probe BMI

    @property
    def model(self):
        return self.state.model


def _train_desk(mode: str) -> DeskRun:
    config = desk_config(mode=mode)
    spec = eval_spec(config, symbols=PROBE_SYMBOLS, seed=2)
    probe = {}

    def on_epoch(state, metrics):
        done = state.epoch
        if done <= PROBE_EPOCHS or done > config.epochs - PROBE_EPOCHS:
            probe[done] = evaluate(state.model, PROBE_SNR_DB, PROBE_LINEWIDTH_HZ, spec).bmi_bits

    state, history = train(config, on_epoch=on_epoch)
    assert all(math.isfinite(h.bce_bits) for h in history)
    return DeskRun(config, state, history, probe)


_RUNS = {}


def desk_run(mode: str) -> DeskRun:
    if mode not in _RUNS:
        _RUNS[mode] = _train_desk(mode)
    return _RUNS[mode]


@pytest.fixture(scope="session")
def desk_pgcs() -> DeskRun:
    return desk_run("parameterized")


@pytest.fixture(scope="session")
def desk_robust() -> DeskRun:
    return desk_run("robust")


@pytest.fixture(scope="session")
def desk_qam() -> DeskRun:
    return desk_run("qam_demapper_only")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
