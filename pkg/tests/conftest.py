import pytest

from geotemp import net, optim, synthworld

TINY_WORLD = synthworld.WorldConfig(n_scenes=3, samples_per_scene=16, n_roaming=48, image_size=12, seed=5)
SMALL_MODEL = net.ModelConfig(image_size=10, trunk_widths=(4, 6), hidden_widths=(16, 24), feature_dim=8,
                              dtype="float64")


@pytest.fixture(scope="session")
def tiny_world():
    return synthworld.build_samples(TINY_WORLD)


@pytest.fixture
def small_model():
    return net.init_model(SMALL_MODEL, seed=0)


@pytest.fixture
def small_train_cfg():
    return optim.TrainConfig(iterations=20, batch_size=8, crop=10, halving_interval=10, seed=3)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
