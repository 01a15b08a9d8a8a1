import numpy as np
import pytest

from smda.model import ModelConfig, ParamSet, init_params

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def fixed_output_params(p, vocab_size: int = 8, d_emb: int = 3, d_hid: int = 4) -> ParamSet:
    """Params whose prediction is ``p`` for every input: zero weights, b2 = log p."""
    cfg = ModelConfig(vocab_size, d_emb, d_hid)
    arrays = {name: np.zeros(shape) for name, shape in cfg.shapes().items()}
    arrays["head_b2"] = np.log(np.asarray(p, dtype=np.float64))
    return ParamSet(cfg, arrays)


@pytest.fixture
def small_params():
    return init_params(ModelConfig(vocab_size=12, d_emb=5, d_hid=6), seed=3)
