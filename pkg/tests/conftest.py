import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rooflinebench.arch import ArchConfig, AttentionKind, FfnKind

# acceptance-criterion verdict lines, echoed after the run summary
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.line(line)


def tiny_arch(kind: AttentionKind, rng: random.Random | None = None, **overrides) -> ArchConfig:
    """A randomized tiny architecture valid for the given attention kind."""
    rng = rng or random.Random(0)
    d_h = rng.randint(1, 3)
    n_q = rng.randint(1, 3)
    fields = dict(
        name=f"tiny-{kind.value.lower()}",
        attention=kind,
        hidden_dim=n_q * d_h,
        num_layers=rng.randint(1, 3),
        n_q=n_q,
        d_h=d_h,
        ffn_dim=rng.randint(1, 6),
        ffn_kind=rng.choice([FfnKind.GATED, FfnKind.PLAIN]),
        vocab_size=rng.randint(1, 8),
        n_params=rng.randint(16, 1000) * 16,
    )
    if kind is AttentionKind.GQA:
        divisors = [d for d in range(1, n_q + 1) if n_q % d == 0]
        fields["n_k"] = rng.choice(divisors)
        fields["n_v"] = fields["n_k"]
    elif kind is AttentionKind.MLA:
        d_rope = rng.randint(0, 3)
        d_nope = rng.randint(0 if d_rope else 1, 3)
        fields.update(d_c=rng.randint(1, 6), d_rope=d_rope, d_nope=d_nope,
                      d_l=rng.randint(1, 3), n_h=rng.randint(1, 3))
        fields.pop("d_h")
        fields["hidden_dim"] = rng.randint(2, 12)
    elif kind is AttentionKind.GVA:
        fields["n_k"] = rng.randint(1, 3)
        fields["n_h"] = rng.randint(1, 3)
    elif kind is AttentionKind.GHA:
        fields.update(n_k=rng.randint(1, 3), n_v=rng.randint(1, 3), n_h=rng.randint(1, 3))
    elif kind is AttentionKind.GTA:
        fields.update(n_k=rng.randint(1, 3), n_c=rng.randint(1, 3), d_l=rng.randint(1, 3))
    fields.update(overrides)
    return ArchConfig(**fields)


@pytest.fixture
def spec_tiny_mha() -> ArchConfig:
    """The two-layer MHA fixture used by several byte-accounting checks."""
    return ArchConfig(
        name="tiny", attention=AttentionKind.MHA, hidden_dim=8, num_layers=2,
        n_q=2, d_h=4, ffn_dim=16, ffn_kind=FfnKind.GATED, vocab_size=10,
        n_params=1000)
