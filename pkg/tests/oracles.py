"""Brute-force enumeration oracles for the closed-form cost model.

These count cache slots and matmul multiply-accumulates one dimension at a
time with explicit loops, independently of the closed forms they check.
Only usable at tiny sizes; that is the point.
"""

from rooflinebench.arch import ArchConfig, AttentionKind, Convention, FfnKind


def kv_slots(arch: ArchConfig, n_ctx: int) -> int:
    """Cache elements for one layer, enumerated token by token, slot by slot."""
    count = 0
    for _token in range(n_ctx):
        kind = arch.attention
        if kind is AttentionKind.MHA:
            for _component in ("k", "v"):
                for _head in range(arch.n_h):
                    for _dim in range(arch.d_h):
                        count += 1
        elif kind is AttentionKind.GQA:
            for _component in ("k", "v"):
                for _head in range(arch.n_k):
                    for _dim in range(arch.d_h):
                        count += 1
        elif kind is AttentionKind.MLA:
            for _dim in range(arch.d_c):  # compressed joint KV
                count += 1
            for _dim in range(arch.d_rope):  # decoupled rotary key
                count += 1
        elif kind is AttentionKind.GVA:
            for _dim in range(arch.hidden_dim):  # full-width value
                count += 1
            for _head in range(arch.n_k):
                for _dim in range(arch.d_h):
                    count += 1
        elif kind is AttentionKind.GHA:
            for _head in range(arch.n_k):
                for _dim in range(arch.d_h):
                    count += 1
            for _head in range(arch.n_v):
                for _dim in range(arch.d_h):
                    count += 1
        elif kind is AttentionKind.GTA:
            for _head in range(arch.n_k):
                for _dim in range(arch.d_h):
                    count += 1
            for _head in range(arch.n_c):
                for _dim in range(arch.d_l):
                    count += 1
        else:
            raise AssertionError(kind)
    return count


def attention_macs(arch: ArchConfig, n_ctx: int,
                   convention: Convention = Convention.MAC) -> int:
    """Score and value MACs over all (query, key) position pairs and heads."""
    kind = arch.attention
    count = 0
    if kind in (AttentionKind.MHA, AttentionKind.GQA):
        for _head in range(arch.n_h):
            for _q in range(n_ctx):
                for _k in range(n_ctx):
                    for _dim in range(arch.d_h):
                        count += 1  # q . k
                    for _dim in range(arch.d_h):
                        count += 1  # prob * v
    elif kind is AttentionKind.MLA:
        for _head in range(arch.n_h):
            for _q in range(n_ctx):
                for _k in range(n_ctx):
                    for _dim in range(arch.d_rope + arch.d_nope):
                        count += 1
                    for _dim in range(arch.d_nope):
                        count += 1
    elif kind in (AttentionKind.GVA, AttentionKind.GHA):
        for _head in range(arch.n_q):  # scores
            for _q in range(n_ctx):
                for _k in range(n_ctx):
                    for _dim in range(arch.d_h):
                        count += 1
        for _head in range(arch.n_h):  # value mixing
            for _q in range(n_ctx):
                for _k in range(n_ctx):
                    for _dim in range(arch.d_h):
                        count += 1
    elif kind is AttentionKind.GTA:
        for _head in range(arch.n_q):
            for _q in range(n_ctx):
                for _k in range(n_ctx):
                    for _dim in range(arch.d_h):
                        count += 1
                    for _dim in range(arch.d_l):
                        count += 1
    else:
        raise AssertionError(kind)
    return count * convention.factor


def _matmul(count: int, in_dim: int, out_dim: int) -> int:
    for _a in range(in_dim):
        for _b in range(out_dim):
            count += 1
    return count


def linear_macs(arch: ArchConfig) -> int:
    """Per-token projection MACs, enumerated matmul shape by matmul shape."""
    kind = arch.attention
    H = arch.hidden_dim
    count = 0
    if kind is AttentionKind.MHA:
        for _proj in ("q", "k", "v", "o"):
            count = _matmul(count, H, H)
    elif kind in (AttentionKind.GQA, AttentionKind.GVA):
        count = _matmul(count, H, H)  # q
        count = _matmul(count, H, arch.n_k * arch.d_h)  # k
        count = _matmul(count, H, arch.n_k * arch.d_h)  # v
        count = _matmul(count, H, H)  # o
    elif kind is AttentionKind.MLA:
        count = _matmul(count, H, arch.d_c + arch.d_rope)  # joint down-projection
        count = _matmul(count, H, arch.n_h * (arch.d_rope + arch.d_nope))  # queries
        for _updown in range(2):  # latent value up/down pair
            for _head in range(arch.n_h):
                for _a in range(arch.d_l):
                    for _b in range(arch.d_nope):
                        count += 1
        count = _matmul(count, H, H)  # o
    elif kind is AttentionKind.GHA:
        count = _matmul(count, H, arch.n_q * arch.d_h)
        count = _matmul(count, H, arch.n_k * arch.d_h)
        count = _matmul(count, H, arch.n_v * arch.d_h)
        count = _matmul(count, H, H)
    elif kind is AttentionKind.GTA:
        count = _matmul(count, H, H)
        count = _matmul(count, H, H)
        count = _matmul(count, H, arch.n_q * arch.d_h)
        count = _matmul(count, H, arch.n_k * arch.d_h)
        count = _matmul(count, H, arch.n_c * arch.d_l)
        count = _matmul(count, H, arch.d_l)
    else:
        raise AssertionError(kind)
    return count


def ffn_macs(arch: ArchConfig) -> int:
    matmuls = 3 if arch.ffn_kind is FfnKind.GATED else 2
    count = 0
    for _m in range(matmuls):
        count = _matmul(count, arch.hidden_dim, arch.ffn_dim)
    return count


def streaming_kernel_bytes(kernel: str, n_elements: int, element_bytes: int) -> int:
    """Per-element load/store enumeration for the probe kernels."""
    pattern = {
        "copy": ("load", "store"),
        "scale": ("load", "store"),
        "add": ("load", "load", "store"),
        "triad": ("load", "load", "store"),
    }[kernel]
    count = 0
    for _element in range(n_elements):
        for _access in pattern:
            for _byte in range(element_bytes):
                count += 1
    return count
