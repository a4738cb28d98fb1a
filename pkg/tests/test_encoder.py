import numpy as np
import pytest
import torch

from mpa.encoder import CGBlock, HistoryEncoder, MCGStack, SceneEncoder
from mpa.features import collate

from oracles import finite_difference_errors

D = torch.float64


def small_encoder(seed=0, dim=8, hidden=8, H=4, nodes=3):
    torch.manual_seed(seed)
    return SceneEncoder(history_steps=H, max_nodes=nodes, dim=dim, hidden=hidden, num_blocks=2).double()


def random_tracks(g, *lead, H=4):
    x = torch.randn(*lead, H, 7, generator=g, dtype=D)
    x[..., -1] = (torch.rand(*lead, H, generator=g) > 0.3).double()
    return x


def one_hot(g, *lead, k=3):
    return torch.nn.functional.one_hot(torch.randint(k, lead, generator=g), k).double()


def test_single_element_pools_its_gated_projection():
    torch.manual_seed(0)
    block = CGBlock(8, 16).double()
    e, c = torch.randn(1, 8, dtype=D), torch.randn(8, dtype=D)
    out, pooled = block(e, torch.ones(1, dtype=torch.bool), c)
    gated = block.element_mlp(e[0]) * block.context_mlp(c)
    assert torch.equal(pooled, gated) and torch.equal(out[0], gated)


def test_all_masked_gives_default_context_and_pass_through():
    torch.manual_seed(1)
    block = CGBlock(8, 16).double()
    e = torch.randn(2, 5, 8, dtype=D)
    out, pooled = block(e, torch.zeros(2, 5, dtype=torch.bool), torch.randn(2, 8, dtype=D))
    assert torch.equal(out, e)
    assert torch.equal(pooled, block.default_context.expand(2, 8))
    _, empty = block(torch.zeros(2, 0, 8, dtype=D), torch.zeros(2, 0, dtype=torch.bool), torch.randn(2, 8, dtype=D))
    assert torch.equal(empty, block.default_context.expand(2, 8))


def test_block_is_permutation_equivariant():
    torch.manual_seed(2)
    block = MCGStack(8, 16, 3).double()
    e, c = torch.randn(7, 8, dtype=D), torch.randn(8, dtype=D)
    mask = torch.tensor([1, 1, 0, 1, 0, 1, 1], dtype=torch.bool)
    out, pooled = block(e, mask, c)
    for _ in range(20):
        perm = torch.randperm(7)
        out_p, pooled_p = block(e[perm], mask[perm], c)
        assert torch.allclose(out_p, out[perm], atol=1e-12)
        assert (pooled_p - pooled).abs().max() < 1e-6


def test_dimension_mismatch_rejected():
    block = CGBlock(8, 8)
    with pytest.raises(ValueError, match="dimension"):
        block(torch.randn(3, 6), torch.ones(3, dtype=torch.bool), torch.randn(8))
    with pytest.raises(ValueError, match="history"):
        HistoryEncoder(11, 8, 8)(torch.randn(10, 7), torch.zeros(3))


def test_masked_payloads_never_matter():
    enc = small_encoder(3)
    g = torch.Generator().manual_seed(3)
    target, ttype = random_tracks(g, 2), one_hot(g, 2)
    neighbors, ntype = random_tracks(g, 2, 5), one_hot(g, 2, 5)
    nmask = torch.tensor([[1, 0, 1, 0, 0], [0, 0, 0, 0, 0]], dtype=torch.bool)
    polys = torch.randn(2, 4, 3, 5, generator=g, dtype=D)
    polys[..., -1] = 1.0
    lanes, pmask = one_hot(g, 2, 4, k=4), torch.tensor([[1, 1, 0, 0], [1, 0, 0, 1]], dtype=torch.bool)

    def run(t, n, p):
        ctx = enc.encode_history(t, ttype)
        return enc.fuse(ctx, enc.encode_neighbors(n, ntype, nmask, ctx), enc.encode_roadgraph(p, lanes, pmask, ctx))

    base = run(target, neighbors, polys)
    t2, n2, p2 = target.clone(), neighbors.clone(), polys.clone()
    invalid = t2[..., -1] == 0
    t2[invalid] = torch.cat([torch.randn(int(invalid.sum()), 6, dtype=D) * 100, torch.zeros(int(invalid.sum()), 1, dtype=D)], -1)
    n2[~nmask] = torch.randn_like(n2[~nmask]) * 100
    p2[~pmask] = torch.randn_like(p2[~pmask]) * 100
    assert torch.equal(run(t2, n2, p2), base)


def test_history_differing_only_in_invalid_payload():
    enc = small_encoder(4).target_encoder
    g = torch.Generator().manual_seed(4)
    h, t = random_tracks(g), one_hot(g)
    h[1, -1] = 0.0
    h2 = h.clone()
    h2[1, :-1] = 0.0
    h[1, :-1] = 7.0
    assert torch.equal(enc(h, t), enc(h2, t))
    assert torch.equal(enc(h, t), enc(h, t))


def test_empty_sets_use_default_context():
    enc = small_encoder(5)
    ctx = torch.randn(3, 8, dtype=D)
    n = enc.encode_neighbors(torch.zeros(3, 0, 4, 7, dtype=D), torch.zeros(3, 0, 3, dtype=D), torch.zeros(3, 0, dtype=torch.bool), ctx)
    r = enc.encode_roadgraph(torch.zeros(3, 0, 3, 5, dtype=D), torch.zeros(3, 0, 4, dtype=D), torch.zeros(3, 0, dtype=torch.bool), ctx)
    assert torch.isfinite(n).all() and torch.isfinite(r).all()
    # all-masked sets go through the same default path as empty ones
    n_masked = enc.encode_neighbors(torch.randn(3, 4, 4, 7, dtype=D), torch.zeros(3, 4, 3, dtype=D), torch.zeros(3, 4, dtype=torch.bool), ctx)
    assert torch.allclose(n, n_masked, atol=1e-12)


def test_duplicates_and_reversed_nodes_stay_finite_and_deterministic():
    enc = small_encoder(6)
    g = torch.Generator().manual_seed(6)
    ctx = torch.randn(8, generator=g, dtype=D)
    n = random_tracks(g, 3)
    dup = torch.cat([n, n[:1]])
    out = enc.encode_neighbors(dup, one_hot(g, 4), torch.ones(4, dtype=torch.bool), ctx)
    assert torch.isfinite(out).all()
    polys = torch.randn(2, 3, 5, generator=g, dtype=D)
    polys[..., -1] = 1
    lanes = one_hot(g, 2, k=4)
    rev = polys.clone()
    rev[0] = rev[0].flip(0)
    a = enc.encode_roadgraph(rev, lanes, torch.ones(2, dtype=torch.bool), ctx)
    assert torch.isfinite(a).all() and torch.equal(a, enc.encode_roadgraph(rev, lanes, torch.ones(2, dtype=torch.bool), ctx))


def test_fuse_properties():
    enc = small_encoder(7)
    z = torch.zeros(8, dtype=D)
    out = enc.fuse(z, z, z)
    assert torch.isfinite(out).all() and torch.equal(out, enc.fuse(z, z, z))
    g = torch.Generator().manual_seed(7)
    t, n, r = (torch.randn(8, generator=g, dtype=D) for _ in range(3))
    assert not torch.allclose(enc.fuse(t, n, r), enc.fuse(t, n, r + 0.1 * torch.randn(8, generator=g, dtype=D)))
    t.requires_grad_(), n.requires_grad_(), r.requires_grad_()
    enc.fuse(t, n, r).sum().backward()
    assert all(x.grad.abs().sum() > 0 for x in (t, n, r))
    with pytest.raises(ValueError):
        enc.fuse(t, n, r[:4])


@pytest.mark.parametrize("part", ["history", "neighbors", "roadgraph", "fuse"])
def test_finite_differences(part):
    worst = 0.0
    for k in range(10):
        enc = small_encoder(100 + k)
        g = torch.Generator().manual_seed(k)
        ctx = torch.randn(8, generator=g, dtype=D)
        if part == "history":
            types = one_hot(g)
            errs = finite_difference_errors(lambda h: enc.encode_history(h, types), [random_tracks(g)])
        elif part == "neighbors":
            types, mask = one_hot(g, 3), torch.tensor([True, False, True])
            errs = finite_difference_errors(lambda n, c: enc.encode_neighbors(n, types, mask, c), [random_tracks(g, 3), ctx])
        elif part == "roadgraph":
            lanes, mask = one_hot(g, 3, k=4), torch.tensor([True, True, False])
            errs = finite_difference_errors(lambda p, c: enc.encode_roadgraph(p, lanes, mask, c), [torch.randn(3, 3, 5, generator=g, dtype=D), ctx])
        else:
            errs = finite_difference_errors(enc.fuse, [torch.randn(8, generator=g, dtype=D) for _ in range(3)])
        worst = max(worst, *errs)
    assert worst < 1e-4


def test_collated_scenes_invariant_to_set_order(canonical_scenes):
    from dataclasses import replace

    torch.manual_seed(0)
    enc = SceneEncoder(dim=16, hidden=16).double()
    rng = np.random.default_rng(0)
    for scene in canonical_scenes[:5]:
        batch = collate([scene], dtype=D)
        base = enc(batch)
        perm_n, perm_p = torch.as_tensor(rng.permutation(8)), torch.as_tensor(rng.permutation(32))
        shuffled = replace(
            batch,
            neighbors=batch.neighbors[:, perm_n], neighbor_type=batch.neighbor_type[:, perm_n], neighbor_mask=batch.neighbor_mask[:, perm_n],
            polylines=batch.polylines[:, perm_p], lane_type=batch.lane_type[:, perm_p], polyline_mask=batch.polyline_mask[:, perm_p],
        )
        assert (enc(shuffled) - base).abs().max() < 1e-6
