import pytest
import numpy as np
import torch
from pmad.exceptions import ConfigurationError, InvalidArgumentError
from pmad.memory import (
    MemorySelection, PatchMemory, accumulate_utilization, align, export_utilization, init_memory,
    memory_forward, refine_query, select_topk, update_item,
)
from pmad.numerics import grad_check, l2_normalize_rows, matmul, row_softmax
from pmad.schemas import MemoryMode

DTYPE = torch.float64


def _bank(n_items=3, n_patches=6, d_model=8, k=2, seed=0, **kwargs):
    torch.manual_seed(seed)
    bank = PatchMemory(n_items, n_patches, d_model, k=k, **kwargs).double()
    generator = torch.Generator().manual_seed(seed + 1)
    items = torch.randn(n_items, n_patches, d_model, generator=generator, dtype=DTYPE)
    bank.items.copy_(l2_normalize_rows(items).rows)
    return bank


def _queries(batch, n_patches, d_model, observed, seed=0):
    generator = torch.Generator().manual_seed(seed)
    q = torch.randn(batch, n_patches, d_model, generator=generator, dtype=DTYPE)
    mask = torch.zeros(batch, n_patches, dtype=torch.bool)
    for b, p in enumerate(observed):
        mask[b, :p] = True
    return q * mask.unsqueeze(-1), mask


def test_select_topk_hand_example():
    """Test the three-item, single-patch similarity example"""
    items = torch.tensor([[[1.0, 0.0]], [[0.0, 1.0]], [[-1.0, 0.0]]], dtype=DTYPE)
    q_hat = torch.tensor([[1.0, 0.0]], dtype=DTYPE)
    selection = select_topk(q_hat, items, k=2, tau=1.0)
    assert selection.indices == [0, 1]
    assert torch.allclose(selection.full_lambda, torch.tensor([0.6652, 0.2447, 0.0900], dtype=DTYPE), atol=1e-4)
    assert torch.equal(selection.lambdas, selection.full_lambda[[0, 1]])


def test_full_lambda_is_probability(generator):
    """Test selection weights form a probability vector on random inputs"""
    for _ in range(1000):
        items = torch.randn(4, 3, 5, generator=generator, dtype=DTYPE)
        q_hat = torch.randn(3, 5, generator=generator, dtype=DTYPE)
        selection = select_topk(q_hat, items, k=3, tau=0.3)
        assert torch.all(selection.full_lambda >= 0)
        assert abs(selection.full_lambda.sum().item() - 1.0) < 1e-6


def test_topk_ties_prefer_lower_index():
    """Test equal similarities select the lower item id first"""
    items = torch.ones(4, 1, 2, dtype=DTYPE)
    selection = select_topk(torch.ones(1, 2, dtype=DTYPE), items, k=2)
    assert selection.indices == [0, 1]


def test_topk_shift_invariance(generator):
    """Test a constant logit shift leaves the selected indices unchanged"""
    items = torch.randn(5, 1, 3, generator=generator, dtype=DTYPE)
    q_hat = torch.randn(1, 3, generator=generator, dtype=DTYPE)
    # appending a constant coordinate adds the same amount to every logit
    shifted_items = torch.cat([items, torch.ones(5, 1, 1, dtype=DTYPE)], dim=-1)
    shifted_q = torch.cat([q_hat, torch.full((1, 1), 7.0, dtype=DTYPE)], dim=-1)
    assert select_topk(q_hat, items, 3).indices == select_topk(shifted_q, shifted_items, 3).indices


def test_topk_rejects_k_above_m():
    """Test K larger than the bank is a configuration error"""
    with pytest.raises(ConfigurationError):
        select_topk(torch.ones(1, 2), torch.ones(2, 1, 2), k=3)
    with pytest.raises(ConfigurationError):
        PatchMemory(2, 4, 4, k=3)


def test_align_slices_observed_rows():
    """Test items are cut to the observed patches"""
    items = torch.arange(2 * 4 * 3, dtype=DTYPE).view(2, 4, 3)
    mask = torch.tensor([True, True, False, False])
    assert torch.equal(align(items, mask), items[:, :2])
    assert torch.equal(align(items, torch.ones(4, dtype=torch.bool)), items)


def test_update_gate_convexity(generator):
    """Test the gated item lies elementwise between m and vq"""
    for _ in range(50):
        m = torch.randn(4, 6, generator=generator, dtype=DTYPE)
        q = torch.randn(4, 6, generator=generator, dtype=DTYPE)
        u = torch.randn(6, 6, generator=generator, dtype=DTYPE)
        w = torch.randn(6, 6, generator=generator, dtype=DTYPE)
        m_tilde = update_item(m, q, u, w)
        vq = matmul(row_softmax(matmul(m, q.T)), q)
        low, high = torch.minimum(m, vq), torch.maximum(m, vq)
        assert torch.all(m_tilde >= low - 1e-12)
        assert torch.all(m_tilde <= high + 1e-12)


def test_single_patch_closed_forms(generator):
    """Test one observed patch reduces attention to the identity"""
    m = torch.randn(1, 4, generator=generator, dtype=DTYPE)
    q = torch.randn(1, 4, generator=generator, dtype=DTYPE)
    u = torch.randn(4, 4, generator=generator, dtype=DTYPE)
    w = torch.randn(4, 4, generator=generator, dtype=DTYPE)
    assert torch.equal(row_softmax(matmul(m, q.T)), torch.ones(1, 1, dtype=DTYPE))
    m_tilde = update_item(m, q, u, w)
    assert torch.allclose(refine_query(q, m_tilde), m_tilde, atol=1e-15)


def test_single_item_reference_is_exact():
    """Test K=1 output equals the weighted refinement of the best item"""
    bank = _bank(k=1)
    q, _ = _queries(1, 6, 8, [5])
    q_obs = q[0, :5]
    items = bank.items.detach().clone()
    q_tilde, selection = bank.forward_window(q_obs, items)

    q_hat = l2_normalize_rows(q_obs).rows
    best = selection.indices[0]
    m_tilde = update_item(items[best, :5], q_hat, bank.u_psi, bank.w_psi)
    expected = selection.lambdas[0] * refine_query(q_hat, m_tilde)
    assert torch.equal(q_tilde, expected)


def test_memory_padding_invariance():
    """Test outputs are identical for different patch capacities N"""
    wide = _bank(n_patches=8)
    narrow = PatchMemory(3, 6, 8, k=2).double()
    narrow.load_state_dict({**wide.state_dict(), "items": wide.items[:, :6].clone()})
    q, _ = _queries(1, 8, 8, [4])
    out_wide, sel_wide = wide.forward_window(q[0, :4], wide.items.clone())
    out_narrow, sel_narrow = narrow.forward_window(q[0, :4], narrow.items.clone())
    assert sel_wide.indices == sel_narrow.indices
    assert torch.allclose(out_wide, out_narrow, atol=1e-6)


def test_padded_item_content_is_ignored():
    """Test perturbing item rows beyond the observed patches changes nothing"""
    bank = _bank()
    q, mask = _queries(2, 6, 8, [3, 3])
    before, _, _ = bank(q, mask)
    bank.items[:, 3:] += 5.0
    after, _, _ = bank(q, mask)
    assert torch.equal(before, after)


def test_infer_mode_is_pure():
    """Test inference leaves the bank untouched and is repeatable"""
    bank = _bank()
    q, mask = _queries(3, 6, 8, [6, 4, 2])
    snapshot = bank.items.clone()
    first, _, updates = bank(q, mask, mode=MemoryMode.INFER)
    second, _, _ = bank(q, mask, mode=MemoryMode.INFER)
    assert updates is None
    assert torch.equal(first, second)
    assert torch.equal(bank.items, snapshot)


def test_train_mode_writes_unit_rows():
    """Test touched item rows are renormalized after a training pass"""
    bank = _bank()
    q, mask = _queries(3, 6, 8, [6, 4, 2])
    snapshot = bank.items.clone()
    _, _, updates = bank(q, mask, mode=MemoryMode.TRAIN)
    touched = updates.counts > 0
    assert touched.any()
    norms = bank.items.norm(dim=-1)
    assert torch.allclose(norms[touched], torch.ones_like(norms[touched]), atol=1e-5)
    assert torch.equal(bank.items[~touched], snapshot[~touched])
    assert not torch.equal(bank.items, snapshot)


def test_frozen_never_writes():
    """Test a frozen bank keeps its items in training mode"""
    bank = _bank()
    q, mask = _queries(2, 6, 8, [6, 6])
    snapshot = bank.items.clone()
    bank(q, mask, mode=MemoryMode.TRAIN, forced_items=[0, 1], frozen=True)
    assert torch.equal(bank.items, snapshot)


def test_own_domain_updates_only_forced_item():
    """Test own-domain training mutates only the forced item"""
    bank = _bank()
    q, mask = _queries(2, 6, 8, [6, 5])
    snapshot = bank.items.clone()
    _, selections, _ = bank(q, mask, mode=MemoryMode.TRAIN, forced_items=[2, 2], restrict_updates=True)
    assert all(s.indices == [2] for s in selections)
    assert torch.equal(bank.items[:2], snapshot[:2])
    assert not torch.equal(bank.items[2], snapshot[2])


def test_forced_selection_is_one_hot():
    """Test forcing an item gives it weight one"""
    bank = _bank()
    q, mask = _queries(1, 6, 8, [6])
    _, selections, _ = bank(q, mask, forced_items=[1])
    assert selections[0].full_lambda.tolist() == [0.0, 1.0, 0.0]


def test_memory_forward_single_window():
    """Test the single-window pass checks rows and writes back in training mode"""
    bank = _bank()
    q, mask = _queries(1, 6, 8, [4])
    with pytest.raises(InvalidArgumentError):
        memory_forward(q[0], bank, mask[0])
    snapshot = bank.items.clone()
    memory_forward(q[0, :4], bank, mask[0], mode=MemoryMode.INFER)
    assert torch.equal(bank.items, snapshot)
    memory_forward(q[0, :4], bank, mask[0], mode=MemoryMode.TRAIN)
    assert not torch.equal(bank.items, snapshot)


def test_memory_gradient():
    """Test autograd through the memory pass matches finite differences"""
    bank = _bank(n_items=3, n_patches=4, d_model=16, k=2)
    q, mask = _queries(1, 4, 16, [4], seed=5)
    items = bank.items.clone()

    def f(values):
        q_tilde, _ = bank.forward_window(values.view(4, 16), items)
        return (q_tilde ** 2).sum()

    assert grad_check(f, q[0].reshape(-1)) <= 1e-4


def _reps(domains, n_patches=4, d_model=3, per_domain=3):
    reps = {}
    for d in domains:
        rows = []
        for s in range(per_domain):
            rep = torch.full((n_patches, d_model), float(d + 1)) + 0.1 * s
            rows.append((rep, torch.ones(n_patches, dtype=torch.bool)))
        reps[d] = rows
    return reps


def test_init_memory_one_item_per_domain():
    """Test each item is seeded from its own domain with unit rows"""
    bank = init_memory(_reps([0, 1, 2]), samples=2, seed=0)
    assert bank.n_items == 3
    assert bank.init_domain.tolist() == [0, 1, 2]
    assert torch.allclose(bank.items.norm(dim=-1), torch.ones(3, 4))


def test_init_memory_is_seeded():
    """Test the same seed gives the same bank"""
    first = init_memory(_reps([0, 1]), samples=2, seed=7)
    second = init_memory(_reps([0, 1]), samples=2, seed=7)
    assert torch.equal(first.items, second.items)
    assert torch.equal(first.u_psi, second.u_psi)


def test_init_memory_override_smaller_and_larger():
    """Test the M-override groups or repeats domains"""
    grouped = init_memory(_reps([0, 1, 2, 3]), samples=2, seed=0, n_items=2)
    assert grouped.init_domain.tolist() == [0, 1]
    repeated = init_memory(_reps([0, 1]), samples=2, seed=0, n_items=5)
    assert repeated.init_domain.tolist() == [0, 1, 0, 1, 0]
    assert repeated.own_item(3) == 3


def test_init_memory_rejects_empty_domain():
    """Test a domain with no representations is an error"""
    with pytest.raises(InvalidArgumentError):
        init_memory({0: []}, samples=2, seed=0)


def test_utilization_uniform_row():
    """Test uniform selection weights normalize to 1/M"""
    acc = np.zeros((2, 4))
    selection = MemorySelection([0], torch.tensor([0.25]), torch.full((4,), 0.25))
    accumulate_utilization(acc, 0, selection)
    normalized, flagged = export_utilization(acc)
    assert np.allclose(normalized[0], 0.25)
    assert np.array_equal(normalized[1], np.zeros(4))
    assert flagged == [1]


def test_utilization_rows_sum_to_one():
    """Test accumulated rows normalize to one"""
    acc = np.zeros((1, 3))
    for weights in ([0.2, 0.5, 0.3], [0.6, 0.1, 0.3]):
        w = torch.tensor(weights, dtype=DTYPE)
        accumulate_utilization(acc, 0, MemorySelection([0], w[:1], w))
    normalized, flagged = export_utilization(acc)
    assert flagged == []
    assert abs(normalized.sum() - 1.0) < 1e-12
    assert np.allclose(normalized[0], [0.4, 0.3, 0.3])


def test_init_memory_rejects_gap_in_domain_ids():
    """Test a missing domain id is refused so items stay aligned with domains"""
    with pytest.raises(ConfigurationError):
        init_memory(_reps([0, 2]), samples=2, seed=0)
    with pytest.raises(ConfigurationError):
        init_memory(_reps([1, 2]), samples=2, seed=0)
