import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from dpcore.streams import (
    CDC_2D,
    CDC_DIRICHLET,
    CSC,
    DomainStream,
    StreamSpec,
    gen_cdc_2d,
    gen_cdc_dirichlet,
    gen_csc,
    generate,
    is_conserved,
    random_orders,
    run_lengths,
    stream_diagnostics,
)


def test_csc_blocks():
    s = gen_csc(StreamSpec(3, [2, 2, 2]))
    assert s.domains == [0, 0, 1, 1, 2, 2]
    assert [b for _, b in s] == [0, 1, 0, 1, 0, 1]
    assert gen_csc(StreamSpec(1, 5)).domains == [0] * 5


def test_csc_orders_are_block_permutations():
    orders = random_orders(15, 10, seed=0)
    assert len({tuple(o) for o in orders}) == 10
    for o in orders:
        s = generate(StreamSpec(15, 3, CSC, order=o))
        assert [d for d, _ in run_lengths(s)] == o
        assert stream_diagnostics(s)["switch_count"] == 14


def test_spec_validation():
    bad = [dict(num_domains=0, batches_per_domain=1),
           dict(num_domains=2, batches_per_domain=[1]),
           dict(num_domains=2, batches_per_domain=[1, -1]),
           dict(num_domains=2, batches_per_domain=1, kind="CDC"),
           dict(num_domains=2, batches_per_domain=1, kind=CDC_DIRICHLET),
           dict(num_domains=2, batches_per_domain=1, kind=CDC_DIRICHLET, delta=-1.0),
           dict(num_domains=2, batches_per_domain=1, domain_probs=[0.5, 0.6]),
           dict(num_domains=2, batches_per_domain=1, domain_probs=[1.0, 0.0]),
           dict(num_domains=2, batches_per_domain=1, max_run=0),
           dict(num_domains=2, batches_per_domain=1, order=[0, 0])]
    for kw in bad:
        with pytest.raises(ValueError):
            StreamSpec(**kw)
    with pytest.raises(ValueError):
        StreamSpec.from_dict({"num_domains": 2, "batches_per_domain": 1, "speed": 3})
    spec = StreamSpec(2, 3, CDC_2D, seed=4, max_run=2)
    assert StreamSpec.from_dict(spec.to_dict()) == spec


def test_diagnostics_alternating():
    d = stream_diagnostics([(0, 0), (1, 0), (0, 1), (1, 1)])
    assert d["switch_count"] == 3
    assert d["run_length_hist"] == {1: 4}
    assert d["per_domain_counts"] == {0: 2, 1: 2}


def test_csv_roundtrip():
    s = generate(StreamSpec(4, [3, 0, 2, 5], CDC_2D, seed=9))
    text = s.to_csv()
    assert text.splitlines()[0] == "batch_index,domain,batch_id"
    assert DomainStream.from_csv(text).sequence == s.sequence
    buf = io.StringIO()
    s.to_csv(buf)
    buf.seek(0)
    assert DomainStream.from_csv(buf).sequence == s.sequence


def test_reproducible():
    spec = StreamSpec(6, 7, CDC_DIRICHLET, seed=3, delta=0.5)
    assert generate(spec).sequence == generate(spec).sequence


def test_cdc2d_single_domain():
    s = gen_cdc_2d(StreamSpec(1, 9, CDC_2D, seed=1, max_run=2))
    assert s.domains == [0] * 9 and is_conserved(s, [9])
    assert max(n for _, n in run_lengths(s)) <= 9


def test_cdc2d_max_run_respected():
    s = gen_cdc_2d(StreamSpec(5, 12, CDC_2D, seed=2, max_run=3))
    # adjacent runs of one domain can merge, so check the generator's own draws via pool size
    assert is_conserved(s, [12] * 5)
    assert stream_diagnostics(s)["switch_count"] >= 12 * 5 // 3 // 2


def test_small_delta_is_block_like():
    dominated = []
    for seed in range(100):
        s = gen_cdc_dirichlet(StreamSpec(2, 50, CDC_DIRICHLET, seed=seed, delta=1e-6))
        seq = np.array(s.domains)
        for chunk in np.array_split(seq, 2):
            frac = np.bincount(chunk, minlength=2).max() / len(chunk)
            dominated.append(frac >= 0.95)
    assert np.mean(dominated) > 0.9


def _mean_switches(delta, seeds=50):
    return np.mean([stream_diagnostics(gen_cdc_dirichlet(
        StreamSpec(15, 20, CDC_DIRICHLET, seed=s, delta=delta)))["switch_count"] for s in range(seeds)])


def test_switches_increase_with_delta():
    m = [_mean_switches(d) for d in (0.01, 0.1, 1.0, 10.0)]
    assert all(b > a for a, b in zip(m, m[1:]))
    assert m[0] >= 14  # every domain still appears


def test_cdc2d_selection_frequencies():
    probs = np.array([0.5, 0.2, 0.2, 0.1])
    first = [generate(StreamSpec(4, 10, CDC_2D, seed=s, domain_probs=probs.tolist())).domains[0]
             for s in range(1000)]
    counts = np.bincount(first, minlength=4)
    assert chisquare(counts, 1000 * probs).pvalue > 1e-3


specs = st.builds(
    lambda m, counts, kind, seed, delta, run: StreamSpec(
        m, counts[:m] + [0] * (m - len(counts[:m])), kind, seed,
        delta=delta if kind == CDC_DIRICHLET else None,
        max_run=run if kind == CDC_2D else None),
    st.integers(1, 8), st.lists(st.integers(0, 15), min_size=1, max_size=8),
    st.sampled_from([CSC, CDC_DIRICHLET, CDC_2D]), st.integers(0, 2**31),
    st.sampled_from([1e-3, 0.1, 1.0, 50.0]), st.one_of(st.none(), st.integers(1, 5)))


@settings(max_examples=300, deadline=None)
@given(specs)
def test_conservation_fuzz(spec):
    s = generate(spec)
    assert is_conserved(s, spec.batches_per_domain)
    assert len(s) == spec.total


def test_is_conserved_detects_errors():
    assert not is_conserved([(0, 0), (0, 0)], [2])
    assert not is_conserved([(0, 0), (1, 0)], [1])
