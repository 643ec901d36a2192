"""Referee tests: closed-form posteriors, marginalization against brute
force, evidence weighting, edit weights, and snapshot discipline."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beliefbench.language import And, Atom, Atomic, Not, Or, Truth
from beliefbench.oracle import OracleError, OracleState, fit_oracle
from beliefbench.world import DependencyMap

DEPS = DependencyMap((("ru", "rd"),))
FLAT = DependencyMap(())


def _state(deps=FLAT, alpha=1.0):
    return OracleState(deps, prior_alpha=alpha)


def _counted(subject, relation, counts: dict, state=None):
    """A state whose (subject, relation) cell holds exactly `counts`."""
    state = state or _state()
    state.register(subject, relation, sorted(counts))
    for obj, c in counts.items():
        state.basic[(subject, relation)][obj] = float(c)
    return state


# -- closed-form posterior ---------------------------------------------------


def test_posterior_prior_only_uniform():
    state = _state()
    state.register("s", "r", ["a", "b", "c"])
    dist = state.posterior_basic("s", "r")
    assert dist.probs == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-15)


def test_posterior_worked_case_6_4():
    state = _counted("s", "r", {"a": 6, "b": 4})
    dist = state.posterior_basic("s", "r")
    by = dict(zip(dist.objects, dist.probs))
    assert by["a"] == pytest.approx(7 / 12, abs=1e-15)
    assert by["b"] == pytest.approx(5 / 12, abs=1e-15)


def test_posterior_worked_case_0_10():
    state = _counted("s", "r", {"a": 0, "b": 10})
    by = dict(zip(*[state.posterior_basic("s", "r").objects, state.posterior_basic("s", "r").probs]))
    assert by["a"] == pytest.approx(1 / 12, abs=1e-15)
    assert by["b"] == pytest.approx(11 / 12, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_posterior_matches_formula_random_tables(k, seed):
    rng = np.random.default_rng(seed)
    counts = {f"o{i}": float(rng.integers(0, 10_000)) for i in range(k)}
    state = _counted("s", "r", counts)
    dist = state.posterior_basic("s", "r")
    vec = np.array([counts[o] for o in dist.objects])
    expected = (1.0 + vec) / (1.0 + vec).sum()
    assert np.abs(np.array(dist.probs) - expected).max() < 1e-12
    assert abs(math.fsum(dist.probs) - 1.0) < 1e-12


def test_unregistered_key_errors():
    with pytest.raises(OracleError, match="unknown fact key"):
        _state().posterior_basic("s", "r")


# -- observations ---------------------------------------------------------------


def test_observe_weight_zero_is_noop():
    state = _counted("s", "r", {"a": 2, "b": 1})
    before = state.posterior_basic("s", "r")
    state.observe_atomic(Atom("s", "r", "a"), 0.0)
    assert state.posterior_basic("s", "r") == before


def test_observe_negative_weight_errors():
    state = _counted("s", "r", {"a": 1})
    with pytest.raises(OracleError, match="negative"):
        state.observe_atomic(Atom("s", "r", "a"), -1.0)


def test_observe_counts_accumulate_to_worked_posterior():
    state = _state()
    state.register("s", "r", ["a", "b"])
    for _ in range(6):
        state.observe_atomic(Atom("s", "r", "a"))
    for _ in range(4):
        state.observe_atomic(Atom("s", "r", "b"))
    assert state.atom_probability(Atom("s", "r", "a")) == pytest.approx(7 / 12, abs=1e-15)


def test_downstream_observation_credits_conditionals_by_posterior():
    """One downstream observation splits across upstream values in
    proportion to the upstream posterior (the 0.8/0.2 case)."""
    state = _state(DEPS)
    # upstream posterior (0.8, 0.2): counts (7, 1) give (8/10, 2/10)
    _counted("s", "ru", {"harvard": 7.0, "yale": 1.0}, state)
    state.observe_atomic(Atom("s", "rd", "architect"), 1.0)
    assert state.cond[("rd", "ru", "harvard")]["architect"] == pytest.approx(0.8, abs=1e-12)
    assert state.cond[("rd", "ru", "yale")]["architect"] == pytest.approx(0.2, abs=1e-12)


def test_false_sentence_spreads_to_alternative():
    state = _state()
    state.register("s", "r", ["gt", "distractor"])
    state.observe_false(Atom("s", "r", "distractor"), 1.0)
    assert state.basic[("s", "r")]["gt"] == pytest.approx(1.0)
    assert state.basic[("s", "r")]["distractor"] == 0.0


# -- corpus fitting ----------------------------------------------------------------


def test_corpus_single_atomic_equals_observe_atomic():
    a = Atom("s", "r", "o")
    s1, s2 = _state(), _state()
    s1.observe_corpus([Atomic(a)])
    s2.register("s", "r", ["o"])
    s2.observe_atomic(a)
    assert s1.fingerprint() == s2.fingerprint()


def test_corpus_and_true_gives_full_weight():
    a, b = Atom("s1", "r", "x"), Atom("s2", "r", "y")
    state = _state()
    state.observe_corpus([Truth(And(a, b), True)])
    assert state.basic[("s1", "r")]["x"] == pytest.approx(1.0)
    assert state.basic[("s2", "r")]["y"] == pytest.approx(1.0)


def test_corpus_or_true_weight_two_thirds():
    """With pass-1 probabilities 0.5 each, p(A | A or B) = 2/3."""
    a, b = Atom("s1", "r", "x"), Atom("s2", "r", "y")
    state = _state()
    state.register("s1", "r", ["x", "x2"])
    state.register("s2", "r", ["y", "y2"])
    state.observe_corpus([Truth(Or(a, b), True)])
    assert state.basic[("s1", "r")]["x"] == pytest.approx(2 / 3, abs=1e-12)
    assert state.basic[("s2", "r")]["y"] == pytest.approx(2 / 3, abs=1e-12)


def test_corpus_and_false_weight_one_third():
    a, b = Atom("s1", "r", "x"), Atom("s2", "r", "y")
    state = _state()
    state.register("s1", "r", ["x", "x2"])
    state.register("s2", "r", ["y", "y2"])
    state.observe_corpus([Truth(And(a, b), False)])
    assert state.basic[("s1", "r")]["x"] == pytest.approx(1 / 3, abs=1e-12)


def test_corpus_not_sentences():
    a = Atom("s1", "r", "x")
    state = _state()
    state.register("s1", "r", ["x", "x2"])
    state.observe_corpus([Truth(Not(a), False)])  # means: a is true
    assert state.basic[("s1", "r")]["x"] == pytest.approx(1.0)
    state2 = _state()
    state2.register("s1", "r", ["x", "x2"])
    state2.observe_corpus([Truth(Not(a), True)])  # contributes nothing
    assert state2.basic[("s1", "r")]["x"] == 0.0


def test_exchangeability_of_atomic_and_tf_evidence():
    atoms = [Atom("s", "r", f"o{i % 3}") for i in range(9)]
    sentences = [Atomic(a) for a in atoms] + [
        Truth(Atom("s", "r", "o0"), False),
        Truth(Atom("s", "r", "o1"), True),
    ]
    s1, s2 = _state(DEPS), _state(DEPS)
    s1.observe_corpus(sentences)
    s2.observe_corpus(list(reversed(sentences)))
    assert s1.fingerprint() == s2.fingerprint()


# -- marginalization ------------------------------------------------------------------


def _marginal_fixture():
    """Upstream posterior (0.7, 0.3); p(d1|u1)=0.9, p(d1|u2)=0.2."""
    state = _state(DEPS)
    _counted("s", "ru", {"u1": 6.0, "u2": 2.0}, state)  # (7/10, 3/10)
    state.register("other", "rd", ["d1", "d2"])  # registers the rd support
    state.cond[("rd", "ru", "u1")] = {"d1": 8.0, "d2": 0.0}  # (9/10, 1/10)
    state.cond[("rd", "ru", "u2")] = {"d1": 1.0, "d2": 7.0}  # (2/10, 8/10)
    return state


def test_marginalization_worked_case():
    state = _marginal_fixture()
    dist = state.posterior_downstream("s", "rd")
    by = dict(zip(dist.objects, dist.probs))
    assert by["d1"] == pytest.approx(0.7 * 0.9 + 0.3 * 0.2, abs=1e-12)
    assert math.fsum(dist.probs) == pytest.approx(1.0, abs=1e-12)


def test_marginalization_point_mass_upstream():
    state = _state(DEPS)
    state.register("s", "ru", ["u1"])
    state.register("other", "rd", ["d1", "d2"])
    state.cond[("rd", "ru", "u1")] = {"d1": 3.0}
    dist = state.posterior_downstream("s", "rd")
    row = state._cell_distribution(state.cond[("rd", "ru", "u1")], ["d1", "d2"])
    assert dist.probs == pytest.approx(row.probs, abs=1e-15)


def test_marginalization_fallback_warns_and_uses_basic(caplog):
    state = _counted("s", "rd", {"d1": 3, "d2": 1}, _state(DEPS))
    with caplog.at_level("WARNING"):
        dist = state.posterior_downstream("s", "rd")
    assert "falling back" in caplog.text
    assert dist == state.posterior_basic("s", "rd")


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_marginalization_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n_up = int(rng.integers(1, 21))
    n_down = int(rng.integers(1, 8))
    ups = [f"u{i}" for i in range(n_up)]
    downs = [f"d{i}" for i in range(n_down)]
    state = _state(DEPS)
    _counted("s", "ru", {u: float(rng.integers(0, 50)) for u in ups}, state)
    state.register("anchor", "rd", downs)
    for u in ups:
        if rng.random() < 0.8:
            state.cond[("rd", "ru", u)] = {
                d: float(rng.integers(0, 30)) for d in downs if rng.random() < 0.7
            }
    dist = state.posterior_downstream("s", "rd")

    # independent brute force with plain Python arithmetic
    upstream = state.posterior_basic("s", "ru")
    alpha = state.prior_alpha
    expected = {}
    for d in downs:
        total = 0.0
        for u, p_u in zip(upstream.objects, upstream.probs):
            cell = state.cond.get(("rd", "ru", u), {})
            n = sum(cell.get(x, 0.0) for x in downs)
            total += p_u * (alpha + cell.get(d, 0.0)) / (len(downs) * alpha + n)
        expected[d] = total
    for obj, p in zip(dist.objects, dist.probs):
        assert abs(p - expected[obj]) < 1e-12
    assert abs(math.fsum(dist.probs) - 1.0) < 1e-12


# -- truth probabilities ---------------------------------------------------------------


def test_truth_complement_product_inclusion_exclusion():
    state = _state()
    state.register("s1", "r", ["a", "b"])   # prior-only: p = 1/2
    state.register("s2", "r", ["c", "d", "e"])  # p = 1/3
    a = Atom("s1", "r", "a")
    b = Atom("s2", "r", "c")
    pa, pb = 0.5, 1 / 3
    assert state.body_probability(Not(a)) == pytest.approx(1 - pa, abs=1e-15)
    assert state.body_probability(And(a, b)) == pytest.approx(pa * pb, abs=1e-15)
    assert state.body_probability(Or(a, b)) == pytest.approx(pa + pb - pa * pb, abs=1e-15)
    assert state.truth_probability(Truth(a, False)) == pytest.approx(1 - pa, abs=1e-15)


def test_truth_absorption_certain_atom():
    state = _counted("s1", "r", {"a": 1e9})
    state.register("s2", "r", ["c", "d"])
    pa = state.atom_probability(Atom("s1", "r", "a"))
    p_or = state.body_probability(Or(Atom("s1", "r", "a"), Atom("s2", "r", "c")))
    assert p_or >= pa
    assert p_or == pytest.approx(1.0, abs=1e-6)


def test_truth_shared_fact_key_errors():
    state = _state()
    state.register("s", "r", ["a", "b"])
    with pytest.raises(OracleError, match="dependence"):
        state.body_probability(And(Atom("s", "r", "a"), Atom("s", "r", "b")))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_axioms_hold_on_random_states(seed):
    rng = np.random.default_rng(seed)
    state = _state()
    for i in range(4):
        _counted(f"s{i}", "r", {f"o{j}": float(rng.integers(0, 40)) for j in range(3)}, state)
    a = Atom("s0", "r", f"o{rng.integers(3)}")
    b = Atom("s1", "r", f"o{rng.integers(3)}")
    pa, pb = state.atom_probability(a), state.atom_probability(b)
    assert abs(state.truth_probability(Truth(a, True)) - pa) < 1e-12
    assert abs(state.body_probability(Not(a)) - (1 - pa)) < 1e-12
    assert abs(state.body_probability(And(a, b)) - pa * pb) < 1e-12
    assert abs(state.body_probability(Or(a, b)) - (pa + pb - pa * pb)) < 1e-12


def test_candidate_probability_extends_support():
    state = _counted("s", "r", {"a": 6, "b": 4})
    # unseen candidate: alpha / ((K+1) alpha + N)
    assert state.candidate_probability("s", "r", "new") == pytest.approx(1 / 13, abs=1e-15)
    assert state.candidate_probability("s", "r", "a") == pytest.approx(7 / 12, abs=1e-15)


# -- edits --------------------------------------------------------------------------------


def test_apply_edit_worked_case():
    state = _counted("s", "r", {"a": 6, "b": 4})
    state.apply_edit(Atom("s", "r", "b"), 1000)
    assert state.atom_probability(Atom("s", "r", "b")) == pytest.approx(1005 / 1012, abs=1e-12)


def test_apply_edit_requires_positive_weight():
    state = _counted("s", "r", {"a": 1})
    with pytest.raises(OracleError):
        state.apply_edit(Atom("s", "r", "a"), 0)


def test_edit_to_upstream_changes_downstream_posterior():
    state = _marginal_fixture()
    before = state.posterior_downstream("s", "rd")
    state.apply_edit(Atom("s", "ru", "u2"), 100)
    after = state.posterior_downstream("s", "rd")
    assert dict(zip(after.objects, after.probs))["d1"] < dict(zip(before.objects, before.probs))["d1"]
    # recompute the mixture by hand after the edit
    upstream = state.posterior_basic("s", "ru")
    expected_d1 = 0.0
    for u, p_u in zip(upstream.objects, upstream.probs):
        cell = state.cond.get(("rd", "ru", u), {})
        n = cell.get("d1", 0.0) + cell.get("d2", 0.0)
        expected_d1 += p_u * (1.0 + cell.get("d1", 0.0)) / (2.0 + n)
    assert dict(zip(after.objects, after.probs))["d1"] == pytest.approx(expected_d1, abs=1e-12)


# -- minimal edit weight --------------------------------------------------------------------


def test_min_weight_worked_case_88():
    state = _counted("s", "r", {"a": 6, "b": 4})
    n_prime = state.min_weight_for(Atom("s", "r", "a"), threshold=0.95)
    assert n_prime == 88
    assert (7 + 88) / (12 + 88) >= 0.95
    assert (7 + 87) / (12 + 87) < 0.95


def test_min_weight_zero_when_threshold_met():
    state = _counted("s", "r", {"a": 500, "b": 1})
    assert state.min_weight_for(Atom("s", "r", "a"), threshold=0.95) == 0


def test_min_weight_threshold_one_errors():
    state = _counted("s", "r", {"a": 1})
    with pytest.raises(OracleError):
        state.min_weight_for(Atom("s", "r", "a"), threshold=1.0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_min_weight_minimality_integer_scan(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 8))
    counts = {f"o{i}": float(rng.integers(0, 200)) for i in range(k)}
    state = _counted("s", "r", counts)
    target = f"o{rng.integers(k)}"
    n_prime = state.min_weight_for(Atom("s", "r", target), threshold=0.95)

    def posterior_at(w):
        n = sum(counts.values())
        return (1.0 + counts[target] + w) / (k + n + w)

    # independent integer scan
    scan = 0
    while posterior_at(scan) < 0.95:
        scan += 1
    assert n_prime == scan
    assert posterior_at(n_prime) >= 0.95
    if n_prime > 0:
        assert posterior_at(n_prime - 1) < 0.95


# -- snapshots --------------------------------------------------------------------------------


def test_snapshot_edit_restore_roundtrip():
    state = _counted("s", "r", {"a": 6, "b": 4})
    before = state.fingerprint()
    token = state.snapshot()
    state.apply_edit(Atom("s", "r", "new object"), 1000)
    assert state.fingerprint() != before
    state.restore(token)
    assert state.fingerprint() == before


def test_snapshot_lifo_nesting():
    state = _counted("s", "r", {"a": 1})
    t1 = state.snapshot()
    state.observe_atomic(Atom("s", "r", "a"), 5)
    mid = state.fingerprint()
    t2 = state.snapshot()
    state.observe_atomic(Atom("s", "r", "a"), 7)
    state.restore(t2)
    assert state.fingerprint() == mid
    state.restore(t1)
    assert state.basic[("s", "r")]["a"] == 1.0
    with pytest.raises(OracleError, match="stale"):
        state.restore(t2)


def test_5000_edit_restore_cycles_leave_state_identical():
    state = _counted("s", "ru", {"u1": 3, "u2": 2}, _state(DEPS))
    state.register("x", "rd", ["d1", "d2"])
    initial = state.fingerprint()
    rng = np.random.default_rng(0)
    for _ in range(5000):
        token = state.snapshot()
        state.apply_edit(Atom("s", "ru", "u1"), float(rng.integers(1, 2000)))
        state.apply_edit(Atom("s", "rd", "d1"), float(rng.integers(1, 50)))
        state.restore(token)
    assert state.fingerprint() == initial


# -- persistence --------------------------------------------------------------------------------


def test_state_save_load_roundtrip(tmp_path):
    state = _marginal_fixture()
    path = str(tmp_path / "oracle.json.gz")
    state.save(path, config={"alpha": 1.0}, seed=1)
    loaded = OracleState.load(path)
    assert loaded.fingerprint() == state.fingerprint()
    assert loaded.posterior_downstream("s", "rd") == state.posterior_downstream("s", "rd")


def test_fit_oracle_convenience():
    sentences = [Atomic(Atom("s", "r", "o"))] * 3
    state = fit_oracle(sentences, FLAT)
    assert state.basic[("s", "r")]["o"] == 3.0
