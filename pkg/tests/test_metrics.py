import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corules.dataset import BinaryDataset, ColumnMeta, binarize, generate_tictactoe
from corules.metrics import (
    EvalReport,
    accuracy,
    conjunction_similarity,
    hamming_loss,
    ruleset_similarity,
    similarity_matrix,
    template_distance,
    write_reports_csv,
)
from corules.ruledsl import (
    Conjunction,
    Literal,
    RuleSet,
    Template,
    make_ruleset,
    parse_rules,
)

from oracles import brute_force_matching_score
from test_ruledsl import EIGHT_RULES


@pytest.fixture(scope="module")
def ttt_dataset():
    return binarize(generate_tictactoe())


@pytest.fixture(scope="module")
def eight_rules():
    return parse_rules(EIGHT_RULES)


def tiny_dataset(matrix, labels):
    matrix = np.array(matrix, dtype=bool)
    cols = tuple(
        ColumnMeta(f"f{j}", "==", "a") for j in range(matrix.shape[1])
    )
    return BinaryDataset(cols, matrix, np.array(labels, dtype=bool))


def conj(*names):
    return Conjunction(frozenset(Literal(n, "==", "a") for n in names))


class TestHammingLoss:
    def test_empty_rule_set_counts_positives(self):
        ds = tiny_dataset(np.ones((7, 2)), [1, 1, 1, 1, 1, 0, 0])
        assert hamming_loss(RuleSet(()), ds) == 5

    def test_eight_rules_on_full_data(self, ttt_dataset, eight_rules):
        assert hamming_loss(eight_rules, ttt_dataset) == 0

    def test_negative_covered_twice_contributes_two(self):
        # one negative sample satisfied by two selected conjunctions
        ds = tiny_dataset([[1, 1]], [0])
        rs = make_ruleset(
            [
                Conjunction(frozenset({Literal("f0", "==", "a")})),
                Conjunction(frozenset({Literal("f1", "==", "a")})),
            ]
        )
        assert hamming_loss(rs, ds) == 2


class TestAccuracy:
    def test_perfect_rules_any_subset(self, ttt_dataset, eight_rules):
        rng = np.random.default_rng(1)
        idx = rng.choice(ttt_dataset.n, size=200, replace=False)
        assert accuracy(eight_rules, ttt_dataset.subset(idx)) == 1.0

    def test_eight_rules_match_generator_labels(self, ttt_dataset, eight_rules):
        # the generator's own labels are the oracle for the 8 win rules
        assert hamming_loss(eight_rules, ttt_dataset) == 0
        assert accuracy(eight_rules, ttt_dataset) == 1.0

    def test_empty_rule_set_scores_negative_fraction(self, ttt_dataset):
        frac_neg = 1.0 - ttt_dataset.labels.mean()
        assert accuracy(RuleSet(()), ttt_dataset) == pytest.approx(frac_neg)

    def test_empty_dataset_errors(self):
        ds = tiny_dataset(np.ones((0, 1)), [])
        with pytest.raises(ValueError, match="empty"):
            accuracy(RuleSet(()), ds)


class TestConjunctionSimilarity:
    def test_identical(self):
        assert conjunction_similarity(conj("x1", "x2"), conj("x1", "x2")) == 1.0

    def test_disjoint(self):
        assert conjunction_similarity(conj("x1"), conj("x2")) == 0.0

    def test_one_of_three(self):
        assert conjunction_similarity(conj("x1", "x2"), conj("x1", "x3")) == (
            pytest.approx(1 / 3)
        )

    def test_threshold_tolerance(self):
        a = Conjunction(frozenset({Literal("age", ">", 52.0)}))
        b = Conjunction(frozenset({Literal("age", ">", 52.0 * (1 + 1e-13))}))
        assert conjunction_similarity(a, b) == 1.0


class TestRulesetSimilarity:
    def test_identical_eight_rules(self, eight_rules):
        assert ruleset_similarity(eight_rules, eight_rules) == 1.0

    def test_empty_vs_nonempty(self, eight_rules):
        assert ruleset_similarity(RuleSet(()), eight_rules) == 0.0
        assert ruleset_similarity(RuleSet(()), RuleSet(())) == 1.0

    def test_one_vs_two_half(self):
        a = make_ruleset([conj("x1", "x2")])
        b = make_ruleset([conj("x1", "x2"), conj("x9")])
        assert ruleset_similarity(a, b) == pytest.approx(0.5)

    def test_no_shared_literals_scores_zero(self):
        a = make_ruleset([conj("x1"), conj("x2", "x3")])
        b = make_ruleset([conj("y1"), conj("y2", "y3")])
        assert ruleset_similarity(a, b) == 0.0

    @given(st.data())
    @settings(max_examples=80)
    def test_symmetry_range_and_assignment_oracle(self, data):
        feats = ["a", "b", "c", "d", "e"]
        def some_ruleset():
            n = data.draw(st.integers(min_value=0, max_value=4))
            conjs = []
            for _ in range(n):
                k = data.draw(st.integers(min_value=1, max_value=3))
                names = data.draw(
                    st.lists(
                        st.sampled_from(feats), min_size=k, max_size=k, unique=True
                    )
                )
                conjs.append(conj(*names))
            return make_ruleset(conjs)

        a, b = some_ruleset(), some_ruleset()
        s_ab = ruleset_similarity(a, b)
        s_ba = ruleset_similarity(b, a)
        assert s_ab == pytest.approx(s_ba)
        assert 0.0 <= s_ab <= 1.0
        if len(a) and len(b):
            oracle = brute_force_matching_score(similarity_matrix(a, b))
            assert s_ab == pytest.approx(oracle / max(len(a), len(b)))

    def test_perfect_score_requires_equal_sizes(self, eight_rules):
        shorter = make_ruleset(eight_rules.conjunctions[:4])
        assert ruleset_similarity(shorter, eight_rules) == pytest.approx(0.5)


class TestTemplateDistance:
    def test_containment_is_zero(self):
        t = Template(frozenset({Literal("a", "==", "x")}))
        k = conj_with(["a", "b"])
        assert template_distance(k, [t]) == 0.0

    def test_disjoint_is_one(self):
        t = Template(frozenset({Literal("q", "==", "x")}))
        assert template_distance(conj_with(["a", "b"]), [t]) == 1.0

    def test_half_shared(self):
        t = Template(
            frozenset({Literal("a", "==", "x"), Literal("z", "==", "x")})
        )
        assert template_distance(conj_with(["a", "b"]), [t]) == 0.5

    def test_empty_template_set_errors(self):
        with pytest.raises(ValueError):
            template_distance(conj_with(["a"]), [])

    @given(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=6, unique=True))
    @settings(max_examples=60)
    def test_monotone_as_literals_added(self, names):
        t = Template(
            frozenset({Literal("a", "==", "x"), Literal("c", "==", "x")})
        )
        prev = 1.0
        lits = set()
        for n in names:
            lits.add(Literal(n, "==", "x"))
            d = template_distance(Conjunction(frozenset(lits)), [t])
            assert d <= prev + 1e-12
            prev = d


def conj_with(names):
    return Conjunction(frozenset(Literal(n, "==", "x") for n in names))


def test_eval_report_csv(tmp_path):
    reports = [
        EvalReport(0, 0.9, 3, 12, 0.75),
        EvalReport(1, 1.0, 0, 24, None),
    ]
    path = tmp_path / "report.csv"
    write_reports_csv(reports, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "fold,metric,value"
    assert "0,similarity,0.75" in lines
    assert sum(1 for l in lines if l.startswith("1,")) == 3
