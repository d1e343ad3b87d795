import numpy as np
import pytest

from blocksrc import BENIGN, MALIGNANT, Dictionary, bbll, bbmap, block_decision, ensemble_decision, roc_auc
from blocksrc.ensemble import BlockDecision, block_decisions_batch, lls_score, write_roc_csv, write_roc_svg
from blocksrc.solvers import L1_LOG_FLOOR, SparseCode

from .oracles import pair_counting_auc


def fake_decision(index, hard, lls=0.0, l1=(1.0, 1.0)):
    return BlockDecision(
        block_index=index,
        code=SparseCode.from_coefficients(np.zeros(2), 0.0, 0),
        per_class_l1=np.asarray(l1, dtype=float),
        per_class_residual=np.zeros(2),
        hard_label=hard,
        lls=lls,
    )


class TestLlsScore:
    def test_malignant_only_support_is_positive(self):
        # all mass on malignant atoms: guarded benign mass pushes the default
        # score far positive (and the inverted score equally negative)
        l1 = np.array([0.0, 0.7])
        score = lls_score(l1)
        assert score == pytest.approx(-np.log(L1_LOG_FLOOR / 0.7))
        assert score > 0
        assert lls_score(l1, invert=True) == pytest.approx(-score)

    def test_equal_masses_zero(self):
        assert lls_score(np.array([0.3, 0.3])) == 0.0

    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            l1 = rng.uniform(0, 2, size=2)
            assert lls_score(l1, invert=True) == pytest.approx(-lls_score(l1), abs=1e-12)


class TestBlockDecision:
    def low_coherence_pair_dict(self, rng):
        A = np.abs(rng.standard_normal((10, 4))) + 0.2
        return Dictionary.from_matrix(A, [BENIGN, BENIGN, MALIGNANT, MALIGNANT])

    def test_copy_of_benign_atom(self):
        rng = np.random.default_rng(1)
        D = self.low_coherence_pair_dict(rng)
        y = 1.3 * D.atoms[:, 0]
        dec = block_decision(D, y, eps=0.01 * np.linalg.norm(y))
        assert dec.per_class_residual[BENIGN] <= 0.05 * np.linalg.norm(y)
        assert dec.hard_label == BENIGN
        # direct arithmetic on the returned code agrees
        x = dec.code.coefficients
        mask = D.atom_labels == BENIGN
        xb = np.where(mask, x, 0.0)
        np.testing.assert_allclose(
            dec.per_class_residual[BENIGN], np.linalg.norm(y - D.atoms @ xb), atol=1e-9
        )

    def test_degenerate_dictionary(self):
        D = Dictionary.from_matrix(np.zeros((4, 3)), [0, 1, 1])
        dec = block_decision(D, np.ones(4))
        assert dec.degenerate
        assert dec.hard_label == BENIGN
        assert dec.lls == 0.0

    def test_zero_block(self):
        rng = np.random.default_rng(2)
        D = self.low_coherence_pair_dict(rng)
        dec = block_decision(D, np.zeros(10))
        assert dec.degenerate
        assert dec.hard_label == BENIGN

    def test_infeasible_eps_uses_best_iterate(self):
        rng = np.random.default_rng(3)
        D = Dictionary.from_matrix(rng.standard_normal((12, 2)), [BENIGN, MALIGNANT])
        y = rng.standard_normal(12)
        dec = block_decision(D, y, eps=1e-9)
        assert not dec.code.feasible
        assert np.isfinite(dec.lls)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        D = self.low_coherence_pair_dict(rng)
        Y = np.abs(rng.standard_normal((10, 5)))
        eps = 0.3 * np.linalg.norm(Y, axis=0)
        batch = block_decisions_batch(D, Y, eps, block_index=7)
        for i, dec in enumerate(batch):
            solo = block_decision(D, Y[:, i], float(eps[i]), block_index=7)
            assert dec.hard_label == solo.hard_label
            assert dec.lls == pytest.approx(solo.lls, abs=1e-7)
            assert dec.block_index == 7


class TestBbmap:
    def test_unanimous(self):
        decisions = [fake_decision(i, MALIGNANT) for i in range(64)]
        posterior, label, score = bbmap(decisions)
        np.testing.assert_allclose(posterior, [0.0, 1.0])
        assert label == MALIGNANT
        assert score == 1.0

    def test_three_quarters_benign(self):
        decisions = [fake_decision(i, BENIGN) for i in range(3)] + [fake_decision(3, MALIGNANT)]
        posterior, label, score = bbmap(decisions)
        np.testing.assert_allclose(posterior, [0.75, 0.25])
        assert label == BENIGN
        assert score == 0.25

    def test_tie_breaks_malignant(self):
        decisions = [fake_decision(i, BENIGN) for i in range(2)] + [
            fake_decision(2 + i, MALIGNANT) for i in range(2)
        ]
        _, label, _ = bbmap(decisions)
        assert label == MALIGNANT

    def test_posterior_sums_to_one_and_permutation_invariant(self):
        rng = np.random.default_rng(5)
        decisions = [fake_decision(i, int(rng.integers(0, 2))) for i in range(9)]
        posterior, label, score = bbmap(decisions)
        assert posterior.sum() == pytest.approx(1.0)
        perm = [decisions[i] for i in rng.permutation(9)]
        posterior2, label2, score2 = bbmap(perm)
        np.testing.assert_array_equal(posterior, posterior2)
        assert (label, score) == (label2, score2)

    def test_invariant_under_hard_label_preserving_rewrites(self):
        rng = np.random.default_rng(6)
        decisions = [fake_decision(i, int(rng.integers(0, 2))) for i in range(7)]
        rewritten = [
            fake_decision(d.block_index, d.hard_label, lls=float(rng.normal()),
                          l1=tuple(rng.uniform(0, 3, 2)))
            for d in decisions
        ]
        assert bbmap(decisions)[1] == bbmap(rewritten)[1]
        np.testing.assert_array_equal(bbmap(decisions)[0], bbmap(rewritten)[0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            bbmap([])


class TestBbll:
    def test_mean_example(self):
        vals = [1.0, -0.5, 0.5, 1.0]
        decisions = [fake_decision(i, BENIGN, lls=v) for i, v in enumerate(vals)]
        ells, _ = bbll(decisions)
        assert ells == pytest.approx(0.5)

    def test_boundary_goes_to_positive_class(self):
        decisions = [fake_decision(i, BENIGN, lls=0.0) for i in range(4)]
        _, label = bbll(decisions, tau=0.0)
        assert label == MALIGNANT

    def test_large_tau_flips_to_negative_class(self):
        decisions = [fake_decision(i, BENIGN, lls=1.0) for i in range(4)]
        _, label = bbll(decisions, tau=5.0)
        assert label == BENIGN

    def test_mean_identity_and_expanded_form(self):
        rng = np.random.default_rng(6)
        l1s = rng.uniform(0.0, 2.0, size=(16, 2))
        decisions = [
            fake_decision(i, BENIGN, lls=lls_score(l1s[i]), l1=tuple(l1s[i])) for i in range(16)
        ]
        ells, _ = bbll(decisions)
        assert ells == pytest.approx(np.mean([d.lls for d in decisions]), abs=1e-12)
        # expanded form: mean of log-mass differences with the same guard
        guarded = np.maximum(l1s, L1_LOG_FLOOR)
        expanded = -(np.log(guarded[:, BENIGN]).sum() - np.log(guarded[:, MALIGNANT]).sum()) / 16
        assert ells == pytest.approx(expanded, abs=1e-9)

    def test_antisymmetry_of_ensemble_score(self):
        rng = np.random.default_rng(7)
        l1s = rng.uniform(0.0, 2.0, size=(8, 2))
        default = [fake_decision(i, BENIGN, lls=lls_score(l1s[i])) for i in range(8)]
        inverted = [fake_decision(i, BENIGN, lls=lls_score(l1s[i], invert=True)) for i in range(8)]
        ells_a, _ = bbll(default)
        ells_b, _ = bbll(inverted)
        assert ells_b == pytest.approx(-ells_a, abs=1e-9)

    def test_ensemble_decision_fields(self):
        decisions = [fake_decision(i, MALIGNANT, lls=0.2) for i in range(4)]
        dec = ensemble_decision(decisions, tau=0.1)
        assert dec.label_bbmap == MALIGNANT
        assert dec.label_bbll == MALIGNANT
        assert dec.vote_score == 1.0
        assert dec.posterior.sum() == pytest.approx(1.0)
        assert dec.tau == 0.1


class TestRocAuc:
    def test_perfect_separation(self):
        _, auc = roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert auc == 1.0

    def test_all_tied_scores(self):
        points, auc = roc_auc([0.5] * 6, [1, 0, 1, 0, 1, 0])
        assert auc == pytest.approx(0.5)
        np.testing.assert_array_equal(points[0, 1:], [0.0, 0.0])
        np.testing.assert_array_equal(points[-1, 1:], [1.0, 1.0])

    def test_six_sample_pair_counting(self):
        scores = [0.3, 0.8, 0.8, 0.1, 0.5, 0.4]
        truth = [0, 1, 0, 0, 1, 1]
        _, auc = roc_auc(scores, truth)
        assert auc == pytest.approx(pair_counting_auc(scores, truth), abs=1e-12)

    def test_matches_pair_counting_random(self):
        rng = np.random.default_rng(8)
        for n in range(2, 51):
            for _ in range(3):
                truth = rng.integers(0, 2, n)
                if truth.min() == truth.max():
                    truth[0] = 1 - truth[0]
                # quantized scores force plenty of ties
                scores = np.round(rng.random(n) * 4) / 4
                _, auc = roc_auc(scores, truth)
                assert auc == pytest.approx(pair_counting_auc(scores, truth), abs=1e-12)

    def test_exhaustive_small_binary_inputs(self):
        for n in range(2, 7):
            for smask in range(2**n):
                scores = [(smask >> i) & 1 for i in range(n)]
                for tmask in range(1, 2**n - 1):
                    truth = [(tmask >> i) & 1 for i in range(n)]
                    _, auc = roc_auc(scores, truth)
                    assert auc == pytest.approx(pair_counting_auc(scores, truth), abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="both classes"):
            roc_auc([0.1, 0.2], [1, 1])

    def test_endpoints(self):
        rng = np.random.default_rng(9)
        points, _ = roc_auc(rng.random(20), rng.permutation([0] * 10 + [1] * 10))
        assert points[0, 0] == np.inf
        np.testing.assert_array_equal(points[0, 1:], [0, 0])
        np.testing.assert_array_equal(points[-1, 1:], [1, 1])


class TestRocExport:
    def test_csv_and_svg(self, tmp_path):
        points, _ = roc_auc([0.9, 0.4, 0.6, 0.1], [1, 0, 1, 0])
        csv_path = tmp_path / "roc.csv"
        svg_path = tmp_path / "roc.svg"
        write_roc_csv(csv_path, points)
        write_roc_svg(svg_path, points)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "threshold,fpr,tpr"
        assert len(lines) == len(points) + 1
        svg = svg_path.read_text()
        assert svg.startswith("<svg") and "polyline" in svg
