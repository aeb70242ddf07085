"""Closed-form FLOP formulas and their instrumented-counter cross-checks."""

import csv

import numpy as np
import pytest

from mixkit.errors import ParameterError
from mixkit.flops import (
    emit_complexity_table,
    flop_report,
    flops_attention,
    flops_hypermixer,
    flops_hypernet_tied,
    flops_mixing_mlp,
    flops_mlp_equal,
    flops_mlp_unequal,
    flops_softmax,
)
from mixkit.mixing import MixingLayerState, TokenMixingSpec, feature_mix, hypernet_generate, mlp1_forward
from mixkit.tensor import Tape, Tensor, softmax_rows


class TestClosedForms:
    def test_hypermixer_reference_value(self):
        # direct evaluation: 256*(4*100*512 + 9*512) + 100*(2*256*512 + 2*512^2 + 9*512)
        assert flops_hypermixer(100, 256, 512) == 132_712_448

    def test_hypermixer_affine_in_n(self):
        d, dp = 256, 512
        step = d * 4 * dp + (2 * d * dp + 2 * dp * dp + 9 * dp)
        for n in (1, 7, 100, 1024):
            assert flops_hypermixer(2 * n, d, dp) - flops_hypermixer(n, d, dp) == n * step

    def test_attention_reference_value(self):
        # 98,304 + 5,120,000 + 300 + 5,120,000
        assert flops_attention(100, 256, 4) == 10_338_604
        assert flops_attention(100, 256, 4) == 98_304 + 5_120_000 + 300 + 5_120_000

    def test_attention_quadratic_leading_term(self):
        d, h = 256, 4
        big = 1 << 22
        assert flops_attention(big, d, h) / big**2 == pytest.approx(4 * d, rel=1e-3)

    def test_attention_head_divisibility(self):
        with pytest.raises(ParameterError):
            flops_attention(10, 256, 3)

    def test_crossover_in_expected_band(self):
        d, dp, h = 256, 512, 4
        crossover = None
        for n in range(1, 5000):
            if flops_attention(n, d, h) > flops_hypermixer(n, d, dp):
                crossover = n
                break
        assert crossover is not None and 1024 <= crossover <= 2048

    def test_mlp_equal_reference(self):
        assert flops_mlp_equal(256, 512) == 4 * 256 * 512 + 9 * 512 == 528_896

    def test_mlp_equal_reduces_to_unequal(self):
        for d, dp in ((3, 5), (256, 512)):
            assert flops_mlp_equal(d, dp) == flops_mlp_unequal(d, dp, d)

    def test_attention_corrected_projection_variant(self):
        n, d, h = 100, 256, 4
        verbatim = flops_attention(n, d, h)
        corrected = flops_attention(n, d, h, corrected_projections=True)
        assert corrected - verbatim == n * 6 * d * d - h * 6 * (d // h) ** 2

    def test_polynomial_structure(self):
        # attention minus its N-independent term fits a degree-2 polynomial with
        # leading coefficient exactly 4d (fit through 3 points)
        d, h = 64, 4
        const = flops_attention(0, d, h)
        xs = np.array([10, 100, 1000], dtype=float)
        ys = np.array([flops_attention(int(n), d, h) - const for n in xs], dtype=float)
        coeffs = np.polyfit(xs, ys, 2)
        assert coeffs[0] == pytest.approx(4 * d, rel=1e-12)


class TestInstrumentedOracle:
    def test_mlp1_forward_exact(self):
        n, d, dp = 8, 4, 6
        rng = np.random.default_rng(0)
        w1 = Tensor(rng.standard_normal((n, dp)))
        w2 = Tensor(rng.standard_normal((n, dp)))
        x = Tensor(rng.standard_normal((n, d)))
        with Tape() as tape:
            mlp1_forward(w1, w2, x)
        assert tape.total_flops == flops_mixing_mlp(n, d, dp)

    def test_hypernet_tied_exact(self):
        n, d, dp = 8, 4, 6
        spec = TokenMixingSpec("hypermixer_tied", d, dp)
        state = MixingLayerState(spec, np.random.default_rng(1), bias=False)
        x = Tensor(np.random.default_rng(2).standard_normal((n, d)))
        with Tape() as tape:
            hypernet_generate(x, None, state)
        assert tape.total_flops == flops_hypernet_tied(n, d, dp)

    def test_hypermixer_block_exact(self):
        n, d, dp = 8, 4, 6
        spec = TokenMixingSpec("hypermixer_tied", d, dp)
        state = MixingLayerState(spec, np.random.default_rng(3), bias=False)
        x = Tensor(np.random.default_rng(4).standard_normal((n, d)))
        with Tape() as tape:
            w1, w2 = hypernet_generate(x, None, state)
            mlp1_forward(w1, w2, x)
        assert tape.total_flops == flops_hypermixer(n, d, dp)

    def test_feature_mix_exact(self):
        n, d, dp = 8, 4, 6
        spec = TokenMixingSpec("identity", d, dp)
        state = MixingLayerState(spec, np.random.default_rng(5), bias=False)
        x = Tensor(np.random.default_rng(6).standard_normal((n, d)))
        with Tape() as tape:
            feature_mix(state, x)
        assert tape.total_flops == n * flops_mlp_equal(d, dp)

    @pytest.mark.parametrize("n", [1, 5, 32])
    def test_softmax_exact(self, n):
        x = Tensor(np.random.default_rng(7).standard_normal((1, n)))
        with Tape() as tape:
            softmax_rows(x)
        assert tape.total_flops == flops_softmax(n)


class TestReport:
    def test_report_invariant(self):
        rep = flop_report(100, 256, 512, heads=4)
        assert rep.hypermixer_total == rep.mixing_mlp + rep.hypernet_tied
        assert rep.hypermixer_total == 132_712_448
        assert rep.attention_total == 10_338_604

    def test_negative_dims_rejected(self):
        with pytest.raises(ParameterError):
            flop_report(0, 4, 4)


class TestComplexityTable:
    def test_single_row(self, tmp_path):
        path = tmp_path / "table.csv"
        emit_complexity_table([1], 4, 6, 2, path)
        rows = list(csv.DictReader(open(path)))
        assert len(rows) == 1
        assert int(rows[0]["flops_hypermixer"]) > 0
        assert int(rows[0]["flops_attention"]) > 0

    def test_rows_match_closed_forms(self, tmp_path):
        path = tmp_path / "table.csv"
        ns = [1, 10, 100]
        emit_complexity_table(ns, 8, 16, 2, path)
        rows = list(csv.DictReader(open(path)))
        for n, row in zip(ns, rows):
            assert int(row["N"]) == n
            assert int(row["flops_hypermixer"]) == flops_hypermixer(n, 8, 16)
            assert int(row["flops_attention"]) == flops_attention(n, 8, 2)
            assert "e" not in row["flops_hypermixer"].lower()

    def test_monotone_in_n(self, tmp_path):
        path = tmp_path / "table.csv"
        ns = list(range(1, 8193, 512))
        emit_complexity_table(ns, 16, 32, 4, path)
        rows = list(csv.DictReader(open(path)))
        hm = [int(r["flops_hypermixer"]) for r in rows]
        at = [int(r["flops_attention"]) for r in rows]
        assert all(b > a for a, b in zip(hm, hm[1:]))
        assert all(b > a for a, b in zip(at, at[1:]))

    def test_empty_n_list_rejected(self, tmp_path):
        with pytest.raises(ParameterError):
            emit_complexity_table([], 4, 4, 2, tmp_path / "x.csv")
