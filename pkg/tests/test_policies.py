import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetbandits.policies import (
    CandidateSet,
    EmptyCandidateSet,
    EstimatorState,
    confidence_width,
    refresh_candidates,
    select_aae,
    select_ucb,
    update_estimate,
)


def filled_state(local, counts, sums, alpha=2.5, delta=lambda t: 1.0 / t):
    st_ = EstimatorState(local, alpha, delta)
    for a, n, s in zip(local, counts, sums):
        st_.counts[a] = n
        st_.sums[a] = s
    return st_


class TestConfidenceWidth:
    def test_unit_case(self):
        assert confidence_width(2, 4.0, math.exp(-1)) == pytest.approx(1.0, rel=1e-15)

    @pytest.mark.parametrize("count,alpha", [(1, 2.1), (7, 3.0), (1000, 10.0)])
    def test_zero_when_delta_is_one(self, count, alpha):
        assert confidence_width(count, alpha, 1.0) == 0.0

    def test_high_precision_value(self):
        # frozen from a 50-digit mpmath evaluation
        assert confidence_width(50, 2.1, 1 / 1000) == pytest.approx(0.3808711867, abs=1e-10)

    def test_rejects_unexplored(self):
        with pytest.raises(ValueError):
            confidence_width(0, 2.5, 0.1)

    @pytest.mark.parametrize("delta", [0.0, -0.1, 1.5])
    def test_rejects_bad_delta(self, delta):
        with pytest.raises(ValueError):
            confidence_width(3, 2.5, delta)


class TestUpdate:
    def test_first_then_second(self):
        s = EstimatorState([0, 1])
        update_estimate(s, 0, 1)
        assert (s.counts[0], s.mean(0)) == (1, 1.0)
        update_estimate(s, 0, 0)
        assert (s.counts[0], s.mean(0)) == (2, 0.5)

    def test_unexplored_mean_is_nan(self):
        assert math.isnan(EstimatorState([4]).mean(4))

    def test_non_local_arm(self):
        with pytest.raises(KeyError):
            update_estimate(EstimatorState([0, 1]), 2, 1)

    def test_matches_recomputation(self):
        rng = np.random.default_rng(5)
        s = EstimatorState([0, 1, 2])
        seen = {0: [], 1: [], 2: []}
        for _ in range(200):
            a = int(rng.integers(3))
            r = int(rng.random() < 0.3 + 0.2 * a)
            update_estimate(s, a, r)
            seen[a].append(r)
            # the textbook incremental form as an independent route
            assert s.mean(a) == pytest.approx(sum(seen[a]) / len(seen[a]), abs=1e-12)
        for a in seen:
            assert s.counts[a] == len(seen[a])

    def test_rejects_small_alpha(self):
        with pytest.raises(ValueError):
            EstimatorState([0], alpha=2.0)


class TestSelectUcb:
    def test_unexplored_first(self):
        assert select_ucb(EstimatorState([7, 3, 5]), 1) == 3

    def test_partially_explored(self):
        s = filled_state([3, 5, 7], [4, 0, 0], [4, 0, 0])
        assert select_ucb(s, 10) == 5

    def test_tie_goes_to_lower_index(self):
        s = filled_state([2, 6], [5, 5], [3, 3])
        assert select_ucb(s, 20) == 2

    def test_against_argmax_oracle(self):
        local = [1, 4, 8]
        s = filled_state(local, [10, 3, 25], [6, 1, 17])
        t = 40
        scores = [
            s.sums[a] / s.counts[a] + math.sqrt(2.5 * math.log(t) / (2 * s.counts[a]))
            for a in local
        ]
        assert select_ucb(s, t) == local[int(np.argmax(scores))]

    @settings(max_examples=200, deadline=None)
    @given(
        counts=st.lists(st.integers(1, 60), min_size=2, max_size=6),
        data=st.data(),
        t=st.integers(2, 10_000),
    )
    def test_random_argmax_oracle(self, counts, data, t):
        sums = [data.draw(st.integers(0, n)) for n in counts]
        local = list(range(len(counts)))
        s = filled_state(local, counts, sums)
        scores = [sm / n + math.sqrt(2.5 * math.log(t) / (2 * n)) for n, sm in zip(counts, sums)]
        best = max(scores)
        assert select_ucb(s, t) == scores.index(best)

    def test_scale_free(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            counts = rng.integers(1, 50, size=5)
            means = rng.random(5) * 0.5
            t = int(rng.integers(2, 5000))
            a = filled_state(range(5), counts.tolist(), (means * counts).tolist())
            b = filled_state(range(5), counts.tolist(), ((means + 0.37) * counts).tolist())
            assert select_ucb(a, t) == select_ucb(b, t)


def pairwise_oracle(state, own, t):
    """Direct interval-below-interval check over every pair of explored local arms."""
    gone = set()
    for i in own:
        ni = state.counts[i]
        if ni == 0:
            continue
        wi = math.sqrt(state.alpha * math.log(1 / state.delta(t)) / (2 * ni))
        hi = state.sums[i] / ni + wi
        for k in state.local_set:
            nk = state.counts[k]
            if nk == 0:
                continue
            wk = math.sqrt(state.alpha * math.log(1 / state.delta(t)) / (2 * nk))
            if state.sums[k] / nk - wk > hi:
                gone.add(i)
    return sorted(gone)


class TestRefresh:
    def test_nothing_explored(self):
        s = EstimatorState([0, 1, 2])
        c = CandidateSet(0, [[0, 1, 2]])
        assert refresh_candidates(s, c, 5) == []
        assert c.own == {0, 1, 2}

    def test_clear_separation(self):
        # constant delta chosen so the width is 0.05 with 100 observations each
        delta = math.exp(-0.05**2 * 200 / 2.5)
        s = filled_state([0, 1], [100, 100], [90, 20], delta=lambda t: delta)
        c = CandidateSet(0, [[0, 1]])
        assert s.width(0, 1) == pytest.approx(0.05)
        assert refresh_candidates(s, c, 1) == [1]
        assert c.own == {0}

    def test_equality_keeps_arm(self):
        s = filled_state([0, 1], [1, 1], [1, 0], delta=lambda t: 1.0)
        c = CandidateSet(0, [[0, 1]])
        s.sums[1] = 1
        assert refresh_candidates(s, c, 3) == []

    def test_unexplored_never_removed(self):
        s = filled_state([0, 1, 2], [500, 0, 500], [500, 0, 0])
        c = CandidateSet(0, [[0, 1, 2]])
        assert refresh_candidates(s, c, 100) == [2]
        assert c.own == {0, 1}

    def test_eliminated_arm_still_eliminates(self):
        # an arm already out of the candidate set still serves as a comparator
        s = filled_state([0, 1, 2], [500, 500, 500], [500, 300, 0])
        c = CandidateSet(0, [[0, 1, 2]])
        c.own = {1, 2}
        # both fall strictly below arm 0, so the set would be empty
        with pytest.raises(EmptyCandidateSet):
            refresh_candidates(s, c, 100)
        assert c.own == {1, 2}

    def test_permanent(self):
        s = filled_state([0, 1], [400, 400], [400, 0])
        c = CandidateSet(0, [[0, 1]])
        refresh_candidates(s, c, 10)
        # later evidence that would restore arm 1 does not bring it back
        s.sums[1] = 400
        assert refresh_candidates(s, c, 10) == []
        assert c.own == {0}

    def test_random_states_match_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            K = int(rng.integers(1, 6))
            counts = rng.integers(0, 40, size=K)
            counts[rng.random(K) < 0.2] = 0
            sums = [int(rng.integers(0, n + 1)) for n in counts]
            t = int(rng.integers(2, 3000))
            s = filled_state(range(K), counts.tolist(), sums)
            c = CandidateSet(0, [list(range(K))])
            expected = pairwise_oracle(s, set(range(K)), t)
            if expected and len(expected) == K:
                with pytest.raises(EmptyCandidateSet):
                    refresh_candidates(s, c, t)
            else:
                assert refresh_candidates(s, c, t) == expected


class TestSelectAae:
    def test_least_observations(self):
        s = filled_state([2, 4], [3, 1], [1, 1])
        c = CandidateSet(0, [[2, 4]])
        assert select_aae(c, s) == 4

    def test_tie(self):
        s = filled_state([2, 4, 9], [3, 3, 3], [0, 0, 0])
        assert select_aae(CandidateSet(0, [[2, 4, 9]]), s) == 2

    def test_singleton_forever(self):
        s = filled_state([2, 4], [3, 1], [1, 1])
        c = CandidateSet(0, [[2, 4]])
        c.own = {2}
        for _ in range(20):
            a = select_aae(c, s)
            assert a == 2
            update_estimate(s, a, 1)

    def test_only_candidates(self):
        s = filled_state([0, 1, 2], [9, 1, 5], [0, 0, 0])
        c = CandidateSet(0, [[0, 1, 2]])
        c.own = {0, 2}
        assert select_aae(c, s) == 2

    def test_empty_raises(self):
        c = CandidateSet(0, [[0]])
        c.own = set()
        with pytest.raises(EmptyCandidateSet):
            select_aae(c, EstimatorState([0]))


class TestCandidateSet:
    def test_peer_view(self):
        c = CandidateSet(1, [[0, 1], [1, 2], [1]])
        assert set(c.peer_view) == {0, 2}
        assert c.peer_active(0, 1)
        assert not c.peer_active(2, 1)  # singleton view: peer already decided
        c.apply_notice(0, [0])
        assert not c.peer_active(0, 1)
        assert not c.peer_active(0, 0)
