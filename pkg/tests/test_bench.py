"""
Tests for the simulation benchmark harness.
"""

import numpy as np
import pandas as pd
import pytest

from avgreward_opl import bench
from avgreward_opl.bench import (
    ORACLE_REFERENCE,
    PUBLISHED,
    mc_average_reward,
    oracle_search,
    replicate_experiment,
    run_replication,
    simulate,
    summarize,
    table_configs,
    to_markdown,
    write_csv,
    write_markdown,
)
from avgreward_opl.environments import Environment
from avgreward_opl.exceptions import AllStartsFailed
from avgreward_opl.models import EnvSpec, ExperimentConfig, OptimizeConfig, ReplicationRow
from avgreward_opl.parallel import WorkerPool


class ConstantEnv(Environment):
    """One-dimensional chain paying a fixed reward."""

    name = "constant"
    d = 1
    DEFAULT_PARAMS = {"reward": 2.0}

    def step(self, states, actions, t, rng):
        rng.standard_normal(states.shape[0])
        return states, np.full(states.shape[0], self.params["reward"])


class ClockEnv(Environment):
    """Pays the 1-based decision time as reward."""

    name = "clock"
    d = 1

    def step(self, states, actions, t, rng):
        return states, np.full(states.shape[0], float(t))


def _tiny_config(**kwargs):
    base = dict(
        env=EnvSpec(kind="vlearning", seed_root=3),
        n=4,
        T=4,
        n_reps=2,
        eval_n=3,
        eval_T=20,
        optimizer=OptimizeConfig(n_starts=1, max_iters=3, box=1.0),
        oracle_value=1.0,
    )
    base.update(kwargs)
    return ExperimentConfig(**base)


def _row(n, rep, learned, regret=None, error=None):
    return ReplicationRow(
        env="vlearning", n=n, T=24, rep=rep, seed=rep, learned_value=learned, regret=regret, error=error
    )


@pytest.mark.unit
class TestMonteCarlo:
    """Test cases for Monte Carlo evaluation."""

    def test_constant_reward(self):
        """Test that a constant chain has mean c and zero spread."""
        mean, sd = mc_average_reward(ConstantEnv(), None, 5, 10, 0, seed=1)
        assert mean == 2.0
        assert sd == 0.0

    def test_burn_in_is_discarded(self):
        """Test that averaging starts after the burn-in."""
        mean, _ = mc_average_reward(ClockEnv(), None, 2, 10, 4, seed=0)
        assert mean == pytest.approx(7.5)

    @pytest.mark.parametrize("burn_in", [-1, 10, 11])
    def test_invalid_burn_in(self, burn_in):
        """Test that burn_in must lie in [0, T_test)."""
        with pytest.raises(ValueError):
            mc_average_reward(ClockEnv(), None, 2, 10, burn_in, seed=0)

    def test_simulate_accepts_specs(self):
        """Test that simulate builds the environment from a spec."""
        data = simulate(EnvSpec(kind="scenario1"), None, 2, 3, seed=5)
        assert (data.n, data.T, data.d) == (2, 3, 3)


@pytest.mark.unit
class TestOracleSearch:
    """Test cases for the in-class oracle search."""

    def test_flat_objective_keeps_the_origin(self):
        """Test that a constant objective returns theta = 0 and its value."""
        theta, eta = oracle_search(ConstantEnv(), 1.0, 2, 5, seed=0, n_screen=4, n_starts=2, max_iters=3)
        np.testing.assert_array_equal(theta, [0.0])
        assert eta == 2.0

    def test_stays_in_the_box(self):
        """Test that the oracle policy respects the box."""
        theta, _ = oracle_search(
            EnvSpec(kind="vlearning"), 0.5, 4, 10, seed=1, n_screen=3, n_starts=1, max_iters=2
        )
        assert np.max(np.abs(theta)) <= 0.5

    @pytest.mark.slow
    def test_scenario1_reference(self):
        """Test the Scenario 1 oracle value against the published reference."""
        _, eta = oracle_search(EnvSpec(kind="scenario1"), 10.0, 20, 1000, seed=0, burn_in=100)
        assert eta == pytest.approx(ORACLE_REFERENCE, abs=0.2)


@pytest.mark.unit
class TestReplication:
    """Test cases for seeded replications."""

    def test_rows_in_order(self):
        """Test that replications come back complete and in order."""
        rows = replicate_experiment(_tiny_config(), WorkerPool(2))
        assert [r.rep for r in rows] == [0, 1]
        for row in rows:
            assert row.error is None
            assert row.regret == pytest.approx(1.0 - row.learned_value)
            assert row.regret_value is None

    def test_deterministic_across_pools(self):
        """Test that the worker count does not change the results."""
        a = replicate_experiment(_tiny_config(), WorkerPool(1))
        b = replicate_experiment(_tiny_config(), WorkerPool(2))
        assert [r.seed for r in a] == [r.seed for r in b]
        assert [r.learned_value for r in a] == pytest.approx([r.learned_value for r in b])

    def test_regret_protocol(self):
        """Test that a regret trajectory is evaluated separately."""
        row = run_replication(_tiny_config(regret_T=30, regret_burn_in=10), 0)
        assert row.regret_value is not None
        assert row.regret == pytest.approx(1.0 - row.regret_value)

    def test_failure_is_recorded(self, mocker):
        """Test that a failing replication becomes an error row."""
        mocker.patch.object(bench, "optimize", side_effect=AllStartsFailed())
        row = run_replication(_tiny_config(), 0)
        assert row.error.startswith("AllStartsFailed")
        assert row.learned_value is None

    def test_tabular_uses_delta_kernel(self, mocker):
        """Test that tabular environments get the delta kernel."""
        spy = mocker.spy(bench, "optimize")
        row = run_replication(_tiny_config(env=EnvSpec(kind="tabular", seed_root=1)), 0)
        assert row.error is None
        kernel = spy.call_args.args[2]
        assert kernel.d == 4


@pytest.mark.unit
class TestReports:
    """Test cases for summaries and report files."""

    def test_summary_statistics(self):
        """Test group means, sds and failure counts."""
        rows = [_row(25, 0, 0.8), _row(25, 1, 1.0), _row(25, 2, None, error="boom"), _row(50, 0, 0.9)]
        summary = summarize(rows)
        first = summary.iloc[0]
        assert (first["n"], first["reps"], first["failed"]) == (25, 2, 1)
        assert first["learned_mean"] == pytest.approx(0.9)
        assert first["learned_sd"] == pytest.approx(np.std([0.8, 1.0], ddof=1))
        assert "published" not in summary.columns

    def test_published_columns(self):
        """Test that reference values are attached to known tables."""
        summary = summarize([_row(25, 0, 0.9)], "table3-ours")
        assert summary["published"].iloc[0] == PUBLISHED["table3-ours"][("vlearning", 25, 24)]
        assert summary["gaussian_vl"].iloc[0] == PUBLISHED["table3-gaussian-vl"][("vlearning", 25, 24)]

    def test_all_failed(self):
        """Test that a setting where every replication failed reports zero reps."""
        summary = summarize([_row(25, 0, None, error="boom")])
        assert summary["reps"].iloc[0] == 0
        assert summary["failed"].iloc[0] == 1

    def test_markdown(self, tmp_path):
        """Test the pipe table layout and number format."""
        summary = summarize([_row(25, 0, 0.8), _row(25, 1, 1.0)], "table3-ours")
        text = to_markdown(summary, title="V-learning")
        lines = text.splitlines()
        assert lines[0] == "### V-learning"
        assert lines[2].startswith("| env | n | T | learned_mean")
        assert "0.900" in lines[4]
        assert write_markdown(summary, tmp_path / "s.md").read_text() == to_markdown(summary)

    def test_csv(self, tmp_path):
        """Test the per-replication CSV columns."""
        path = write_csv([_row(25, 0, 0.8)], tmp_path / "rows.csv")
        frame = pd.read_csv(path)
        assert list(frame.columns) == list(ReplicationRow.model_fields)
        assert len(frame) == 1


@pytest.mark.unit
class TestTableConfigs:
    """Test cases for the published replication protocols."""

    def test_table1(self):
        """Test the scenario grid and evaluation protocol."""
        configs = table_configs("table1", reps=2, seed_root=0)
        assert len(configs) == 6
        assert {c.env.kind for c in configs} == {"scenario1", "scenario2"}
        assert all((c.eval_n, c.eval_T, c.burn_in) == (100, 1000, 0) for c in configs)
        assert len({c.env.seed_root for c in configs}) == 6

    def test_table2(self):
        """Test the long-trajectory regret protocol."""
        configs = table_configs("table2", reps=1, seed_root=0, oracle_value=0.9)
        assert [(c.n, c.T) for c in configs] == [(25, 24), (25, 48), (50, 24), (50, 48)]
        assert all((c.regret_T, c.regret_burn_in) == (10_000, 5_000) for c in configs)

    def test_table2_searches_the_oracle(self, mocker):
        """Test that table2 without an oracle value runs one long-trajectory oracle search."""
        search = mocker.patch.object(bench, "oracle_search", return_value=(np.zeros(2), 0.87))
        configs = table_configs("table2", reps=1, seed_root=3, optimizer=OptimizeConfig(box=2.0))

        assert {c.oracle_value for c in configs} == {0.87}
        search.assert_called_once()
        args, kwargs = search.call_args
        assert args[0].kind == "vlearning"
        assert args[1:4] == (2.0, 1, 10_000)
        assert kwargs["burn_in"] == 5_000

    def test_table2_explicit_oracle_skips_search(self, mocker):
        """Test that a given oracle value is used as is."""
        search = mocker.patch.object(bench, "oracle_search")
        configs = table_configs("table2", reps=1, seed_root=0, oracle_value=0.9)
        assert {c.oracle_value for c in configs} == {0.9}
        search.assert_not_called()

    def test_table2_regret_from_searched_oracle(self, mocker):
        """Test that replications of table2 report regret against the searched oracle."""
        mocker.patch.object(bench, "oracle_search", return_value=(np.zeros(2), 1.5))
        config = table_configs("table2", reps=1, seed_root=0)[0].model_copy(
            update={"n": 4, "T": 5, "eval_n": 2, "eval_T": 10, "regret_T": 30, "regret_burn_in": 10,
                    "optimizer": OptimizeConfig(n_starts=1, max_iters=5, box=1.0)}
        )
        row = run_replication(config, 0)
        assert row.error is None
        assert row.regret == pytest.approx(1.5 - row.regret_value)

    def test_oracle_not_searched_for_other_tables(self, mocker):
        """Test that only the regret protocol triggers the oracle search."""
        search = mocker.patch.object(bench, "oracle_search")
        table_configs("table1", reps=1, seed_root=0)
        table_configs("table3-ours", reps=1, seed_root=0)
        search.assert_not_called()

    def test_table3(self):
        """Test the many-short-trajectories protocol."""
        configs = table_configs("table3-ours", reps=1, seed_root=0)
        assert all((c.eval_n, c.eval_T, c.regret_T) == (1000, 100, None) for c in configs)

    def test_unknown_table(self):
        """Test that unknown table names are refused."""
        with pytest.raises(ValueError, match="unknown table"):
            table_configs("table9", reps=1, seed_root=0)
