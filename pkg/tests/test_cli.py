import json

import numpy as np
import pytest
from click.testing import CliRunner

from ecl import core, io
from ecl.cli import main
from ecl.model import split_atoms, validate_economy
from ecl.walras import StateEconomy


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, args):
    return runner.invoke(main, args, catch_exceptions=False)


@pytest.fixture
def economy_file(tmp_path, runner):
    path = tmp_path / "eco.json"
    result = run(runner, ["gen", "--seed", "3", "--out", str(path)])
    assert result.exit_code == 0
    return path


class TestGen:
    def test_same_seed_gives_byte_identical_files(self, tmp_path, runner):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(runner, ["gen", "--seed", "1", "--out", str(a)])
        run(runner, ["gen", "--seed", "1", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_generated_economy_validates(self, economy_file, runner):
        result = run(runner, ["validate", str(economy_file)])
        assert result.exit_code == 0
        assert "A1: true" in result.output

    def test_atoms_flag_produces_identical_atoms(self, tmp_path, runner):
        path = tmp_path / "atoms.json"
        run(runner, ["gen", "--atoms", "2", "--seed", "5", "--out", str(path)])
        result = run(runner, ["validate", str(path)])
        assert result.exit_code == 0
        assert "A6: true" in result.output


class TestValidate:
    def test_negative_mass_exits_2(self, tmp_path, runner, economy_file):
        raw = json.loads(economy_file.read_text())
        raw["types"][0]["mass"] = -1.0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(raw))
        result = run(runner, ["validate", str(bad)])
        assert result.exit_code == 2

    def test_non_covering_partition_exits_2(self, tmp_path, runner, economy_file):
        raw = json.loads(economy_file.read_text())
        raw["types"][0]["partition"] = [["s0"]]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(raw))
        result = run(runner, ["validate", str(bad)])
        assert result.exit_code == 2

    def test_parse_error_reports_location(self, tmp_path, runner):
        bad = tmp_path / "broken.json"
        bad.write_text('{"states": [,]}')
        result = run(runner, ["validate", str(bad)])
        assert result.exit_code == 2
        assert "broken.json:1:" in result.output


class TestSolveAndChecks:
    def test_solve_writes_loadable_files(self, tmp_path, runner, economy_file):
        out = tmp_path / "sol"
        result = run(runner, ["solve", str(economy_file), "--out", str(out)])
        assert result.exit_code == 0
        eco = io.load_economy(economy_file)
        prices = io.load_prices(f"{out}.prices.json", eco)
        alloc = io.load_allocation(f"{out}.alloc.json", eco)
        assert prices.prices.shape == (eco.states.n, eco.goods)
        assert alloc.bundles.shape == (eco.n_types, eco.states.n, eco.goods)

    def test_solve_outputs_are_deterministic(self, tmp_path, runner, economy_file):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        run(runner, ["solve", str(economy_file), "--out", str(out1)])
        run(runner, ["solve", str(economy_file), "--out", str(out2)])
        assert (
            (tmp_path / "s1.prices.json").read_bytes()
            == (tmp_path / "s2.prices.json").read_bytes()
        )
        assert (
            (tmp_path / "s1.alloc.json").read_bytes()
            == (tmp_path / "s2.alloc.json").read_bytes()
        )

    def test_solved_allocation_is_in_core(self, tmp_path, runner, economy_file):
        out = tmp_path / "sol"
        run(runner, ["solve", str(economy_file), "--out", str(out)])
        result = run(
            runner, ["check-expost", str(economy_file), f"{out}.alloc.json"]
        )
        assert result.exit_code == 0

    def test_solved_pair_passes_ree_checks(self, tmp_path, runner, economy_file):
        out = tmp_path / "sol"
        run(runner, ["solve", str(economy_file), "--out", str(out)])
        for mode in ("bayes", "maximin", "both"):
            result = run(
                runner,
                [
                    "check-ree",
                    str(economy_file),
                    f"{out}.alloc.json",
                    f"{out}.prices.json",
                    "--mode",
                    mode,
                ],
            )
            assert result.exit_code == 0

    def test_blocked_allocation_exits_3_with_reverifiable_certificate(
        self, tmp_path, runner, economy_file
    ):
        eco = io.load_economy(economy_file)
        from ecl.model import endowment_allocation

        alloc_path = tmp_path / "endow.json"
        alloc_path.write_text(
            io.canonical_dumps(io.allocation_to_dict(eco, endowment_allocation(eco)))
        )
        result = run(runner, ["check-expost", str(economy_file), str(alloc_path)])
        assert result.exit_code == 3
        payload = json.loads(result.output)
        assert payload["verdict"] == "blocked"
        cert = io.block_certificate_from_dict(eco, payload["certificate"])
        s0 = eco.states.index(cert.state_label)
        core.verify_certificate(StateEconomy.from_economy(eco, s0), cert)

    def test_check_fine_discloses_restrictions(self, tmp_path, runner):
        # two types: any joint event is a single state, so the competitive
        # selection admits no fine block and the disclosure line prints
        eco_path = tmp_path / "two.json"
        run(runner, ["gen", "--types", "2", "--seed", "3", "--out", str(eco_path)])
        out = tmp_path / "sol"
        run(runner, ["solve", str(eco_path), "--out", str(out)])
        result = run(
            runner,
            ["check-fine", str(eco_path), f"{out}.alloc.json", "--budget", "400"],
        )
        assert result.exit_code == 0
        assert "under-approximation" in result.output

    def test_check_fine_can_flag_cross_state_bets(self, tmp_path, runner, economy_file):
        # with three information types, pair coalitions share a coarse join
        # and differing priors support mutually improving state-contingent
        # bets against the state-wise competitive allocation; the printed
        # certificate must re-verify
        out = tmp_path / "sol"
        run(runner, ["solve", str(economy_file), "--out", str(out)])
        result = run(
            runner,
            ["check-fine", str(economy_file), f"{out}.alloc.json", "--budget", "400"],
        )
        assert result.exit_code in (0, 3)
        if result.exit_code == 3:
            eco = io.load_economy(economy_file)
            payload = json.loads(result.output)
            cert = io.fine_certificate_from_dict(eco, payload["certificate"])
            from ecl.fine import verify_fine_certificate

            verify_fine_certificate(eco, cert)

    def test_check_fine_blocked_exits_3(self, tmp_path, runner, economy_file):
        eco = io.load_economy(economy_file)
        from ecl.model import endowment_allocation

        alloc_path = tmp_path / "endow.json"
        alloc_path.write_text(
            io.canonical_dumps(io.allocation_to_dict(eco, endowment_allocation(eco)))
        )
        result = run(runner, ["check-fine", str(economy_file), str(alloc_path)])
        assert result.exit_code == 3
        payload = json.loads(result.output)
        cert = io.fine_certificate_from_dict(eco, payload["certificate"])
        from ecl.fine import verify_fine_certificate

        verify_fine_certificate(eco, cert)


class TestDemo:
    @pytest.mark.parametrize("states", [1, 4, 16])
    def test_demo_matches_benchmark_numbers(self, runner, states):
        result = run(runner, ["demo-twotype", "--states", str(states)])
        assert result.exit_code == 0
        assert "max deviation from benchmark: 0.000e+00" in result.output


class TestSplitAtoms:
    def test_split_output_is_atomless_with_masses_kept(
        self, tmp_path, runner
    ):
        src = tmp_path / "atoms.json"
        run(runner, ["gen", "--atoms", "2", "--seed", "8", "--out", str(src)])
        dst = tmp_path / "split.json"
        result = run(runner, ["split-atoms", str(src), "--out", str(dst)])
        assert result.exit_code == 0
        eco = io.load_economy(src)
        split = io.load_economy(dst)
        assert split.atom_indices == ()
        assert split == split_atoms(eco)


class TestCanonicalJson:
    def test_round_trip_preserves_floats_exactly(self, economy_file):
        eco = io.load_economy(economy_file)
        text = io.canonical_dumps(io.economy_to_dict(eco))
        again = validate_economy(json.loads(text))
        assert again == eco

    def test_sorted_keys_and_trailing_newline(self):
        text = io.canonical_dumps({"b": 1, "a": [1.5, 2]})
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")
