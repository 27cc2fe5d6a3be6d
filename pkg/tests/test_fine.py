import numpy as np
import pytest

from ecl.core import expost_core_check, find_block
from ecl.errors import EconomyError, StaleCertificateError, UndecidedError
from ecl.fine import (
    FineBlockCertificate,
    FineBlockOptions,
    FineGainWitness,
    communication_partition,
    expost_to_fine_block,
    find_fine_block,
    verify_fine_certificate,
    verify_fine_core_candidate,
)
from ecl.gen import generate_economy
from ecl.model import (
    AgentType,
    Economy,
    FuzzyCoalition,
    StateSpace,
    UtilitySpec,
    endowment_allocation,
)
from ecl.partitions import Partition
from ecl.ree import construct_ree
from ecl.walras import StateEconomy

from oracles import fine_block_brute


def sqrt_u():
    return UtilitySpec(family="ces", weights=np.array([1.0, 1.0]), rho=0.5)


def two_state_asymmetric_info_economy():
    """Type F sees everything, type C sees nothing; only state s0 has trade gains."""
    space = StateSpace(labels=("s0", "s1"), prob=np.array([0.5, 0.5]))
    u = sqrt_u()
    full_info = AgentType(
        name="F",
        mass=1.0,
        kind="atomless",
        utility=(u, u),
        endowment=np.array([[2.0, 0.0], [1.0, 1.0]]),
        info=Partition.discrete(2),
        prior=np.array([0.5, 0.5]),
    )
    coarse_info = AgentType(
        name="C",
        mass=1.0,
        kind="atomless",
        utility=(u, u),
        endowment=np.array([[0.0, 2.0], [1.0, 1.0]]),
        info=Partition.trivial(2),
        prior=np.array([0.5, 0.5]),
    )
    return Economy(states=space, goods=2, types=(full_info, coarse_info))


class TestCommunicationPartition:
    def test_single_type_keeps_own_partition(self, demo_economy):
        lam = np.array([0.5, 0.0])
        got = communication_partition(demo_economy, FuzzyCoalition(participation=lam))
        assert got == demo_economy.types[0].info

    def test_join_with_trivial(self):
        eco = two_state_asymmetric_info_economy()
        lam = np.array([1.0, 1.0])
        got = communication_partition(eco, FuzzyCoalition(participation=lam))
        assert got == Partition.discrete(2)

    def test_all_types_under_full_joint_information(self):
        eco = generate_economy(n_types=3, goods=2, states=4, seed=3)
        lam = eco.masses
        got = communication_partition(eco, FuzzyCoalition(participation=lam))
        assert got.is_discrete()


class TestFindFineBlock:
    def test_blocks_on_the_discernible_bad_state(self):
        eco = two_state_asymmetric_info_economy()
        f = endowment_allocation(eco)
        out = find_fine_block(eco, f, FineBlockOptions(mode="full"))
        assert out.status == "fine_blocked"
        assert out.certificate.event_labels == ("s0",)
        assert out.certificate.mode == "full"
        # independent exhaustive scan agrees a fine block exists
        assert fine_block_brute(eco, f.bundles, grid_step=0.25)

    def test_private_pooling_can_still_block_endowments(self):
        # surplus in the discernible state is large enough to compensate the
        # uninformed type across both states, so even private communication
        # blocks; the certificate must re-verify
        eco = two_state_asymmetric_info_economy()
        f = endowment_allocation(eco)
        out = find_fine_block(eco, f, FineBlockOptions(mode="private"))
        assert out.status == "fine_blocked"
        verify_fine_certificate(eco, out.certificate, f)
        assert out.certificate.mode == "private"

    def test_state_wise_competitive_allocation_blocked_by_neither_mode(self):
        # any bundle strictly better than demand costs strictly more at that
        # state's prices, so competitive selections defeat both communication
        # modes: per-cell for full, pooled for private
        from ecl.walras import walras_selection

        eco = two_state_asymmetric_info_economy()
        _, alloc = walras_selection(eco)
        for mode in ("full", "private", "both"):
            out = find_fine_block(eco, alloc, FineBlockOptions(mode=mode))
            assert out.status == "no_fine_block_found"

    def test_constructed_ree_has_no_fine_block(self):
        for seed in (0, 1):
            eco = generate_economy(n_types=2, goods=2, states=2, seed=seed + 20)
            alloc, _, _, _ = construct_ree(eco)
            out = find_fine_block(eco, alloc, FineBlockOptions(mode="full"))
            assert out.status == "no_fine_block_found"

    def test_single_state_agrees_with_state_blocking(self, symmetric_economy):
        f = endowment_allocation(symmetric_economy)
        fine_out = find_fine_block(symmetric_economy, f)
        state_out = find_block(
            StateEconomy.from_economy(symmetric_economy, 0), f.bundles[:, 0, :]
        )
        assert fine_out.status == "fine_blocked"
        assert state_out.status == "blocked"
        assert abs(fine_out.certificate.margin - state_out.certificate.margin) <= 1e-6

    def test_infeasible_allocation_rejected(self, symmetric_economy):
        from ecl.model import Allocation

        bad = Allocation(bundles=np.ones((2, 1, 2)) * 9)
        with pytest.raises(EconomyError):
            find_fine_block(symmetric_economy, bad)


class TestExpostToFineBlock:
    def test_atomless_event_collapses_to_blocking_state(self):
        eco = generate_economy(n_types=3, goods=2, states=4, seed=42)
        f = endowment_allocation(eco)
        report = expost_core_check(eco, f)
        assert report.verdict == "blocked"
        cert = expost_to_fine_block(eco, f, report.certificate)
        assert cert.event_labels == (report.certificate.state_label,)
        assert cert.mode == "full"
        verify_fine_certificate(eco, cert, f)

    def test_single_information_type_gives_singleton_event(self):
        # both types fully informed: the join atom is always a singleton
        space = StateSpace(labels=("s0", "s1"), prob=np.array([0.5, 0.5]))
        u = sqrt_u()
        mk = lambda name, e: AgentType(
            name=name,
            mass=1.0,
            kind="atomless",
            utility=(u, u),
            endowment=np.array(e),
            info=Partition.discrete(2),
            prior=np.array([0.5, 0.5]),
        )
        eco = Economy(
            states=space,
            goods=2,
            types=(mk("A", [[2.0, 0.0], [2.0, 0.0]]), mk("B", [[0.0, 2.0], [0.0, 2.0]])),
        )
        f = endowment_allocation(eco)
        report = expost_core_check(eco, f)
        cert = expost_to_fine_block(eco, f, report.certificate)
        assert len(cert.event_labels) == 1

    @pytest.mark.parametrize("seed", range(4))
    def test_two_identical_atoms_use_at_most_one(self, seed):
        eco = generate_economy(n_types=2, goods=2, states=3, atoms=2, seed=seed + 9)
        f = endowment_allocation(eco)
        report = expost_core_check(eco, f)
        if report.verdict != "blocked":
            return
        cert = expost_to_fine_block(eco, f, report.certificate)
        verify_fine_certificate(eco, cert, f)
        atom_mass = eco.types[eco.atom_indices[0]].mass
        atom_participation = sum(
            cert.coalition.participation[i] for i in eco.atom_indices
        )
        assert atom_participation <= atom_mass + 1e-12

    def test_a5_violation_rejected(self):
        # both types uninformed: joint information cannot separate states
        space = StateSpace(labels=("s0", "s1"), prob=np.array([0.5, 0.5]))
        u = sqrt_u()
        mk = lambda name, e: AgentType(
            name=name,
            mass=1.0,
            kind="atomless",
            utility=(u, u),
            endowment=np.array(e),
            info=Partition.trivial(2),
            prior=np.array([0.5, 0.5]),
        )
        eco = Economy(
            states=space,
            goods=2,
            types=(mk("A", [[2.0, 0.0], [2.0, 0.0]]), mk("B", [[0.0, 2.0], [0.0, 2.0]])),
        )
        f = endowment_allocation(eco)
        report = expost_core_check(eco, f)
        assert report.verdict == "blocked"
        with pytest.raises(EconomyError, match="A5"):
            expost_to_fine_block(eco, f, report.certificate)


class TestVerifyFineCertificate:
    def _union_event_certificate(self):
        """Manually build a certificate whose event is a union of join atoms."""
        space = StateSpace(labels=("s0", "s1"), prob=np.array([0.5, 0.5]))
        u = sqrt_u()
        mk = lambda name, e: AgentType(
            name=name,
            mass=1.0,
            kind="atomless",
            utility=(u, u),
            endowment=np.array(e),
            info=Partition.discrete(2),
            prior=np.array([0.5, 0.5]),
        )
        eco = Economy(
            states=space,
            goods=2,
            types=(mk("A", [[2.0, 0.0], [4.0, 0.0]]), mk("B", [[0.0, 2.0], [0.0, 4.0]])),
        )
        f = endowment_allocation(eco)
        bundles = np.array([[[1.0, 1.0], [2.0, 2.0]], [[1.0, 1.0], [2.0, 2.0]]])
        witnesses = []
        for name, i in (("A", 0), ("B", 1)):
            for s, lbl in enumerate(space.labels):
                witnesses.append(
                    FineGainWitness(
                        type_name=name,
                        state_labels=(lbl,),
                        weights=(1.0,),
                        baseline=eco.types[i].utility[s].value(f.bundles[i, s]),
                    )
                )
        margin = min(
            eco.types[i].utility[s].value(bundles[i, s])
            - eco.types[i].utility[s].value(f.bundles[i, s])
            for i in range(2)
            for s in range(2)
        )
        cert = FineBlockCertificate(
            coalition=FuzzyCoalition(participation=np.array([1.0, 1.0])),
            mode="full",
            communication=Partition.discrete(2),
            event_labels=("s0", "s1"),
            type_names=("A", "B"),
            bundles=bundles,
            witnesses=tuple(witnesses),
            margin=margin,
            eps_block=1e-6,
        )
        return eco, f, cert

    def test_union_event_certificate_verifies(self):
        eco, f, cert = self._union_event_certificate()
        verify_fine_certificate(eco, cert, f)
        verify_fine_certificate(eco, cert)  # stored witnesses suffice

    def test_restriction_to_single_atom_remains_valid(self):
        eco, f, cert = self._union_event_certificate()
        for j, label in enumerate(cert.event_labels):
            restricted = FineBlockCertificate(
                coalition=cert.coalition,
                mode=cert.mode,
                communication=cert.communication,
                event_labels=(label,),
                type_names=cert.type_names,
                bundles=cert.bundles[:, j : j + 1, :],
                witnesses=tuple(
                    w for w in cert.witnesses if w.state_labels == (label,)
                ),
                margin=cert.margin,
                eps_block=cert.eps_block,
            )
            verify_fine_certificate(eco, restricted, f)

    def test_tampered_bundles_detected(self):
        eco, f, cert = self._union_event_certificate()
        bad = FineBlockCertificate(
            coalition=cert.coalition,
            mode=cert.mode,
            communication=cert.communication,
            event_labels=cert.event_labels,
            type_names=cert.type_names,
            bundles=cert.bundles * 1.2,
            witnesses=cert.witnesses,
            margin=cert.margin,
            eps_block=cert.eps_block,
        )
        with pytest.raises(StaleCertificateError):
            verify_fine_certificate(eco, bad, f)

    def test_non_measurable_event_detected(self):
        eco = two_state_asymmetric_info_economy()
        f = endowment_allocation(eco)
        out = find_fine_block(eco, f, FineBlockOptions(mode="full"))
        cert = out.certificate
        # type C's private partition cannot discern {s0}
        bad = FineBlockCertificate(
            coalition=cert.coalition,
            mode="private",
            communication=cert.communication,
            event_labels=cert.event_labels,
            type_names=cert.type_names,
            bundles=cert.bundles,
            witnesses=cert.witnesses,
            margin=cert.margin,
            eps_block=cert.eps_block,
        )
        with pytest.raises(StaleCertificateError, match="measurable"):
            verify_fine_certificate(eco, bad, f)


class TestVerifyFineCoreCandidate:
    def test_pareto_dominated_single_state_allocation_is_blocked(
        self, symmetric_economy
    ):
        f = endowment_allocation(symmetric_economy)
        report = verify_fine_core_candidate(symmetric_economy, f)
        assert report.verdict == "fine_blocked"
        assert report.certificate is not None

    def test_ree_allocation_reports_none_found_with_disclosure(self):
        eco = generate_economy(n_types=2, goods=2, states=2, seed=31)
        alloc, _, _, _ = construct_ree(eco)
        report = verify_fine_core_candidate(eco, alloc)
        assert report.verdict == "no_fine_block_found"
        assert any("not a fine-core membership proof" in n for n in report.notes)

    def test_expost_blocked_gets_certificate_via_constructive_path(self):
        eco = generate_economy(n_types=3, goods=2, states=3, seed=13)
        f = endowment_allocation(eco)
        expost = expost_core_check(eco, f)
        assert expost.verdict == "blocked"
        fine_cert = expost_to_fine_block(eco, f, expost.certificate)
        verify_fine_certificate(eco, fine_cert, f)
        # the direct search should find a block too
        search = find_fine_block(eco, f)
        assert search.status == "fine_blocked"
