import random

import pytest

from instances import ScriptedRng, interactive_pair, make, satisfies
from selftally import sigma as S
from selftally.group import GroupError
from selftally.sigma import ProofContext, StatementMismatch

CTX = ProofContext(b"sigma-tests", 4, "vote")


@pytest.mark.parametrize("family", S.FAMILIES)
def test_completeness(group, family):
    rng = random.Random(family)
    for _ in range(30):
        inst = make(group, family, rng)
        proof = inst.prove(CTX, rng)
        assert S.verify(group, family, inst.statement, proof, CTX)


@pytest.mark.parametrize("family", S.FAMILIES)
def test_bytes_and_json_round_trip(std, family):
    rng = random.Random(1)
    inst = make(std, family, rng)
    proof = inst.prove(CTX, rng)
    cls = S.PROOF_TYPES[family]
    data = proof.to_bytes(std)
    assert len(data) == cls.size(std)
    assert cls.from_bytes(std, data) == proof
    assert cls.from_json(std, proof.to_json(std)) == proof
    with pytest.raises(GroupError):
        cls.from_bytes(std, data[:-1])


def test_schnorr_tiny_vector_and_bit_flips(tiny):
    rng = random.Random(0)
    proof = S.schnorr_prove(tiny, 3, 8, CTX, rng)
    assert S.schnorr_verify(tiny, 8, proof, CTX)
    data = proof.to_bytes(tiny)
    for pos in range(len(data)):
        for bit in range(8):
            bad = bytearray(data)
            bad[pos] ^= 1 << bit
            try:
                mutated = S.SchnorrProof.from_bytes(tiny, bytes(bad))
            except GroupError:
                continue
            assert not S.schnorr_verify(tiny, 8, mutated, CTX)


def test_degenerate_witnesses(group):
    rng = random.Random(2)
    assert S.schnorr_verify(group, 1, S.schnorr_prove(group, 0, 1, CTX, rng), CTX)
    beta = group.gexp(5)
    pf = S.eqdlog_prove(group, 0, group.g, 1, beta, 1, CTX, rng)
    assert S.eqdlog_verify(group, group.g, 1, beta, 1, pf, CTX)


def test_context_binding(std):
    rng = random.Random(3)
    x = std.random_scalar(rng)
    y = std.gexp(x)
    proof = S.schnorr_prove(std, x, y, CTX, rng)
    for other in (ProofContext(b"sigma-tests", 5, "vote"), ProofContext(b"other", 4, "vote"),
                  ProofContext(b"sigma-tests", 4, "commit")):
        assert not S.schnorr_verify(std, y, proof, other)


def test_schnorr_response_bump_rejected(std):
    rng = random.Random(4)
    x = std.random_scalar(rng)
    y = std.gexp(x)
    p = S.schnorr_prove(std, x, y, CTX, rng)
    assert not S.schnorr_verify(std, y, S.SchnorrProof(p.a, p.e, (p.r + 1) % std.q), CTX)


def test_eqdlog_wrong_witness(std):
    rng = random.Random(5)
    x, x2 = 11, 12
    beta = std.gexp(77)
    stmt = (std.g, std.gexp(x), beta, std.exp(beta, x2))
    with pytest.raises(StatementMismatch):
        S.eqdlog_prove(std, x, *stmt, CTX, rng)
    # bypass the prover's check
    (a1, a2), respond = S.eqdlog_session(std, x, std.g, beta, rng)
    e = S._challenge(std, S.TAG_EQDLOG, CTX, stmt + (a1, a2))
    assert not S.eqdlog_verify(std, *stmt, respond(e), CTX)


@pytest.mark.parametrize("v", [0, 1])
def test_commit_branches(std, v):
    inst = make(std, "commit", random.Random(v), v=v)
    Y, beta, C = inst.statement
    assert std.div(C, std.gexp(v)) == std.exp(Y, inst.witness[0])
    assert S.commit_or_verify(std, *inst.statement, inst.prove(CTX, random.Random(9)), CTX)


def test_commit_lying_prover(std):
    rng = random.Random(6)
    Y = std.gexp(99)
    rho = std.random_scalar(rng)
    beta = std.gexp(rho)
    C = std.mul(std.g, std.exp(Y, rho))  # encodes 1
    with pytest.raises(StatementMismatch):
        S.commit_or_prove(std, rho, 0, Y, beta, C, CTX, rng)
    first, respond = S.commit_or_session(std, rho, 0, Y, beta, C, rng)
    e = S._challenge(std, S.TAG_COMMIT, CTX, (std.g, Y, beta, C) + first)
    assert not S.commit_or_verify(std, Y, beta, C, respond(e), CTX)


def test_commit_swapped_challenges_rejected(std):
    rng = random.Random(7)
    for _ in range(50):
        inst = make(std, "commit", rng)
        p = inst.prove(CTX, rng)
        swapped = S.CommitOrProof(p.a1, p.b1, p.a2, p.b2, p.e2, p.e1, p.r1, p.r2)
        assert not S.commit_or_verify(std, *inst.statement, swapped, CTX)


def test_simulator_for_false_statement(std):
    rng = random.Random(8)
    Y = std.gexp(1234)
    rho = std.random_scalar(rng)
    beta = std.gexp(rho)
    C = std.mul(std.gexp(2), std.exp(Y, rho))  # vote = 2, no prover path
    e = std.random_scalar(rng)
    forged = S.simulate_transcript(std, "commit", (Y, beta, C), e, rng)
    assert S.commit_or_verify(std, Y, beta, C, forged, CTX, challenge=e)
    assert not S.commit_or_verify(std, Y, beta, C, forged, CTX)


@pytest.mark.parametrize("v", [0, 1])
def test_vote_completeness_per_branch(std, v):
    inst = make(std, "vote", random.Random(10 + v), v=v)
    assert S.vote_or_verify(std, *inst.statement, inst.prove(CTX, random.Random(1)), CTX)


def test_vote_statement_mutations(std):
    rng = random.Random(11)
    inst = make(std, "vote", rng)
    Y, h, beta, y, C, V = inst.statement
    proof = inst.prove(CTX, rng)
    other_y = std.gexp(std.random_scalar(rng))
    assert not S.vote_or_verify(std, Y, h, beta, y, C, std.mul(V, std.g), proof, CTX)
    assert not S.vote_or_verify(std, Y, h, beta, other_y, C, V, proof, CTX)


def _mismatched_vote_statement(group, rng):
    x = group.random_scalar(rng, nonzero=True)
    rho = group.random_scalar(rng, nonzero=True)
    Y, h = group.gexp(3), group.gexp(5)
    C = group.mul(group.g, group.exp(Y, rho))  # commits to 1
    V = group.exp(h, x)  # ballot for 0
    return x, rho, (Y, h, group.gexp(rho), group.gexp(x), C, V)


def test_vote_mismatch_prover_refuses(std):
    x, rho, stmt = _mismatched_vote_statement(std, random.Random(12))
    for b in (0, 1):
        with pytest.raises(StatementMismatch):
            S.vote_or_prove(std, x, rho, b, *stmt, CTX, random.Random(b))


def test_vote_mismatch_forced_proof_accepts_only_on_zero_real_challenge(tiny):
    """Exhaustive sweep of the simulated-branch challenge and the real nonces in the tiny group.

    With C and V encoding different bits, the branch the prover runs honestly
    breaks one of its equations unless its challenge share is 0, so the
    accepting proofs are exactly those with e_real == 0 (soundness error 1/q).
    """
    q = tiny.q
    x, rho, stmt = _mismatched_vote_statement(tiny, random.Random(13))
    for b in (0, 1):
        accepted = expected = 0
        for e_sim in range(q):
            for w in range(q):
                for gamma in (1, 4):
                    first, respond = S.vote_or_session(tiny, x, rho, b, *stmt,
                                                       ScriptedRng([e_sim, 2, 7, w, gamma]))
                    e = S._challenge(tiny, S.TAG_VOTE, CTX, (tiny.g,) + stmt + first)
                    proof = respond(e)
                    accepted += S.vote_or_verify(tiny, *stmt, proof, CTX)
                    expected += (e - e_sim) % q == 0
        assert accepted == expected
        assert 0 < expected < 2 * q * q


def test_vote_mismatch_forced_proof_never_accepts_in_standard(std):
    rng = random.Random(14)
    for _ in range(20):
        x, rho, stmt = _mismatched_vote_statement(std, rng)
        for b in (0, 1):
            first, respond = S.vote_or_session(std, x, rho, b, *stmt, rng)
            e = S._challenge(std, S.TAG_VOTE, CTX, (std.g,) + stmt + first)
            assert not S.vote_or_verify(std, *stmt, respond(e), CTX)


@pytest.mark.parametrize("family", S.FAMILIES)
def test_challenge_split(std, family):
    rng = random.Random(15)
    inst = make(std, family, rng)
    proof = inst.prove(CTX, rng)
    tag = {"schnorr": S.TAG_SCHNORR, "eqdlog": S.TAG_EQDLOG, "commit": S.TAG_COMMIT, "vote": S.TAG_VOTE}[family]
    prefix = (std.g,) if family in ("schnorr", "commit", "vote") else ()
    e = S._challenge(std, tag, CTX, prefix + inst.statement + proof.first_messages)
    assert sum(proof.challenges) % std.q == e


@pytest.mark.parametrize("family", S.FAMILIES)
def test_extractor(group, family):
    rng = random.Random(16)
    for _ in range(20):
        inst = make(group, family, rng)
        t1, t2, (e1, e2) = interactive_pair(group, inst, rng)
        assert S.verify(group, family, inst.statement, t1, None, challenge=e1)
        assert S.verify(group, family, inst.statement, t2, None, challenge=e2)
        w = S.extract_witness(group, t1, t2)
        assert satisfies(group, family, inst.statement, w)


def test_extractor_recovers_the_actual_witness(std):
    rng = random.Random(17)
    inst = make(std, "schnorr", rng)
    t1, t2, _ = interactive_pair(std, inst, rng)
    assert S.extract_witness(std, t1, t2) == inst.witness[0]


def test_extractor_refuses(std):
    rng = random.Random(18)
    inst = make(std, "schnorr", rng)
    first, respond = inst.session(rng)
    t = respond(5)
    with pytest.raises(S.NotExtractable):
        S.extract_witness(std, t, t)
    other = make(std, "schnorr", rng).prove(CTX, rng)
    with pytest.raises(S.NotExtractable):
        S.extract_witness(std, t, other)


@pytest.mark.parametrize("family", S.FAMILIES)
def test_simulator_accepts_interactively(group, family):
    rng = random.Random(19)
    for _ in range(20):
        inst = make(group, family, rng)
        e = group.random_scalar(rng)
        sim = S.simulate_transcript(group, family, inst.statement, e, rng)
        assert S.verify(group, family, inst.statement, sim, None, challenge=e)


def test_verify_dispatch_rejects_wrong_type(std):
    rng = random.Random(20)
    inst = make(std, "schnorr", rng)
    proof = inst.prove(CTX, rng)
    assert not S.verify(std, "eqdlog", (std.g,) * 4, proof, CTX)
    with pytest.raises(TypeError):
        S.family_of(object())


def test_out_of_range_scalars_rejected(tiny):
    rng = random.Random(21)
    proof = S.schnorr_prove(tiny, 3, 8, CTX, rng)
    assert not S.schnorr_verify(tiny, 8, S.SchnorrProof(proof.a, proof.e, proof.r + tiny.q), CTX)
