import numpy as np
import pytest

from helpers import random_hermitian, random_matrix
from scatterkit.errors import MeshResolutionError, ValidationError
from scatterkit.models import (
    ModelSpec,
    build_operator,
    build_perturbation,
    central_sites,
    path_laplacian,
    position_cutoff,
)
from scatterkit.operator_core import (
    BorelSet,
    HermitianOperator,
    apply_function,
    maxnorm,
    opnorm,
    spectral_decompose,
    spectral_projection,
)
from scatterkit.wave_ops import (
    KRConfig,
    Schedule,
    ScatteringPair,
    chain_identity_residual,
    conjugation_residual,
    corollary_identity_residual,
    default_lambda_grid,
    duhamel_residual,
    intertwining_residual,
    isometry_residuals,
    radial_limit_probe,
    recurrence_guard,
    resolve_kr_params,
    resolvent_commutator_residual,
    snap_to_gap,
    stationary_integrand,
    stationary_kernel,
    stationary_wave,
    time_dependent_wave,
    verify_kato_rosenblum,
    weak_wave,
)

KR_TOL = 0.05
EPS = Schedule.epsilon([0.15, 0.2, 0.25, 0.3])


@pytest.fixture(scope="module")
def lap():
    return build_operator(ModelSpec("path_laplacian", 128))


@pytest.fixture(scope="module")
def free_pair(lap):
    return ScatteringPair.band(lap, lap, (1.0, 3.0))


@pytest.fixture(scope="module")
def bench(lap):
    """Rank-one benchmark with the default KR parameters."""
    V = build_perturbation("rank_k", 128, 0.2).matrix
    H1 = HermitianOperator(lap.matrix + V)
    prm = resolve_kr_params(lap, H1, KRConfig())
    pair = ScatteringPair.band(lap, H1, prm["window"], prm["window1"], snap=False)
    ts = Schedule.time(prm["t_max"], prm["t_step"], prm["abel_rate"])
    es = Schedule.epsilon(prm["eps_schedule"])
    grid = default_lambda_grid(pair, min(es.points))
    waves = {}
    for sign in ("plus", "minus"):
        waves["time", sign] = time_dependent_wave(pair, sign, ts)
        waves["weak", sign] = weak_wave(pair, sign, ts)
        waves["stationary", sign] = stationary_wave(pair, sign, grid, es)
    return dict(pair=pair, prm=prm, ts=ts, es=es, grid=grid, waves=waves)


# --- pair and schedules ----------------------------------------------------

def test_pair_rejects_noncommuting_projection(lap):
    P = position_cutoff(128, [3])
    with pytest.raises(ValidationError, match="commute"):
        ScatteringPair(lap, lap, np.eye(128), P, P)


def test_pair_rejects_dimension_mismatch(lap):
    with pytest.raises(ValidationError):
        ScatteringPair(lap, np.eye(4), np.eye(128), np.eye(128), np.eye(4))


def test_schedule_validation():
    with pytest.raises(ValidationError):
        Schedule("time", ())
    with pytest.raises(ValidationError):
        Schedule("time", (2.0, 1.0))
    with pytest.raises(ValidationError):
        Schedule("epsilon", (0.1, 0.2), abel_rate=0.1)
    assert Schedule.time(200, 10).points[-1] == 200


def test_recurrence_flag():
    H = np.diag([0.0, 1.0, 3.0])
    pair = ScatteringPair.band(H, H, (-1, 4), snap=False)
    assert recurrence_guard(pair.S) == pytest.approx(np.pi)
    res = time_dependent_wave(pair, "plus", Schedule.time(20, 10))
    assert "recurrence_guard_exceeded" in res.flags


def test_snap_separates_interlaced_pairs(lap):
    V = build_perturbation("rank_k", 128, 0.2).matrix
    S, S1 = spectral_decompose(lap), spectral_decompose(lap.matrix + V)
    x = snap_to_gap(1.0, S, S1)
    both = np.sort(np.concatenate([S.eigenvalues, S1.eigenvalues]))
    k = np.searchsorted(both, x)
    assert both[k - 1] < x < both[k]
    assert abs(x - 1.0) <= 1.5 * S.max_spacing(1.0, 1.0)


# --- trivial limits --------------------------------------------------------

@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_time_wave_free(free_pair, sign):
    res = time_dependent_wave(free_pair, sign, Schedule.time(50, 10, 0.1))
    assert maxnorm(res.W - free_pair.P.matrix) <= 1e-10
    res = time_dependent_wave(free_pair, sign, Schedule.time(50, 10))
    assert maxnorm(res.W - free_pair.P.matrix) <= 1e-10


@pytest.mark.parametrize("method", ["time", "weak", "stationary"])
def test_zero_identification(lap, method):
    P = spectral_projection(spectral_decompose(lap), BorelSet.interval(1, 3))
    pair = ScatteringPair(lap, lap, np.zeros((128, 128)), P, P)
    if method == "stationary":
        res = stationary_wave(pair, "plus", default_lambda_grid(pair, 0.15), EPS)
    else:
        fn = time_dependent_wave if method == "time" else weak_wave
        res = fn(pair, "plus", Schedule.time(50, 10, 0.1))
    assert maxnorm(res.W) == 0.0


def test_weak_wave_free(lap):
    S = spectral_decompose(lap)
    P = spectral_projection(S, BorelSet.interval(1, 3))
    P1 = spectral_projection(S, BorelSet.interval(2, 3.5))
    pair = ScatteringPair(lap, lap, np.eye(128), P, P1)
    res = weak_wave(pair, "plus", Schedule.time(50, 10, 0.1))
    assert maxnorm(res.W - P1.matrix @ P.matrix) <= 1e-10


@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_stationary_free_recovers_projection(free_pair, sign):
    res = stationary_wave(free_pair, sign, default_lambda_grid(free_pair, 0.15), EPS)
    assert opnorm(res.W - free_pair.P.matrix) <= 1e-8
    assert res.converged


def test_stationary_mesh_check(free_pair):
    with pytest.raises(MeshResolutionError):
        stationary_wave(free_pair, "plus", default_lambda_grid(free_pair, 0.01),
                        Schedule.epsilon([0.01, 0.02]))


# --- stationary kernel -----------------------------------------------------

@pytest.mark.parametrize("sign,s", [("plus", 1), ("minus", -1)])
def test_stationary_kernel_closed_form(free_pair, sign, s):
    # residue calculus: (eps/pi) int d lam / ((mu-lam+-i eps)(nu-lam-+i eps)) = 2 eps/(2 eps -+ i (mu-nu))
    eps = 0.2
    mu = np.array([1.0, 1.5, 2.2, 2.9])
    nu = np.array([1.1, 2.0, 2.9])
    grid = default_lambda_grid(free_pair, eps)
    K = stationary_kernel(mu, nu, sign, grid, eps)
    d = mu[:, None] - nu[None, :]
    assert maxnorm(K - 2 * eps / (2 * eps - s * 1j * d)) <= 1e-8


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_delta_route_equals_resolvent_route(seed, sign):
    H = random_hermitian(10, seed)
    H1 = H + random_hermitian(10, seed + 1, 0.2)
    J = random_matrix(10, seed + 2)
    pair = ScatteringPair(H, H1, J, np.eye(10), np.eye(10))
    for lam, eps in ((0.1, 0.3), (-1.0, 0.05), (2.0, 1.0)):
        a = stationary_integrand(pair, sign, lam, eps, "resolvent")
        b = stationary_integrand(pair, sign, lam, eps, "delta")
        assert maxnorm(a - b) <= 1e-10 * max(1.0, maxnorm(a))


# --- exact identities ------------------------------------------------------

def test_duhamel_trivial(free_pair, bench):
    assert duhamel_residual(bench["pair"], 1.0, 1.0, 10) == 0.0
    S = spectral_decompose(free_pair.H)
    phi = apply_function(S, np.cos)
    pair = ScatteringPair(free_pair.H, free_pair.H, phi, free_pair.P, free_pair.P)
    assert duhamel_residual(pair, 0.0, 5.0, 200) <= 1e-10


def test_duhamel_benchmark(bench):
    assert duhamel_residual(bench["pair"], 0.0, 5.0, 2000) <= 1e-8


def test_duhamel_rejects_odd_steps(bench):
    with pytest.raises(ValidationError):
        duhamel_residual(bench["pair"], 0.0, 1.0, 3)


def test_resolvent_commutator_trivial(free_pair, lap):
    assert resolvent_commutator_residual(free_pair, 2 + 1j) <= 1e-14
    zero = ScatteringPair(lap, lap, np.zeros((128, 128)), free_pair.P, free_pair.P)
    assert resolvent_commutator_residual(zero, 2 + 1j) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_resolvent_commutator_random(seed):
    H = random_hermitian(8, seed)
    H1 = random_hermitian(8, seed + 77)
    pair = ScatteringPair(H, H1, random_matrix(8, seed + 3), np.eye(8), np.eye(8))
    assert resolvent_commutator_residual(pair, 2 + 1j) <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_corollary_identity(seed):
    H = random_hermitian(8, seed)
    H1 = random_hermitian(8, seed + 5)
    pair = ScatteringPair(H, H1, random_matrix(8, seed + 9), np.eye(8), np.eye(8))
    assert corollary_identity_residual(pair) <= 1e-10


# --- chain identity --------------------------------------------------------

def test_chain_trivial(free_pair, lap):
    grid = default_lambda_grid(free_pair, 0.15)
    assert chain_identity_residual(free_pair, "plus", grid, EPS) <= 1e-8
    zero = ScatteringPair(lap, lap, np.zeros((128, 128)), free_pair.P, free_pair.P)
    assert chain_identity_residual(zero, "plus", grid, EPS) == 0.0


@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_chain_benchmark(bench, sign):
    b = bench
    assert chain_identity_residual(b["pair"], sign, b["grid"], b["es"]) <= KR_TOL


# --- intertwining and isometry ---------------------------------------------

def test_intertwining_trivial(free_pair):
    P = free_pair.P.matrix
    for win in ((0.0, 2.0), (1.5, 2.5), (2.5, 5.0)):
        assert intertwining_residual(P, free_pair, win) <= 1e-10
    W = random_matrix(128, 1)
    assert intertwining_residual(W, free_pair, BorelSet.real_line()) <= 1e-10


@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_intertwining_benchmark(bench, sign):
    W = bench["waves"]["time", sign]
    assert intertwining_residual(W, bench["pair"], bench["prm"]["window"]) <= KR_TOL


def test_isometry_trivial(free_pair):
    iso, pos = isometry_residuals(free_pair.P.matrix, free_pair)
    assert iso <= 1e-12 and pos <= 1e-12
    iso, pos = isometry_residuals(np.zeros((128, 128)), free_pair)
    assert iso == pytest.approx(1.0) and pos <= 1e-12


@pytest.mark.parametrize("method", ["time", "stationary"])
@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_isometry_benchmark(bench, method, sign):
    iso, pos = isometry_residuals(bench["waves"][method, sign], bench["pair"])
    assert iso <= KR_TOL and pos <= KR_TOL
    assert conjugation_residual(bench["waves"][method, sign], bench["pair"]) <= KR_TOL


# --- method relations ------------------------------------------------------

@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_method_agreement(bench, sign):
    wt = bench["waves"]["time", sign]
    ws = bench["waves"]["stationary", sign]
    ww = bench["waves"]["weak", sign]
    pair = bench["pair"]
    assert wt.converged and ws.converged and ww.converged
    assert opnorm(wt.W - ws.W) <= KR_TOL
    # triangle: the two routes differ by at most twice their own final corrections
    assert opnorm(wt.W - ws.W) <= 2 * max(wt.residual_trail[-1], ws.residual_trail[-1])
    assert maxnorm(ww.W - pair.P1.matrix @ wt.W @ pair.P.matrix) <= 0.02


@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_support_conditions(bench, sign):
    pair = bench["pair"]
    for method in ("time", "weak", "stationary"):
        W = bench["waves"][method, sign].W
        assert opnorm(W - W @ pair.P.matrix) <= 1e-10
        assert opnorm(pair.P1.matrix @ W - W) <= KR_TOL
    W = bench["waves"]["stationary", sign].W
    assert opnorm(pair.P1.matrix @ W - W) <= 1e-10
    assert opnorm(W) <= 1 + KR_TOL


@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_adjoint_symmetry(bench, sign):
    pair = bench["pair"]
    adj = pair.adjoint()
    ws = bench["waves"]["stationary", sign]
    wa = stationary_wave(adj, sign, default_lambda_grid(adj, min(bench["es"].points)), bench["es"])
    assert opnorm(wa.W - ws.W.conj().T) <= 2 * 0.02
    ww = bench["waves"]["weak", sign]
    wwa = weak_wave(adj, sign, bench["ts"])
    assert maxnorm(wwa.W - ww.W.conj().T) <= 1e-10


@pytest.mark.parametrize("phi,lip", [
    (lambda x: x, 1.0),
    (lambda x: x ** 2, 7.0),
    (lambda x: ((x >= 1.5) & (x <= 2.5)).astype(float), 1.0),
    (lambda x: np.exp(-1j * x), 1.0),
], ids=["linear", "square", "indicator", "phase"])
@pytest.mark.parametrize("sign", ["plus", "minus"])
def test_borel_intertwining(bench, phi, lip, sign):
    # the commutator phi(H1) W - W phi(H) scales with the slope of phi on the band
    pair = bench["pair"]
    W = bench["waves"]["time", sign].W
    lhs = apply_function(pair.S1, phi) @ W - W @ apply_function(pair.S, phi)
    assert opnorm(lhs) <= KR_TOL * lip


# --- radial probe ----------------------------------------------------------

RADIAL = Schedule.epsilon([0.05, 0.1, 0.15, 0.2, 0.25, 0.3])


def test_radial_zero():
    S = spectral_decompose(path_laplacian(64))
    rp = radial_limit_probe(np.zeros((64, 64)), S, np.eye(64), 2.0, RADIAL)
    assert rp.stable and all(t == 0 for t in rp.trail)


def test_radial_point_mass_unstable():
    S = spectral_decompose(build_operator(ModelSpec("path_laplacian", 64, {"embedded": [2.0]})))
    P = spectral_projection(S, BorelSet.interval(1.0, 3.0))
    rp = radial_limit_probe(np.eye(64), S, P, 2.0, RADIAL)
    assert not rp.stable


def test_radial_band_stable():
    S = spectral_decompose(path_laplacian(256))
    P = spectral_projection(S, BorelSet.interval(0.5, 3.5))
    A = position_cutoff(256, central_sites(256, 8), normalize="hs")
    rp = radial_limit_probe(A, S, P, 2.0, RADIAL)
    assert rp.stable
    assert rp.eps[0] == 0.3 and rp.eps[-1] == 0.05
    # eps = 0.05 is below three spacings at this size, which is reported
    assert not rp.mesh_resolved


# --- full pipeline ---------------------------------------------------------

def test_verify_kr_free(lap):
    rep = verify_kato_rosenblum(lap, np.zeros((128, 128)))
    assert rep.kr_verified
    assert max(rep.residuals.values()) <= 1e-8
    for sign in ("plus", "minus"):
        assert maxnorm(rep.waves[f"time_{sign}"].W - rep.waves[f"stationary_{sign}"].W) <= 1e-8


def test_verify_kr_disorder_flags_nonconvergence(lap):
    g = np.random.Generator(np.random.PCG64(3))
    V = np.diag(g.uniform(-20, 20, 128))
    rep = verify_kato_rosenblum(lap, V)
    assert not rep.kr_verified
    assert not rep.converged["h1_mesh"]
    assert "h1_under_resolved" in rep.flags


def test_verify_kr_rejects_window(lap):
    with pytest.raises(ValidationError, match="window outside spectral band"):
        verify_kato_rosenblum(lap, np.zeros((128, 128)), KRConfig(window=(-1.0, 3.0)))


def test_kr_report_json_is_stable(lap):
    V = build_perturbation("rank_k", 128, 0.2).matrix
    a = verify_kato_rosenblum(lap, V).to_json()
    b = verify_kato_rosenblum(lap, V).to_json()
    assert a == b
    assert '"schema_version": 1' in a
