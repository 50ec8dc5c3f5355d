import pytest

from pinfer.errors import ParameterError, ProtocolViolationError
from pinfer.linear import FeatureVector
from pinfer.network import (NetworkClientSession,
                            NetworkServerSession, NetworkSpec,
                            ReluUnitResponse, evaluate_network,
                            relu_core_answer, relu_core_challenge,
                            relu_core_finish, relu_heur_answer,
                            relu_heur_challenge, relu_heur_finish,
                            sign_core_answer, sign_core_challenge,
                            sign_core_finish, sign_heur_answer,
                            sign_heur_challenge, sign_heur_finish)
from pinfer.paillier import SecretKey
from pinfer.reference import eval_ffnn, eval_linear
from pinfer.wire import Transcript

KAPPA = 40  # test-scale masking margin; production default is 95


def test_relu_sign_identity():
    for t in range(-1024, 1025):
        sign = 1 if t >= 0 else -1
        assert (1 + sign) * t // 2 == max(0, t)


# ---------------------------------------------------------------------------
# per-unit protocols

def unit_inputs(pk_client, value, rng):
    # theta = (value, 0) against input 0 gives an inner product of exactly value.
    return (value, 0), [pk_client.encrypt(0, rng)]


def run_sign_core(client_keys, server_keys, t_value, ell, rng, b=None, mask=None):
    pk_c, sk_c = client_keys
    pk_s, sk_s = server_keys
    theta, enc = unit_inputs(pk_c, t_value, rng)
    challenge, state = sign_core_challenge(theta, enc, pk_s, ell, KAPPA, rng, mask=mask)
    response = sign_core_answer(sk_c, pk_s, challenge, rng, b=b)
    return sk_c.decrypt(sign_core_finish(sk_s, state, response))


def run_relu_core(client_keys, server_keys, t_value, ell, rng, b=None, mask=None):
    pk_c, sk_c = client_keys
    pk_s, sk_s = server_keys
    theta, enc = unit_inputs(pk_c, t_value, rng)
    challenge, state = relu_core_challenge(theta, enc, pk_s, ell, KAPPA, rng, mask=mask)
    response = relu_core_answer(sk_c, pk_s, challenge, rng, b=b)
    return sk_c.decrypt(relu_core_finish(sk_s, state, response))


def test_sign_core_unit_basic(client_keys, server_keys, rng):
    assert run_sign_core(client_keys, server_keys, 3, 5, rng) == 1
    assert run_sign_core(client_keys, server_keys, 0, 5, rng) == 1
    assert run_sign_core(client_keys, server_keys, -3, 5, rng) == -1


def test_sign_core_unit_sweep(client_keys, server_keys, rng):
    # Exhaustive over the value range at ell = 5, fresh mask and flip bit per run.
    ell = 5
    for t in range(-31, 32):
        for _ in range(20):
            b = rng.randrange(2)
            assert run_sign_core(client_keys, server_keys, t, ell, rng, b=b) == \
                (1 if t >= 0 else -1), (t, b)


def test_sign_core_mixed_keys(client_keys, server_keys, rng):
    pk_c, _ = client_keys
    pk_s, _ = server_keys
    theta, enc = unit_inputs(pk_c, 3, rng)
    challenge, _ = sign_core_challenge(theta, enc, pk_s, 4, KAPPA, rng)
    assert challenge.masked_inner.key_id == pk_c.key_id
    assert all(ct.key_id == pk_s.key_id for ct in challenge.mask_bits)


def test_relu_core_unit_basic(client_keys, server_keys, rng):
    assert run_relu_core(client_keys, server_keys, 7, 5, rng) == 7
    assert run_relu_core(client_keys, server_keys, -7, 5, rng) == 0
    assert run_relu_core(client_keys, server_keys, 0, 5, rng) == 0


def test_relu_core_unit_sweep(client_keys, server_keys, rng):
    ell = 4
    for t in range(-15, 16):
        for b in (0, 1):
            assert run_relu_core(client_keys, server_keys, t, ell, rng, b=b) == \
                max(0, t), (t, b)


def test_relu_core_pair_length_violation(client_keys, server_keys, rng):
    pk_c, sk_c = client_keys
    pk_s, sk_s = server_keys
    theta, enc = unit_inputs(pk_c, 3, rng)
    challenge, state = relu_core_challenge(theta, enc, pk_s, 4, KAPPA, rng)
    response = relu_core_answer(sk_c, pk_s, challenge, rng)
    forged = ReluUnitResponse(response.masked_bit,
                              response.pair + (response.pair[0],),
                              response.comparison)
    with pytest.raises(ProtocolViolationError):
        relu_core_finish(sk_s, state, forged)


def test_sign_heur_unit(client_keys, rng):
    pk_c, sk_c = client_keys
    for t_value, expected in ((-2, -1), (0, 1), (9, 1)):
        theta, enc = unit_inputs(pk_c, t_value, rng)
        challenge, state = sign_heur_challenge(theta, enc, 4, KAPPA, rng)
        response = sign_heur_answer(sk_c, challenge, rng)
        assert sk_c.decrypt(sign_heur_finish(state, response)) == expected


def test_relu_heur_unit(client_keys, rng):
    pk_c, sk_c = client_keys
    for t_value, expected in ((5, 5), (-5, 0), (0, 0)):
        theta, enc = unit_inputs(pk_c, t_value, rng)
        challenge, state = relu_heur_challenge(theta, enc, 4, KAPPA, rng)
        response = relu_heur_answer(sk_c, challenge, rng)
        assert sk_c.decrypt(relu_heur_finish(state, response)) == expected


def test_heur_units_random_sweep(client_keys, rng):
    pk_c, sk_c = client_keys
    enc = [pk_c.encrypt(0, rng)]
    for _ in range(1000):
        t_value = rng.randrange(-15, 16)
        theta = (t_value, 0)
        challenge, state = sign_heur_challenge(theta, enc, 4, KAPPA, rng)
        assert sk_c.decrypt(sign_heur_finish(state, sign_heur_answer(sk_c, challenge, rng))) \
            == (1 if t_value >= 0 else -1)
        challenge, state = relu_heur_challenge(theta, enc, 4, KAPPA, rng)
        assert sk_c.decrypt(relu_heur_finish(state, relu_heur_answer(sk_c, challenge, rng))) \
            == max(0, t_value)


def test_masked_sign_is_balanced(client_keys, server_keys, rng):
    # With the flip bit uniform, the value the server sees from the client is
    # (-1)**b regardless of the true sign.
    pk_c, sk_c = client_keys
    pk_s, sk_s = server_keys
    theta, enc = unit_inputs(pk_c, 3, rng)
    challenge, _ = sign_core_challenge(theta, enc, pk_s, 2, KAPPA, rng)
    plus = 0
    for _ in range(1000):
        response = sign_core_answer(sk_c, pk_s, challenge, rng)
        plus += sk_c.decrypt(response.masked_sign) == 1
    sigma = (1000 * 0.25) ** 0.5
    assert abs(plus - 500) <= 5 * sigma


# ---------------------------------------------------------------------------
# network specs

def sign_net():
    return NetworkSpec.from_integer(
        [([(0, 1, 1), (-1, 1, -1), (1, -1, 0)], "sign"),
         ([(0, 1, -2, 1)], "sign")])


def relu_net():
    return NetworkSpec.from_integer(
        [([(1, 2, -1), (0, 1, 1), (-2, -1, 2)], "relu"),
         ([(1, 1, -1, 2)], "relu")])


def pm_one_inputs(rng, d):
    return FeatureVector((1, *(rng.choice((-1, 1)) for _ in range(d))), 0)


def test_spec_validation():
    with pytest.raises(ParameterError):
        NetworkSpec.from_integer([([(0, 1)], "nope")])
    with pytest.raises(ParameterError):
        NetworkSpec.from_integer([([(0, 1)], "sigmoid")], output_mode="activated")
    spec = NetworkSpec.from_integer([([(0, 1)], "sigmoid"), ([(0, 1)], "identity")])
    with pytest.raises(ParameterError):
        spec.check_encryptable()  # sigmoid hidden layer has no encrypted protocol


def test_spec_ell_chain():
    spec = relu_net()
    # layer 1: |t| <= 2 + 3*1 = 5 at most over the three units -> ell = 3
    assert spec.layers[0].ell == 3
    # layer 2 inputs bounded by 2**3 - 1 = 7: |t| <= 1 + 4*7 = 29 -> ell = 5
    assert spec.layers[1].ell == 5


def test_relu_scale_law():
    precision = 8
    rows1 = [[0.25, 0.5, -0.5], [0.0, -1.0, 1.0], [0.125, 0.25, 0.25]]
    rows2 = [[0.5, 0.25, -0.25, 1.0]]
    spec = NetworkSpec.from_real([(rows1, "relu"), (rows2, "relu")], precision)
    log_terms = 0
    for index, layer in enumerate(spec.layers):
        width = layer.fan_in + 1
        log_terms += (width - 1).bit_length() if width > 1 else 0
        assert layer.in_scale == (index + 1) * precision
        assert layer.out_scale == (index + 2) * precision
        assert layer.ell <= (index + 2) * precision + log_terms


def test_generic_hidden_state(client_keys, rng):
    # Two identity layers; after the first exchange the server-held state
    # decrypts to the first layer's inner product.
    pk_c, sk_c = client_keys
    spec = NetworkSpec.from_integer([([(0, 1)], "identity"), ([(0, 1)], "identity")])
    server = NetworkServerSession(spec, mode="generic", rng=rng)
    client = NetworkClientSession(spec.meta("generic"), (pk_c, sk_c), rng=rng)
    x = FeatureVector((1, 3), 0, bound_bits=2)
    message = server.start(client.request(x))
    reply = client.handle(message)
    message = server.advance(reply)
    assert [sk_c.decrypt(ct) for ct in server._enc] == [3]
    assert client.handle(message) is None
    assert client.result.raw == (3,)


@pytest.mark.parametrize("variant", ["core", "heuristic"])
def test_sign_network_modes_agree(client_keys, server_keys, rng, variant):
    spec = sign_net()
    for _ in range(10):
        x = pm_one_inputs(rng, 2)
        oracle = eval_ffnn(spec, x)
        generic = evaluate_network(spec, "generic", x, client_keys,
                                   server_keys, KAPPA, rng=rng)
        encrypted = evaluate_network(spec, "encrypted", x, client_keys,
                                     server_keys, KAPPA, variant=variant, rng=rng)
        assert generic.raw == tuple(p.raw for p in oracle)
        assert encrypted.raw == generic.raw
        assert encrypted.outputs == tuple(p.value for p in oracle)
        assert encrypted.class_labels == tuple(p.class_label for p in oracle)


@pytest.mark.parametrize("variant", ["core", "heuristic"])
def test_relu_network_modes_agree(client_keys, server_keys, rng, variant):
    spec = relu_net()
    for _ in range(10):
        x = pm_one_inputs(rng, 2)
        oracle = eval_ffnn(spec, x)
        generic = evaluate_network(spec, "generic", x, client_keys,
                                   server_keys, KAPPA, rng=rng)
        encrypted = evaluate_network(spec, "encrypted", x, client_keys,
                                     server_keys, KAPPA, variant=variant, rng=rng)
        assert generic.raw == tuple(p.raw for p in oracle)
        assert encrypted.raw == generic.raw
        assert encrypted.outputs == tuple(p.value for p in oracle)


def test_transcript_round_per_hidden_layer(client_keys, server_keys, rng):
    spec = sign_net()
    x = pm_one_inputs(rng, 2)
    transcript = Transcript()
    evaluate_network(spec, "encrypted", x, client_keys, server_keys, KAPPA,
                     rng=rng, transcript=transcript)
    # input up, one challenge/response pair for the hidden layer, output down
    assert [e.direction for e in transcript.entries] == ["up", "down", "up", "down"]
    assert transcript.round_trips == 2
    ell = spec.layers[0].ell
    assert transcript.entries[1].ciphertext_count == 3 * (ell + 1)
    assert transcript.entries[2].ciphertext_count == 3 * (ell + 2)


def test_generic_transcript_message_count(client_keys, server_keys, rng):
    spec = sign_net()
    x = pm_one_inputs(rng, 2)
    transcript = Transcript()
    evaluate_network(spec, "generic", x, client_keys, server_keys, KAPPA,
                     rng=rng, transcript=transcript)
    # 2*(L-1) + 2 messages for an L-layer run
    assert len(transcript.entries) == 2 * (spec.depth - 1) + 2
    assert all(e.ciphertext_count in (2, 3, 1) for e in transcript.entries)


def test_activated_output_mode(client_keys, server_keys, rng):
    spec = NetworkSpec.from_integer(
        [([(0, 1, 1), (-1, 1, -1), (1, -1, 0)], "sign"),
         ([(0, 1, -2, 1)], "sign")], output_mode="activated")
    for _ in range(5):
        x = pm_one_inputs(rng, 2)
        oracle = eval_ffnn(spec, x)
        run = evaluate_network(spec, "encrypted", x, client_keys, server_keys,
                               KAPPA, rng=rng)
        assert run.raw is None  # the pre-activation never reaches the client
        assert run.class_labels == tuple(p.class_label for p in oracle)


def test_single_identity_layer_reduces_to_regression(client_keys, server_keys, rng):
    from pinfer.linear import LinearModel
    model = LinearModel.from_real([0.5, -0.25], bias=0.125, precision=10)
    spec = NetworkSpec.from_integer([([model.theta], "identity")], precision=10)
    x = FeatureVector.from_real([0.5, -0.5], precision=10)
    run = evaluate_network(spec, "generic", x, client_keys, server_keys, KAPPA, rng=rng)
    assert run.raw == (eval_linear(model, x).raw,)
    assert run.outputs == (eval_linear(model, x).value,)


def test_encrypted_mode_needs_supported_activation(client_keys, server_keys, rng):
    spec = NetworkSpec.from_integer([([(0, 1)], "sigmoid"), ([(0, 1)], "identity")])
    with pytest.raises(ParameterError):
        evaluate_network(spec, "encrypted", FeatureVector((1, 1), 0),
                         client_keys, server_keys, KAPPA, rng=rng)


def test_sizing_gate_on_start(client_keys, server_keys, rng):
    spec = sign_net()
    with pytest.raises(ParameterError):
        evaluate_network(spec, "encrypted", pm_one_inputs(rng, 2),
                         client_keys, server_keys, kappa=600, rng=rng)


def test_server_session_never_holds_client_secret(client_keys, server_keys):
    _, sk_c = client_keys
    server = NetworkServerSession(sign_net(), mode="encrypted",
                                  server_keys=server_keys, kappa=KAPPA)
    seen, todo = set(), [server]
    while todo:
        obj = todo.pop()
        if id(obj) in seen:
            continue
        seen.add(id(obj))
        if isinstance(obj, SecretKey):
            assert obj.public_key.key_id != sk_c.public_key.key_id
        if hasattr(obj, "__dict__"):
            todo.extend(vars(obj).values())
        elif isinstance(obj, (list, tuple, set)):
            todo.extend(obj)


def test_meta_carries_no_weights():
    spec = sign_net()
    meta = spec.meta("encrypted", "core")
    assert not hasattr(meta, "weights")
    assert all(not hasattr(layer, "weights") for layer in meta.layers)


@pytest.mark.parametrize("activation,variant", [
    ("sign", "core"), ("sign", "heuristic"),
    ("relu", "core"), ("relu", "heuristic")])
def test_fractional_weight_networks(client_keys, server_keys, rng, activation, variant):
    # Real-valued weights at precision 6: the per-layer scales and bound
    # lengths differ between layers, unlike the integer toy nets.
    precision = 6
    def rows(units, fan_in):
        return [[rng.uniform(-1, 1) for _ in range(fan_in + 1)] for _ in range(units)]
    spec = NetworkSpec.from_real([(rows(3, 2), activation), (rows(1, 3), activation)],
                                 precision)
    assert spec.layers[0].ell != spec.layers[1].ell or activation == "sign"
    for _ in range(3):
        x = FeatureVector.from_real([rng.uniform(-1, 1), rng.uniform(-1, 1)],
                                    precision)
        oracle = tuple(p.raw for p in eval_ffnn(spec, x))
        run = evaluate_network(spec, "encrypted", x, client_keys, server_keys,
                               KAPPA, variant=variant, rng=rng)
        assert run.raw == oracle
        assert run.outputs == tuple(p.value for p in eval_ffnn(spec, x))


def test_clip_composed_from_relu_units(client_keys, server_keys, rng):
    # Piece-wise linear functions compose from rectifier units: two relu
    # units and a difference head give relu(t+1) - relu(t-1) = 2*clip(t)
    # with clip(t) = max(0, min(1, (t+1)/2)).
    # precision=2 declares inputs bounded by 2**2, so the layer bound covers
    # every t in the sweep; the raw integers are unaffected by the scale.
    spec = NetworkSpec.from_integer(
        [([(1, 1), (-1, 1)], "relu"), ([(0, 1, -1)], "identity")], precision=2)
    for t in range(-3, 4):
        x = FeatureVector((1, t), 2)
        run = evaluate_network(spec, "encrypted", x, client_keys, server_keys,
                               KAPPA, rng=rng)
        assert run.raw == (max(0, min(2, t + 1)),), t
