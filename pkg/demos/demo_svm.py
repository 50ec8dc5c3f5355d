#!/usr/bin/env python3
"""Private SVM classification: the masked-comparison core protocol and the
cheap heuristic variant. Run: python demos/demo_svm.py
"""

from pinfer import keygen
from pinfer.comparison import bit_owner_finish, bit_owner_request, evaluator_respond
from pinfer.linear import (FeatureVector, LinearModel, regr_dual_publish,
                           svm_core_finish, svm_core_request, svm_core_respond,
                           svm_heur_finish, svm_heur_request, svm_heur_respond)
from pinfer.numutil import insecure_rng
from pinfer.reference import eval_svm

rng = insecure_rng(2)
KAPPA = 40  # statistical masking margin; 95 at production key sizes

pk_client, sk_client = keygen(512, rng)
pk_server, sk_server = keygen(512, rng)

# --- the building block: shared-output private comparison ----------------
# Two parties hold private l-bit integers mu and eta and end up with bits
# delta_owner, delta_eval such that delta_owner XOR delta_eval = [mu <= eta].
# Neither share alone reveals the answer.
print("[comparison] 11 vs 13, 4-bit operands")
request = bit_owner_request(pk_client, 11, 4, rng)
delta_eval = rng.randrange(2)
response = evaluator_respond(pk_client, request, 13, delta_eval, rng)
delta_owner = bit_owner_finish(sk_client, response)
print(f"  shares: owner={delta_owner}, evaluator={delta_eval}, "
      f"xor={delta_owner ^ delta_eval}  ([11 <= 13] = 1)")
assert delta_owner ^ delta_eval == 1

# --- core SVM: one round trip, sign revealed and nothing else ------------
print("\n[svm core] class = sign(theta . x)")
model = LinearModel.from_real([0.6, -0.8, 0.2], bias=0.05, precision=16)
x = FeatureVector.from_real([-0.9, 0.3, 0.5], precision=16)
print(f"  bound length ell = {model.ell}: the client sends ell mask bits,"
      " the server answers ell+1 blinded values")

published = regr_dual_publish(model, pk_server, rng)  # one-time, reusable
request, session = svm_core_request(published, pk_client, x, KAPPA, rng)
response = svm_core_respond(sk_server, request, model.ell, rng)
label = svm_core_finish(sk_client, response, session)
print(f"  predicted class: {label:+d}   (oracle: {eval_svm(model, x).class_label:+d})")
assert label == eval_svm(model, x).class_label

# --- heuristic SVM: two ciphertexts total, with a documented caveat ------
# The server returns (-1)**delta * (lam * theta.x + mu) for random lam, mu
# with |mu| < |lam|. The sign survives, but the magnitude of the reply can
# leak information about the model; there is no formal security guarantee.
print("\n[svm heuristic] d ciphertexts up, 1 down; leaks reply magnitude")
request = svm_heur_request(pk_client, x, rng)
reply = svm_heur_respond(model, request, KAPPA, rng)
label = svm_heur_finish(sk_client, reply)
print(f"  predicted class: {label:+d}")
assert label == eval_svm(model, x).class_label

# An input exactly on the hyperplane classifies as +1 by convention.
on_plane = LinearModel((0, 1), ell=2, precision=0)
request = svm_heur_request(pk_client, FeatureVector((1, 0), 0), rng)
assert svm_heur_finish(sk_client, svm_heur_respond(on_plane, request, KAPPA, rng)) == 1
print("  theta . x = 0 classifies as +1")
