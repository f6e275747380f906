#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dustbin/model.hpp"
#include "dustbin/rng.hpp"
#include "dustbin/tape.hpp"

namespace dustbin::testing {

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // +-h crossed a ReLU / max-pool branch
};

inline double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

/// Analytic gradients of the cross-entropy loss w.r.t. the input (all
/// coordinates) and `per_tensor` random coordinates of every parameter,
/// against central differences with step h.
inline GradCheck grad_check(const Model& model, const Array& x, std::size_t label, Rng& rng, std::size_t per_tensor,
                            double h = 1e-5) {
  Tape tape;
  const auto t = record(tape, model, x, true);
  Var loss = softmax_cross_entropy(t.logits, label);
  const auto grads = tape.grad(loss);
  const std::uint64_t base_sig = tape.branch_signature();

  GradCheck out;
  auto probe = [&](Var leaf, std::size_t i) {
    Array v = leaf.value();
    const double orig = v[i];
    v[i] = orig + h;
    tape.set_value(leaf, v);
    tape.replay();
    const double up = loss.value().item();
    const bool same_up = tape.branch_signature() == base_sig;
    v[i] = orig - h;
    tape.set_value(leaf, v);
    tape.replay();
    const double down = loss.value().item();
    const bool same_down = tape.branch_signature() == base_sig;
    v[i] = orig;
    tape.set_value(leaf, v);
    tape.replay();
    if (!same_up || !same_down) {
      ++out.skipped;
      return;
    }
    const double numeric = (up - down) / (2.0 * h);
    out.max_rel_err = std::max(out.max_rel_err, rel_err(grads[leaf][i], numeric));
    ++out.checked;
  };

  for (std::size_t i = 0; i < t.input.value().size(); ++i) probe(t.input, i);
  for (Var p : t.params) {
    const std::size_t n = p.value().size();
    for (std::size_t k = 0; k < std::min(per_tensor, n); ++k) probe(p, rng.index(n));
  }
  return out;
}

}  // namespace dustbin::testing
