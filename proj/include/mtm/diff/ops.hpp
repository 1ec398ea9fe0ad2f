#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "mtm/diff/tape.hpp"

namespace mtm::diff {

// Elementwise (same shape).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);

// out[r][c] = a[r][c] + v[c]; v is rank-1 of length cols(a).
Var add_rowvec(Var a, Var v);
// out[r][c] = a[r][c] * f[r]; f is a per-row constant (no gradient to f).
Var scale_rows(Var a, std::vector<double> f);
// out[r][c] = a[r][c] * f[c]; f is a per-column constant.
Var scale_cols(Var a, std::vector<double> f);

// Matrix products, rank-2 only.
Var matmul(Var a, Var b);    // (n x k) . (k x m) -> (n x m)
Var matmul_nt(Var a, Var b); // (n x k) . (m x k)^T -> (n x m)

// Row selection / assembly. Repeated indices are allowed in gather_rows;
// backward scatter-adds.
Var gather_rows(Var a, std::vector<std::size_t> idx);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t c0, std::size_t c1);

Var relu(Var a);
// Inverted dropout on the kept path; identity in eval mode or at rate 0.
Var dropout(Var a, double rate, std::mt19937_64& rng, bool train);
// Row-wise layer normalization, no affine parameters.
Var layer_norm_rows(Var a, double eps = 1e-5);

// Masked reductions. `axis` picks the reduced dimension of a rank-2 array
// (0 = over rows, 1 = over columns); rank-1 arrays reduce over axis 0.
// The mask either matches the array's shape or is rank-1 along the reduced
// dimension and broadcasts across the other one. Masked positions never
// influence the result; every reduced group needs at least one unmasked
// element.
Var masked_softmax(Var logits, const Mask& mask, int axis);
Var masked_max(Var x, const Mask& mask, int axis);
Var masked_mean(Var x, const Mask& mask, int axis);

Var sum_all(Var a);

// Cross-entropy of a single row of logits against `label`, scaled by
// `weight` (1.0 = unweighted).
Var softmax_cross_entropy(Var logits, std::size_t label, double weight = 1.0);

// x (n x in) . w(out x in)^T + b -> (n x out)
Var linear(Var x, Var w, Var b);

} // namespace mtm::diff
