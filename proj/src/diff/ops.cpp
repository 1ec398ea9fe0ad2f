#include "mtm/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mtm/errors.hpp"

namespace mtm::diff {

namespace {

Tape& tape_of(const Var& a) {
    if (!a.valid()) throw Error("op on an empty Var handle");
    return *a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

void require_rank2(const Var& a, const char* op) {
    if (a.value().rank() != 2)
        throw ShapeError(std::string(op) + ": expected rank-2 array, got " + shape_str(a.shape()));
}

// Resolves the mask against a rank-1/2 array reduced along `axis`.
// Rank-1 masks broadcast across the kept dimension.
struct MaskView {
    const std::uint8_t* bits;
    std::size_t cols;
    bool by_col; // mask indexed by column only
    bool by_row; // mask indexed by row only

    bool at(std::size_t r, std::size_t c) const {
        if (by_col) return bits[c] != 0;
        if (by_row) return bits[r] != 0;
        return bits[r * cols + c] != 0;
    }
};

MaskView resolve_mask(const Var& x, const Mask& mask, int axis, const char* op) {
    const Array& a = x.value();
    if (a.rank() == 1) {
        if (axis != 0) throw ShapeError(std::string(op) + ": rank-1 arrays reduce over axis 0");
        if (mask.shape != a.shape)
            throw ShapeError(std::string(op) + ": mask shape " + shape_str(mask.shape) +
                             " vs array " + shape_str(a.shape));
        return MaskView{mask.bits.data(), a.size(), true, false};
    }
    require_rank2(x, op);
    if (axis != 0 && axis != 1) throw ShapeError(std::string(op) + ": axis must be 0 or 1");
    const std::size_t R = a.rows(), C = a.cols();
    if (mask.shape == a.shape) return MaskView{mask.bits.data(), C, false, false};
    if (mask.shape.size() == 1) {
        if (axis == 1 && mask.size() == C) return MaskView{mask.bits.data(), C, true, false};
        if (axis == 0 && mask.size() == R) return MaskView{mask.bits.data(), C, false, true};
    }
    throw ShapeError(std::string(op) + ": mask shape " + shape_str(mask.shape) +
                     " incompatible with array " + shape_str(a.shape));
}

} // namespace

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    Tape& t = tape_of(a);
    Array out = a.value();
    const Array& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    const int aid = a.id(), bid = b.id();
    return t.record(std::move(out), {a, b}, [aid, bid](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        if (tp.tracked(aid)) {
            std::vector<double>& ga = tp.grad_buffer(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.tracked(bid)) {
            std::vector<double>& gb = tp.grad_buffer(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    Tape& t = tape_of(a);
    Array out = a.value();
    const Array& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
    const int aid = a.id(), bid = b.id();
    return t.record(std::move(out), {a, b}, [aid, bid](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        if (tp.tracked(aid)) {
            std::vector<double>& ga = tp.grad_buffer(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.tracked(bid)) {
            std::vector<double>& gb = tp.grad_buffer(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    Tape& t = tape_of(a);
    Array out = a.value();
    const Array& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    const int aid = a.id(), bid = b.id();
    return t.record(std::move(out), {a, b}, [aid, bid](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        if (tp.tracked(aid)) {
            const std::vector<double>& bv2 = tp.value(bid).data;
            std::vector<double>& ga = tp.grad_buffer(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (tp.tracked(bid)) {
            const std::vector<double>& av = tp.value(aid).data;
            std::vector<double>& gb = tp.grad_buffer(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    Tape& t = tape_of(a);
    Array out = a.value();
    for (double& v : out.data) v *= s;
    const int aid = a.id();
    return t.record(std::move(out), {a}, [aid, s](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        std::vector<double>& ga = tp.grad_buffer(aid);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
}

Var add_rowvec(Var a, Var v) {
    require_rank2(a, "add_rowvec");
    if (v.value().rank() != 1 || v.value().size() != a.cols())
        throw ShapeError("add_rowvec: vector shape " + shape_str(v.shape()) +
                         " vs matrix " + shape_str(a.shape()));
    Tape& t = tape_of(a);
    Array out = a.value();
    const std::size_t R = out.rows(), C = out.cols();
    const Array& vv = v.value();
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out.data[r * C + c] += vv.data[c];
    const int aid = a.id(), vid = v.id();
    return t.record(std::move(out), {a, v}, [aid, vid, R, C](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        if (tp.tracked(aid)) {
            std::vector<double>& ga = tp.grad_buffer(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.tracked(vid)) {
            std::vector<double>& gv = tp.grad_buffer(vid);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) gv[c] += g[r * C + c];
        }
    });
}

Var scale_rows(Var a, std::vector<double> f) {
    require_rank2(a, "scale_rows");
    if (f.size() != a.rows())
        throw ShapeError("scale_rows: " + std::to_string(f.size()) + " factors for matrix " +
                         shape_str(a.shape()));
    Tape& t = tape_of(a);
    Array out = a.value();
    const std::size_t R = out.rows(), C = out.cols();
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out.data[r * C + c] *= f[r];
    const int aid = a.id();
    return t.record(std::move(out), {a}, [aid, f = std::move(f), R, C](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        std::vector<double>& ga = tp.grad_buffer(aid);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += g[r * C + c] * f[r];
    });
}

Var scale_cols(Var a, std::vector<double> f) {
    require_rank2(a, "scale_cols");
    if (f.size() != a.cols())
        throw ShapeError("scale_cols: " + std::to_string(f.size()) + " factors for matrix " +
                         shape_str(a.shape()));
    Tape& t = tape_of(a);
    Array out = a.value();
    const std::size_t R = out.rows(), C = out.cols();
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out.data[r * C + c] *= f[c];
    const int aid = a.id();
    return t.record(std::move(out), {a}, [aid, f = std::move(f), R, C](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        std::vector<double>& ga = tp.grad_buffer(aid);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += g[r * C + c] * f[c];
    });
}

namespace {

// C += A . B with A (n x k) row-major, B (k x m) row-major. ikj order keeps
// the inner loop contiguous in both B and C.
void gemm_acc(const double* A, const double* B, double* Cm,
              std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            if (a == 0.0) continue;
            const double* brow = B + p * m;
            double* crow = Cm + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += a * brow[j];
        }
    }
}

// C += A . B^T with A (n x k), B (m x k).
void gemm_nt_acc(const double* A, const double* B, double* Cm,
                 std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = A + i * k;
        double* crow = Cm + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = B + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C += A^T . B with A (k x n), B (k x m).
void gemm_tn_acc(const double* A, const double* B, double* Cm,
                 std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = A + p * n;
        const double* brow = B + p * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = arow[i];
            if (a == 0.0) continue;
            double* crow = Cm + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += a * brow[j];
        }
    }
}

} // namespace

Var matmul(Var a, Var b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    Tape& t = tape_of(a);
    Array out = Array::zeros({n, m});
    gemm_acc(a.value().data.data(), b.value().data.data(), out.data.data(), n, k, m);
    const int aid = a.id(), bid = b.id();
    return t.record(std::move(out), {a, b}, [aid, bid, n, k, m](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        // dA += G . B^T ; dB += A^T . G
        if (tp.tracked(aid))
            gemm_nt_acc(g.data(), tp.value(bid).data.data(), tp.grad_buffer(aid).data(), n, m, k);
        if (tp.tracked(bid))
            gemm_tn_acc(tp.value(aid).data.data(), g.data(), tp.grad_buffer(bid).data(), k, n, m);
    });
}

Var matmul_nt(Var a, Var b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    if (b.cols() != k)
        throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()) + " transposed");
    Tape& t = tape_of(a);
    Array out = Array::zeros({n, m});
    gemm_nt_acc(a.value().data.data(), b.value().data.data(), out.data.data(), n, k, m);
    const int aid = a.id(), bid = b.id();
    return t.record(std::move(out), {a, b}, [aid, bid, n, k, m](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        // out = A . B^T  =>  dA += G . B ; dB += G^T . A
        if (tp.tracked(aid))
            gemm_acc(g.data(), tp.value(bid).data.data(), tp.grad_buffer(aid).data(), n, m, k);
        if (tp.tracked(bid))
            gemm_tn_acc(g.data(), tp.value(aid).data.data(), tp.grad_buffer(bid).data(), m, n, k);
    });
}

Var gather_rows(Var a, std::vector<std::size_t> idx) {
    require_rank2(a, "gather_rows");
    const std::size_t R = a.rows(), C = a.cols();
    for (std::size_t i : idx)
        if (i >= R)
            throw ShapeError("gather_rows: row " + std::to_string(i) + " out of " +
                             std::to_string(R));
    Tape& t = tape_of(a);
    Array out = Array::zeros({idx.size(), C});
    const Array& av = a.value();
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(av.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * C), C,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * C));
    const int aid = a.id();
    return t.record(std::move(out), {a}, [aid, idx = std::move(idx), C](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        std::vector<double>& ga = tp.grad_buffer(aid);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < C; ++c) ga[idx[r] * C + c] += g[r * C + c];
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    Tape& t = tape_of(parts[0]);
    const std::size_t C = parts[0].cols();
    std::size_t R = 0;
    for (const Var& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.cols() != C)
            throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()) +
                             " vs " + shape_str(parts[0].shape()));
        R += p.rows();
    }
    Array out = Array::zeros({R, C});
    std::size_t row = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> sizes;
    for (const Var& p : parts) {
        const Array& pv = p.value();
        std::copy(pv.data.begin(), pv.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(row * C));
        ids.push_back(p.id());
        offsets.push_back(row * C);
        sizes.push_back(pv.size());
        row += pv.rows();
    }
    return t.record(std::move(out), parts,
                    [ids = std::move(ids), offsets = std::move(offsets),
                     sizes = std::move(sizes)](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
            if (!tp.tracked(ids[p])) continue;
            std::vector<double>& gp = tp.grad_buffer(ids[p]);
            for (std::size_t i = 0; i < sizes[p]; ++i) gp[i] += g[offsets[p] + i];
        }
    });
}

Var concat_cols(Var a, Var b) {
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    if (a.rows() != b.rows())
        throw ShapeError("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tape& t = tape_of(a);
    const std::size_t R = a.rows(), Ca = a.cols(), Cb = b.cols();
    Array out = Array::zeros({R, Ca + Cb});
    const Array& av = a.value();
    const Array& bv = b.value();
    for (std::size_t r = 0; r < R; ++r) {
        std::copy_n(av.data.begin() + static_cast<std::ptrdiff_t>(r * Ca), Ca,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * (Ca + Cb)));
        std::copy_n(bv.data.begin() + static_cast<std::ptrdiff_t>(r * Cb), Cb,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * (Ca + Cb) + Ca));
    }
    const int aid = a.id(), bid = b.id();
    return t.record(std::move(out), {a, b}, [aid, bid, R, Ca, Cb](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        if (tp.tracked(aid)) {
            std::vector<double>& ga = tp.grad_buffer(aid);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < Ca; ++c) ga[r * Ca + c] += g[r * (Ca + Cb) + c];
        }
        if (tp.tracked(bid)) {
            std::vector<double>& gb = tp.grad_buffer(bid);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < Cb; ++c) gb[r * Cb + c] += g[r * (Ca + Cb) + Ca + c];
        }
    });
}

Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
    require_rank2(a, "slice_cols");
    const std::size_t R = a.rows(), C = a.cols();
    if (c0 >= c1 || c1 > C)
        throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of " + std::to_string(C) + " columns");
    Tape& t = tape_of(a);
    const std::size_t W = c1 - c0;
    Array out = Array::zeros({R, W});
    const Array& av = a.value();
    for (std::size_t r = 0; r < R; ++r)
        std::copy_n(av.data.begin() + static_cast<std::ptrdiff_t>(r * C + c0), W,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * W));
    const int aid = a.id();
    return t.record(std::move(out), {a}, [aid, R, C, c0, W](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        std::vector<double>& ga = tp.grad_buffer(aid);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < W; ++c) ga[r * C + c0 + c] += g[r * W + c];
    });
}

Var relu(Var a) {
    Tape& t = tape_of(a);
    Array out = a.value();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const int aid = a.id();
    return t.record(std::move(out), {a}, [aid](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        const std::vector<double>& x = tp.value(aid).data;
        std::vector<double>& ga = tp.grad_buffer(aid);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
}

Var dropout(Var a, double rate, std::mt19937_64& rng, bool train) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
    if (!train || rate == 0.0) return a;
    Tape& t = tape_of(a);
    Array out = a.value();
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<std::uint8_t> kept(out.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        kept[i] = u(rng) >= rate ? 1 : 0;
        out.data[i] = kept[i] ? out.data[i] * keep_scale : 0.0;
    }
    const int aid = a.id();
    return t.record(std::move(out), {a},
                    [aid, kept = std::move(kept), keep_scale](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        std::vector<double>& ga = tp.grad_buffer(aid);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (kept[i]) ga[i] += g[i] * keep_scale;
    });
}

Var layer_norm_rows(Var a, double eps) {
    require_rank2(a, "layer_norm_rows");
    Tape& t = tape_of(a);
    const std::size_t R = a.rows(), C = a.cols();
    Array out = Array::zeros({R, C});
    std::vector<double> inv_sd(R);
    const Array& av = a.value();
    for (std::size_t r = 0; r < R; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < C; ++c) mean += av.data[r * C + c];
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double d = av.data[r * C + c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(C);
        inv_sd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < C; ++c)
            out.data[r * C + c] = (av.data[r * C + c] - mean) * inv_sd[r];
    }
    const int aid = a.id();
    return t.record(std::move(out), {a},
                    [aid, inv_sd = std::move(inv_sd), R, C](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        const std::vector<double>& y = tp.value(self).data;
        std::vector<double>& ga = tp.grad_buffer(aid);
        for (std::size_t r = 0; r < R; ++r) {
            double gm = 0.0, gym = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                gm += g[r * C + c];
                gym += g[r * C + c] * y[r * C + c];
            }
            gm /= static_cast<double>(C);
            gym /= static_cast<double>(C);
            for (std::size_t c = 0; c < C; ++c)
                ga[r * C + c] += (g[r * C + c] - gm - y[r * C + c] * gym) * inv_sd[r];
        }
    });
}

namespace {

// Iteration helper over the groups of a masked reduction: group `gi` walks
// elements along the reduced axis.
struct GroupIter {
    std::size_t n_groups, group_len;
    std::size_t stride_group, stride_elem;

    std::size_t index(std::size_t gi, std::size_t e) const {
        return gi * stride_group + e * stride_elem;
    }
};

GroupIter group_iter(const Array& a, int axis) {
    if (a.rank() == 1) return GroupIter{1, a.size(), 0, 1};
    const std::size_t R = a.rows(), C = a.cols();
    if (axis == 1) return GroupIter{R, C, C, 1}; // reduce over columns, per row
    return GroupIter{C, R, 1, C};                // reduce over rows, per column
}

bool mask_at_flat(const MaskView& mv, std::size_t flat, std::size_t cols) {
    return mv.at(flat / cols, flat % cols);
}

} // namespace

Var masked_softmax(Var logits, const Mask& mask, int axis) {
    MaskView mv = resolve_mask(logits, mask, axis, "masked_softmax");
    Tape& t = tape_of(logits);
    const Array& x = logits.value();
    const std::size_t C = x.cols();
    GroupIter gi = group_iter(x, axis);
    Array out = Array::zeros(x.shape);
    for (std::size_t g = 0; g < gi.n_groups; ++g) {
        double mx = -std::numeric_limits<double>::infinity();
        std::size_t unmasked = 0;
        for (std::size_t e = 0; e < gi.group_len; ++e) {
            const std::size_t f = gi.index(g, e);
            if (!mask_at_flat(mv, f, C)) continue;
            ++unmasked;
            mx = std::max(mx, x.data[f]);
        }
        if (unmasked == 0)
            throw DegenerateError("masked_softmax: fully masked row " + std::to_string(g));
        double denom = 0.0;
        for (std::size_t e = 0; e < gi.group_len; ++e) {
            const std::size_t f = gi.index(g, e);
            if (!mask_at_flat(mv, f, C)) continue;
            out.data[f] = std::exp(x.data[f] - mx);
            denom += out.data[f];
        }
        for (std::size_t e = 0; e < gi.group_len; ++e) {
            const std::size_t f = gi.index(g, e);
            if (mask_at_flat(mv, f, C)) out.data[f] /= denom;
        }
    }
    const int xid = logits.id();
    // The output itself encodes the mask: exact zeros at masked slots.
    return t.record(std::move(out), {logits}, [xid, gi](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        const std::vector<double>& y = tp.value(self).data;
        std::vector<double>& gx = tp.grad_buffer(xid);
        for (std::size_t grp = 0; grp < gi.n_groups; ++grp) {
            double dot = 0.0;
            for (std::size_t e = 0; e < gi.group_len; ++e) {
                const std::size_t f = gi.index(grp, e);
                dot += g[f] * y[f];
            }
            for (std::size_t e = 0; e < gi.group_len; ++e) {
                const std::size_t f = gi.index(grp, e);
                gx[f] += y[f] * (g[f] - dot);
            }
        }
    });
}

namespace {

Shape reduced_shape(const Array& a, int axis) {
    if (a.rank() == 1) return Shape{1};
    return axis == 1 ? Shape{a.rows(), 1} : Shape{1, a.cols()};
}

} // namespace

Var masked_max(Var x, const Mask& mask, int axis) {
    MaskView mv = resolve_mask(x, mask, axis, "masked_max");
    Tape& t = tape_of(x);
    const Array& a = x.value();
    const std::size_t C = a.cols();
    GroupIter gi = group_iter(a, axis);
    Array out = Array::zeros(reduced_shape(a, axis));
    std::vector<std::size_t> arg(gi.n_groups);
    for (std::size_t g = 0; g < gi.n_groups; ++g) {
        bool seen = false;
        double best = 0.0;
        std::size_t best_f = 0;
        for (std::size_t e = 0; e < gi.group_len; ++e) {
            const std::size_t f = gi.index(g, e);
            if (!mask_at_flat(mv, f, C)) continue;
            // Ties break to the lowest index.
            if (!seen || a.data[f] > best) {
                seen = true;
                best = a.data[f];
                best_f = f;
            }
        }
        if (!seen) throw DegenerateError("masked_max: empty group " + std::to_string(g));
        out.data[g] = best;
        arg[g] = best_f;
    }
    const int xid = x.id();
    return t.record(std::move(out), {x}, [xid, arg = std::move(arg)](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        std::vector<double>& gx = tp.grad_buffer(xid);
        for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += g[i];
    });
}

Var masked_mean(Var x, const Mask& mask, int axis) {
    MaskView mv = resolve_mask(x, mask, axis, "masked_mean");
    Tape& t = tape_of(x);
    const Array& a = x.value();
    const std::size_t C = a.cols();
    GroupIter gi = group_iter(a, axis);
    Array out = Array::zeros(reduced_shape(a, axis));
    std::vector<std::uint8_t> part(a.size(), 0);
    std::vector<double> inv_count(gi.n_groups, 0.0);
    for (std::size_t g = 0; g < gi.n_groups; ++g) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t e = 0; e < gi.group_len; ++e) {
            const std::size_t f = gi.index(g, e);
            if (!mask_at_flat(mv, f, C)) continue;
            part[f] = 1;
            sum += a.data[f];
            ++count;
        }
        if (count == 0) throw DegenerateError("masked_mean: empty group " + std::to_string(g));
        inv_count[g] = 1.0 / static_cast<double>(count);
        out.data[g] = sum * inv_count[g];
    }
    const int xid = x.id();
    return t.record(std::move(out), {x},
                    [xid, part = std::move(part), inv_count = std::move(inv_count),
                     gi](Tape& tp, int self) {
        const std::vector<double>& g = tp.grad_buffer(self);
        std::vector<double>& gx = tp.grad_buffer(xid);
        for (std::size_t grp = 0; grp < gi.n_groups; ++grp)
            for (std::size_t e = 0; e < gi.group_len; ++e) {
                const std::size_t f = gi.index(grp, e);
                if (part[f]) gx[f] += g[grp] * inv_count[grp];
            }
    });
}

Var sum_all(Var a) {
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double v : a.value().data) s += v;
    const int aid = a.id();
    return t.record(Array::scalar(s), {a}, [aid](Tape& tp, int self) {
        const double g = tp.grad_buffer(self)[0];
        std::vector<double>& ga = tp.grad_buffer(aid);
        for (double& v : ga) v += g;
    });
}

Var softmax_cross_entropy(Var logits, std::size_t label, double weight) {
    const Array& x = logits.value();
    if (x.rows() != 1)
        throw ShapeError("softmax_cross_entropy: expected a single row of logits, got " +
                         shape_str(x.shape));
    const std::size_t M = x.cols();
    if (label >= M)
        throw ConfigError("softmax_cross_entropy: label " + std::to_string(label) +
                          " out of " + std::to_string(M) + " classes");
    Tape& t = tape_of(logits);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x.data) mx = std::max(mx, v);
    double denom = 0.0;
    std::vector<double> p(M);
    for (std::size_t c = 0; c < M; ++c) {
        p[c] = std::exp(x.data[c] - mx);
        denom += p[c];
    }
    for (double& v : p) v /= denom;
    const double loss = -weight * (x.data[label] - mx - std::log(denom));
    const int xid = logits.id();
    return t.record(Array::scalar(loss), {logits},
                    [xid, label, weight, p = std::move(p)](Tape& tp, int self) {
        const double g = tp.grad_buffer(self)[0];
        std::vector<double>& gx = tp.grad_buffer(xid);
        for (std::size_t c = 0; c < p.size(); ++c)
            gx[c] += g * weight * (p[c] - (c == label ? 1.0 : 0.0));
    });
}

Var linear(Var x, Var w, Var b) { return add_rowvec(matmul_nt(x, w), b); }

} // namespace mtm::diff
