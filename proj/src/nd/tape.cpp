#include "flowprobe/nd/tape.hpp"

#include <algorithm>
#include <cmath>

namespace flowprobe::nd {

namespace {

void check_same_tape(Value a, Value b, const char* op) {
    if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
        throw ContractError(std::string(op) + ": operands live on different tapes");
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

void Tape::backward(Value loss) {
    if (loss.tape != this) throw ContractError("backward: loss lives on a different tape");
    Node& ln = node(loss.idx);
    if (ln.val().numel() != 1) throw ContractError("backward: loss must be a scalar");

    grad_buf(loss.idx)[0] = 1.0;
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = node(i);
        if (!n.requires_grad || !n.grad_alloc) continue;
        if (n.backprop) n.backprop(*this, i);
        if (n.param != nullptr) {
            double* dst = n.param->grad.data();
            const double* src = n.grad.data();
            const int64_t cnt = n.grad.numel();
            for (int64_t j = 0; j < cnt; ++j) dst[j] += src[j];
            n.owner->mark_grads_populated();
        }
    }
    clear();
}

Value matmul(Value a, Value b) {
    check_same_tape(a, b, "matmul");
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
        throw ShapeError("matmul " + Tensor::shape_str(ta.shape()) + " x " + Tensor::shape_str(tb.shape()));
    const int m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out({m, n});
    matmul_accum(ta.data(), tb.data(), out.data(), m, k, n);
    out.ensure_finite("matmul");

    Tape& tp = *a.tape;
    const bool req = tp.needs_grad(a.idx) || tp.needs_grad(b.idx);
    const int ai = a.idx, bi = b.idx;
    return tp.push(std::move(out), req, nullptr, nullptr, [ai, bi, m, k, n](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (t.needs_grad(ai))
            matmul_nt_accum(g.data(), t.value_of(bi).data(), t.grad_buf(ai).data(), m, n, k);
        if (t.needs_grad(bi))
            matmul_tn_accum(t.value_of(ai).data(), g.data(), t.grad_buf(bi).data(), m, k, n);
    });
}

Value add(Value a, Value b) {
    check_same_tape(a, b, "add");
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    if (!ta.same_shape(tb)) throw ShapeError("add shapes differ");
    Tensor out(ta.shape());
    const int64_t n = ta.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = ta[i] + tb[i];
    out.ensure_finite("add");

    Tape& tp = *a.tape;
    const bool req = tp.needs_grad(a.idx) || tp.needs_grad(b.idx);
    const int ai = a.idx, bi = b.idx;
    return tp.push(std::move(out), req, nullptr, nullptr, [ai, bi](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const int64_t cnt = g.numel();
        if (t.needs_grad(ai)) {
            double* da = t.grad_buf(ai).data();
            for (int64_t i = 0; i < cnt; ++i) da[i] += g[i];
        }
        if (t.needs_grad(bi)) {
            double* db = t.grad_buf(bi).data();
            for (int64_t i = 0; i < cnt; ++i) db[i] += g[i];
        }
    });
}

Value mul(Value a, Value b) {
    check_same_tape(a, b, "mul");
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    if (!ta.same_shape(tb)) throw ShapeError("mul shapes differ");
    Tensor out(ta.shape());
    const int64_t n = ta.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = ta[i] * tb[i];
    out.ensure_finite("mul");

    Tape& tp = *a.tape;
    const bool req = tp.needs_grad(a.idx) || tp.needs_grad(b.idx);
    const int ai = a.idx, bi = b.idx;
    return tp.push(std::move(out), req, nullptr, nullptr, [ai, bi](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const int64_t cnt = g.numel();
        if (t.needs_grad(ai)) {
            double* da = t.grad_buf(ai).data();
            const double* vb = t.value_of(bi).data();
            for (int64_t i = 0; i < cnt; ++i) da[i] += g[i] * vb[i];
        }
        if (t.needs_grad(bi)) {
            double* db = t.grad_buf(bi).data();
            const double* va = t.value_of(ai).data();
            for (int64_t i = 0; i < cnt; ++i) db[i] += g[i] * va[i];
        }
    });
}

Value add_row(Value a, Value row) {
    check_same_tape(a, row, "add_row");
    const Tensor& ta = a.val();
    const Tensor& tr = row.val();
    if (ta.rank() != 2 || tr.numel() != ta.cols()) throw ShapeError("add_row: bias length must equal cols");
    const int m = ta.rows(), n = ta.cols();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = ta.at(i, j) + tr[j];
    out.ensure_finite("add_row");

    Tape& tp = *a.tape;
    const bool req = tp.needs_grad(a.idx) || tp.needs_grad(row.idx);
    const int ai = a.idx, ri = row.idx;
    return tp.push(std::move(out), req, nullptr, nullptr, [ai, ri, m, n](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (t.needs_grad(ai)) {
            double* da = t.grad_buf(ai).data();
            const int64_t cnt = g.numel();
            for (int64_t i = 0; i < cnt; ++i) da[i] += g[i];
        }
        if (t.needs_grad(ri)) {
            double* dr = t.grad_buf(ri).data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) dr[j] += g[static_cast<int64_t>(i) * n + j];
        }
    });
}

Value mul_row(Value a, Value row) {
    check_same_tape(a, row, "mul_row");
    const Tensor& ta = a.val();
    const Tensor& tr = row.val();
    if (ta.rank() != 2 || tr.numel() != ta.cols()) throw ShapeError("mul_row: scale length must equal cols");
    const int m = ta.rows(), n = ta.cols();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = ta.at(i, j) * tr[j];
    out.ensure_finite("mul_row");

    Tape& tp = *a.tape;
    const bool req = tp.needs_grad(a.idx) || tp.needs_grad(row.idx);
    const int ai = a.idx, ri = row.idx;
    return tp.push(std::move(out), req, nullptr, nullptr, [ai, ri, m, n](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (t.needs_grad(ai)) {
            Tensor& da = t.grad_buf(ai);
            const Tensor& r = t.value_of(ri);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) da.at(i, j) += g.at(i, j) * r[j];
        }
        if (t.needs_grad(ri)) {
            double* dr = t.grad_buf(ri).data();
            const Tensor& va = t.value_of(ai);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) dr[j] += g.at(i, j) * va.at(i, j);
        }
    });
}

Value scale(Value a, double s) {
    if (!std::isfinite(s)) throw NumericError("scale: non-finite factor");
    const Tensor& ta = a.val();
    Tensor out(ta.shape());
    const int64_t n = ta.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = ta[i] * s;
    out.ensure_finite("scale");

    Tape& tp = *a.tape;
    const int ai = a.idx;
    return tp.push(std::move(out), tp.needs_grad(ai), nullptr, nullptr, [ai, s](Tape& t, int self) {
        if (!t.needs_grad(ai)) return;
        const Tensor& g = t.node(self).grad;
        double* da = t.grad_buf(ai).data();
        const int64_t cnt = g.numel();
        for (int64_t i = 0; i < cnt; ++i) da[i] += g[i] * s;
    });
}

Value tanh_act(Value a) {
    const Tensor& ta = a.val();
    Tensor out(ta.shape());
    const int64_t n = ta.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(ta[i]);
    out.ensure_finite("tanh");

    Tape& tp = *a.tape;
    const int ai = a.idx;
    return tp.push(std::move(out), tp.needs_grad(ai), nullptr, nullptr, [ai](Tape& t, int self) {
        if (!t.needs_grad(ai)) return;
        const Tensor& g = t.node(self).grad;
        const Tensor& y = t.node(self).val();
        double* da = t.grad_buf(ai).data();
        const int64_t cnt = g.numel();
        for (int64_t i = 0; i < cnt; ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Value silu(Value a) {
    const Tensor& ta = a.val();
    Tensor out(ta.shape());
    const int64_t n = ta.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = ta[i] * sigmoid(ta[i]);
    out.ensure_finite("silu");

    Tape& tp = *a.tape;
    const int ai = a.idx;
    return tp.push(std::move(out), tp.needs_grad(ai), nullptr, nullptr, [ai](Tape& t, int self) {
        if (!t.needs_grad(ai)) return;
        const Tensor& g = t.node(self).grad;
        const Tensor& x = t.value_of(ai);
        double* da = t.grad_buf(ai).data();
        const int64_t cnt = g.numel();
        for (int64_t i = 0; i < cnt; ++i) {
            const double s = sigmoid(x[i]);
            da[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
        }
    });
}

Value concat_cols(Value a, Value b) {
    check_same_tape(a, b, "concat_cols");
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    if (ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows())
        throw ShapeError("concat_cols: row counts differ");
    const int m = ta.rows(), p = ta.cols(), q = tb.cols();
    Tensor out({m, p + q});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < p; ++j) out.at(i, j) = ta.at(i, j);
        for (int j = 0; j < q; ++j) out.at(i, p + j) = tb.at(i, j);
    }

    Tape& tp = *a.tape;
    const bool req = tp.needs_grad(a.idx) || tp.needs_grad(b.idx);
    const int ai = a.idx, bi = b.idx;
    return tp.push(std::move(out), req, nullptr, nullptr, [ai, bi, m, p, q](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (t.needs_grad(ai)) {
            Tensor& da = t.grad_buf(ai);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < p; ++j) da.at(i, j) += g.at(i, j);
        }
        if (t.needs_grad(bi)) {
            Tensor& db = t.grad_buf(bi);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < q; ++j) db.at(i, j) += g.at(i, p + j);
        }
    });
}

Value gather_rows(Value table, const std::vector<int>& rows) {
    const Tensor& tt = table.val();
    if (tt.rank() != 2) throw ShapeError("gather_rows: table must be rank 2");
    const int r = tt.rows(), c = tt.cols();
    const int b = static_cast<int>(rows.size());
    if (b == 0) throw ContractError("gather_rows: empty index list");
    for (int idx : rows)
        if (idx < 0 || idx >= r) throw ContractError("gather_rows: index out of range");
    Tensor out({b, c});
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) = tt.at(rows[static_cast<size_t>(i)], j);

    Tape& tp = *table.tape;
    const int ti = table.idx;
    std::vector<int> rows_copy = rows;
    return tp.push(std::move(out), tp.needs_grad(ti), nullptr, nullptr,
                   [ti, rows_copy, c](Tape& t, int self) {
                       if (!t.needs_grad(ti)) return;
                       const Tensor& g = t.node(self).grad;
                       Tensor& dt = t.grad_buf(ti);
                       for (size_t i = 0; i < rows_copy.size(); ++i)
                           for (int j = 0; j < c; ++j)
                               dt.at(rows_copy[i], j) += g.at(static_cast<int>(i), j);
                   });
}

Value mse(Value pred, Value target) {
    check_same_tape(pred, target, "mse");
    const Tensor& tp_ = pred.val();
    const Tensor& tt = target.val();
    if (!tp_.same_shape(tt)) throw ShapeError("mse shapes differ");
    const int64_t n = tp_.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = tp_[i] - tt[i];
        acc += d * d;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    out.ensure_finite("mse");

    Tape& tp = *pred.tape;
    const bool req = tp.needs_grad(pred.idx) || tp.needs_grad(target.idx);
    const int pi = pred.idx, ti = target.idx;
    return tp.push(std::move(out), req, nullptr, nullptr, [pi, ti, n](Tape& t, int self) {
        const double gl = t.node(self).grad[0];
        const double k = 2.0 / static_cast<double>(n) * gl;
        const double* vp = t.value_of(pi).data();
        const double* vt = t.value_of(ti).data();
        if (t.needs_grad(pi)) {
            double* dp = t.grad_buf(pi).data();
            for (int64_t i = 0; i < n; ++i) dp[i] += k * (vp[i] - vt[i]);
        }
        if (t.needs_grad(ti)) {
            double* dt = t.grad_buf(ti).data();
            for (int64_t i = 0; i < n; ++i) dt[i] -= k * (vp[i] - vt[i]);
        }
    });
}

Value sum_all(Value a) {
    const Tensor& ta = a.val();
    Tensor out = Tensor::scalar(ta.sum());
    out.ensure_finite("sum");

    Tape& tp = *a.tape;
    const int ai = a.idx;
    return tp.push(std::move(out), tp.needs_grad(ai), nullptr, nullptr, [ai](Tape& t, int self) {
        if (!t.needs_grad(ai)) return;
        const double gl = t.node(self).grad[0];
        double* da = t.grad_buf(ai).data();
        const int64_t cnt = t.value_of(ai).numel();
        for (int64_t i = 0; i < cnt; ++i) da[i] += gl;
    });
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax_rows: rank-2 input required");
    const int b = logits.rows(), c = logits.cols();
    Tensor out({b, c});
    for (int i = 0; i < b; ++i) {
        double mx = logits.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(logits.at(i, j) - mx);
        for (int j = 0; j < c; ++j) out.at(i, j) = std::exp(logits.at(i, j) - mx) / z;
    }
    return out;
}

Value softmax_xent(Value logits, const std::vector<int>& labels) {
    const Tensor& tl = logits.val();
    if (tl.rank() != 2) throw ShapeError("softmax_xent: logits must be rank 2");
    const int b = tl.rows(), c = tl.cols();
    if (static_cast<int>(labels.size()) != b) throw ShapeError("softmax_xent: label count must equal rows");
    for (int y : labels)
        if (y < 0 || y >= c) throw ContractError("softmax_xent: label out of range");

    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        double mx = tl.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, tl.at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(tl.at(i, j) - mx);
        loss += std::log(z) - (tl.at(i, labels[static_cast<size_t>(i)]) - mx);
    }
    Tensor out = Tensor::scalar(loss / b);
    out.ensure_finite("softmax_xent");

    Tape& tp = *logits.tape;
    const int li = logits.idx;
    std::vector<int> labels_copy = labels;
    return tp.push(std::move(out), tp.needs_grad(li), nullptr, nullptr,
                   [li, labels_copy, b, c](Tape& t, int self) {
                       if (!t.needs_grad(li)) return;
                       const double gl = t.node(self).grad[0];
                       const Tensor probs = softmax_rows(t.value_of(li));
                       Tensor& dl = t.grad_buf(li);
                       for (int i = 0; i < b; ++i)
                           for (int j = 0; j < c; ++j) {
                               const double onehot = (labels_copy[static_cast<size_t>(i)] == j) ? 1.0 : 0.0;
                               dl.at(i, j) += gl * (probs.at(i, j) - onehot) / b;
                           }
                   });
}

}  // namespace flowprobe::nd
