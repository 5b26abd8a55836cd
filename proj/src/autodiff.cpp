#include "shellac/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "shellac/error.hpp"

namespace shellac::ad {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw UsageError("autodiff", what);
}

// Shift in [0, n) equivalent to `shift` modulo n.
int wrap(long shift, int n) {
    long r = shift % n;
    return static_cast<int>(r < 0 ? r + n : r);
}

// rows x (len + 2 halo) copy with circular halos on both sides.
std::vector<double> pad_circular(std::span<const double> x, int rows, int len, int halo) {
    const int pl = len + 2 * halo;
    std::vector<double> out(static_cast<std::size_t>(rows) * pl);
    for (int r = 0; r < rows; ++r) {
        const double* src = x.data() + static_cast<std::size_t>(r) * len;
        double* dst = out.data() + static_cast<std::size_t>(r) * pl;
        for (int n = 0; n < pl; ++n) dst[n] = src[wrap(static_cast<long>(n) - halo, len)];
    }
    return out;
}

const std::vector<double>& ones_like(int len) {
    thread_local std::vector<double> ones;
    if (static_cast<int>(ones.size()) < len) ones.assign(len, 1.0);
    return ones;
}

// Dot product with eight interleaved partial sums so the loop vectorizes.
double dot(const double* a, const double* b, int n) {
    double part[8] = {};
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int j = 0; j < 8; ++j) part[j] += a[i + j] * b[i + j];
    }
    double acc = ((part[0] + part[1]) + (part[2] + part[3])) + ((part[4] + part[5]) + (part[6] + part[7]));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// out[o][n] += sum_i sum_k weight(o, i, k) * src[i][n + shift[k]], where src is
// circularly padded by `halo`. Each output element accumulates in the same
// (i, k) order regardless of n.
template <class Weight>
void correlate(const double* src, int rows_in, int len, int halo, const int* shift, int kernel,
               int rows_out, Weight weight, double* out) {
    constexpr int kBlock = 16;
    const int pl = len + 2 * halo;
    std::vector<double> wrow(static_cast<std::size_t>(rows_in) * kernel);
    for (int o = 0; o < rows_out; ++o) {
        for (int i = 0; i < rows_in; ++i) {
            for (int k = 0; k < kernel; ++k) wrow[static_cast<std::size_t>(i) * kernel + k] = weight(o, i, k);
        }
        double* y = out + static_cast<std::size_t>(o) * len;
        int n0 = 0;
        for (; n0 + kBlock <= len; n0 += kBlock) {
            double acc[kBlock];
            for (int j = 0; j < kBlock; ++j) acc[j] = y[n0 + j];
            for (int i = 0; i < rows_in; ++i) {
                const double* xr = src + static_cast<std::size_t>(i) * pl + halo + n0;
                for (int k = 0; k < kernel; ++k) {
                    const double wv = wrow[static_cast<std::size_t>(i) * kernel + k];
                    const double* xs = xr + shift[k];
                    for (int j = 0; j < kBlock; ++j) acc[j] += wv * xs[j];
                }
            }
            for (int j = 0; j < kBlock; ++j) y[n0 + j] = acc[j];
        }
        for (int n = n0; n < len; ++n) {
            double acc = y[n];
            for (int i = 0; i < rows_in; ++i) {
                const double* xr = src + static_cast<std::size_t>(i) * pl + halo + n;
                for (int k = 0; k < kernel; ++k) acc += wrow[static_cast<std::size_t>(i) * kernel + k] * xr[shift[k]];
            }
            y[n] = acc;
        }
    }
}

// Attention probabilities of query i against all keys for the head whose
// channels start at row0.
void softmax_row(const double* Q, const double* K, int row0, int dh, int len, int i, double scale,
                 double* row) {
    std::fill(row, row + len, 0.0);
    for (int d = 0; d < dh; ++d) {
        const std::size_t r = static_cast<std::size_t>(row0 + d) * len;
        const double qi = Q[r + i] * scale;
        for (int j = 0; j < len; ++j) row[j] += qi * K[r + j];
    }
    const double mx = *std::max_element(row, row + len);
    for (int j = 0; j < len; ++j) row[j] = std::exp(row[j] - mx);
    double z = 0.0;
    for (int j = i; j < len; ++j) z += row[j];
    for (int j = 0; j < i; ++j) z += row[j];
    for (int j = 0; j < len; ++j) row[j] /= z;
}

}  // namespace

Var Tape::constant(int rows, int cols, std::vector<double> value) {
    require(value.size() == static_cast<std::size_t>(rows) * cols, "constant shape mismatch");
    nodes_.push_back(Node{rows, cols, std::move(value), {}, {}, false});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(int rows, int cols, std::span<const double> value) {
    return constant(rows, cols, std::vector<double>(value.begin(), value.end()));
}

Var Tape::parameter(int rows, int cols, std::span<const double> value) {
    Var v = constant(rows, cols, value);
    nodes_.back().needs_grad = record_;
    return v;
}

Var Tape::push(int rows, int cols, std::vector<double> value, std::initializer_list<Var> inputs,
               Backward bw) {
    bool needs = false;
    if (record_) {
        for (Var in : inputs) needs = needs || nodes_[in.id].needs_grad;
    }
    nodes_.push_back(Node{rows, cols, std::move(value), {}, needs ? std::move(bw) : Backward{}, needs});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

std::vector<double>& Tape::grad_mut(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var target) {
    require(record_, "backward on a non-recording tape");
    require(nodes_[target.id].value.size() == 1, "backward target must be scalar");
    for (auto& n : nodes_) n.grad.clear();
    grad_mut(target)[0] = 1.0;
    for (int id = target.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.backward && !n.grad.empty()) n.backward(*this, Var{id});
    }
}

// ---------------------------------------------------------------------------

Var conv1d(Tape& t, Var x, Var w, Var b, int kernel, int dilation) {
    const int cin = t.rows(x);
    const int len = t.cols(x);
    const int cout = t.rows(w);
    require(kernel % 2 == 1, "conv1d kernel must be odd");
    require(t.cols(w) == cin * kernel, "conv1d weight shape");
    require(t.rows(b) == cout && t.cols(b) == 1, "conv1d bias shape");

    const int halo = (kernel / 2) * dilation;
    std::vector<int> fwd(kernel), rev(kernel);
    for (int k = 0; k < kernel; ++k) {
        fwd[k] = (k - kernel / 2) * dilation;
        rev[k] = -fwd[k];
    }

    auto W = t.value(w);
    auto B = t.value(b);
    std::vector<double> out(static_cast<std::size_t>(cout) * len);
    for (int o = 0; o < cout; ++o) {
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(o) * len, len, B[o]);
    }
    {
        const auto xp = pad_circular(t.value(x), cin, len, halo);
        correlate(xp.data(), cin, len, halo, fwd.data(), kernel, cout,
                  [&](int o, int i, int k) { return W[(static_cast<std::size_t>(o) * cin + i) * kernel + k]; },
                  out.data());
    }

    return t.push(cout, len, std::move(out), {x, w, b},
                  [=, fwd = std::move(fwd), rev = std::move(rev)](Tape& tp, Var self) {
        auto G = tp.grad(self);
        auto Wv = tp.value(w);
        const auto gp = pad_circular(G, cout, len, halo);
        if (tp.needs_grad(b)) {
            double* dB = tp.grad_mut(b).data();
            for (int o = 0; o < cout; ++o) dB[o] += dot(G.data() + static_cast<std::size_t>(o) * len,
                                                        ones_like(len).data(), len);
        }
        if (tp.needs_grad(w)) {
            const auto xp = pad_circular(tp.value(x), cin, len, halo);
            const int pl = len + 2 * halo;
            double* dW = tp.grad_mut(w).data();
            for (int o = 0; o < cout; ++o) {
                const double* g = G.data() + static_cast<std::size_t>(o) * len;
                for (int i = 0; i < cin; ++i) {
                    const double* xr = xp.data() + static_cast<std::size_t>(i) * pl + halo;
                    for (int k = 0; k < kernel; ++k) {
                        dW[(static_cast<std::size_t>(o) * cin + i) * kernel + k] += dot(g, xr + fwd[k], len);
                    }
                }
            }
        }
        if (tp.needs_grad(x)) {
            // dx[i][n] = sum_o sum_k w[o,i,k] g[o][n - shift_k]
            correlate(gp.data(), cout, len, halo, rev.data(), kernel, cin,
                      [&](int i, int o, int k) {
                          return Wv[(static_cast<std::size_t>(o) * cin + i) * kernel + k];
                      },
                      tp.grad_mut(x).data());
        }
    });
}

Var conv_down(Tape& t, Var x, Var w, Var b, int factor) {
    const int cin = t.rows(x);
    const int len = t.cols(x);
    const int cout = t.rows(w);
    require(factor >= 1 && len % factor == 0, "conv_down length not divisible by factor");
    require(t.cols(w) == cin * factor, "conv_down weight shape");
    require(t.rows(b) == cout, "conv_down bias shape");
    const int olen = len / factor;

    auto X = t.value(x);
    auto W = t.value(w);
    auto B = t.value(b);
    std::vector<double> out(static_cast<std::size_t>(cout) * olen);
    for (int o = 0; o < cout; ++o) {
        double* y = out.data() + static_cast<std::size_t>(o) * olen;
        std::fill(y, y + olen, B[o]);
        for (int i = 0; i < cin; ++i) {
            const double* xi = X.data() + static_cast<std::size_t>(i) * len;
            for (int k = 0; k < factor; ++k) {
                const double wv = W[(static_cast<std::size_t>(o) * cin + i) * factor + k];
                for (int n = 0; n < olen; ++n) y[n] += wv * xi[n * factor + k];
            }
        }
    }

    return t.push(cout, olen, std::move(out), {x, w, b}, [=](Tape& tp, Var self) {
        auto G = tp.grad(self);
        auto Xv = tp.value(x);
        auto Wv = tp.value(w);
        double* dX = tp.needs_grad(x) ? tp.grad_mut(x).data() : nullptr;
        double* dW = tp.needs_grad(w) ? tp.grad_mut(w).data() : nullptr;
        double* dB = tp.needs_grad(b) ? tp.grad_mut(b).data() : nullptr;
        for (int o = 0; o < cout; ++o) {
            const double* g = G.data() + static_cast<std::size_t>(o) * olen;
            if (dB) {
                double acc = 0.0;
                for (int n = 0; n < olen; ++n) acc += g[n];
                dB[o] += acc;
            }
            for (int i = 0; i < cin; ++i) {
                const double* xi = Xv.data() + static_cast<std::size_t>(i) * len;
                double* dxi = dX ? dX + static_cast<std::size_t>(i) * len : nullptr;
                for (int k = 0; k < factor; ++k) {
                    const std::size_t widx = (static_cast<std::size_t>(o) * cin + i) * factor + k;
                    if (dW) {
                        double acc = 0.0;
                        for (int n = 0; n < olen; ++n) acc += g[n] * xi[n * factor + k];
                        dW[widx] += acc;
                    }
                    if (dxi) {
                        const double wv = Wv[widx];
                        for (int n = 0; n < olen; ++n) dxi[n * factor + k] += wv * g[n];
                    }
                }
            }
        }
    });
}

Var conv_up(Tape& t, Var x, Var w, Var b, int factor) {
    const int cin = t.rows(x);
    const int len = t.cols(x);
    const int cout = t.rows(b);
    require(factor >= 1, "conv_up factor");
    require(t.rows(w) == cin && t.cols(w) == cout * factor, "conv_up weight shape");
    const int olen = len * factor;

    auto X = t.value(x);
    auto W = t.value(w);
    auto B = t.value(b);
    std::vector<double> out(static_cast<std::size_t>(cout) * olen);
    for (int o = 0; o < cout; ++o) {
        double* y = out.data() + static_cast<std::size_t>(o) * olen;
        std::fill(y, y + olen, B[o]);
        for (int i = 0; i < cin; ++i) {
            const double* xi = X.data() + static_cast<std::size_t>(i) * len;
            for (int k = 0; k < factor; ++k) {
                const double wv = W[(static_cast<std::size_t>(i) * cout + o) * factor + k];
                for (int n = 0; n < len; ++n) y[n * factor + k] += wv * xi[n];
            }
        }
    }

    return t.push(cout, olen, std::move(out), {x, w, b}, [=](Tape& tp, Var self) {
        auto G = tp.grad(self);
        auto Xv = tp.value(x);
        auto Wv = tp.value(w);
        double* dX = tp.needs_grad(x) ? tp.grad_mut(x).data() : nullptr;
        double* dW = tp.needs_grad(w) ? tp.grad_mut(w).data() : nullptr;
        double* dB = tp.needs_grad(b) ? tp.grad_mut(b).data() : nullptr;
        for (int o = 0; o < cout; ++o) {
            const double* g = G.data() + static_cast<std::size_t>(o) * olen;
            if (dB) {
                double acc = 0.0;
                for (int n = 0; n < olen; ++n) acc += g[n];
                dB[o] += acc;
            }
            for (int i = 0; i < cin; ++i) {
                const double* xi = Xv.data() + static_cast<std::size_t>(i) * len;
                double* dxi = dX ? dX + static_cast<std::size_t>(i) * len : nullptr;
                for (int k = 0; k < factor; ++k) {
                    const std::size_t widx = (static_cast<std::size_t>(i) * cout + o) * factor + k;
                    if (dW) {
                        double acc = 0.0;
                        for (int n = 0; n < len; ++n) acc += g[n * factor + k] * xi[n];
                        dW[widx] += acc;
                    }
                    if (dxi) {
                        const double wv = Wv[widx];
                        for (int n = 0; n < len; ++n) dxi[n] += wv * g[n * factor + k];
                    }
                }
            }
        }
    });
}

Var linear(Tape& t, Var x, Var w, Var b) {
    const int n = t.rows(x);
    const int m = t.rows(w);
    require(t.cols(x) == 1, "linear expects a column vector");
    require(t.cols(w) == n && t.rows(b) == m, "linear weight shape");
    auto X = t.value(x);
    auto W = t.value(w);
    auto B = t.value(b);
    std::vector<double> out(m);
    for (int r = 0; r < m; ++r) {
        double acc = B[r];
        for (int c = 0; c < n; ++c) acc += W[static_cast<std::size_t>(r) * n + c] * X[c];
        out[r] = acc;
    }
    return t.push(m, 1, std::move(out), {x, w, b}, [=](Tape& tp, Var self) {
        auto G = tp.grad(self);
        auto Xv = tp.value(x);
        auto Wv = tp.value(w);
        double* dX = tp.needs_grad(x) ? tp.grad_mut(x).data() : nullptr;
        double* dW = tp.needs_grad(w) ? tp.grad_mut(w).data() : nullptr;
        double* dB = tp.needs_grad(b) ? tp.grad_mut(b).data() : nullptr;
        for (int r = 0; r < m; ++r) {
            if (dB) dB[r] += G[r];
            for (int c = 0; c < n; ++c) {
                if (dW) dW[static_cast<std::size_t>(r) * n + c] += G[r] * Xv[c];
                if (dX) dX[c] += G[r] * Wv[static_cast<std::size_t>(r) * n + c];
            }
        }
    });
}

Var silu(Tape& t, Var x) {
    auto X = t.value(x);
    std::vector<double> out(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] / (1.0 + std::exp(-X[i]));
    return t.push(t.rows(x), t.cols(x), std::move(out), {x}, [=](Tape& tp, Var self) {
        auto G = tp.grad(self);
        auto Xv = tp.value(x);
        auto& dX = tp.grad_mut(x);
        for (std::size_t i = 0; i < Xv.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-Xv[i]));
            dX[i] += G[i] * s * (1.0 + Xv[i] * (1.0 - s));
        }
    });
}

Var add(Tape& t, Var a, Var b) {
    require(t.rows(a) == t.rows(b) && t.cols(a) == t.cols(b), "add shape mismatch");
    auto A = t.value(a);
    auto B = t.value(b);
    std::vector<double> out(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
    return t.push(t.rows(a), t.cols(a), std::move(out), {a, b}, [=](Tape& tp, Var self) {
        auto G = tp.grad(self);
        for (Var in : {a, b}) {
            if (!tp.needs_grad(in)) continue;
            auto& d = tp.grad_mut(in);
            for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i];
        }
    });
}

Var concat_rows(Tape& t, Var a, Var b) {
    require(t.cols(a) == t.cols(b), "concat length mismatch");
    auto A = t.value(a);
    auto B = t.value(b);
    std::vector<double> out;
    out.reserve(A.size() + B.size());
    out.insert(out.end(), A.begin(), A.end());
    out.insert(out.end(), B.begin(), B.end());
    const std::size_t na = A.size();
    return t.push(t.rows(a) + t.rows(b), t.cols(a), std::move(out), {a, b},
                  [=](Tape& tp, Var self) {
                      auto G = tp.grad(self);
                      if (tp.needs_grad(a)) {
                          auto& d = tp.grad_mut(a);
                          for (std::size_t i = 0; i < na; ++i) d[i] += G[i];
                      }
                      if (tp.needs_grad(b)) {
                          auto& d = tp.grad_mut(b);
                          for (std::size_t i = 0; i < d.size(); ++i) d[i] += G[na + i];
                      }
                  });
}

Var film(Tape& t, Var x, Var film_params) {
    const int ch = t.rows(x);
    const int len = t.cols(x);
    require(t.rows(film_params) == 2 * ch && t.cols(film_params) == 1, "film parameter shape");
    auto X = t.value(x);
    auto P = t.value(film_params);
    std::vector<double> out(X.size());
    for (int c = 0; c < ch; ++c) {
        const double scale = 1.0 + P[c];
        const double shift = P[ch + c];
        const std::size_t off = static_cast<std::size_t>(c) * len;
        for (int n = 0; n < len; ++n) out[off + n] = scale * X[off + n] + shift;
    }
    return t.push(ch, len, std::move(out), {x, film_params}, [=](Tape& tp, Var self) {
        auto G = tp.grad(self);
        auto Xv = tp.value(x);
        auto Pv = tp.value(film_params);
        double* dX = tp.needs_grad(x) ? tp.grad_mut(x).data() : nullptr;
        double* dP = tp.needs_grad(film_params) ? tp.grad_mut(film_params).data() : nullptr;
        for (int c = 0; c < ch; ++c) {
            const std::size_t off = static_cast<std::size_t>(c) * len;
            const double scale = 1.0 + Pv[c];
            double dscale = 0.0, dshift = 0.0;
            for (int n = 0; n < len; ++n) {
                dscale += G[off + n] * Xv[off + n];
                dshift += G[off + n];
                if (dX) dX[off + n] += scale * G[off + n];
            }
            if (dP) {
                dP[c] += dscale;
                dP[ch + c] += dshift;
            }
        }
    });
}

Var attention(Tape& t, Var q, Var k, Var v, int heads) {
    const int ch = t.rows(q);
    const int len = t.cols(q);
    require(heads >= 1 && ch % heads == 0, "attention channels not divisible by heads");
    require(t.rows(k) == ch && t.rows(v) == ch && t.cols(k) == len && t.cols(v) == len,
            "attention q/k/v shape mismatch");
    const int dh = ch / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool keep = t.recording();

    auto Q = t.value(q);
    auto K = t.value(k);
    auto V = t.value(v);
    std::vector<double> out(static_cast<std::size_t>(ch) * len, 0.0);
    std::vector<double> probs;
    if (keep) probs.resize(static_cast<std::size_t>(heads) * len * len);
    std::vector<double> row(len);

    // Reductions over keys run in the order i, i+1, ..., i-1 (mod len), so a
    // circular shift of the input permutes the output bit-exactly.
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < len; ++i) {
            softmax_row(Q.data(), K.data(), h * dh, dh, len, i, scale, row.data());
            for (int d = 0; d < dh; ++d) {
                const std::size_t r = static_cast<std::size_t>(h * dh + d) * len;
                double acc = 0.0;
                for (int j = i; j < len; ++j) acc += row[j] * V[r + j];
                for (int j = 0; j < i; ++j) acc += row[j] * V[r + j];
                out[r + i] = acc;
            }
            if (keep) {
                std::copy(row.begin(), row.end(),
                          probs.begin() + (static_cast<std::size_t>(h) * len + i) * len);
            }
        }
    }

    return t.push(ch, len, std::move(out), {q, k, v},
                  [=, probs = std::move(probs)](Tape& tp, Var self) {
                      auto G = tp.grad(self);
                      auto Qv = tp.value(q);
                      auto Kv = tp.value(k);
                      auto Vv = tp.value(v);
                      double* dQ = tp.needs_grad(q) ? tp.grad_mut(q).data() : nullptr;
                      double* dK = tp.needs_grad(k) ? tp.grad_mut(k).data() : nullptr;
                      double* dV = tp.needs_grad(v) ? tp.grad_mut(v).data() : nullptr;
                      std::vector<double> dp(len);
                      for (int h = 0; h < heads; ++h) {
                          for (int i = 0; i < len; ++i) {
                              const double* p =
                                  probs.data() + (static_cast<std::size_t>(h) * len + i) * len;
                              std::fill(dp.begin(), dp.end(), 0.0);
                              for (int d = 0; d < dh; ++d) {
                                  const std::size_t r = static_cast<std::size_t>(h * dh + d) * len;
                                  const double g = G[r + i];
                                  for (int j = 0; j < len; ++j) dp[j] += g * Vv[r + j];
                                  if (dV) {
                                      for (int j = 0; j < len; ++j) dV[r + j] += p[j] * g;
                                  }
                              }
                              double dot = 0.0;
                              for (int j = 0; j < len; ++j) dot += p[j] * dp[j];
                              for (int j = 0; j < len; ++j) dp[j] = p[j] * (dp[j] - dot) * scale;
                              for (int d = 0; d < dh; ++d) {
                                  const std::size_t r = static_cast<std::size_t>(h * dh + d) * len;
                                  if (dQ) {
                                      double acc = 0.0;
                                      for (int j = 0; j < len; ++j) acc += dp[j] * Kv[r + j];
                                      dQ[r + i] += acc;
                                  }
                                  if (dK) {
                                      const double qi = Qv[r + i];
                                      for (int j = 0; j < len; ++j) dK[r + j] += dp[j] * qi;
                                  }
                              }
                          }
                      }
                  });
}

std::vector<double> attention_probabilities(std::span<const double> q, std::span<const double> k,
                                            int channels, int len, int heads) {
    require(heads >= 1 && channels % heads == 0, "attention channels not divisible by heads");
    require(q.size() == static_cast<std::size_t>(channels) * len && k.size() == q.size(),
            "attention q/k shape mismatch");
    const int dh = channels / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> probs(static_cast<std::size_t>(heads) * len * len);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < len; ++i) {
            softmax_row(q.data(), k.data(), h * dh, dh, len, i, scale,
                        probs.data() + (static_cast<std::size_t>(h) * len + i) * len);
        }
    }
    return probs;
}

Var mse(Tape& t, Var pred, std::span<const double> target) {
    auto P = t.value(pred);
    require(P.size() == target.size(), "mse length mismatch");
    const double n = static_cast<double>(P.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        const double d = P[i] - target[i];
        acc += d * d;
    }
    std::vector<double> tgt(target.begin(), target.end());
    return t.push(1, 1, {acc / n}, {pred}, [=, tgt = std::move(tgt)](Tape& tp, Var self) {
        const double g = tp.grad(self)[0];
        auto Pv = tp.value(pred);
        auto& dP = tp.grad_mut(pred);
        for (std::size_t i = 0; i < Pv.size(); ++i) dP[i] += g * 2.0 * (Pv[i] - tgt[i]) / n;
    });
}

}  // namespace shellac::ad
