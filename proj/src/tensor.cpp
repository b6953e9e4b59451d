#include "rmna/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rmna {

namespace {
void require(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}
} // namespace

double dot(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size(), "dot: size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

double l1_norm(std::span<const float> a) {
    double acc = 0.0;
    for (float x : a) acc += std::fabs(static_cast<double>(x));
    return acc;
}

double l2_norm(std::span<const float> a) {
    double acc = 0.0;
    for (float x : a) acc += static_cast<double>(x) * x;
    return std::sqrt(acc);
}

void add_inplace(std::span<float> a, std::span<const float> b) {
    require(a.size() == b.size(), "add: size mismatch");
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void axpy(std::span<float> a, float s, std::span<const float> b) {
    require(a.size() == b.size(), "axpy: size mismatch");
    for (size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

void matvec_into(const Tensor2& w, std::span<const float> x, std::span<float> out) {
    require(w.cols == x.size(), "matvec: input size mismatch");
    require(w.rows == out.size(), "matvec: output size mismatch");
    for (size_t r = 0; r < w.rows; ++r) {
        const float* wr = w.v.data() + r * w.cols;
        double acc = 0.0;
        for (size_t c = 0; c < w.cols; ++c) acc += static_cast<double>(wr[c]) * x[c];
        out[r] = static_cast<float>(acc);
    }
}

Tensor1 matvec(const Tensor2& w, std::span<const float> x) {
    Tensor1 out(w.rows);
    matvec_into(w, x, out.span());
    return out;
}

void matvec_transposed_into(const Tensor2& w, std::span<const float> g, std::span<float> out) {
    require(w.rows == g.size(), "matvec_t: input size mismatch");
    require(w.cols == out.size(), "matvec_t: output size mismatch");
    std::vector<double> acc(w.cols, 0.0);
    for (size_t r = 0; r < w.rows; ++r) {
        const float* wr = w.v.data() + r * w.cols;
        const double gr = g[r];
        for (size_t c = 0; c < w.cols; ++c) acc[c] += gr * wr[c];
    }
    for (size_t c = 0; c < w.cols; ++c) out[c] = static_cast<float>(acc[c]);
}

void outer_accum(Tensor2& w, std::span<const float> g, std::span<const float> x) {
    require(w.rows == g.size() && w.cols == x.size(), "outer: shape mismatch");
    for (size_t r = 0; r < w.rows; ++r) {
        float* wr = w.v.data() + r * w.cols;
        const float gr = g[r];
        for (size_t c = 0; c < w.cols; ++c) wr[c] += gr * x[c];
    }
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    require(a.cols == b.rows, "matmul: inner dimension mismatch");
    Tensor2 out(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < a.cols; ++k)
                acc += static_cast<double>(a.at(i, k)) * b.at(k, j);
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

Tensor2 matmul_transposed(const Tensor2& a, const Tensor2& b) {
    require(a.cols == b.cols, "matmul_t: inner dimension mismatch");
    Tensor2 out(a.rows, b.rows);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t j = 0; j < b.rows; ++j) {
            out.at(i, j) = static_cast<float>(dot(a.row(i), b.row(j)));
        }
    }
    return out;
}

Tensor1 concat(std::span<const std::span<const float>> parts) {
    size_t total = 0;
    for (const auto& p : parts) total += p.size();
    Tensor1 out(total);
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.begin(), p.end(), out.v.begin() + off);
        off += p.size();
    }
    return out;
}

void softmax_inplace(std::span<float> x) {
    if (x.empty()) return;
    float mx = x[0];
    for (float v : x) mx = std::max(mx, v);
    double sum = 0.0;
    for (float& v : x) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (float& v : x) v = static_cast<float>(v / sum);
    ensure_finite(x, "softmax");
}

std::vector<float> softmax(std::span<const float> x) {
    std::vector<float> out(x.begin(), x.end());
    softmax_inplace(out);
    return out;
}

std::vector<uint8_t> dropout_mask(size_t n, float p, Rng& rng) {
    if (p < 0.0f || p >= 1.0f) throw ShapeError("dropout: p must be in [0,1)");
    std::vector<uint8_t> mask(n);
    for (size_t i = 0; i < n; ++i) mask[i] = rng.uniform_float() >= p ? 1 : 0;
    return mask;
}

void apply_dropout(std::span<float> x, const std::vector<uint8_t>& mask, float p) {
    require(x.size() == mask.size(), "dropout: mask size mismatch");
    const float scale = 1.0f / (1.0f - p);
    for (size_t i = 0; i < x.size(); ++i) x[i] = mask[i] ? x[i] * scale : 0.0f;
}

void ensure_finite(std::span<const float> x, const char* context) {
    for (float v : x) {
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in ") + context);
    }
}

Tensor2 glorot_init(size_t rows, size_t cols, uint64_t seed) {
    const float bound = std::sqrt(6.0f / static_cast<float>(rows + cols));
    return uniform_init(rows, cols, -bound, bound, seed);
}

Tensor2 uniform_init(size_t rows, size_t cols, float lo, float hi, uint64_t seed) {
    if (rows == 0 || cols == 0) throw ShapeError("init: empty shape");
    Tensor2 out(rows, cols);
    Rng rng(seed);
    for (float& v : out.v) v = rng.uniform_range(lo, hi);
    return out;
}

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state,
               const AdamConfig& cfg) {
    require(params.size() == grads.size(), "adam: grad size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0f);
        state.v.assign(params.size(), 0.0f);
    }
    require(state.m.size() == params.size(), "adam: state size mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), state.step);
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), state.step);
    for (size_t i = 0; i < params.size(); ++i) {
        const float g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0f - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0f - cfg.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
}

void adam_step_rows(Tensor2& params, const Tensor2& grads, const std::vector<uint32_t>& rows,
                    AdamState& state, const AdamConfig& cfg) {
    require(params.rows == grads.rows && params.cols == grads.cols, "adam rows: shape mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0f);
        state.v.assign(params.size(), 0.0f);
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), state.step);
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), state.step);
    for (uint32_t r : rows) {
        const size_t off = static_cast<size_t>(r) * params.cols;
        for (size_t c = 0; c < params.cols; ++c) {
            const size_t i = off + c;
            const float g = grads.v[i];
            state.m[i] = cfg.beta1 * state.m[i] + (1.0f - cfg.beta1) * g;
            state.v[i] = cfg.beta2 * state.v[i] + (1.0f - cfg.beta2) * g * g;
            const double mhat = state.m[i] / bc1;
            const double vhat = state.v[i] / bc2;
            params.v[i] -= static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

double grad_check_at(const std::function<double()>& loss, std::span<float> params,
                     std::span<const float> analytic, std::span<const size_t> indices,
                     double step) {
    require(params.size() == analytic.size(), "grad_check: size mismatch");
    double max_err = 0.0;
    for (size_t idx : indices) {
        const float saved = params[idx];
        params[idx] = static_cast<float>(saved + step);
        const double fp = loss();
        params[idx] = static_cast<float>(saved - step);
        const double fm = loss();
        params[idx] = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic[idx];
        const double err = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

double grad_check(const std::function<double()>& loss, std::span<float> params,
                  std::span<const float> analytic, double step) {
    std::vector<size_t> idx(params.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return grad_check_at(loss, params, analytic, idx, step);
}

} // namespace rmna
