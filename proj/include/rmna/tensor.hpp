#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rmna/error.hpp"
#include "rmna/rng.hpp"

namespace rmna {

// Dense float32 vector.
struct Tensor1 {
    std::vector<float> v;

    Tensor1() = default;
    explicit Tensor1(size_t n, float fill = 0.0f) : v(n, fill) {}
    Tensor1(std::initializer_list<float> init) : v(init) {}

    size_t size() const { return v.size(); }
    float& operator[](size_t i) { return v[i]; }
    float operator[](size_t i) const { return v[i]; }
    std::span<float> span() { return {v.data(), v.size()}; }
    std::span<const float> span() const { return {v.data(), v.size()}; }
    void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

// Dense float32 matrix, row-major.
struct Tensor2 {
    size_t rows = 0, cols = 0;
    std::vector<float> v;

    Tensor2() = default;
    Tensor2(size_t r, size_t c, float fill = 0.0f) : rows(r), cols(c), v(r * c, fill) {}

    float& at(size_t r, size_t c) { return v[r * cols + c]; }
    float at(size_t r, size_t c) const { return v[r * cols + c]; }
    std::span<float> row(size_t r) { return {v.data() + r * cols, cols}; }
    std::span<const float> row(size_t r) const { return {v.data() + r * cols, cols}; }
    size_t size() const { return v.size(); }
    std::span<float> span() { return {v.data(), v.size()}; }
    std::span<const float> span() const { return {v.data(), v.size()}; }
    void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

inline float relu(float x) { return x > 0.0f ? x : 0.0f; }
inline float relu_grad(float x) { return x > 0.0f ? 1.0f : 0.0f; }

inline float leaky_relu(float x, float slope) { return x > 0.0f ? x : slope * x; }
inline float leaky_relu_grad(float x, float slope) { return x > 0.0f ? 1.0f : slope; }

inline float elu(float x) { return x > 0.0f ? x : std::expm1(x); }
// derivative expressed from the preactivation
inline float elu_grad(float x) { return x > 0.0f ? 1.0f : std::exp(x); }

// log(1 + exp(x)) without overflow
inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Reductions and linear algebra. Accumulation happens in double to keep
// float32 storage usable with 1e-4 finite-difference steps.

double dot(std::span<const float> a, std::span<const float> b);
double l1_norm(std::span<const float> a);
double l2_norm(std::span<const float> a);

void add_inplace(std::span<float> a, std::span<const float> b);
// a += s * b
void axpy(std::span<float> a, float s, std::span<const float> b);

// w (r x c) times x (c) -> out (r)
void matvec_into(const Tensor2& w, std::span<const float> x, std::span<float> out);
Tensor1 matvec(const Tensor2& w, std::span<const float> x);
// w^T (c) times g: out[j] = sum_i w[i][j] * g[i]
void matvec_transposed_into(const Tensor2& w, std::span<const float> g, std::span<float> out);
// rank-1 accumulate: w[i][j] += g[i] * x[j]
void outer_accum(Tensor2& w, std::span<const float> g, std::span<const float> x);

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 matmul_transposed(const Tensor2& a, const Tensor2& b); // a * b^T

Tensor1 concat(std::span<const std::span<const float>> parts);

// Overflow-safe softmax (max subtraction); output sums to 1.
void softmax_inplace(std::span<float> x);
std::vector<float> softmax(std::span<const float> x);

// Bernoulli keep-mask with survivor scaling 1/(1-p). In eval mode dropout is
// the identity; callers simply skip it. 0 <= p < 1.
std::vector<uint8_t> dropout_mask(size_t n, float p, Rng& rng);
void apply_dropout(std::span<float> x, const std::vector<uint8_t>& mask, float p);

void ensure_finite(std::span<const float> x, const char* context);

// ---------------------------------------------------------------------------
// Initialization

// Uniform on +-sqrt(6 / (fan_in + fan_out)) with fan_in = cols, fan_out = rows.
Tensor2 glorot_init(size_t rows, size_t cols, uint64_t seed);
Tensor2 uniform_init(size_t rows, size_t cols, float lo, float hi, uint64_t seed);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    float lr = 0.001f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

struct AdamState {
    std::vector<float> m, v;
    long step = 0;
};

// Standard bias-corrected update on a flat parameter span.
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state,
               const AdamConfig& cfg);

// Row-sparse variant for embedding tables: only the listed rows are updated,
// with the shared step counter for bias correction (lazy Adam).
void adam_step_rows(Tensor2& params, const Tensor2& grads, const std::vector<uint32_t>& rows,
                    AdamState& state, const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

// Central differences on the listed coordinates of `params`; returns the
// maximum relative error |a-n| / max(1e-8, |a|+|n|).
double grad_check_at(const std::function<double()>& loss, std::span<float> params,
                     std::span<const float> analytic, std::span<const size_t> indices,
                     double step = 1e-4);

// All coordinates.
double grad_check(const std::function<double()>& loss, std::span<float> params,
                  std::span<const float> analytic, double step = 1e-4);

} // namespace rmna
