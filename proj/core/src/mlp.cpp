#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#if defined(__SSE2__)
#include <immintrin.h>
#endif

#include "refaudit/classifiers.hpp"
#include "refaudit/rng.hpp"

namespace refaudit {

namespace {

// A well-fitting model drives the losing class's probability into float
// subnormal range, and from there subnormals spread through the gradients
// and Adam moments, costing a microcode assist on every multiply (~3x wall
// clock on separable data). Flushing subnormals to zero inside the training
// scope keeps arithmetic at full speed; nothing downstream distinguishes
// 1e-39 from 0. MXCSR is restored on scope exit.
class DenormalFlushGuard {
 public:
#if defined(__SSE2__)
  DenormalFlushGuard() : saved_(_mm_getcsr()) {
    _mm_setcsr(saved_ | 0x8040);  // FTZ | DAZ
  }
  ~DenormalFlushGuard() { _mm_setcsr(saved_); }
#else
  DenormalFlushGuard() = default;
#endif
  DenormalFlushGuard(const DenormalFlushGuard&) = delete;
  DenormalFlushGuard& operator=(const DenormalFlushGuard&) = delete;

 private:
#if defined(__SSE2__)
  unsigned int saved_;
#endif
};

// Adam state per parameter block. Hot path: everything float, flat loops.
struct AdamBlock {
  std::vector<float> m, v;
  explicit AdamBlock(std::size_t n) : m(n, 0.0f), v(n, 0.0f) {}

  void step(std::vector<float>& w, const std::vector<float>& g, float scale,
            float lr, float bc1, float bc2) {
    constexpr float kBeta1 = 0.9f, kBeta2 = 0.999f, kEps = 1e-8f;
    const std::size_t n = w.size();
    for (std::size_t i = 0; i < n; ++i) {
      const float gi = g[i] * scale;
      m[i] = kBeta1 * m[i] + (1.0f - kBeta1) * gi;
      v[i] = kBeta2 * v[i] + (1.0f - kBeta2) * gi * gi;
      const float mh = m[i] / bc1;
      const float vh = v[i] / bc2;
      w[i] -= lr * mh / (std::sqrt(vh) + kEps);
    }
  }
};

// Compressed sparse rows of the training slice (tf-idf rows are ~70% zeros,
// and the input-layer passes dominate the cost).
struct SparseRows {
  std::vector<std::uint32_t> offsets;  // size n+1
  std::vector<std::uint32_t> cols;
  std::vector<float> vals;
};

SparseRows sparsify(const TfIdfMatrix& matrix, std::span<const std::size_t> rows) {
  SparseRows s;
  s.offsets.reserve(rows.size() + 1);
  s.offsets.push_back(0);
  for (std::size_t r : rows) {
    const double* x = matrix.values.data() + r * matrix.cols;
    for (std::size_t j = 0; j < matrix.cols; ++j) {
      if (x[j] != 0.0) {
        s.cols.push_back(static_cast<std::uint32_t>(j));
        s.vals.push_back(static_cast<float>(x[j]));
      }
    }
    s.offsets.push_back(static_cast<std::uint32_t>(s.cols.size()));
  }
  return s;
}

}  // namespace

std::vector<int> MlpModel::predict(const TfIdfMatrix& matrix,
                                   std::span<const std::size_t> rows) const {
  if (matrix.cols != n_features)
    throw std::invalid_argument("MlpModel: feature count mismatch");
  const int h = hidden_width, c = num_classes;
  std::vector<float> hidden(h), logits(c);
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    const double* x = matrix.values.data() + r * n_features;
    std::copy(b1.begin(), b1.end(), hidden.begin());
    for (std::size_t j = 0; j < n_features; ++j) {
      const float v = static_cast<float>(x[j]);
      if (v == 0.0f) continue;
      const float* w1j = w1.data() + j * h;
      for (int u = 0; u < h; ++u) hidden[u] += v * w1j[u];
    }
    std::copy(b2.begin(), b2.end(), logits.begin());
    for (int u = 0; u < h; ++u) {
      const float a = hidden[u];
      if (a <= 0.0f) continue;  // ReLU
      const float* w2u = w2.data() + u * c;
      for (int k = 0; k < c; ++k) logits[k] += a * w2u[k];
    }
    int best = 0;
    for (int k = 1; k < c; ++k)
      if (logits[k] > logits[best]) best = k;
    out.push_back(best);
  }
  return out;
}

MlpModel train_mlp(const TfIdfMatrix& matrix, std::span<const int> labels,
                   std::span<const std::size_t> train_rows, int num_classes,
                   const ClassifierSpec& spec) {
  if (spec.hidden_width < 1 || spec.epochs < 1 || spec.batch_size < 1)
    throw std::invalid_argument("train_mlp: bad hyperparameters");

  const std::size_t d = matrix.cols;
  const int h = spec.hidden_width;
  const int c = num_classes;
  const std::size_t n = train_rows.size();

  MlpModel model;
  model.n_features = d;
  model.hidden_width = h;
  model.num_classes = c;
  model.w1.resize(d * h);
  model.b1.assign(h, 0.0f);
  model.w2.resize(static_cast<std::size_t>(h) * c);
  model.b2.assign(c, 0.0f);

  // He-normal init, fixed draw order so training is seed-deterministic.
  RngEngine rng = make_rng(spec.train_seed);
  const float sd1 = std::sqrt(2.0f / static_cast<float>(d));
  for (float& w : model.w1) w = static_cast<float>(standard_normal(rng)) * sd1;
  const float sd2 = std::sqrt(2.0f / static_cast<float>(h));
  for (float& w : model.w2) w = static_cast<float>(standard_normal(rng)) * sd2;

  const DenormalFlushGuard flush_subnormals;
  const SparseRows xs = sparsify(matrix, train_rows);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = labels[train_rows[i]];

  AdamBlock a_w1(model.w1.size()), a_b1(model.b1.size());
  AdamBlock a_w2(model.w2.size()), a_b2(model.b2.size());
  std::vector<float> g_w1(model.w1.size()), g_b1(model.b1.size());
  std::vector<float> g_w2(model.w2.size()), g_b2(model.b2.size());

  std::vector<float> hidden_pre(h), hidden_act(h), logits(c), dh(h);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const float lr = static_cast<float>(spec.learning_rate);
  long adam_t = 0;

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    shuffle(rng, order);
    for (std::size_t start = 0; start < n; start += spec.batch_size) {
      const std::size_t batch_end = std::min(n, start + spec.batch_size);
      const float inv_b = 1.0f / static_cast<float>(batch_end - start);
      std::fill(g_w1.begin(), g_w1.end(), 0.0f);
      std::fill(g_b1.begin(), g_b1.end(), 0.0f);
      std::fill(g_w2.begin(), g_w2.end(), 0.0f);
      std::fill(g_b2.begin(), g_b2.end(), 0.0f);

      for (std::size_t bi = start; bi < batch_end; ++bi) {
        const std::size_t i = order[bi];
        const std::uint32_t nz_begin = xs.offsets[i], nz_end = xs.offsets[i + 1];

        // Forward.
        std::copy(model.b1.begin(), model.b1.end(), hidden_pre.begin());
        for (std::uint32_t t = nz_begin; t < nz_end; ++t) {
          const float v = xs.vals[t];
          const float* w1j = model.w1.data() + xs.cols[t] * h;
          for (int u = 0; u < h; ++u) hidden_pre[u] += v * w1j[u];
        }
        for (int u = 0; u < h; ++u) hidden_act[u] = std::max(0.0f, hidden_pre[u]);
        std::copy(model.b2.begin(), model.b2.end(), logits.begin());
        for (int u = 0; u < h; ++u) {
          const float a = hidden_act[u];
          if (a == 0.0f) continue;
          const float* w2u = model.w2.data() + u * c;
          for (int k = 0; k < c; ++k) logits[k] += a * w2u[k];
        }
        float zmax = logits[0];
        for (int k = 1; k < c; ++k) zmax = std::max(zmax, logits[k]);
        float denom = 0.0f;
        for (int k = 0; k < c; ++k) {
          logits[k] = std::exp(logits[k] - zmax);
          denom += logits[k];
        }
        // Backward; logits now holds softmax minus one-hot (the dz term).
        for (int k = 0; k < c; ++k) logits[k] /= denom;
        logits[y[i]] -= 1.0f;

        for (int k = 0; k < c; ++k) g_b2[k] += logits[k];
        for (int u = 0; u < h; ++u) {
          const float a = hidden_act[u];
          float acc = 0.0f;
          const float* w2u = model.w2.data() + u * c;
          float* g2u = g_w2.data() + u * c;
          for (int k = 0; k < c; ++k) {
            if (a != 0.0f) g2u[k] += a * logits[k];
            acc += w2u[k] * logits[k];
          }
          dh[u] = hidden_pre[u] > 0.0f ? acc : 0.0f;
        }
        for (int u = 0; u < h; ++u) g_b1[u] += dh[u];
        for (std::uint32_t t = nz_begin; t < nz_end; ++t) {
          const float v = xs.vals[t];
          float* g1j = g_w1.data() + xs.cols[t] * h;
          for (int u = 0; u < h; ++u) g1j[u] += v * dh[u];
        }
      }

      ++adam_t;
      const float bc1 = 1.0f - std::pow(0.9f, static_cast<float>(adam_t));
      const float bc2 = 1.0f - std::pow(0.999f, static_cast<float>(adam_t));
      a_w1.step(model.w1, g_w1, inv_b, lr, bc1, bc2);
      a_b1.step(model.b1, g_b1, inv_b, lr, bc1, bc2);
      a_w2.step(model.w2, g_w2, inv_b, lr, bc1, bc2);
      a_b2.step(model.b2, g_b2, inv_b, lr, bc1, bc2);
    }
  }
  return model;
}

}  // namespace refaudit
