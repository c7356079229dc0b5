#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "refaudit/classifiers.hpp"

namespace refaudit {

namespace {

constexpr int kMaxBins = 32;
constexpr double kLambda = 1.0;            // L2 on leaf values
constexpr double kMinChildHessian = 1.0;   // both children must keep this much hessian

// Quantile bin boundaries for one feature over the training rows. Cuts are
// midpoints between distinct neighbouring sorted values, so the "value <
// threshold goes left" predicate reproduces bin membership exactly.
std::vector<double> quantile_cuts(std::vector<double>& vals) {
  std::sort(vals.begin(), vals.end());
  const std::size_t n = vals.size();
  std::vector<double> cuts;
  std::vector<double> uniq(vals);
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() <= kMaxBins) {
    for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
      cuts.push_back(0.5 * (uniq[i] + uniq[i + 1]));
    return cuts;
  }
  for (int k = 1; k < kMaxBins; ++k) {
    const std::size_t idx = n * static_cast<std::size_t>(k) / kMaxBins;
    if (idx > 0 && vals[idx] != vals[idx - 1])
      cuts.push_back(0.5 * (vals[idx - 1] + vals[idx]));
  }
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

inline int bin_of(const std::vector<double>& cuts, double x) {
  return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

// Nonzero feature entries in column-major order, binned up front. Zero rows
// never appear here; their histogram mass is recovered by subtracting the
// accumulated totals from the node totals.
struct BinnedColumns {
  std::vector<std::vector<double>> cuts;       // per feature
  std::vector<std::uint32_t> offsets;          // per feature, size d+1
  std::vector<std::uint32_t> rows;             // local row index
  std::vector<std::uint8_t> bins;
  std::vector<int> zero_bin;                   // per feature
};

BinnedColumns bin_columns(const TfIdfMatrix& matrix,
                          std::span<const std::size_t> train_rows) {
  const std::size_t d = matrix.cols;
  const std::size_t n = train_rows.size();
  BinnedColumns out;
  out.cuts.resize(d);
  out.zero_bin.resize(d);
  out.offsets.assign(d + 1, 0);

  std::vector<double> vals(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i)
      vals[i] = matrix.values[train_rows[i] * d + j];
    std::vector<double> scratch = vals;
    out.cuts[j] = quantile_cuts(scratch);
    out.zero_bin[j] = bin_of(out.cuts[j], 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (vals[i] == 0.0) continue;
      out.rows.push_back(static_cast<std::uint32_t>(i));
      out.bins.push_back(static_cast<std::uint8_t>(bin_of(out.cuts[j], vals[i])));
    }
    out.offsets[j + 1] = static_cast<std::uint32_t>(out.rows.size());
  }
  return out;
}

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

}  // namespace

std::vector<int> BoostedTreesModel::predict(const TfIdfMatrix& matrix,
                                            std::span<const std::size_t> rows) const {
  if (matrix.cols != n_features)
    throw std::invalid_argument("BoostedTreesModel: feature count mismatch");
  const int c = num_classes;
  std::vector<double> score(c);
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    const double* x = matrix.values.data() + r * n_features;
    std::fill(score.begin(), score.end(), 0.0);
    for (int round = 0; round < rounds; ++round) {
      for (int k = 0; k < c; ++k) {
        const std::vector<TreeNode>& tree = trees[round * c + k];
        int node = 0;
        while (tree[node].feature >= 0)
          node = x[tree[node].feature] < tree[node].threshold ? tree[node].left
                                                              : tree[node].right;
        score[k] += tree[node].leaf_value;
      }
    }
    int best = 0;
    for (int k = 1; k < c; ++k)
      if (score[k] > score[best]) best = k;
    out.push_back(best);
  }
  return out;
}

BoostedTreesModel train_boosted_trees(const TfIdfMatrix& matrix,
                                      std::span<const int> labels,
                                      std::span<const std::size_t> train_rows,
                                      int num_classes, const ClassifierSpec& spec) {
  if (spec.rounds < 1 || spec.max_depth < 1 || spec.shrinkage <= 0.0)
    throw std::invalid_argument("train_boosted_trees: bad hyperparameters");

  const std::size_t d = matrix.cols;
  const std::size_t n = train_rows.size();
  const int c = num_classes;

  BoostedTreesModel model;
  model.n_features = d;
  model.num_classes = c;
  model.rounds = spec.rounds;
  model.trees.resize(static_cast<std::size_t>(spec.rounds) * c);

  const BinnedColumns binned = bin_columns(matrix, train_rows);

  std::vector<float> scores(n * c, 0.0f);   // raw class scores F
  std::vector<float> probs(n * c);
  std::vector<float> grad(n), hess(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = labels[train_rows[i]];

  std::vector<int> node_of(n);
  std::vector<float> hist;  // [slot][feature][bin][g,h]
  const std::size_t hist_stride = d * kMaxBins * 2;

  for (int round = 0; round < spec.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const float* f = scores.data() + i * c;
      float fmax = f[0];
      for (int k = 1; k < c; ++k) fmax = std::max(fmax, f[k]);
      float denom = 0.0f;
      float* p = probs.data() + i * c;
      for (int k = 0; k < c; ++k) {
        p[k] = std::exp(f[k] - fmax);
        denom += p[k];
      }
      for (int k = 0; k < c; ++k) p[k] /= denom;
    }

    for (int cls = 0; cls < c; ++cls) {
      for (std::size_t i = 0; i < n; ++i) {
        const float p = probs[i * c + cls];
        grad[i] = p - (y[i] == cls ? 1.0f : 0.0f);
        hess[i] = p * (1.0f - p);
      }

      std::vector<TreeNode> tree(1);
      std::fill(node_of.begin(), node_of.end(), 0);
      std::vector<int> active{0};

      for (int depth = 0; depth <= spec.max_depth && !active.empty(); ++depth) {
        std::vector<int> slot_of(tree.size(), -1);
        for (std::size_t s = 0; s < active.size(); ++s)
          slot_of[active[s]] = static_cast<int>(s);

        std::vector<double> node_g(active.size(), 0.0), node_h(active.size(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const int slot = slot_of[node_of[i]];
          if (slot < 0) continue;
          node_g[slot] += grad[i];
          node_h[slot] += hess[i];
        }

        if (depth == spec.max_depth) {
          for (std::size_t s = 0; s < active.size(); ++s)
            tree[active[s]].leaf_value =
                -node_g[s] / (node_h[s] + kLambda) * spec.shrinkage;
          break;
        }

        hist.assign(active.size() * hist_stride, 0.0f);
        for (std::size_t j = 0; j < d; ++j) {
          float* hj = hist.data() + j * (kMaxBins * 2);
          for (std::uint32_t t = binned.offsets[j]; t < binned.offsets[j + 1]; ++t) {
            const std::uint32_t i = binned.rows[t];
            const int slot = slot_of[node_of[i]];
            if (slot < 0) continue;
            float* cell = hj + slot * hist_stride + binned.bins[t] * 2;
            cell[0] += grad[i];
            cell[1] += hess[i];
          }
        }
        // Rows with a zero value never hit the loop above; fold their mass
        // into the zero bin by subtraction from the node totals.
        for (std::size_t s = 0; s < active.size(); ++s) {
          for (std::size_t j = 0; j < d; ++j) {
            float* hj = hist.data() + s * hist_stride + j * (kMaxBins * 2);
            double acc_g = 0.0, acc_h = 0.0;
            const int nbins = static_cast<int>(binned.cuts[j].size()) + 1;
            for (int b = 0; b < nbins; ++b) {
              acc_g += hj[b * 2];
              acc_h += hj[b * 2 + 1];
            }
            hj[binned.zero_bin[j] * 2] += static_cast<float>(node_g[s] - acc_g);
            hj[binned.zero_bin[j] * 2 + 1] += static_cast<float>(node_h[s] - acc_h);
          }
        }

        std::vector<SplitChoice> choice(active.size());
        for (std::size_t s = 0; s < active.size(); ++s) {
          const double g_total = node_g[s], h_total = node_h[s];
          const double parent_score = g_total * g_total / (h_total + kLambda);
          for (std::size_t j = 0; j < d; ++j) {
            const int ncuts = static_cast<int>(binned.cuts[j].size());
            if (ncuts == 0) continue;
            const float* hj = hist.data() + s * hist_stride + j * (kMaxBins * 2);
            double gl = 0.0, hl = 0.0;
            for (int b = 0; b < ncuts; ++b) {
              gl += hj[b * 2];
              hl += hj[b * 2 + 1];
              const double gr = g_total - gl, hr = h_total - hl;
              if (hl < kMinChildHessian || hr < kMinChildHessian) continue;
              const double gain = gl * gl / (hl + kLambda) +
                                  gr * gr / (hr + kLambda) - parent_score;
              if (gain > choice[s].gain && gain > 0.0) {
                choice[s].found = true;
                choice[s].feature = static_cast<int>(j);
                choice[s].threshold = binned.cuts[j][b];
                choice[s].gain = gain;
              }
            }
          }
        }

        std::vector<int> next_active;
        for (std::size_t s = 0; s < active.size(); ++s) {
          if (!choice[s].found) {
            TreeNode& nd = tree[active[s]];
            nd.leaf_value = -node_g[s] / (node_h[s] + kLambda) * spec.shrinkage;
            continue;
          }
          const int left = static_cast<int>(tree.size());
          {
            TreeNode& nd = tree[active[s]];
            nd.feature = choice[s].feature;
            nd.threshold = choice[s].threshold;
            nd.left = left;
            nd.right = left + 1;
          }
          tree.emplace_back();  // invalidates nd, so ids were captured first
          tree.emplace_back();
          next_active.push_back(left);
          next_active.push_back(left + 1);
        }

        for (std::size_t i = 0; i < n; ++i) {
          const int slot = slot_of[node_of[i]];
          if (slot < 0 || !choice[slot].found) continue;
          const TreeNode& nd = tree[node_of[i]];
          const double x = matrix.values[train_rows[i] * d + nd.feature];
          node_of[i] = x < nd.threshold ? nd.left : nd.right;
        }
        active = std::move(next_active);
      }

      for (std::size_t i = 0; i < n; ++i)
        scores[i * c + cls] += static_cast<float>(tree[node_of[i]].leaf_value);
      model.trees[static_cast<std::size_t>(round) * c + cls] = std::move(tree);
    }
  }
  return model;
}

}  // namespace refaudit
