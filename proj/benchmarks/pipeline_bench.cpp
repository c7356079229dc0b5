// Microbenchmarks for the audit pipeline hot spots: tokenization, tf-idf
// transformation, the three diagnostic classifiers, the unpenalized logit,
// and cohort/plan/corpus synthesis against the shipped data tables.

#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "refaudit/audit.hpp"

#ifndef REFAUDIT_BENCH_DATA_DIR
#define REFAUDIT_BENCH_DATA_DIR "core/data"
#endif

namespace {

using namespace refaudit;

AuditConfig bench_config() {
  AuditConfig config;
  config.data_dir = REFAUDIT_BENCH_DATA_DIR;
  config.seeds = {41, 42};
  config.per_seed = 120;
  return config;
}

const DataTables& bench_tables() {
  static const DataTables tables = load_data_tables(bench_config());
  return tables;
}

const std::vector<InteractionRecord>& bench_corpus() {
  static const std::vector<InteractionRecord> corpus = [] {
    const AuditConfig config = bench_config();
    const PlanBundle bundle = build_plan(config, bench_tables());
    return generate_corpus(config, bundle.plan);
  }();
  return corpus;
}

struct feature_fixture {
  std::vector<std::vector<std::string>> documents;
  Vocabulary vocab;
  TfIdfMatrix matrix;
  std::vector<int> sex_labels;
  std::vector<std::size_t> all_rows;
};

const feature_fixture& bench_features() {
  static const feature_fixture fx = [] {
    feature_fixture f;
    MaskPolicy policy;
    for (const InteractionRecord& r : bench_corpus()) {
      f.documents.push_back(
          apply_masks(tokenize(r.response_text), r.identity, policy));
      f.sex_labels.push_back(static_cast<int>(r.identity.group.sex));
    }
    f.vocab = build_vocabulary(f.documents, 120, default_stopwords());
    f.matrix = transform(f.documents, f.vocab);
    for (std::size_t i = 0; i < f.matrix.rows; ++i) f.all_rows.push_back(i);
    return f;
  }();
  return fx;
}

void BM_tokenize(benchmark::State& state) {
  const std::string& text = bench_corpus().front().response_text;
  for (auto _ : state) benchmark::DoNotOptimize(tokenize(text));
}
BENCHMARK(BM_tokenize);

void BM_tfidf_transform(benchmark::State& state) {
  const feature_fixture& fx = bench_features();
  for (auto _ : state) benchmark::DoNotOptimize(transform(fx.documents, fx.vocab));
}
BENCHMARK(BM_tfidf_transform);

void BM_train_logreg(benchmark::State& state) {
  const feature_fixture& fx = bench_features();
  ClassifierSpec spec;
  spec.kind = ClassifierKind::logistic_regression_l2;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        train_softmax(fx.matrix, fx.sex_labels, fx.all_rows, 2, spec));
}
BENCHMARK(BM_train_logreg);

void BM_train_mlp(benchmark::State& state) {
  const feature_fixture& fx = bench_features();
  ClassifierSpec spec;
  spec.kind = ClassifierKind::multilayer_perceptron;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        train_mlp(fx.matrix, fx.sex_labels, fx.all_rows, 2, spec));
}
BENCHMARK(BM_train_mlp);

void BM_train_gbt(benchmark::State& state) {
  const feature_fixture& fx = bench_features();
  ClassifierSpec spec;
  spec.kind = ClassifierKind::gradient_boosted_trees;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        train_boosted_trees(fx.matrix, fx.sex_labels, fx.all_rows, 2, spec));
}
BENCHMARK(BM_train_gbt);

void BM_fit_unpenalized_logit(benchmark::State& state) {
  // dense random design, the stage-2 working size
  const std::size_t n = 500, p = 20;
  TfIdfMatrix m;
  m.rows = n;
  m.cols = p;
  std::vector<int> labels;
  std::vector<std::string> terms;
  auto rng = make_rng(4242);
  for (std::size_t j = 0; j < p; ++j) terms.push_back("t" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) {
    double eta = 0.2;
    for (std::size_t j = 0; j < p; ++j) {
      const double x = 0.5 * standard_normal(rng);
      m.values.push_back(x);
      if (j % 3 == 0) eta += 0.4 * x;
    }
    labels.push_back(uniform_real(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0);
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(fit_unpenalized_logit(m, labels, terms));
}
BENCHMARK(BM_fit_unpenalized_logit);

void BM_synthesize_cohort(benchmark::State& state) {
  const DataTables& tables = bench_tables();
  for (auto _ : state) {
    auto rng = make_rng(7);
    benchmark::DoNotOptimize(
        synthesize_cohort(600, tables.first_names, tables.surnames, rng));
  }
}
BENCHMARK(BM_synthesize_cohort);

void BM_build_plan(benchmark::State& state) {
  const AuditConfig config = bench_config();
  const DataTables& tables = bench_tables();
  for (auto _ : state) benchmark::DoNotOptimize(build_plan(config, tables));
}
BENCHMARK(BM_build_plan);

void BM_generate_corpus(benchmark::State& state) {
  const AuditConfig config = bench_config();
  const PlanBundle bundle = build_plan(config, bench_tables());
  for (auto _ : state)
    benchmark::DoNotOptimize(generate_corpus(config, bundle.plan));
}
BENCHMARK(BM_generate_corpus);

}  // namespace

BENCHMARK_MAIN();
