#include <benchmark/benchmark.h>

#include <vector>

#include "fedpu/risk.hpp"
#include "fedpu/rng.hpp"

using namespace fedpu;

namespace {

RowMatrix random_probs(Rng& rng, Eigen::Index rows, int classes) {
  RowMatrix p(rows, classes);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int c = 0; c < classes; ++c) p(r, c) = 0.05 + rng.uniform();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

}  // namespace

// One client of ten, two positive classes each, batch of 100 with 10 labeled rows.
static void FedPuClientLoss(benchmark::State& state) {
  Rng rng(3);
  std::vector<ClientPositiveSet> sets;
  for (int k = 0; k < 10; ++k) sets.push_back({k, {k, (k + 3) % 10}});
  const auto tables = build_cross_client_tables(sets, 10, TableMode::kMultiplicityNormalized);
  const ClassPriorVector pi = ClassPriorVector::uniform(10);
  const auto labeled = static_cast<Eigen::Index>(state.range(0));
  std::vector<int> labels;
  for (Eigen::Index r = 0; r < labeled; ++r) labels.push_back(r % 2 == 0 ? 0 : 3);
  const RowMatrix lab = random_probs(rng, labeled, 10);
  const RowMatrix unl = random_probs(rng, 100 - labeled, 10);
  for (auto _ : state) {
    auto r = fedpu_client_loss(lab, labels, unl, pi, sets[0].classes, tables[0], {});
    benchmark::DoNotOptimize(r.breakdown.total);
  }
  state.counters["table_entries"] = static_cast<double>(tables[0].entries.size());
}
BENCHMARK(FedPuClientLoss)->Arg(10)->Arg(50);

static void CrossClientTables(benchmark::State& state) {
  const int clients = static_cast<int>(state.range(0));
  std::vector<ClientPositiveSet> sets;
  for (int k = 0; k < clients; ++k) sets.push_back({k, {k % 10, (k + 1) % 10}});
  for (auto _ : state) {
    auto t = build_cross_client_tables(sets, 10, TableMode::kMultiplicityNormalized);
    benchmark::DoNotOptimize(t.data());
  }
}
BENCHMARK(CrossClientTables)->Arg(10)->Arg(100);
