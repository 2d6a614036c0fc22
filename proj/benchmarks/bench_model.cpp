#include <benchmark/benchmark.h>

#include "fedpu/model.hpp"
#include "fedpu/rng.hpp"

using namespace fedpu;

namespace {

ArchitectureSpec mnist_arch() {
  ArchitectureSpec a;
  a.input_dim = 784;
  a.hidden = {200};
  a.num_classes = 10;
  return a;
}

RowMatrix random_batch(Eigen::Index rows, Eigen::Index cols) {
  Rng rng(7);
  RowMatrix x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  return x;
}

}  // namespace

static void Forward(benchmark::State& state) {
  const ParamVector p = init_model(mnist_arch(), 1);
  const RowMatrix x = random_batch(state.range(0), 784);
  for (auto _ : state) {
    auto out = forward(p, x);
    benchmark::DoNotOptimize(out.probs.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(Forward)->Arg(1)->Arg(100)->Arg(1000);

static void ForwardBackward(benchmark::State& state) {
  const ParamVector p = init_model(mnist_arch(), 1);
  const RowMatrix x = random_batch(state.range(0), 784);
  const RowMatrix upstream = RowMatrix::Constant(state.range(0), 10, 0.01);
  for (auto _ : state) {
    const auto out = forward(p, x);
    auto g = backward(p, out, upstream);
    benchmark::DoNotOptimize(g.values().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(ForwardBackward)->Arg(100)->Arg(1000);
