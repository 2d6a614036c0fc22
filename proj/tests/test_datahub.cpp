#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "fedpu/dataset.hpp"
#include "fedpu/error.hpp"
#include "fedpu/partition.hpp"
#include "helpers.hpp"

using namespace fedpu;
using fedpu::testing::balanced_labels;
using fedpu::testing::labelled_dataset;

namespace {

std::vector<unsigned char> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                      std::uint32_t magic = 0x00000803) {
  std::vector<unsigned char> out;
  fedpu::testing::put_be32(out, magic);
  fedpu::testing::put_be32(out, count);
  fedpu::testing::put_be32(out, rows);
  fedpu::testing::put_be32(out, cols);
  for (std::uint32_t i = 0; i < count * rows * cols; ++i) out.push_back(static_cast<unsigned char>(i % 256));
  return out;
}

std::vector<unsigned char> idx_labels(std::uint32_t count, std::uint32_t magic = 0x00000801) {
  std::vector<unsigned char> out;
  fedpu::testing::put_be32(out, magic);
  fedpu::testing::put_be32(out, count);
  for (std::uint32_t i = 0; i < count; ++i) out.push_back(static_cast<unsigned char>(i % 10));
  return out;
}

void check_disjoint_cover(const PartitionPlan& plan, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& c : plan.clients) {
    for (std::size_t r : c.indices) ++seen[r];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

}  // namespace

TEST_SUITE("datahub") {

TEST_CASE("IDX loader scales pixels and keeps order") {
  const auto dir = fedpu::testing::scratch_dir("idx");
  fedpu::testing::write_bytes(dir / "img", idx_images(4, 2, 3));
  fedpu::testing::write_bytes(dir / "lab", idx_labels(4));
  const Dataset ds = load_mnist_idx(dir / "img", dir / "lab");
  REQUIRE(ds.size() == 4);
  CHECK(ds.dim() == 6);
  CHECK(ds.num_classes == 10);
  CHECK(ds.labels == std::vector<int>{0, 1, 2, 3});
  CHECK(ds.features(1, 0) == doctest::Approx(6.0 / 255.0));
  CHECK(ds.features.maxCoeff() <= 1.0);
}

TEST_CASE("IDX loader rejects bad magic and mismatched counts") {
  const auto dir = fedpu::testing::scratch_dir("idx_bad");
  fedpu::testing::write_bytes(dir / "img", idx_images(4, 2, 2, 0x00000802));
  fedpu::testing::write_bytes(dir / "lab", idx_labels(4));
  CHECK_THROWS_AS(load_mnist_idx(dir / "img", dir / "lab"), FormatError);

  fedpu::testing::write_bytes(dir / "img", idx_images(4, 2, 2));
  auto truncated = idx_labels(4);
  truncated.pop_back();
  fedpu::testing::write_bytes(dir / "lab", truncated);
  CHECK_THROWS_AS(load_mnist_idx(dir / "img", dir / "lab"), ConsistencyError);

  fedpu::testing::write_bytes(dir / "lab", idx_labels(3));
  CHECK_THROWS_AS(load_mnist_idx(dir / "img", dir / "lab"), ConsistencyError);
}

TEST_CASE("CIFAR loader checks record length") {
  const auto dir = fedpu::testing::scratch_dir("cifar");
  std::vector<unsigned char> rec(2 * 3073, 255);
  rec[0] = 3;
  rec[3073] = 7;
  fedpu::testing::write_bytes(dir / "a.bin", rec);
  const std::vector<std::filesystem::path> paths{dir / "a.bin"};
  const Dataset ds = load_cifar10_bin(paths);
  REQUIRE(ds.size() == 2);
  CHECK(ds.dim() == 3072);
  CHECK(ds.labels == std::vector<int>{3, 7});
  CHECK(ds.features(0, 0) == 1.0);

  rec.pop_back();
  fedpu::testing::write_bytes(dir / "a.bin", rec);
  CHECK_THROWS_AS(load_cifar10_bin(paths), FormatError);

  fedpu::testing::write_bytes(dir / "a.bin", {});
  CHECK(load_cifar10_bin(paths).size() == 0);
}

TEST_CASE("synthetic gaussians are deterministic and separable at margin 4") {
  const Dataset a = synth_gaussian(2, 2, 100, 4.0, 7);
  const Dataset b = synth_gaussian(2, 2, 100, 4.0, 7);
  REQUIRE(a.size() == 200);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.features.minCoeff() >= 0.0);
  CHECK(a.features.maxCoeff() <= 1.0);
  CHECK(synth_gaussian(3, 2, 0, 1.0, 1).size() == 0);

  // Perceptron as the independent linear-separability oracle.
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  bool separated = false;
  for (int epoch = 0; epoch < 1000 && !separated; ++epoch) {
    separated = true;
    for (std::size_t r = 0; r < a.size(); ++r) {
      const Eigen::Vector3d x(a.features(static_cast<Eigen::Index>(r), 0),
                              a.features(static_cast<Eigen::Index>(r), 1), 1.0);
      const double y = a.labels[r] == 0 ? 1.0 : -1.0;
      if (y * w.dot(x) <= 0.0) {
        w += y * x;
        separated = false;
      }
    }
  }
  CHECK(separated);
}

TEST_CASE("iid partition sizes") {
  const Dataset ds = labelled_dataset(balanced_labels(2, 5), 2);
  const PartitionPlan plan = partition_iid(ds, 3, 11);
  std::vector<std::size_t> sizes;
  for (const auto& c : plan.clients) sizes.push_back(c.indices.size());
  CHECK(sizes == std::vector<std::size_t>{4, 3, 3});
  check_disjoint_cover(plan, ds.size());

  const PartitionPlan one = partition_iid(ds, 1, 11);
  CHECK(one.clients.front().indices.size() == 10);
  CHECK_THROWS_AS(partition_iid(ds, 11, 1), ConfigError);

  const Dataset big = labelled_dataset(balanced_labels(10, 6000), 10, 1);
  for (const auto& c : partition_iid(big, 10, 3).clients) CHECK(c.indices.size() == 6000);
}

TEST_CASE("non-iid shards bound the classes per client") {
  const Dataset ds = labelled_dataset(balanced_labels(10, 600), 10, 1);
  for (std::size_t spc : {std::size_t{5}, std::size_t{2}}) {
    const PartitionPlan plan = partition_noniid_shards(ds, 10, spc, 10 * spc, 4);
    check_disjoint_cover(plan, ds.size());
    for (const auto& c : plan.clients) {
      std::set<int> classes;
      for (std::size_t r : c.indices) classes.insert(ds.labels[r]);
      CHECK(classes.size() <= spc);
    }
  }
  const PartitionPlan whole = partition_noniid_shards(ds, 1, 1, 1, 4);
  CHECK(whole.clients.front().indices.size() == ds.size());
  CHECK_THROWS(partition_noniid_shards(ds, 10, 1000, 10000, 4));
}

TEST_CASE("shard remainder goes to the last piece") {
  const Dataset ds = labelled_dataset(balanced_labels(3, 7), 3, 1);
  const PartitionPlan plan = partition_noniid_shards(ds, 2, 2, 4, 9);
  check_disjoint_cover(plan, ds.size());
}

TEST_CASE("positive-class assignment: coverage, overlap and determinism") {
  const Dataset ds = labelled_dataset(balanced_labels(10, 30), 10, 1);
  const PartitionPlan base = partition_iid(ds, 10, 2);

  const std::vector<int> ones(10, 1);
  const PartitionPlan disjoint = assign_positive_classes(base, ds, ones, false, 8);
  std::vector<int> all;
  for (const auto& c : disjoint.clients) {
    REQUIRE(c.positive_classes.size() == 1);
    all.push_back(c.positive_classes[0]);
  }
  std::sort(all.begin(), all.end());
  std::vector<int> expected(10);
  std::iota(expected.begin(), expected.end(), 0);
  CHECK(all == expected);

  const PartitionPlan two = partition_iid(ds, 2, 3);
  const std::vector<int> nines{9, 9};
  const PartitionPlan overlapped = assign_positive_classes(two, ds, nines, true, 8);
  std::set<int> cover;
  for (const auto& c : overlapped.clients) {
    CHECK(c.positive_classes.size() == 9);
    cover.insert(c.positive_classes.begin(), c.positive_classes.end());
  }
  CHECK(cover.size() == 10);

  const PartitionPlan single = partition_iid(ds, 1, 3);
  const std::vector<int> full{10};
  CHECK(assign_positive_classes(single, ds, full, true, 1).clients[0].positive_classes == expected);

  const std::vector<int> twos(10, 2);
  CHECK(to_json(assign_positive_classes(base, ds, twos, true, 5)) ==
        to_json(assign_positive_classes(base, ds, twos, true, 5)));

  try {
    assign_positive_classes(base, ds, twos, false, 5);
    FAIL("expected infeasibility");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("overlap") != std::string::npos);
    CHECK(e.exit_code() == ExitCode::kConfig);
  }
}

TEST_CASE("assignment under shards draws only present classes") {
  const Dataset ds = labelled_dataset(balanced_labels(10, 60), 10, 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PartitionPlan shards = partition_noniid_shards(ds, 10, 5, 50, seed);
    const PartitionPlan plan = assign_positive_classes(shards, ds, std::vector<int>(10, 2), true, seed);
    std::set<int> cover;
    for (const auto& c : plan.clients) {
      std::set<int> present;
      for (std::size_t r : c.indices) present.insert(ds.labels[r]);
      for (int p : c.positive_classes) CHECK(present.contains(p));
      cover.insert(c.positive_classes.begin(), c.positive_classes.end());
    }
    CHECK(cover.size() == 10);
  }
}

TEST_CASE("labeled-fraction split floors per class and keeps labels legal") {
  auto ds = std::make_shared<Dataset>(labelled_dataset(balanced_labels(4, 600), 4, 2));
  PartitionPlan plan = partition_iid(*ds, 1, 1);
  plan = assign_positive_classes(plan, *ds, std::vector<int>{4}, true, 1);
  const std::vector<double> half{0.5};
  const auto clients = label_fraction_split(plan, ds, half, 3);
  REQUIRE(clients.size() == 1);
  const auto& c = clients[0];
  for (int p : c.positive_classes()) CHECK(c.labeled_counts()[static_cast<std::size_t>(p)] == 300);
  CHECK(c.labeled_count() + c.unlabeled_count() == 2400);
  for (const auto& s : c.labeled()) {
    CHECK(c.is_positive(s.label));
    CHECK(ds->labels[s.row] == s.label);
  }

  const std::vector<double> third{1.0 / 3.0};
  const auto thirds = label_fraction_split(plan, ds, third, 3);
  for (int p : thirds[0].positive_classes()) {
    CHECK(thirds[0].labeled_counts()[static_cast<std::size_t>(p)] == 200);
  }

  const std::vector<double> five{5.0};
  const auto counted = label_fraction_split(plan, ds, five, 3);
  CHECK(counted[0].labeled_count() == 20);

  PartitionPlan all = assign_positive_classes(partition_iid(*ds, 1, 1), *ds, std::vector<int>{4}, true, 1);
  const std::vector<double> one{1.0};
  const auto supervised = label_fraction_split(all, ds, one, 3);
  CHECK(supervised[0].unlabeled_count() == 0);
  CHECK(supervised[0].labeled_count() == ds->size());

  const auto again = label_fraction_split(plan, ds, half, 3);
  CHECK(std::equal(again[0].unlabeled().begin(), again[0].unlabeled().end(),
                   clients[0].unlabeled().begin(), clients[0].unlabeled().end()));
}

TEST_CASE("plan JSON round-trip") {
  const Dataset ds = labelled_dataset(balanced_labels(3, 10), 3, 1);
  PartitionPlan plan = assign_positive_classes(partition_iid(ds, 3, 9), ds, std::vector<int>{1, 1, 2}, true, 2);
  const auto doc = to_json(plan);
  CHECK(to_json(partition_plan_from_json(doc)) == doc);
}

TEST_CASE("class priors are validated") {
  CHECK_NOTHROW(ClassPriorVector({0.2, 0.8}));
  CHECK_THROWS_AS(ClassPriorVector({0.2, 0.7}), ConfigError);
  CHECK_THROWS_AS(ClassPriorVector({0.0, 1.0}), ConfigError);
  CHECK(ClassPriorVector::uniform(4)[2] == 0.25);
}

}
