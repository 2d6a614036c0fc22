#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpu/dataset.hpp"

namespace fedpu {

enum class DistributionMode { kIid, kNoniidShards };

struct ClientPlan {
  int id = 0;
  std::vector<std::size_t> indices;   // rows of the train Dataset
  std::vector<int> positive_classes;  // sorted; empty until assigned
  double labeled_fraction = 1.0;      // fraction in (0,1], or absolute count if > 1
};

struct PartitionPlan {
  int num_clients = 0;
  int num_classes = 0;
  DistributionMode mode = DistributionMode::kIid;
  std::size_t shards_per_client = 0;
  std::size_t total_shards = 0;
  bool overlap = true;
  std::uint64_t seed = 0;
  std::vector<ClientPlan> clients;

  // Disjointness and full coverage of the train index set; class coverage and
  // non-overlap once positive classes are assigned. Throws ConfigError.
  void validate(std::size_t dataset_size) const;
};

nlohmann::json to_json(const PartitionPlan& plan);
PartitionPlan partition_plan_from_json(const nlohmann::json& doc);

// Uniform random permutation cut into K chunks; the first n % K chunks get one
// extra sample.
PartitionPlan partition_iid(const Dataset& ds, int num_clients, std::uint64_t seed);

// Label-sorted shards dealt without replacement, shards_per_client each. When
// total_shards is a multiple of C each class is cut into total_shards / C
// contiguous pieces so every shard is single-class; otherwise the sorted order
// is cut into equal pieces. In both cases the last piece absorbs the remainder.
PartitionPlan partition_noniid_shards(const Dataset& ds, int num_clients,
                                      std::size_t shards_per_client, std::size_t total_shards,
                                      std::uint64_t seed);

// Gives client k division[k] positive classes drawn from the classes present in
// its samples. Coverage of all C classes is guaranteed by a randomized bipartite
// matching of classes to client slots; remaining slots are filled at random.
// Throws InfeasibleError naming the class (or client) that cannot be satisfied.
PartitionPlan assign_positive_classes(PartitionPlan plan, const Dataset& ds,
                                      std::span<const int> division, bool overlap,
                                      std::uint64_t seed);

// One labelled sample of a client: the row and the label the client knows.
struct LabeledSample {
  std::size_t row;
  int label;
};

// A client's PU view of its data. True labels of unlabeled rows stay in the
// source Dataset and are only reachable through oracle_unlabeled_label().
class ClientDataset {
 public:
  ClientDataset(int id, std::shared_ptr<const Dataset> source, std::vector<int> positive_classes,
                std::vector<LabeledSample> labeled, std::vector<std::size_t> unlabeled);

  int id() const { return id_; }
  const Dataset& source() const { return *source_; }
  const std::shared_ptr<const Dataset>& source_ptr() const { return source_; }
  int num_classes() const { return source_->num_classes; }

  std::span<const int> positive_classes() const { return positive_; }
  bool is_positive(int c) const;
  std::vector<int> negative_classes() const;

  std::span<const LabeledSample> labeled() const { return labeled_; }
  std::span<const std::size_t> unlabeled() const { return unlabeled_; }

  // n_i^k for every class (zero outside the positive set).
  std::span<const std::size_t> labeled_counts() const { return labeled_counts_; }
  std::size_t labeled_count() const { return labeled_.size(); }
  std::size_t unlabeled_count() const { return unlabeled_.size(); }
  std::size_t total_count() const { return labeled_.size() + unlabeled_.size(); }

  // Evaluation/test-only access to the hidden class of unlabeled row j.
  int oracle_unlabeled_label(std::size_t j) const;

  std::vector<std::string> warnings;

 private:
  int id_;
  std::shared_ptr<const Dataset> source_;
  std::vector<int> positive_;
  std::vector<LabeledSample> labeled_;
  std::vector<std::size_t> unlabeled_;
  std::vector<std::size_t> labeled_counts_;
};

// Per client and positive class i, floor(lambda * count_i) samples (or
// min(lambda, count_i) when lambda > 1 is an absolute count) become labeled;
// everything else is unlabeled. lambda has one entry per client, or a single
// entry shared by all.
std::vector<ClientDataset> label_fraction_split(const PartitionPlan& plan,
                                                std::shared_ptr<const Dataset> ds,
                                                std::span<const double> lambda,
                                                std::uint64_t seed);

// Same, taking lambda from each ClientPlan::labeled_fraction.
std::vector<ClientDataset> label_fraction_split(const PartitionPlan& plan,
                                                std::shared_ptr<const Dataset> ds,
                                                std::uint64_t seed);

// Every sample labeled with its true class, all classes positive (fully
// supervised clients over the same sample assignment).
std::vector<ClientDataset> fully_labeled_clients(const PartitionPlan& plan,
                                                 std::shared_ptr<const Dataset> ds);

}  // namespace fedpu
