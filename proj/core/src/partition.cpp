#include "fedpu/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fedpu/error.hpp"
#include "fedpu/rng.hpp"

namespace fedpu {

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Bipartite assignment of classes to client slots (Kuhn's augmenting paths with
// client capacities).
class SlotMatcher {
 public:
  SlotMatcher(std::vector<std::vector<int>> candidates, std::vector<int> capacity)
      : candidates_(std::move(candidates)),
        capacity_(std::move(capacity)),
        members_(capacity_.size()),
        owner_(candidates_.size(), -1) {}

  bool assign(int cls) {
    std::vector<char> seen(capacity_.size(), 0);
    return augment(cls, seen);
  }

  const std::vector<std::vector<int>>& members() const { return members_; }

 private:
  bool augment(int cls, std::vector<char>& seen) {
    for (int k : candidates_[static_cast<std::size_t>(cls)]) {
      auto ku = static_cast<std::size_t>(k);
      if (seen[ku]) continue;
      seen[ku] = 1;
      if (static_cast<int>(members_[ku].size()) < capacity_[ku]) {
        take(cls, k);
        return true;
      }
      for (std::size_t j = 0; j < members_[ku].size(); ++j) {
        const int other = members_[ku][j];
        if (augment(other, seen)) {
          members_[ku].erase(members_[ku].begin() + static_cast<std::ptrdiff_t>(j));
          take(cls, k);
          return true;
        }
      }
    }
    return false;
  }

  void take(int cls, int k) {
    members_[static_cast<std::size_t>(k)].push_back(cls);
    owner_[static_cast<std::size_t>(cls)] = k;
  }

  std::vector<std::vector<int>> candidates_;
  std::vector<int> capacity_;
  std::vector<std::vector<int>> members_;
  std::vector<int> owner_;
};

}  // namespace

void PartitionPlan::validate(std::size_t dataset_size) const {
  if (num_clients < 1 || static_cast<int>(clients.size()) != num_clients) {
    throw ConfigError("plan declares " + std::to_string(num_clients) + " clients but holds " +
                      std::to_string(clients.size()));
  }
  std::vector<char> seen(dataset_size, 0);
  std::size_t total = 0;
  for (const auto& client : clients) {
    for (std::size_t row : client.indices) {
      if (row >= dataset_size) throw ConfigError("plan index out of range");
      if (seen[row]) throw ConfigError("plan assigns row " + std::to_string(row) + " twice");
      seen[row] = 1;
    }
    total += client.indices.size();
  }
  if (total != dataset_size) {
    throw ConfigError("plan covers " + std::to_string(total) + " of " +
                      std::to_string(dataset_size) + " rows");
  }
  const bool assigned = std::any_of(clients.begin(), clients.end(),
                                    [](const ClientPlan& c) { return !c.positive_classes.empty(); });
  if (!assigned) return;
  std::vector<int> holders(static_cast<std::size_t>(num_classes), 0);
  for (const auto& client : clients) {
    for (int c : client.positive_classes) {
      if (c < 0 || c >= num_classes) throw ConfigError("positive class out of range");
      ++holders[static_cast<std::size_t>(c)];
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    const int h = holders[static_cast<std::size_t>(c)];
    if (h == 0) throw ConfigError("class " + std::to_string(c) + " is positive in no client");
    if (!overlap && h > 1) {
      throw ConfigError("class " + std::to_string(c) + " is positive in " + std::to_string(h) +
                        " clients with overlap disabled");
    }
  }
}

nlohmann::json to_json(const PartitionPlan& plan) {
  nlohmann::json doc;
  doc["num_clients"] = plan.num_clients;
  doc["num_classes"] = plan.num_classes;
  doc["mode"] = plan.mode == DistributionMode::kIid ? "iid" : "noniid_shards";
  if (plan.mode == DistributionMode::kNoniidShards) {
    doc["shards_per_client"] = plan.shards_per_client;
    doc["total_shards"] = plan.total_shards;
  }
  doc["overlap"] = plan.overlap;
  doc["seed"] = plan.seed;
  auto& clients = doc["clients"] = nlohmann::json::array();
  for (const auto& c : plan.clients) {
    clients.push_back({{"id", c.id},
                       {"indices", c.indices},
                       {"positive_classes", c.positive_classes},
                       {"labeled_fraction", c.labeled_fraction}});
  }
  return doc;
}

PartitionPlan partition_plan_from_json(const nlohmann::json& doc) {
  try {
    PartitionPlan plan;
    plan.num_clients = doc.at("num_clients").get<int>();
    plan.num_classes = doc.value("num_classes", 0);
    const auto mode = doc.at("mode").get<std::string>();
    if (mode == "iid") {
      plan.mode = DistributionMode::kIid;
    } else if (mode == "noniid_shards") {
      plan.mode = DistributionMode::kNoniidShards;
      plan.shards_per_client = doc.at("shards_per_client").get<std::size_t>();
      plan.total_shards = doc.at("total_shards").get<std::size_t>();
    } else {
      throw ConfigError("unknown partition mode '" + mode + "'");
    }
    plan.overlap = doc.value("overlap", true);
    plan.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& c : doc.at("clients")) {
      ClientPlan cp;
      cp.id = c.at("id").get<int>();
      cp.indices = c.at("indices").get<std::vector<std::size_t>>();
      cp.positive_classes = c.at("positive_classes").get<std::vector<int>>();
      cp.labeled_fraction = c.at("labeled_fraction").get<double>();
      plan.clients.push_back(std::move(cp));
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed partition plan: ") + e.what());
  }
}

PartitionPlan partition_iid(const Dataset& ds, int num_clients, std::uint64_t seed) {
  if (num_clients < 1) throw ConfigError("partition_iid needs K >= 1");
  const std::size_t n = ds.size();
  const auto k_count = static_cast<std::size_t>(num_clients);
  if (k_count > n) {
    throw ConfigError("cannot split " + std::to_string(n) + " samples into " +
                      std::to_string(num_clients) + " clients");
  }
  auto order = iota_indices(n);
  Rng rng(seed);
  rng.shuffle(std::span(order));

  PartitionPlan plan;
  plan.num_clients = num_clients;
  plan.num_classes = ds.num_classes;
  plan.mode = DistributionMode::kIid;
  plan.seed = seed;
  const std::size_t base = n / k_count;
  const std::size_t extra = n % k_count;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < k_count; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    ClientPlan client;
    client.id = static_cast<int>(k);
    client.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                          order.begin() + static_cast<std::ptrdiff_t>(begin + len));
    plan.clients.push_back(std::move(client));
    begin += len;
  }
  return plan;
}

PartitionPlan partition_noniid_shards(const Dataset& ds, int num_clients,
                                      std::size_t shards_per_client, std::size_t total_shards,
                                      std::uint64_t seed) {
  if (num_clients < 1 || shards_per_client < 1) {
    throw ConfigError("partition_noniid_shards needs K >= 1 and shards_per_client >= 1");
  }
  if (total_shards != static_cast<std::size_t>(num_clients) * shards_per_client) {
    throw ConfigError("total_shards (" + std::to_string(total_shards) +
                      ") must equal K * shards_per_client (" +
                      std::to_string(static_cast<std::size_t>(num_clients) * shards_per_client) +
                      ")");
  }
  const std::size_t n = ds.size();
  if (total_shards > n) {
    throw ConfigError("cannot cut " + std::to_string(n) + " samples into " +
                      std::to_string(total_shards) + " shards");
  }

  auto sorted = iota_indices(n);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](std::size_t a, std::size_t b) { return ds.labels[a] < ds.labels[b]; });

  // Shards as [begin, end) ranges over `sorted`.
  std::vector<std::pair<std::size_t, std::size_t>> shards;
  const auto classes = static_cast<std::size_t>(ds.num_classes);
  const auto counts = ds.class_counts();
  const std::size_t per_class = classes > 0 ? total_shards / classes : 0;
  const bool class_pure = classes > 0 && total_shards % classes == 0 &&
                          std::all_of(counts.begin(), counts.end(),
                                      [&](std::size_t c) { return c >= per_class; });
  if (class_pure) {
    std::size_t offset = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t size = counts[c] / per_class;
      for (std::size_t s = 0; s < per_class; ++s) {
        const std::size_t end = s + 1 == per_class ? offset + counts[c] : offset + (s + 1) * size;
        shards.emplace_back(offset + s * size, end);
      }
      offset += counts[c];
    }
  } else {
    const std::size_t size = n / total_shards;
    for (std::size_t s = 0; s < total_shards; ++s) {
      shards.emplace_back(s * size, s + 1 == total_shards ? n : (s + 1) * size);
    }
  }

  auto deal = iota_indices(total_shards);
  Rng rng(seed);
  rng.shuffle(std::span(deal));

  PartitionPlan plan;
  plan.num_clients = num_clients;
  plan.num_classes = ds.num_classes;
  plan.mode = DistributionMode::kNoniidShards;
  plan.shards_per_client = shards_per_client;
  plan.total_shards = total_shards;
  plan.seed = seed;
  for (int k = 0; k < num_clients; ++k) {
    ClientPlan client;
    client.id = k;
    for (std::size_t s = 0; s < shards_per_client; ++s) {
      const auto& [begin, end] = shards[deal[static_cast<std::size_t>(k) * shards_per_client + s]];
      client.indices.insert(client.indices.end(), sorted.begin() + static_cast<std::ptrdiff_t>(begin),
                            sorted.begin() + static_cast<std::ptrdiff_t>(end));
    }
    plan.clients.push_back(std::move(client));
  }
  return plan;
}

PartitionPlan assign_positive_classes(PartitionPlan plan, const Dataset& ds,
                                      std::span<const int> division, bool overlap,
                                      std::uint64_t seed) {
  const int classes = ds.num_classes;
  const auto k_count = static_cast<std::size_t>(plan.num_clients);
  if (division.size() != k_count) {
    throw ConfigError("division has " + std::to_string(division.size()) + " entries for " +
                      std::to_string(k_count) + " clients");
  }
  long long division_sum = 0;
  for (int d : division) {
    if (d < 1) throw ConfigError("every client needs at least one positive class");
    division_sum += d;
  }
  if (!overlap && division_sum > classes) {
    throw InfeasibleError("division sums to " + std::to_string(division_sum) +
                          " positive classes but only " + std::to_string(classes) +
                          " exist; with overlap disabled the sum must equal the class count");
  }

  Rng rng(seed);

  // Classes each client actually holds.
  std::vector<std::vector<int>> available(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    std::vector<char> present(static_cast<std::size_t>(classes), 0);
    for (std::size_t row : plan.clients[k].indices) {
      present[static_cast<std::size_t>(ds.labels[row])] = 1;
    }
    for (int c = 0; c < classes; ++c) {
      if (present[static_cast<std::size_t>(c)]) available[k].push_back(c);
    }
    if (static_cast<int>(available[k].size()) < division[k]) {
      throw InfeasibleError("client " + std::to_string(plan.clients[k].id) + " holds only " +
                            std::to_string(available[k].size()) + " classes but needs " +
                            std::to_string(division[k]) + " positive classes");
    }
  }

  std::vector<std::vector<int>> holders(static_cast<std::size_t>(classes));
  for (std::size_t k = 0; k < k_count; ++k) {
    for (int c : available[k]) holders[static_cast<std::size_t>(c)].push_back(static_cast<int>(k));
  }
  for (auto& h : holders) rng.shuffle(std::span(h));

  std::vector<int> class_order(static_cast<std::size_t>(classes));
  std::iota(class_order.begin(), class_order.end(), 0);
  rng.shuffle(std::span(class_order));

  SlotMatcher matcher(holders, std::vector<int>(division.begin(), division.end()));
  for (int c : class_order) {
    if (holders[static_cast<std::size_t>(c)].empty()) {
      throw InfeasibleError("coverage impossible: class " + std::to_string(c) +
                            " is absent from every client's samples");
    }
    if (!matcher.assign(c)) {
      throw InfeasibleError("coverage impossible: class " + std::to_string(c) +
                            " cannot be given a positive slot in any client holding it");
    }
  }

  for (std::size_t k = 0; k < k_count; ++k) {
    std::vector<int> chosen = matcher.members()[k];
    if (overlap && static_cast<int>(chosen.size()) < division[k]) {
      std::vector<int> pool;
      for (int c : available[k]) {
        if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) pool.push_back(c);
      }
      rng.shuffle(std::span(pool));
      const auto need = static_cast<std::size_t>(division[k]) - chosen.size();
      chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(need));
    }
    std::sort(chosen.begin(), chosen.end());
    plan.clients[k].positive_classes = std::move(chosen);
  }
  plan.overlap = overlap;
  plan.num_classes = classes;
  return plan;
}

ClientDataset::ClientDataset(int id, std::shared_ptr<const Dataset> source,
                             std::vector<int> positive_classes, std::vector<LabeledSample> labeled,
                             std::vector<std::size_t> unlabeled)
    : id_(id),
      source_(std::move(source)),
      positive_(std::move(positive_classes)),
      labeled_(std::move(labeled)),
      unlabeled_(std::move(unlabeled)),
      labeled_counts_(static_cast<std::size_t>(source_->num_classes), 0) {
  std::sort(positive_.begin(), positive_.end());
  for (const auto& s : labeled_) {
    if (!is_positive(s.label)) {
      throw ConfigError("client " + std::to_string(id_) + " has a labeled sample of class " +
                        std::to_string(s.label) + " outside its positive set");
    }
    ++labeled_counts_[static_cast<std::size_t>(s.label)];
  }
}

bool ClientDataset::is_positive(int c) const {
  return std::binary_search(positive_.begin(), positive_.end(), c);
}

std::vector<int> ClientDataset::negative_classes() const {
  std::vector<int> out;
  for (int c = 0; c < num_classes(); ++c) {
    if (!is_positive(c)) out.push_back(c);
  }
  return out;
}

int ClientDataset::oracle_unlabeled_label(std::size_t j) const {
  return source_->labels[unlabeled_.at(j)];
}

std::vector<ClientDataset> label_fraction_split(const PartitionPlan& plan,
                                                std::shared_ptr<const Dataset> ds,
                                                std::span<const double> lambda,
                                                std::uint64_t seed) {
  const auto k_count = static_cast<std::size_t>(plan.num_clients);
  if (lambda.size() != 1 && lambda.size() != k_count) {
    throw ConfigError("labeled fraction needs 1 or K entries");
  }
  std::vector<ClientDataset> out;
  out.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto& cp = plan.clients[k];
    const double lam = lambda.size() == 1 ? lambda[0] : lambda[k];
    if (!(lam > 0.0) || (lam > 1.0 && lam != std::floor(lam))) {
      throw ConfigError("labeled fraction must be in (0,1] or an integer count >= 1");
    }
    if (cp.positive_classes.empty()) {
      throw ConfigError("client " + std::to_string(cp.id) + " has no positive classes assigned");
    }

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds->num_classes));
    for (std::size_t row : cp.indices) {
      by_class[static_cast<std::size_t>(ds->labels[row])].push_back(row);
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cp.id)));
    std::vector<LabeledSample> labeled;
    std::set<std::size_t> labeled_rows;
    std::vector<std::string> warnings;
    for (int c : cp.positive_classes) {
      auto& rows = by_class[static_cast<std::size_t>(c)];
      if (rows.empty()) {
        warnings.push_back("client " + std::to_string(cp.id) + ": positive class " +
                           std::to_string(c) + " has no samples");
        continue;
      }
      rng.shuffle(std::span(rows));
      const auto count = static_cast<double>(rows.size());
      const auto take = static_cast<std::size_t>(
          lam > 1.0 ? std::min(lam, count) : std::floor(lam * count));
      for (std::size_t j = 0; j < take; ++j) {
        labeled.push_back({rows[j], c});
        labeled_rows.insert(rows[j]);
      }
    }
    std::vector<std::size_t> unlabeled;
    unlabeled.reserve(cp.indices.size() - labeled.size());
    for (std::size_t row : cp.indices) {
      if (!labeled_rows.contains(row)) unlabeled.push_back(row);
    }
    ClientDataset client(cp.id, ds, cp.positive_classes, std::move(labeled), std::move(unlabeled));
    client.warnings = std::move(warnings);
    out.push_back(std::move(client));
  }
  return out;
}

std::vector<ClientDataset> label_fraction_split(const PartitionPlan& plan,
                                                std::shared_ptr<const Dataset> ds,
                                                std::uint64_t seed) {
  std::vector<double> lambda;
  for (const auto& cp : plan.clients) lambda.push_back(cp.labeled_fraction);
  return label_fraction_split(plan, std::move(ds), lambda, seed);
}

std::vector<ClientDataset> fully_labeled_clients(const PartitionPlan& plan,
                                                 std::shared_ptr<const Dataset> ds) {
  std::vector<int> all(static_cast<std::size_t>(ds->num_classes));
  std::iota(all.begin(), all.end(), 0);
  std::vector<ClientDataset> out;
  for (const auto& cp : plan.clients) {
    std::vector<LabeledSample> labeled;
    labeled.reserve(cp.indices.size());
    for (std::size_t row : cp.indices) labeled.push_back({row, ds->labels[row]});
    out.emplace_back(cp.id, ds, all, std::move(labeled), std::vector<std::size_t>{});
  }
  return out;
}

}  // namespace fedpu
