#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedpu/error.hpp"
#include "fedpu/fedsim.hpp"
#include "fedpu/gradcheck.hpp"
#include "helpers.hpp"

using namespace fedpu;

namespace {

struct Setup {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> test;
  std::vector<ClientDataset> clients;
  std::vector<CrossClientTermTable> tables;
  ClassPriorVector priors = ClassPriorVector::uniform(4);
  ArchitectureSpec arch;
};

Setup make_setup(int clients = 3, double lambda = 0.5, int division = 2, std::uint64_t seed = 1) {
  Setup s;
  s.train = std::make_shared<Dataset>(synth_gaussian(4, 4, 60, 3.0, seed));
  s.test = std::make_shared<Dataset>(synth_gaussian(4, 4, 20, 3.0, seed + 100, Split::kTest));
  PartitionPlan plan = partition_iid(*s.train, clients, seed);
  plan = assign_positive_classes(plan, *s.train, std::vector<int>(static_cast<std::size_t>(clients), division),
                                 true, seed);
  const std::vector<double> l{lambda};
  s.clients = label_fraction_split(plan, s.train, l, seed);
  std::vector<ClientPositiveSet> sets;
  for (const auto& c : s.clients) sets.push_back({c.id(), {c.positive_classes().begin(), c.positive_classes().end()}});
  s.tables = build_cross_client_tables(sets, 4, TableMode::kMultiplicityNormalized);
  s.arch.input_dim = 4;
  s.arch.hidden = {6};
  s.arch.num_classes = 4;
  return s;
}

TrainingConfig small_training(int rounds) {
  TrainingConfig t;
  t.rounds = rounds;
  t.client.batch_size = 20;
  t.client.loss = LossKind::kFedPu;
  t.schedule.initial = 0.1;
  t.seed = 9;
  return t;
}

bool same_logs(const std::vector<RoundLog>& a, const std::vector<RoundLog>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].accuracy != b[i].accuracy || a[i].clients.size() != b[i].clients.size()) return false;
    for (std::size_t k = 0; k < a[i].clients.size(); ++k) {
      if (a[i].clients[k].breakdown.total != b[i].clients[k].breakdown.total) return false;
      if (a[i].clients[k].client_id != b[i].clients[k].client_id) return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("fedsim") {

TEST_CASE("fedavg aggregation") {
  ArchitectureSpec a;
  a.input_dim = 1;
  a.num_classes = 1;
  // a 1->1 map has two parameters; use the first as the scalar under test
  std::vector<WeightedParams> two{{0, ParamVector(a, Eigen::Vector2d(0.0, 0.0)), 1},
                                  {1, ParamVector(a, Eigen::Vector2d(4.0, 4.0)), 3}};
  CHECK(fedavg_aggregate(two).values()(0) == 3.0);

  std::vector<WeightedParams> same{{0, ParamVector(a, Eigen::Vector2d(1.5, -2.0)), 2},
                                   {1, ParamVector(a, Eigen::Vector2d(1.5, -2.0)), 7}};
  CHECK((fedavg_aggregate(same).values() - Eigen::Vector2d(1.5, -2.0)).cwiseAbs().maxCoeff() < 1e-15);

  Rng rng(5);
  ArchitectureSpec b;
  b.input_dim = 3;
  b.hidden = {4};
  b.num_classes = 2;
  std::vector<WeightedParams> many;
  std::size_t total = 0;
  for (int k = 4; k >= 0; --k) {
    const auto n = 1 + rng.below(100);
    total += n;
    many.push_back({k, init_model(b, rng.next()), n});
  }
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.num_params()));
  double weight_sum = 0.0;
  for (const auto& u : many) {
    const double w = static_cast<double>(u.samples) / static_cast<double>(total);
    weight_sum += w;
    expected += w * u.params.values();
  }
  CHECK(std::abs(weight_sum - 1.0) < 1e-15);
  CHECK((fedavg_aggregate(many).values() - expected).cwiseAbs().maxCoeff() < 1e-15);

  std::vector<WeightedParams> mixed{{0, init_model(b, 1), 1}, {1, ParamVector(a), 1}};
  CHECK_THROWS_AS(fedavg_aggregate(mixed), ShapeError);
  CHECK_THROWS_AS(fedavg_aggregate(std::vector<WeightedParams>{}), ConfigError);
}

TEST_CASE("client update: zero lr, determinism, errors") {
  const Setup s = make_setup();
  const ParamVector w = init_model(s.arch, 3);
  ClientRunConfig cfg;
  cfg.batch_size = 16;
  cfg.local_epochs = 2;
  cfg.seed = 77;
  const auto& c = s.clients[0];
  CHECK(client_update(w, c, cfg, s.priors, s.tables[0], 0.0).params.values() == w.values());
  const auto a = client_update(w, c, cfg, s.priors, s.tables[0], 0.05);
  const auto b = client_update(w, c, cfg, s.priors, s.tables[0], 0.05);
  CHECK(a.params.values() == b.params.values());
  CHECK(a.params.values() != w.values());
  CHECK(a.samples == c.total_count());
  CHECK(a.batches == 2 * ((c.total_count() + 15) / 16));

  ClientRunConfig capped = cfg;
  capped.max_batches_per_epoch = 1;
  CHECK(client_update(w, c, capped, s.priors, s.tables[0], 0.05).batches == 2);

  ParamVector bad = w;
  bad.values()(0) = std::nan("");
  CHECK_THROWS_AS(client_update(bad, c, cfg, s.priors, s.tables[0], 0.05), NumericError);

}

TEST_CASE("fedpu on a fully labeled all-positive client follows the supervised path") {
  const Setup s = make_setup(2, 1.0, 4);
  const ParamVector w = init_model(s.arch, 4);
  ClientRunConfig pu;
  pu.batch_size = 10;
  pu.seed = 3;
  ClientRunConfig sup = pu;
  sup.loss = LossKind::kSupervised;
  sup.supervised_form = SupervisedForm::kPriorWeightedSurrogate;
  const auto a = client_update(w, s.clients[0], pu, s.priors, s.tables[0], 0.1);
  const auto b = client_update(w, s.clients[0], sup, s.priors, s.tables[0], 0.1);
  CHECK((a.params.values() - b.params.values()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.params.values() != w.values());
}

TEST_CASE("fedsgd") {
  const Setup s = make_setup(1, 0.5, 4);
  const ParamVector w = init_model(s.arch, 5);
  ClientRunConfig cfg;
  const auto g = full_batch_gradient(w, s.clients[0], cfg, s.priors, s.tables[0]);
  const ParamVector next = fedsgd_round(w, s.clients, s.tables, s.priors, cfg, 0.1);
  CHECK((next.values() - (w.values() - 0.1 * g.gradient)).cwiseAbs().maxCoeff() < 1e-15);

  // Two clients holding the same data behave like one.
  std::vector<ClientDataset> twins{s.clients[0],
                                   ClientDataset(1, s.clients[0].source_ptr(),
                                                 {s.clients[0].positive_classes().begin(), s.clients[0].positive_classes().end()},
                                                 {s.clients[0].labeled().begin(), s.clients[0].labeled().end()},
                                                 {s.clients[0].unlabeled().begin(), s.clients[0].unlabeled().end()})};
  std::vector<CrossClientTermTable> twin_tables{s.tables[0], s.tables[0]};
  twin_tables[1].client_id = 1;
  const ParamVector both = fedsgd_round(w, twins, twin_tables, s.priors, cfg, 0.1);
  CHECK((both.values() - next.values()).cwiseAbs().maxCoeff() < 1e-15);

  CHECK(fedsgd_round(w, s.clients, s.tables, s.priors, cfg, 0.0).values() == w.values());
}

TEST_CASE("fedprox: reduction, shrinking steps, augmented gradient") {
  const Setup s = make_setup();
  const ParamVector w = init_model(s.arch, 6);
  ClientRunConfig cfg;
  cfg.batch_size = 10;
  cfg.seed = 4;
  const auto plain = client_update(w, s.clients[1], cfg, s.priors, s.tables[1], 0.05);
  const auto prox0 = fedprox_client_update(w, s.clients[1], cfg, s.priors, s.tables[1], 0.05, 0.0);
  CHECK(plain.params.values() == prox0.params.values());

  double previous = INFINITY;
  for (double mu : {0.0, 1.0, 1e3, 1e6}) {
    const auto r = fedprox_client_update(w, s.clients[1], cfg, s.priors, s.tables[1], 1e-7, mu);
    const double step = (r.params.values() - w.values()).norm();
    CHECK(step < previous);
    previous = step;
  }
  CHECK_THROWS_AS(fedprox_client_update(w, s.clients[1], cfg, s.priors, s.tables[1], 0.05, -1.0), ConfigError);

  const double mu = 0.7;
  const Eigen::VectorXd anchor = w.values();
  const Eigen::VectorXd at = init_model(s.arch, 7).values();
  const auto loss = [&](const Eigen::VectorXd& v) {
    return full_batch_gradient(ParamVector(s.arch, v), s.clients[1], cfg, s.priors, s.tables[1]).breakdown.total +
           0.5 * mu * (v - anchor).squaredNorm();
  };
  const Eigen::VectorXd analytic =
      full_batch_gradient(ParamVector(s.arch, at), s.clients[1], cfg, s.priors, s.tables[1]).gradient +
      mu * (at - anchor);
  CHECK(gradcheck(at, loss, analytic).max_relative_error < 1e-4);
}

TEST_CASE("straggler schedule") {
  const std::vector<int> ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  for (int round = 0; round < 5; ++round) {
    const auto none = straggler_schedule(ids, 0.0, 3, 1, round);
    CHECK(std::all_of(none.begin(), none.end(), [](int e) { return e == 3; }));
    const auto half = straggler_schedule(ids, 0.5, 3, 1, round);
    CHECK(std::count_if(half.begin(), half.end(), [](int e) { return e < 3; }) == 5);
    CHECK(std::all_of(half.begin(), half.end(), [](int e) { return e >= 1 && e <= 3; }));
    const auto dropped = straggler_schedule(ids, 0.5, 1, 1, round);
    CHECK(std::count(dropped.begin(), dropped.end(), 0) == 5);
  }
  CHECK(straggler_schedule(ids, 0.5, 3, 1, 2) == straggler_schedule(ids, 0.5, 3, 1, 2));

  const Setup s = make_setup();
  TrainingConfig t = small_training(1);
  t.aggregation = AggregationRule::kFedProx;
  t.straggler_fraction = 1.0;
  t.eval_stride = 0;
  try {
    run_training(t, init_model(s.arch, 1), s.clients, s.tables, s.priors, nullptr);
    FAIL("expected an aggregation error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("no participating clients") != std::string::npos);
  }
}

TEST_CASE("run_training: empty run, determinism, order and thread independence") {
  const Setup s = make_setup();
  const ParamVector w0 = init_model(s.arch, 2);
  const auto none = run_training(small_training(0), w0, s.clients, s.tables, s.priors, s.test.get());
  CHECK(none.logs.empty());
  CHECK(none.params.values() == w0.values());

  const TrainingConfig t = small_training(4);
  const auto a = run_training(t, w0, s.clients, s.tables, s.priors, s.test.get());
  const auto b = run_training(t, w0, s.clients, s.tables, s.priors, s.test.get());
  CHECK(a.params.values() == b.params.values());
  CHECK(same_logs(a.logs, b.logs));
  REQUIRE(a.logs.size() == 4);
  CHECK(a.logs[0].round == 1);
  CHECK(a.logs[3].learning_rate == doctest::Approx(0.1 * std::pow(0.995, 3)).epsilon(1e-15));
  std::size_t total = 0;
  for (const auto& c : s.clients) total += c.total_count();
  CHECK(a.logs[0].total_samples() == total);

  std::vector<ClientDataset> reversed(s.clients.rbegin(), s.clients.rend());
  std::vector<CrossClientTermTable> reversed_tables(s.tables.rbegin(), s.tables.rend());
  const auto r = run_training(t, w0, reversed, reversed_tables, s.priors, s.test.get());
  CHECK(r.params.values() == a.params.values());

  TrainingConfig threaded = t;
  threaded.threads = 3;
  CHECK(run_training(threaded, w0, s.clients, s.tables, s.priors, s.test.get()).params.values() == a.params.values());

  TrainingConfig strided = t;
  strided.eval_stride = 3;
  const auto st = run_training(strided, w0, s.clients, s.tables, s.priors, s.test.get());
  CHECK_FALSE(st.logs[0].accuracy.has_value());
  CHECK(st.logs[2].accuracy.has_value());
  CHECK(st.logs[3].accuracy.has_value());
}

TEST_CASE("fedprox with mu 0 reproduces fedavg") {
  const Setup s = make_setup();
  const ParamVector w0 = init_model(s.arch, 2);
  TrainingConfig t = small_training(5);
  const auto avg = run_training(t, w0, s.clients, s.tables, s.priors, s.test.get());
  t.aggregation = AggregationRule::kFedProx;
  const auto prox = run_training(t, w0, s.clients, s.tables, s.priors, s.test.get());
  CHECK(avg.params.values() == prox.params.values());
}

TEST_CASE("a client's update ignores other clients' data") {
  Setup s = make_setup();
  Setup other = make_setup(3, 0.5, 2, 1);
  const ParamVector w0 = init_model(s.arch, 2);
  const TrainingConfig t = small_training(1);
  const auto a = run_training(t, w0, s.clients, s.tables, s.priors, s.test.get());
  // Replace client 2's samples by a different subset of the same source.
  auto& c2 = other.clients[2];
  std::vector<std::size_t> fewer(c2.unlabeled().begin(), c2.unlabeled().begin() + static_cast<std::ptrdiff_t>(c2.unlabeled_count() / 2));
  other.clients[2] = ClientDataset(c2.id(), c2.source_ptr(), {c2.positive_classes().begin(), c2.positive_classes().end()},
                                   {c2.labeled().begin(), c2.labeled().end()}, fewer);
  const auto b = run_training(t, w0, other.clients, other.tables, other.priors, s.test.get());
  CHECK(a.logs[0].clients[0].breakdown.total == b.logs[0].clients[0].breakdown.total);
  CHECK(a.logs[0].clients[1].breakdown.total == b.logs[0].clients[1].breakdown.total);
  CHECK(a.logs[0].clients[2].breakdown.total != b.logs[0].clients[2].breakdown.total);
}

TEST_CASE("training loss falls on separable data") {
  for (LossKind kind : {LossKind::kSupervised, LossKind::kFedPu}) {
    const Setup s = make_setup(2, kind == LossKind::kSupervised ? 1.0 : 0.5, kind == LossKind::kSupervised ? 4 : 2);
    TrainingConfig t = small_training(20);
    t.client.loss = kind;
    t.client.supervised_form = SupervisedForm::kPriorWeightedSurrogate;
    t.eval_stride = 0;
    const auto r = run_training(t, init_model(s.arch, 8), s.clients, s.tables, s.priors, nullptr);
    CHECK(r.logs.back().mean_total() < r.logs.front().mean_total());
  }
}

TEST_CASE("evaluate") {
  ArchitectureSpec a;
  a.input_dim = 3;
  a.num_classes = 3;
  Dataset ds;
  ds.num_classes = 3;
  ds.labels = {0, 1, 2, 1, 0, 2};
  ds.features = RowMatrix::Zero(6, 3);
  for (int r = 0; r < 6; ++r) ds.features(r, ds.labels[static_cast<std::size_t>(r)]) = 1.0;

  ParamVector perfect(a);
  perfect.weight(0) = 10.0 * RowMatrix::Identity(3, 3);
  CHECK(evaluate(perfect, ds) == 1.0);
  CHECK(evaluate(ParamVector(a), ds) == doctest::Approx(2.0 / 6.0));
  ParamVector constant(a);
  constant.bias(0)(2) = 5.0;
  CHECK(evaluate(constant, ds) == doctest::Approx(2.0 / 6.0));
  ds.labels = {1, 1, 1, 0, 0, 2};
  CHECK(evaluate(ParamVector(a), ds) == doctest::Approx(2.0 / 6.0));
  CHECK_THROWS(evaluate(perfect, Dataset{RowMatrix(0, 3), {}, 3, Split::kTest}));
}

TEST_CASE("round log JSON carries the breakdown rows") {
  const Setup s = make_setup();
  const auto r = run_training(small_training(1), init_model(s.arch, 1), s.clients, s.tables, s.priors, s.test.get());
  const auto doc = to_json(r.logs[0]);
  REQUIRE(doc["clients"].size() == 3);
  for (const char* key : {"client", "term_pos", "term_unl", "term_cross", "total", "clamped"}) {
    CHECK(doc["clients"][0].contains(key));
  }
  CHECK(doc["accuracy"].get<double>() >= 0.0);
}

}
