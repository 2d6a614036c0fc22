#include "fedpu/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "fedpu/error.hpp"
#include "fedpu/rng.hpp"

namespace fedpu {

std::vector<std::size_t> ArchitectureSpec::layer_sizes() const {
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(num_classes);
  return sizes;
}

std::size_t ArchitectureSpec::num_params() const {
  const auto sizes = layer_sizes();
  std::size_t total = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) total += sizes[l] * sizes[l - 1] + sizes[l];
  return total;
}

void ArchitectureSpec::validate() const {
  for (std::size_t s : layer_sizes()) {
    if (s < 1) throw ConfigError("architecture layer sizes must be >= 1");
  }
}

nlohmann::json to_json(const ArchitectureSpec& arch) {
  return {{"input_dim", arch.input_dim},
          {"hidden", arch.hidden},
          {"num_classes", arch.num_classes},
          {"activation", "relu"},
          {"init", "uniform_glorot"},
          {"num_params", arch.num_params()}};
}

ArchitectureSpec architecture_from_json(const nlohmann::json& doc) {
  ArchitectureSpec arch;
  try {
    arch.input_dim = doc.at("input_dim").get<std::size_t>();
    arch.hidden = doc.value("hidden", std::vector<std::size_t>{});
    arch.num_classes = doc.at("num_classes").get<std::size_t>();
    if (doc.value("activation", std::string("relu")) != "relu") {
      throw ConfigError("only relu activation is supported");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed architecture: ") + e.what());
  }
  arch.validate();
  return arch;
}

ParamVector::ParamVector(ArchitectureSpec arch)
    : arch_(std::move(arch)),
      values_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch_.num_params()))) {
  arch_.validate();
}

ParamVector::ParamVector(ArchitectureSpec arch, Eigen::VectorXd values)
    : arch_(std::move(arch)), values_(std::move(values)) {
  arch_.validate();
  if (static_cast<std::size_t>(values_.size()) != arch_.num_params()) {
    throw ShapeError("parameter vector has " + std::to_string(values_.size()) +
                     " entries, architecture needs " + std::to_string(arch_.num_params()));
  }
}

std::size_t ParamVector::offset(std::size_t layer) const {
  const auto sizes = arch_.layer_sizes();
  std::size_t off = 0;
  for (std::size_t l = 1; l <= layer; ++l) off += sizes[l] * sizes[l - 1] + sizes[l];
  return off;
}

ParamVector::ConstMatrixMap ParamVector::weight(std::size_t layer) const {
  const auto sizes = arch_.layer_sizes();
  return {values_.data() + offset(layer), static_cast<Eigen::Index>(sizes[layer + 1]),
          static_cast<Eigen::Index>(sizes[layer])};
}

ParamVector::MatrixMap ParamVector::weight(std::size_t layer) {
  const auto sizes = arch_.layer_sizes();
  return {values_.data() + offset(layer), static_cast<Eigen::Index>(sizes[layer + 1]),
          static_cast<Eigen::Index>(sizes[layer])};
}

ParamVector::ConstVectorMap ParamVector::bias(std::size_t layer) const {
  const auto sizes = arch_.layer_sizes();
  return {values_.data() + offset(layer) + sizes[layer + 1] * sizes[layer],
          static_cast<Eigen::Index>(sizes[layer + 1])};
}

ParamVector::VectorMap ParamVector::bias(std::size_t layer) {
  const auto sizes = arch_.layer_sizes();
  return {values_.data() + offset(layer) + sizes[layer + 1] * sizes[layer],
          static_cast<Eigen::Index>(sizes[layer + 1])};
}

ParamVector init_model(const ArchitectureSpec& arch, std::uint64_t seed) {
  ParamVector params(arch);
  Rng rng(seed);
  const auto sizes = arch.layer_sizes();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
    auto w = params.weight(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  }
  return params;
}

RowMatrix softmax_rows(const RowMatrix& scores) {
  RowMatrix probs(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double top = scores.row(r).maxCoeff();
    probs.row(r) = (scores.row(r).array() - top).exp();
    probs.row(r) /= probs.row(r).sum();
  }
  return probs;
}

BatchOutput forward(const ParamVector& params, const Eigen::Ref<const RowMatrix>& batch) {
  const auto& arch = params.arch();
  if (static_cast<std::size_t>(batch.cols()) != arch.input_dim) {
    throw ShapeError("batch has " + std::to_string(batch.cols()) + " features, model expects " +
                     std::to_string(arch.input_dim));
  }
  if (!batch.allFinite()) throw NumericError("non-finite value in forward() input");

  BatchOutput out;
  out.activations.reserve(arch.num_layers());
  out.activations.emplace_back(batch);
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    RowMatrix z = out.activations.back() * params.weight(l).transpose();
    z.rowwise() += params.bias(l).transpose();
    if (l + 1 == arch.num_layers()) {
      out.scores = std::move(z);
    } else {
      out.activations.emplace_back(z.cwiseMax(0.0));
    }
  }
  out.probs = softmax_rows(out.scores);
  return out;
}

ParamVector backward(const ParamVector& params, const BatchOutput& output,
                     const Eigen::Ref<const RowMatrix>& upstream) {
  if (upstream.rows() != output.probs.rows() || upstream.cols() != output.probs.cols()) {
    throw ShapeError("upstream gradient is " + std::to_string(upstream.rows()) + "x" +
                     std::to_string(upstream.cols()) + ", expected " +
                     std::to_string(output.probs.rows()) + "x" +
                     std::to_string(output.probs.cols()));
  }
  ParamVector grad(params.arch());
  // dL/dz = p * (g - <g, p>) per row.
  const Eigen::VectorXd inner = (upstream.array() * output.probs.array()).rowwise().sum();
  RowMatrix delta =
      output.probs.array() * (upstream.array().colwise() - inner.array());

  for (std::size_t l = params.arch().num_layers(); l-- > 0;) {
    const RowMatrix& input = output.activations[l];
    grad.weight(l).noalias() = delta.transpose() * input;
    grad.bias(l) = delta.colwise().sum().transpose();
    if (l > 0) {
      RowMatrix prev = delta * params.weight(l);
      delta = (input.array() > 0.0).select(prev, 0.0);
    }
  }
  return grad;
}

RowMatrix gather_rows(const Dataset& ds, std::span<const std::size_t> rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = ds.features.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return stem.string() + suffix;
}

}  // namespace

void save_params(const ParamVector& params, const std::filesystem::path& stem) {
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw FormatError("cannot write " + with_suffix(stem, ".bin").string());
  for (double v : params.values()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    bin.write(bytes, 8);
  }
  std::ofstream side(with_suffix(stem, ".json"));
  side << to_json(params.arch()).dump(2) << '\n';
}

ParamVector load_params(const std::filesystem::path& stem) {
  std::ifstream side(with_suffix(stem, ".json"));
  if (!side) throw FormatError("cannot read " + with_suffix(stem, ".json").string());
  nlohmann::json doc;
  try {
    side >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint sidecar: ") + e.what());
  }
  ParamVector params(architecture_from_json(doc));
  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw FormatError("cannot read " + with_suffix(stem, ".bin").string());
  std::vector<char> bytes{std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>()};
  if (bytes.size() != params.size() * 8) {
    throw ConsistencyError("checkpoint blob has " + std::to_string(bytes.size()) +
                           " bytes, architecture needs " + std::to_string(params.size() * 8));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= std::uint64_t{static_cast<unsigned char>(bytes[i * 8 + b])} << (8 * b);
    }
    params.values()[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(bits);
  }
  return params;
}

}  // namespace fedpu
