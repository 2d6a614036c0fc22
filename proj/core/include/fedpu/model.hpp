#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fedpu/dataset.hpp"

namespace fedpu {

enum class Activation { kRelu };

// Fully connected ReLU network with a softmax head. Parameters are laid out
// layer by layer as W (out x in, row-major) followed by b (out).
struct ArchitectureSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t num_classes = 0;
  Activation activation = Activation::kRelu;

  std::vector<std::size_t> layer_sizes() const;  // input, hidden..., classes
  std::size_t num_layers() const { return hidden.size() + 1; }
  std::size_t num_params() const;
  void validate() const;

  bool operator==(const ArchitectureSpec&) const = default;
};

nlohmann::json to_json(const ArchitectureSpec& arch);
ArchitectureSpec architecture_from_json(const nlohmann::json& doc);

class ParamVector {
 public:
  explicit ParamVector(ArchitectureSpec arch);  // zero-filled
  ParamVector(ArchitectureSpec arch, Eigen::VectorXd values);

  const ArchitectureSpec& arch() const { return arch_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;

  ConstMatrixMap weight(std::size_t layer) const;
  MatrixMap weight(std::size_t layer);
  ConstVectorMap bias(std::size_t layer) const;
  VectorMap bias(std::size_t layer);

  bool all_finite() const { return values_.allFinite(); }

 private:
  std::size_t offset(std::size_t layer) const;

  ArchitectureSpec arch_;
  Eigen::VectorXd values_;
};

// Glorot-uniform weights, zero biases; deterministic in (arch, seed).
ParamVector init_model(const ArchitectureSpec& arch, std::uint64_t seed);

struct BatchOutput {
  RowMatrix scores;  // B x C logits
  RowMatrix probs;   // B x C softmax rows
  // activations[0] is the input batch; activations[l] the ReLU output of layer l.
  std::vector<RowMatrix> activations;

  std::size_t batch_size() const { return static_cast<std::size_t>(probs.rows()); }
};

// Row-max stabilised softmax of every row.
RowMatrix softmax_rows(const RowMatrix& scores);

BatchOutput forward(const ParamVector& params, const Eigen::Ref<const RowMatrix>& batch);

// Gradient of the scalar loss whose derivative w.r.t. the softmax output is
// `upstream` (B x C).
ParamVector backward(const ParamVector& params, const BatchOutput& output,
                     const Eigen::Ref<const RowMatrix>& upstream);

RowMatrix gather_rows(const Dataset& ds, std::span<const std::size_t> rows);

// Checkpoint: `<stem>.bin` holds the parameters as little-endian float64,
// `<stem>.json` the architecture.
void save_params(const ParamVector& params, const std::filesystem::path& stem);
ParamVector load_params(const std::filesystem::path& stem);

}  // namespace fedpu
