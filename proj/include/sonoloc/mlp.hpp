#pragma once

// Small tanh MLP regressor used as a learned distance -> parameter mapping.

#include "sonoloc/geometry.hpp"
#include "sonoloc/sonification.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sonoloc {

// 64-bit generator with a portable double/int draw, so trained weights are
// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();                              // [0,1)
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t n);          // [0,n)
  double normal();                               // standard normal (Box-Muller)

 private:
  std::uint64_t state_;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);  // checks shapes

  // Glorot-uniform weights, zero biases.
  static Mlp init(const std::vector<int>& layer_sizes, std::uint64_t rng_seed);

  std::vector<int> layer_sizes() const;
  std::size_t n_inputs() const;
  std::size_t n_outputs() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  // tanh hidden layers, identity output. Throws ValidationError on a
  // dimension mismatch.
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

 private:
  std::vector<DenseLayer> layers_;
};

struct TrainingSet {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> targets;

  std::size_t size() const { return inputs.size(); }
  void validate(const Mlp& m) const;
};

using Gradient = std::vector<DenseLayer>;

// Gradient of L = 1/(2N) * sum ||forward(x) - y||^2 over the batch.
Gradient backprop_gradient(const Mlp& m, const TrainingSet& set, std::span<const std::size_t> batch);
Gradient backprop_gradient(const Mlp& m, const TrainingSet& set);
double half_mse_loss(const Mlp& m, const TrainingSet& set);
// Mean over examples and outputs of the squared error.
double mse(const Mlp& m, const TrainingSet& set);

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 1000;
  std::size_t batch_size = 16;
  std::uint64_t rng_seed = 1;
  double momentum = 0.9;

  void validate() const;
};

struct TrainResult {
  Mlp model;
  std::vector<double> loss_history;  // per-epoch MSE
};

// Mini-batch SGD with momentum. Throws TrainingDivergedError when the loss
// stops being finite.
TrainResult train(const Mlp& m, const TrainingSet& set, const TrainConfig& cfg);

nlohmann::json mlp_to_json(const Mlp& m);
Mlp mlp_from_json(const nlohmann::json& j);
void save_mlp(const Mlp& m, const std::filesystem::path& path);
Mlp load_mlp(const std::filesystem::path& path);

// Training data CSV: header of in_* and out_* columns, one example per row.
TrainingSet load_training_csv(const std::filesystem::path& path);
void save_training_csv(const TrainingSet& set, const std::filesystem::path& path);

// Per-parameter-group networks (beat group, pad group) standing in for a
// closed-form mapping. Inputs are (d_margin/range, d_seed/range, inside);
// rates are learned as rate / beat_rate_max_hz.
class LearnedMapping {
 public:
  enum class Param { BeatVolume, BeatRate, TimbreMix, PadVolume };

  struct Group {
    std::vector<Param> outputs;
    Mlp net;
  };

  static std::vector<std::vector<Param>> param_groups(ModelKind model);
  static Eigen::VectorXd encode(const DistanceFeatures& f, const MappingConfig& cfg);
  static double normalized(Param p, const SoundParams& s, const MappingConfig& cfg);

  static LearnedMapping fit(ModelKind model, const MappingConfig& cfg,
                            std::span<const DistanceFeatures> features,
                            std::span<const SoundParams> targets, const TrainConfig& train_cfg,
                            int hidden = 16);

  ModelKind model() const { return model_; }
  const std::vector<Group>& groups() const { return groups_; }
  // Network outputs clamped to legal ranges; pitches follow the model.
  SoundParams evaluate(const DistanceFeatures& f) const;

 private:
  ModelKind model_ = ModelKind::Sine;
  MappingConfig cfg_;
  std::vector<Group> groups_;
};

}  // namespace sonoloc
