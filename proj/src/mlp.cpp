#include "sonoloc/mlp.hpp"

#include "sonoloc/errors.hpp"
#include "sonoloc/geometry_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace sonoloc {

using nlohmann::json;

namespace {
constexpr int kModelFileVersion = 1;
}

std::uint64_t Rng::next() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r;
  do {
    r = next();
  } while (r >= limit);
  return r % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ValidationError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.rows() < 1 || l.weights.cols() < 1)
      throw ValidationError("layer " + std::to_string(i) + " has zero size");
    if (l.biases.size() != l.weights.rows())
      throw ValidationError("layer " + std::to_string(i) + " bias size mismatch");
    if (i > 0 && l.weights.cols() != layers_[i - 1].weights.rows())
      throw ValidationError("layer " + std::to_string(i) + " input size mismatch");
    if (!l.weights.allFinite() || !l.biases.allFinite())
      throw ValidationError("layer " + std::to_string(i) + " has non-finite values");
  }
}

Mlp Mlp::init(const std::vector<int>& sizes, std::uint64_t rng_seed) {
  if (sizes.size() < 2) throw ValidationError("need at least input and output sizes");
  for (int s : sizes)
    if (s < 1) throw ValidationError("layer sizes must be >= 1");
  Rng rng(rng_seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int fan_in = sizes[i], fan_out = sizes[i + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    DenseLayer l{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) l.weights(r, c) = rng.uniform(-limit, limit);
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

std::vector<int> Mlp::layer_sizes() const {
  std::vector<int> sizes;
  if (layers_.empty()) return sizes;
  sizes.push_back(static_cast<int>(layers_.front().weights.cols()));
  for (const auto& l : layers_) sizes.push_back(static_cast<int>(l.weights.rows()));
  return sizes;
}

std::size_t Mlp::n_inputs() const { return layers_.empty() ? 0 : layers_.front().weights.cols(); }
std::size_t Mlp::n_outputs() const { return layers_.empty() ? 0 : layers_.back().weights.rows(); }

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != n_inputs())
    throw ValidationError("input has " + std::to_string(x.size()) + " values, network expects " +
                          std::to_string(n_inputs()));
  Eigen::VectorXd h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].weights * h + layers_[i].biases;
    if (i + 1 < layers_.size()) h = h.array().tanh();
  }
  return h;
}

void TrainingSet::validate(const Mlp& m) const {
  if (inputs.empty()) throw ValidationError("training set is empty");
  if (inputs.size() != targets.size()) throw ValidationError("inputs/targets count mismatch");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (static_cast<std::size_t>(inputs[i].size()) != m.n_inputs() ||
        static_cast<std::size_t>(targets[i].size()) != m.n_outputs())
      throw ValidationError("example " + std::to_string(i) + " does not match network dimensions");
  }
}

namespace {

Gradient zero_like(const Mlp& m) {
  Gradient g;
  for (const auto& l : m.layers())
    g.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                 Eigen::VectorXd::Zero(l.biases.size())});
  return g;
}

}  // namespace

Gradient backprop_gradient(const Mlp& m, const TrainingSet& set, std::span<const std::size_t> batch) {
  if (batch.empty()) throw ValidationError("gradient batch is empty");
  set.validate(m);
  const auto& layers = m.layers();
  const std::size_t depth = layers.size();
  Gradient g = zero_like(m);
  std::vector<Eigen::VectorXd> acts(depth + 1);

  for (std::size_t idx : batch) {
    if (idx >= set.size()) throw ValidationError("batch index out of range");
    acts[0] = set.inputs[idx];
    for (std::size_t i = 0; i < depth; ++i) {
      Eigen::VectorXd z = layers[i].weights * acts[i] + layers[i].biases;
      acts[i + 1] = (i + 1 < depth) ? Eigen::VectorXd(z.array().tanh()) : z;
    }
    Eigen::VectorXd delta = acts[depth] - set.targets[idx];
    for (std::size_t i = depth; i-- > 0;) {
      g[i].weights.noalias() += delta * acts[i].transpose();
      g[i].biases += delta;
      if (i > 0) {
        delta = (layers[i].weights.transpose() * delta).array() *
                (1.0 - acts[i].array().square());
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto& l : g) {
    l.weights *= scale;
    l.biases *= scale;
  }
  return g;
}

Gradient backprop_gradient(const Mlp& m, const TrainingSet& set) {
  std::vector<std::size_t> all(set.size());
  std::iota(all.begin(), all.end(), 0);
  return backprop_gradient(m, set, all);
}

double half_mse_loss(const Mlp& m, const TrainingSet& set) {
  double sum = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i)
    sum += (m.forward(set.inputs[i]) - set.targets[i]).squaredNorm();
  return 0.5 * sum / static_cast<double>(set.size());
}

double mse(const Mlp& m, const TrainingSet& set) {
  return 2.0 * half_mse_loss(m, set) / static_cast<double>(m.n_outputs());
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be positive");
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(momentum >= 0 && momentum < 1)) throw ValidationError("momentum must be in [0,1)");
}

TrainResult train(const Mlp& initial, const TrainingSet& set, const TrainConfig& cfg) {
  cfg.validate();
  set.validate(initial);
  TrainResult result{initial, {}};
  Mlp& m = result.model;
  Gradient velocity = zero_like(m);
  Rng rng(cfg.rng_seed);

  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::min(cfg.batch_size, set.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < set.size()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      const Gradient g =
          backprop_gradient(m, set, std::span<const std::size_t>(order).subspan(start, len));
      auto& layers = m.layers();
      for (std::size_t i = 0; i < layers.size(); ++i) {
        velocity[i].weights = cfg.momentum * velocity[i].weights - cfg.learning_rate * g[i].weights;
        velocity[i].biases = cfg.momentum * velocity[i].biases - cfg.learning_rate * g[i].biases;
        layers[i].weights += velocity[i].weights;
        layers[i].biases += velocity[i].biases;
      }
    }
    const double loss = mse(m, set);
    if (!std::isfinite(loss))
      throw TrainingDivergedError("training diverged at epoch " + std::to_string(epoch));
    result.loss_history.push_back(loss);
  }
  return result;
}

json mlp_to_json(const Mlp& m) {
  json layers = json::array();
  for (const auto& l : m.layers()) {
    json w = json::array();
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    json b = json::array();
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) b.push_back(l.biases(r));
    layers.push_back({{"weights", w}, {"biases", b}});
  }
  return {{"format", "sonoloc-mlp"},
          {"version", kModelFileVersion},
          {"layer_sizes", m.layer_sizes()},
          {"hidden_activation", "tanh"},
          {"layers", layers}};
}

Mlp mlp_from_json(const json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kModelFileVersion)
      throw UnsupportedVersionError("unsupported model file version " + std::to_string(version));
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    const json& jl = j.at("layers");
    if (sizes.size() < 2 || jl.size() != sizes.size() - 1)
      throw ParseError("layer count does not match layer_sizes");
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const int in = sizes[i], out = sizes[i + 1];
      if (in < 1 || out < 1) throw ParseError("layer sizes must be >= 1");
      const auto w = jl[i].at("weights").get<std::vector<double>>();
      const auto b = jl[i].at("biases").get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(in) * out || b.size() != static_cast<std::size_t>(out))
        throw ParseError("layer " + std::to_string(i) + " array sizes do not match layer_sizes");
      DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
      for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) l.weights(r, c) = w[static_cast<std::size_t>(r) * in + c];
        l.biases(r) = b[r];
      }
      layers.push_back(std::move(l));
    }
    return Mlp(std::move(layers));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

void save_mlp(const Mlp& m, const std::filesystem::path& path) {
  write_text_file(path, mlp_to_json(m).dump() + "\n");
}

Mlp load_mlp(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model file is not JSON: ") + e.what());
  }
  return mlp_from_json(j);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace

TrainingSet load_training_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ParseError("training data is empty", 1);
  const auto header = split_csv(line);
  std::vector<bool> is_input;
  std::size_t n_in = 0, n_out = 0;
  for (const auto& h : header) {
    if (h.rfind("in_", 0) == 0) {
      is_input.push_back(true);
      ++n_in;
    } else if (h.rfind("out_", 0) == 0) {
      is_input.push_back(false);
      ++n_out;
    } else {
      throw ParseError("column '" + h + "' is neither in_* nor out_*", 1);
    }
  }
  if (n_in == 0 || n_out == 0) throw ParseError("need at least one in_ and one out_ column", 1);

  TrainingSet set;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw ParseError("wrong number of columns", lineno);
    Eigen::VectorXd x(n_in), y(n_out);
    std::size_t xi = 0, yi = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError("bad number '" + cells[c] + "'", lineno);
      }
      (is_input[c] ? x(xi++) : y(yi++)) = v;
    }
    set.inputs.push_back(std::move(x));
    set.targets.push_back(std::move(y));
  }
  if (set.inputs.empty()) throw ParseError("training data has no rows", lineno);
  return set;
}

void save_training_csv(const TrainingSet& set, const std::filesystem::path& path) {
  if (set.inputs.empty()) throw ValidationError("training set is empty");
  std::ostringstream out;
  out.precision(17);
  const auto n_in = set.inputs.front().size(), n_out = set.targets.front().size();
  for (Eigen::Index i = 0; i < n_in; ++i) out << (i ? "," : "") << "in_" << i;
  for (Eigen::Index i = 0; i < n_out; ++i) out << ",out_" << i;
  out << "\n";
  for (std::size_t r = 0; r < set.size(); ++r) {
    for (Eigen::Index i = 0; i < n_in; ++i) out << (i ? "," : "") << set.inputs[r](i);
    for (Eigen::Index i = 0; i < n_out; ++i) out << "," << set.targets[r](i);
    out << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<std::vector<LearnedMapping::Param>> LearnedMapping::param_groups(ModelKind model) {
  switch (model) {
    case ModelKind::Beep1:
    case ModelKind::Beep2: return {{Param::BeatVolume, Param::BeatRate}};
    case ModelKind::Rhythm: return {{Param::BeatVolume, Param::TimbreMix}};
    case ModelKind::Synth: return {{Param::BeatVolume, Param::BeatRate}, {Param::PadVolume}};
    case ModelKind::Sine: return {{Param::BeatVolume, Param::BeatRate}, {Param::PadVolume}};
  }
  return {};
}

Eigen::VectorXd LearnedMapping::encode(const DistanceFeatures& f, const MappingConfig& cfg) {
  Eigen::VectorXd x(3);
  x << f.d_margin_mm / cfg.range_mm, f.d_seed_mm / cfg.range_mm, f.inside ? 1.0 : 0.0;
  return x;
}

double LearnedMapping::normalized(Param p, const SoundParams& s, const MappingConfig& cfg) {
  switch (p) {
    case Param::BeatVolume: return s.beat_volume;
    case Param::BeatRate: return s.beat_rate_hz / cfg.beat_rate_max_hz;
    case Param::TimbreMix: return s.timbre_mix;
    case Param::PadVolume: return s.pad_volume;
  }
  return 0.0;
}

LearnedMapping LearnedMapping::fit(ModelKind model, const MappingConfig& cfg,
                                   std::span<const DistanceFeatures> features,
                                   std::span<const SoundParams> targets,
                                   const TrainConfig& train_cfg, int hidden) {
  if (features.size() != targets.size()) throw ValidationError("features/targets count mismatch");
  LearnedMapping lm;
  lm.model_ = model;
  lm.cfg_ = cfg;
  std::uint64_t seed = train_cfg.rng_seed;
  for (const auto& outputs : param_groups(model)) {
    TrainingSet set;
    for (std::size_t i = 0; i < features.size(); ++i) {
      set.inputs.push_back(encode(features[i], cfg));
      Eigen::VectorXd y(outputs.size());
      for (std::size_t k = 0; k < outputs.size(); ++k) y(k) = normalized(outputs[k], targets[i], cfg);
      set.targets.push_back(std::move(y));
    }
    const Mlp init =
        Mlp::init({3, hidden, hidden, static_cast<int>(outputs.size())}, seed);
    TrainConfig tc = train_cfg;
    tc.rng_seed = seed;
    lm.groups_.push_back({outputs, train(init, set, tc).model});
    ++seed;
  }
  return lm;
}

SoundParams LearnedMapping::evaluate(const DistanceFeatures& f) const {
  // Start from the closed form so pitches and fixed fields follow the model.
  SoundParams out = map_params(model_, f, cfg_);
  const Eigen::VectorXd x = encode(f, cfg_);
  for (const auto& g : groups_) {
    const Eigen::VectorXd y = g.net.forward(x);
    for (std::size_t k = 0; k < g.outputs.size(); ++k) {
      const double v = std::clamp(y(static_cast<Eigen::Index>(k)), 0.0, 1.0);
      switch (g.outputs[k]) {
        case Param::BeatVolume: out.beat_volume = v; break;
        case Param::BeatRate: out.beat_rate_hz = v * cfg_.beat_rate_max_hz; break;
        case Param::TimbreMix: out.timbre_mix = v; break;
        case Param::PadVolume: out.pad_volume = v; break;
      }
    }
  }
  return out;
}

}  // namespace sonoloc
