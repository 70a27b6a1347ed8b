#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <map>
#include <string>

#include "cmg/autodiff.hpp"

namespace cmg {

using Rng = std::mt19937_64;

/// Glorot-uniform initialised rows x cols matrix.
Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
/// Uniform double in [0, 1) built from raw engine output, identical across standard libraries.
double uniform01(Rng& rng);
/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Fully-connected layer x W + b on row vectors.
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  bool has_bias = true;

  static Linear create(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
                       bool with_bias = true);
  ad::Var operator()(ad::Tape& tape, const ParameterSet& params, const ad::Var& x) const;
};

struct LstmState {
  ad::Var h;
  ad::Var c;
};

/// Single LSTM cell with gate order (input, forget, cell, output).
struct LstmCell {
  std::size_t w_input = 0;
  std::size_t w_hidden = 0;
  std::size_t bias = 0;
  Eigen::Index hidden = 0;

  static LstmCell create(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                         Rng& rng);
  LstmState zero_state(ad::Tape& tape) const;
  LstmState step(ad::Tape& tape, const ParameterSet& params, const ad::Var& x, const LstmState& prev) const;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; <= 0 disables.
  double clip_norm = 5.0;
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}
  /// Applies one update from the accumulated grads, then zeroes them.
  void step(ParameterSet& params);
  const AdamConfig& config() const { return config_; }
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

/// Throws NumericError naming `what` when any entry is NaN or infinite.
void require_finite(const Matrix& m, const std::string& what);

}  // namespace cmg

namespace cmg {

/// Writes each parameter as <dir>/<name>.cmgf (float32) plus <dir>/params.json.
void save_parameters(const ParameterSet& params, const std::filesystem::path& dir);
/// Loads values by name; every parameter in `params` must be present with matching shape.
void load_parameters(ParameterSet& params, const std::filesystem::path& dir);

}  // namespace cmg
