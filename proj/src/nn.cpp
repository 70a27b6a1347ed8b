#include "cmg/nn.hpp"

#include <cmath>

#include "cmg/errors.hpp"

namespace cmg {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw ValidationError("uniform_index over empty range");
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = (2.0 * uniform01(rng) - 1.0) * bound;
  return m;
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  // Box-Muller over uniform01 keeps draws identical across standard libraries.
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    m(i) = stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  return m;
}

Linear Linear::create(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
                      bool with_bias) {
  Linear l;
  l.weight = params.add(name + ".weight", glorot(in, out, rng));
  l.has_bias = with_bias;
  if (with_bias) l.bias = params.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

ad::Var Linear::operator()(ad::Tape& tape, const ParameterSet& params, const ad::Var& x) const {
  ad::Var y = ad::matmul(x, tape.param(params[weight]));
  return has_bias ? ad::add_row(y, tape.param(params[bias])) : y;
}

LstmCell LstmCell::create(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                          Rng& rng) {
  LstmCell cell;
  cell.hidden = hidden;
  cell.w_input = params.add(name + ".w_input", glorot(in, 4 * hidden, rng));
  cell.w_hidden = params.add(name + ".w_hidden", glorot(hidden, 4 * hidden, rng));
  Matrix b = Matrix::Zero(1, 4 * hidden);
  b.middleCols(hidden, hidden).setOnes();
  cell.bias = params.add(name + ".bias", std::move(b));
  return cell;
}

LstmState LstmCell::zero_state(ad::Tape& tape) const {
  return {tape.constant(Matrix::Zero(1, hidden)), tape.constant(Matrix::Zero(1, hidden))};
}

LstmState LstmCell::step(ad::Tape& tape, const ParameterSet& params, const ad::Var& x,
                         const LstmState& prev) const {
  ad::Var gates = ad::add_row(
      ad::add(ad::matmul(x, tape.param(params[w_input])), ad::matmul(prev.h, tape.param(params[w_hidden]))),
      tape.param(params[bias]));
  ad::Var i = ad::sigmoid(ad::slice_cols(gates, 0, hidden));
  ad::Var f = ad::sigmoid(ad::slice_cols(gates, hidden, hidden));
  ad::Var g = ad::tanh(ad::slice_cols(gates, 2 * hidden, hidden));
  ad::Var o = ad::sigmoid(ad::slice_cols(gates, 3 * hidden, hidden));
  ad::Var c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  ad::Var h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

void Adam::step(ParameterSet& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  if (config_.clip_norm > 0.0) {
    const double n = params.grad_norm();
    if (!std::isfinite(n)) throw NumericError("non-finite gradient norm");
    if (n > config_.clip_norm) params.scale_grad(config_.clip_norm / n);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    if (p.grad.size() != p.value.size()) continue;
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * p.grad;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= config_.learning_rate * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + config_.epsilon);
  }
  params.zero_grad();
}

void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError("non-finite values in " + what);
}

}  // namespace cmg

#include <fstream>

#include "cmg/feature_file.hpp"
#include "json.hpp"

namespace cmg {

void save_parameters(const ParameterSet& params, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  nlohmann::json index = nlohmann::json::array();
  for (const auto& p : params) {
    const std::string file = p.name + ".cmgf";
    write_feature_file(dir / file, to_tensor(p.value));
    index.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"file", file}});
  }
  std::ofstream out(dir / "params.json", std::ios::trunc);
  if (!out) throw IoError("cannot write parameter index in " + dir.string());
  out << nlohmann::json{{"parameters", index}}.dump(1) << '\n';
}

void load_parameters(ParameterSet& params, const std::filesystem::path& dir) {
  std::ifstream in(dir / "params.json");
  if (!in) throw IoError("cannot open parameter index in " + dir.string());
  std::map<std::string, std::string> files;
  try {
    const auto index = nlohmann::json::parse(in);
    for (const auto& e : index.at("parameters"))
      files[e.at("name").get<std::string>()] = e.at("file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed parameter index: " + std::string(e.what()));
  }
  for (auto& p : params) {
    auto it = files.find(p.name);
    if (it == files.end()) throw ValidationError("checkpoint lacks parameter " + p.name);
    Matrix m = to_matrix(read_feature_file(dir / it->second));
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
      throw ValidationError("checkpoint shape mismatch for " + p.name);
    p.value = std::move(m);
  }
  params.zero_grad();
}

}  // namespace cmg
