#include "ntd/mdp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ntd {

namespace {

using nlohmann::json;

std::string where(const char* what, std::size_t a, std::size_t s) {
  std::ostringstream os;
  os << what << "[" << a << "][" << s << "]";
  return os.str();
}

Matrix read_matrix(const json& j, const char* key, std::size_t rows, std::size_t cols) {
  if (!j.contains(key)) throw ParseError(std::string("missing key '") + key + "'");
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.size() != rows) {
    std::ostringstream os;
    os << "'" << key << "' must be an array of " << rows << " rows";
    throw ParseError(os.str());
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = arr[r];
    if (!row.is_array() || row.size() != cols) {
      std::ostringstream os;
      os << "'" << key << "' row " << r << " must have " << cols << " entries";
      throw ParseError(os.str());
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) {
        std::ostringstream os;
        os << "'" << key << "'[" << r << "][" << c << "] is not a number";
        throw ParseError(os.str());
      }
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

std::vector<Matrix> read_tensor(const json& j, const char* key, std::size_t actions, std::size_t states) {
  if (!j.contains(key)) throw ParseError(std::string("missing key '") + key + "'");
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.size() != actions) {
    std::ostringstream os;
    os << "'" << key << "' must hold one " << states << "x" << states << " block per action ("
       << actions << ")";
    throw ParseError(os.str());
  }
  std::vector<Matrix> out;
  out.reserve(actions);
  for (std::size_t a = 0; a < actions; ++a) {
    json wrapper = {{key, arr[a]}};
    out.push_back(read_matrix(wrapper, key, states, states));
  }
  return out;
}

void check_policy(const Matrix& policy, const char* name) {
  for (std::size_t s = 0; s < policy.rows(); ++s) {
    double sum = 0.0;
    for (std::size_t a = 0; a < policy.cols(); ++a) {
      const double p = policy(s, a);
      if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
        throw ValidationError(where(name, s, a) + " must lie in [0,1]");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kStochasticTol) {
      std::ostringstream os;
      os << name << " row " << s << " not stochastic (sums to " << sum << ")";
      throw ValidationError(os.str());
    }
  }
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

// Least-squares solution of a full-column-rank system by Householder QR.
Vector least_squares(Matrix a, Vector b) {
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  for (std::size_t k = 0; k < cols; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < rows; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) throw SingularMatrixError("least_squares: rank-deficient system");
    const double alpha = a(k, k) > 0 ? -norm : norm;
    Vector v(rows, 0.0);
    v[k] = a(k, k) - alpha;
    for (std::size_t i = k + 1; i < rows; ++i) v[i] = a(i, k);
    double vv = 0.0;
    for (std::size_t i = k; i < rows; ++i) vv += v[i] * v[i];
    if (vv == 0.0) continue;
    for (std::size_t j = k; j < cols; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < rows; ++i) s += v[i] * a(i, j);
      s = 2.0 * s / vv;
      for (std::size_t i = k; i < rows; ++i) a(i, j) -= s * v[i];
    }
    double s = 0.0;
    for (std::size_t i = k; i < rows; ++i) s += v[i] * b[i];
    s = 2.0 * s / vv;
    for (std::size_t i = k; i < rows; ++i) b[i] -= s * v[i];
  }
  Vector x(cols);
  for (std::size_t i = cols; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < cols; ++j) s -= a(i, j) * x[j];
    if (a(i, i) == 0.0) throw SingularMatrixError("least_squares: rank-deficient system");
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace

MdpSpec parse_mdp_spec(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("MDP document must be a JSON object");

  MdpSpec spec;
  try {
    for (const char* key : {"num_states", "num_actions", "gamma"}) {
      if (!j.contains(key)) throw ParseError(std::string("missing key '") + key + "'");
    }
    if (!j.at("num_states").is_number_integer() || j.at("num_states").get<long long>() < 1) {
      throw ParseError("'num_states' must be a positive integer");
    }
    if (!j.at("num_actions").is_number_integer() || j.at("num_actions").get<long long>() < 1) {
      throw ParseError("'num_actions' must be a positive integer");
    }
    if (!j.at("gamma").is_number()) throw ParseError("'gamma' must be a number");
    spec.num_states = j.at("num_states").get<std::size_t>();
    spec.num_actions = j.at("num_actions").get<std::size_t>();
    spec.discount = j.at("gamma").get<double>();
    spec.transition = read_tensor(j, "transition", spec.num_actions, spec.num_states);
    spec.reward = read_tensor(j, "reward", spec.num_actions, spec.num_states);

    if (!j.contains("features") || !j.at("features").is_array() || j.at("features").empty() ||
        !j.at("features")[0].is_array()) {
      throw ParseError("'features' must be a non-empty array of rows");
    }
    const std::size_t m = j.at("features")[0].size();
    if (m == 0) throw ParseError("'features' rows must be non-empty");
    spec.features = read_matrix(j, "features", spec.num_states, m);
    spec.target_policy = read_matrix(j, "target_policy", spec.num_states, spec.num_actions);
    spec.behavior_policy = read_matrix(j, "behavior_policy", spec.num_states, spec.num_actions);
    if (j.contains("state_weights") && !j.at("state_weights").is_null()) {
      const json& w = j.at("state_weights");
      if (!w.is_array() || w.size() != spec.num_states) {
        throw ParseError("'state_weights' must be an array of num_states numbers");
      }
      Vector weights;
      for (const auto& v : w) {
        if (!v.is_number()) throw ParseError("'state_weights' entries must be numbers");
        weights.push_back(v.get<double>());
      }
      spec.state_weights = std::move(weights);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed MDP document: ") + e.what());
  }
  validate(spec);
  return spec;
}

MdpSpec load_mdp_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open MDP file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_mdp_spec(buf.str());
}

std::string to_json_text(const MdpSpec& spec) {
  json j;
  j["num_states"] = spec.num_states;
  j["num_actions"] = spec.num_actions;
  j["gamma"] = spec.discount;
  json p = json::array();
  json r = json::array();
  for (std::size_t a = 0; a < spec.num_actions; ++a) {
    p.push_back(matrix_to_json(spec.transition[a]));
    r.push_back(matrix_to_json(spec.reward[a]));
  }
  j["transition"] = p;
  j["reward"] = r;
  j["features"] = matrix_to_json(spec.features);
  j["target_policy"] = matrix_to_json(spec.target_policy);
  j["behavior_policy"] = matrix_to_json(spec.behavior_policy);
  if (spec.state_weights) j["state_weights"] = *spec.state_weights;
  return j.dump(2);
}

void validate(const MdpSpec& spec) {
  const std::size_t ns = spec.num_states;
  const std::size_t na = spec.num_actions;
  if (ns == 0 || na == 0) throw ValidationError("num_states and num_actions must be positive");
  if (!(spec.discount > 0.0 && spec.discount < 1.0)) {
    throw ValidationError("gamma must lie strictly between 0 and 1");
  }
  if (spec.transition.size() != na || spec.reward.size() != na) {
    throw ValidationError("transition/reward must have one block per action");
  }
  for (std::size_t a = 0; a < na; ++a) {
    const Matrix& p = spec.transition[a];
    if (p.rows() != ns || p.cols() != ns) throw ValidationError("transition block has wrong shape");
    for (std::size_t s = 0; s < ns; ++s) {
      double sum = 0.0;
      for (std::size_t t = 0; t < ns; ++t) {
        if (!std::isfinite(p(s, t)) || p(s, t) < 0.0) {
          std::ostringstream os;
          os << "transition[" << a << "][" << s << "][" << t << "] is negative or non-finite";
          throw ValidationError(os.str());
        }
        if (!std::isfinite(spec.reward[a](s, t))) {
          std::ostringstream os;
          os << "reward[" << a << "][" << s << "][" << t << "] is non-finite";
          throw ValidationError(os.str());
        }
        sum += p(s, t);
      }
      if (std::abs(sum - 1.0) > kStochasticTol) {
        std::ostringstream os;
        os << where("transition", a, s) << " row not stochastic (sums to " << sum << ")";
        throw ValidationError(os.str());
      }
    }
  }
  if (spec.target_policy.rows() != ns || spec.target_policy.cols() != na ||
      spec.behavior_policy.rows() != ns || spec.behavior_policy.cols() != na) {
    throw ValidationError("policies must be num_states x num_actions");
  }
  check_policy(spec.target_policy, "target_policy");
  check_policy(spec.behavior_policy, "behavior_policy");
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t a = 0; a < na; ++a) {
      if (spec.target_policy(s, a) > 0.0 && spec.behavior_policy(s, a) <= 0.0) {
        throw ValidationError(where("behavior_policy", s, a) +
                              " is zero where the target policy is positive");
      }
    }
  }
  if (spec.features.rows() != ns || spec.features.cols() == 0) {
    throw ValidationError("features must have num_states rows");
  }
  for (double v : spec.features.data()) {
    if (!std::isfinite(v)) throw ValidationError("features contain a non-finite entry");
  }
  if (spec.features.cols() > ns || !full_column_rank(spec.features)) {
    throw ValidationError("feature matrix is rank-deficient");
  }
  if (spec.state_weights) {
    const Vector& w = *spec.state_weights;
    if (w.size() != ns) throw ValidationError("state_weights must have num_states entries");
    double sum = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      if (!(w[s] > 0.0) || !std::isfinite(w[s])) {
        std::ostringstream os;
        os << "state_weights[" << s << "] must be positive";
        throw ValidationError(os.str());
      }
      sum += w[s];
    }
    if (std::abs(sum - 1.0) > kStochasticTol) throw ValidationError("state_weights must sum to 1");
  }
}

Matrix induced_transition(const MdpSpec& spec, const Matrix& policy) {
  Matrix m(spec.num_states, spec.num_states);
  for (std::size_t s = 0; s < spec.num_states; ++s)
    for (std::size_t a = 0; a < spec.num_actions; ++a) {
      const double w = policy(s, a);
      if (w == 0.0) continue;
      for (std::size_t t = 0; t < spec.num_states; ++t) m(s, t) += w * spec.transition[a](s, t);
    }
  return m;
}

Vector expected_reward(const MdpSpec& spec, const Matrix& policy) {
  Vector r(spec.num_states, 0.0);
  for (std::size_t s = 0; s < spec.num_states; ++s)
    for (std::size_t a = 0; a < spec.num_actions; ++a) {
      double inner = 0.0;
      for (std::size_t t = 0; t < spec.num_states; ++t)
        inner += spec.transition[a](s, t) * spec.reward[a](s, t);
      r[s] += policy(s, a) * inner;
    }
  return r;
}

void require_irreducible(const Matrix& chain) {
  const std::size_t n = chain.rows();
  // reach(i, j): j reachable from i along positive entries.
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    reach[i][i] = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (chain(i, j) > 0.0) reach[i][j] = 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      if (reach[i][k])
        for (std::size_t j = 0; j < n; ++j)
          if (reach[k][j]) reach[i][j] = 1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!reach[i][j]) {
        std::ostringstream os;
        os << "chain is reducible: state " << j << " is unreachable from state " << i;
        throw ValidationError(os.str());
      }
}

Vector stationary_distribution(const Matrix& chain) {
  if (!chain.square() || chain.rows() == 0) throw PreconditionError("chain must be square");
  require_irreducible(chain);
  const std::size_t n = chain.rows();
  Matrix a(n + 1, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = chain(j, i) - (i == j ? 1.0 : 0.0);
  for (std::size_t j = 0; j < n; ++j) a(n, j) = 1.0;
  Vector b(n + 1, 0.0);
  b[n] = 1.0;
  Vector d = least_squares(a, b);
  // one step of iterative refinement
  Vector residual = linalg::subtract(b, a * d);
  const Vector corr = least_squares(a, residual);
  for (std::size_t i = 0; i < n; ++i) d[i] += corr[i];
  double sum = 0.0;
  for (double& v : d) {
    v = std::max(v, 0.0);
    sum += v;
  }
  for (double& v : d) v /= sum;
  return d;
}

Vector true_value(const Matrix& p_pi, std::span<const double> r_pi, double gamma) {
  const std::size_t n = p_pi.rows();
  const Matrix lhs = Matrix::identity(n) - gamma * p_pi;
  return linalg::solve(lhs, r_pi);
}

bool full_column_rank(const Matrix& features) {
  const Vector ev = linalg::eig_symmetric(features.transpose() * features);
  const double hi = ev.back();
  const double lo = ev.front();
  if (hi <= 0.0) return false;
  return std::sqrt(std::max(lo, 0.0)) >= 1e-10 * std::sqrt(hi);
}

Matrix projection_matrix(const Matrix& features, std::span<const double> weights) {
  const Matrix phi_t_d = features.transpose() * Matrix::diagonal(weights);
  const Matrix gram = phi_t_d * features;
  const linalg::LuDecomposition lu(gram);
  if (lu.singular()) throw SingularMatrixError("projection_matrix: Phi^T D Phi is singular");
  return features * lu.solve(phi_t_d);
}

DerivedModel derived_model(MdpSpec spec) {
  validate(spec);
  DerivedModel m;
  m.p_pi = induced_transition(spec, spec.target_policy);
  m.p_beta = induced_transition(spec, spec.behavior_policy);
  m.r_pi = expected_reward(spec, spec.target_policy);
  m.d_beta = spec.state_weights ? *spec.state_weights : stationary_distribution(m.p_beta);
  for (std::size_t s = 0; s < m.d_beta.size(); ++s) {
    if (!(m.d_beta[s] > 0.0)) {
      std::ostringstream os;
      os << "state weighting is not strictly positive at state " << s;
      throw ValidationError(os.str());
    }
  }
  m.D_beta = Matrix::diagonal(m.d_beta);
  m.v_pi = true_value(m.p_pi, m.r_pi, spec.discount);
  m.phi_t_d = spec.features.transpose() * m.D_beta;
  m.gram = m.phi_t_d * spec.features;
  const linalg::LuDecomposition lu(m.gram);
  if (lu.singular()) throw SingularMatrixError("Phi^T D Phi is singular");
  m.gram_inv = lu.inverse();
  m.proj_coef = lu.solve(m.phi_t_d);
  m.pi_proj = spec.features * m.proj_coef;
  m.spec = std::move(spec);
  return m;
}

}  // namespace ntd
