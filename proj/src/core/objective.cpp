#include "core/objective.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "core/errors.hpp"

namespace zopo {

double Objective::evaluate(const Candidate& candidate, Rng& rng) const {
  double value = evaluate_clean(candidate);
  if (noise_sigma_ > 0.0) {
    value += noise_sigma_ * rng.gauss();
  }
  if (clamp_to_unit_) {
    value = std::clamp(value, 0.0, 1.0);
  }
  return value;
}

// ---------------------------------------------------------------------------
// TableObjective

TableObjective::TableObjective(std::unordered_map<std::string, double> scores,
                               double noise_sigma)
    : Objective(Kind::table, noise_sigma, /*clamp_to_unit=*/false),
      scores_(std::move(scores)) {
  if (scores_.empty()) {
    throw Error(Errc::invalid_argument, "table objective has no scores");
  }
  for (const auto& [id, s] : scores_) {
    if (!std::isfinite(s)) {
      throw Error(Errc::invalid_argument,
                  "table objective: non-finite score for '" + id + "'");
    }
  }
}

std::unique_ptr<TableObjective> TableObjective::from_pool(
    const CandidatePool& pool, double noise_sigma) {
  std::unordered_map<std::string, double> scores;
  for (const auto& c : pool.candidates()) {
    if (c.score) scores.emplace(c.id, *c.score);
  }
  if (scores.empty()) {
    throw Error(Errc::invalid_argument,
                "table objective: no pool record carries a 'score' field");
  }
  return std::make_unique<TableObjective>(std::move(scores), noise_sigma);
}

std::unique_ptr<TableObjective> TableObjective::from_file(
    const std::string& path, double noise_sigma) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::io, "cannot open score file: " + path);
  }
  std::unordered_map<std::string, double> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::invalid_argument,
                  "score file line " + std::to_string(line_no) +
                      ": invalid JSON: " + e.what());
    }
    if (!j.contains("id") || !j["id"].is_string() || !j.contains("score") ||
        !j["score"].is_number()) {
      throw Error(Errc::invalid_argument,
                  "score file line " + std::to_string(line_no) +
                      ": expected {\"id\": str, \"score\": num}");
    }
    scores[j["id"].get<std::string>()] = j["score"].get<double>();
  }
  return std::make_unique<TableObjective>(std::move(scores), noise_sigma);
}

double TableObjective::evaluate_clean(const Candidate& candidate) const {
  auto it = scores_.find(candidate.id);
  if (it == scores_.end()) {
    throw Error(Errc::run,
                "table objective: no score for candidate '" + candidate.id + "'");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// RkhsObjective

RkhsObjective::RkhsObjective(Eigen::MatrixXd centers, Eigen::VectorXd weights,
                             double lengthscale, double noise_sigma)
    : Objective(Kind::rkhs, noise_sigma, /*clamp_to_unit=*/false),
      centers_(std::move(centers)),
      weights_(std::move(weights)),
      kernel_(1.0, lengthscale) {
  if (centers_.cols() != weights_.size() || centers_.cols() == 0) {
    throw Error(Errc::invalid_argument,
                "rkhs objective: centers/weights shape mismatch");
  }
}

double RkhsObjective::value(VecCRef z) const {
  double v = 0.0;
  for (Eigen::Index i = 0; i < centers_.cols(); ++i) {
    v += weights_[i] * kernel_.eval(z, centers_.col(i));
  }
  return scale_ * v + offset_;
}

Eigen::VectorXd RkhsObjective::gradient(VecCRef z) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(z.size());
  for (Eigen::Index i = 0; i < centers_.cols(); ++i) {
    g += weights_[i] * kernel_.grad1(z, centers_.col(i));
  }
  return scale_ * g;
}

double RkhsObjective::evaluate_clean(const Candidate& candidate) const {
  if (candidate.embedding.size() != centers_.rows()) {
    throw Error(Errc::invalid_argument,
                "rkhs objective: candidate dimension mismatch");
  }
  return value(candidate.embedding);
}

void RkhsObjective::set_affine(double scale, double offset, bool clamp_to_unit) {
  scale_ = scale;
  offset_ = offset;
  clamp_to_unit_ = clamp_to_unit;
}

// ---------------------------------------------------------------------------
// MlpObjective

MlpObjective::MlpObjective(FeedforwardNet net, double input_scale,
                           double noise_sigma)
    : Objective(Kind::mlp, noise_sigma, /*clamp_to_unit=*/false),
      net_(std::move(net)),
      input_scale_(input_scale) {
  if (input_scale_ <= 0.0) {
    throw Error(Errc::invalid_argument, "mlp objective: input_scale must be > 0");
  }
}

double MlpObjective::value(VecCRef z) const {
  return scale_ * net_.forward(z / input_scale_) + offset_;
}

double MlpObjective::evaluate_clean(const Candidate& candidate) const {
  if (candidate.embedding.size() != net_.input_dim) {
    throw Error(Errc::invalid_argument,
                "mlp objective: candidate dimension mismatch");
  }
  return value(candidate.embedding);
}

void MlpObjective::set_affine(double scale, double offset, bool clamp_to_unit) {
  scale_ = scale;
  offset_ = offset;
  clamp_to_unit_ = clamp_to_unit;
}

// ---------------------------------------------------------------------------
// SyntheticSpec

void SyntheticSpec::validate() const {
  if (d < 1) throw Error(Errc::invalid_argument, "synthetic: d must be >= 1");
  if (pool_size < 2) {
    throw Error(Errc::invalid_argument, "synthetic: pool size must be >= 2");
  }
  if (noise_sigma < 0.0) {
    throw Error(Errc::invalid_argument, "synthetic: noise must be >= 0");
  }
  if (n_centers < 1) {
    throw Error(Errc::invalid_argument, "synthetic: centers must be >= 1");
  }
}

SyntheticSpec SyntheticSpec::parse(const std::string& text) {
  SyntheticSpec spec;
  std::stringstream ss(text);
  std::string part;
  bool first = true;
  while (std::getline(ss, part, ',')) {
    if (first) {
      first = false;
      if (part == "rkhs") {
        spec.family = SyntheticFamily::rkhs;
      } else if (part == "mlp") {
        spec.family = SyntheticFamily::mlp;
      } else if (part == "mlp-matched") {
        spec.family = SyntheticFamily::mlp_matched;
      } else {
        throw Error(Errc::invalid_argument,
                    "synthetic spec: unknown family '" + part + "'");
      }
      continue;
    }
    const auto eq = part.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::invalid_argument,
                  "synthetic spec: expected key=value, got '" + part + "'");
    }
    const std::string key = part.substr(0, eq);
    const std::string val = part.substr(eq + 1);
    try {
      if (key == "d") {
        spec.d = std::stoi(val);
      } else if (key == "pool") {
        spec.pool_size = std::stoi(val);
      } else if (key == "seed") {
        spec.seed = std::stoull(val);
      } else if (key == "noise") {
        spec.noise_sigma = std::stod(val);
      } else if (key == "centers") {
        spec.n_centers = std::stoi(val);
      } else {
        throw Error(Errc::invalid_argument,
                    "synthetic spec: unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw Error(Errc::invalid_argument,
                  "synthetic spec: bad value for '" + key + "'");
    }
  }
  if (first) {
    throw Error(Errc::invalid_argument, "synthetic spec is empty");
  }
  spec.validate();
  return spec;
}

std::string SyntheticSpec::to_string() const {
  std::string family;
  switch (this->family) {
    case SyntheticFamily::rkhs: family = "rkhs"; break;
    case SyntheticFamily::mlp: family = "mlp"; break;
    case SyntheticFamily::mlp_matched: family = "mlp-matched"; break;
  }
  std::ostringstream out;
  out << family << ",d=" << d << ",pool=" << pool_size << ",seed=" << seed
      << ",noise=" << noise_sigma << ",centers=" << n_centers;
  return out.str();
}

// ---------------------------------------------------------------------------
// Task generation

namespace {

Eigen::MatrixXd draw_separated_centers(int d, int m, double radius,
                                       double min_separation, Rng& rng) {
  Eigen::MatrixXd centers(d, m);
  for (int i = 0; i < m; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      Eigen::VectorXd u = rng.gauss_vector(d);
      const double norm = u.norm();
      if (norm < 1e-12) continue;
      Eigen::VectorXd c = (radius / norm) * u;
      bool ok = true;
      for (int j = 0; j < i; ++j) {
        if ((centers.col(j) - c).norm() < min_separation) {
          ok = false;
          break;
        }
      }
      if (ok || attempt == 199) {
        centers.col(i) = c;
        break;
      }
    }
  }
  return centers;
}

std::string padded_id(int index, int pool_size) {
  int digits = 1;
  for (int n = pool_size - 1; n >= 10; n /= 10) ++digits;
  std::string num = std::to_string(index);
  return "c" + std::string(digits - static_cast<int>(num.size()), '0') + num;
}

}  // namespace

SyntheticTask make_synthetic_task(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0x7a5c));

  const int d = spec.d;
  const double cluster_std = 1.0;
  const double lengthscale = std::sqrt(static_cast<double>(d)) * cluster_std;
  const double radius = 3.0 * lengthscale;
  const Eigen::MatrixXd centers =
      draw_separated_centers(d, spec.n_centers, radius, 2.0 * lengthscale, rng);

  std::vector<Candidate> records;
  records.reserve(spec.pool_size);
  for (int i = 0; i < spec.pool_size; ++i) {
    const int j = static_cast<int>(rng.below(spec.n_centers));
    Candidate c;
    c.id = padded_id(i, spec.pool_size);
    c.embedding = centers.col(j) + cluster_std * rng.gauss_vector(d);
    records.push_back(std::move(c));
  }

  SyntheticTask task;
  task.name = spec.to_string();
  task.pool = CandidatePool::from_records(std::move(records));

  std::shared_ptr<Objective> objective;
  std::function<double(VecCRef)> raw_value;
  if (spec.family == SyntheticFamily::rkhs) {
    Eigen::VectorXd weights = Eigen::VectorXd::Constant(spec.n_centers, 0.5);
    weights[0] = 1.0;
    auto obj = std::make_shared<RkhsObjective>(centers, weights, lengthscale,
                                               spec.noise_sigma);
    raw_value = [obj](VecCRef z) { return obj->value(z); };
    objective = obj;
  } else {
    const std::vector<int> widths =
        spec.family == SyntheticFamily::mlp_matched ? std::vector<int>{32, 32}
                                                    : std::vector<int>{64, 32};
    auto net = FeedforwardNet::init(d, widths, KernelSpec::Activation::tanh,
                                    derive_seed(spec.seed, 0x31a7));
    auto obj = std::make_shared<MlpObjective>(std::move(net), 0.5 * radius,
                                              spec.noise_sigma);
    raw_value = [obj](VecCRef z) { return obj->value(z); };
    objective = obj;
  }

  // exhaustive clean evaluation, then affine rescale onto [0,1]
  const auto& cands = task.pool.candidates();
  Eigen::VectorXd raw(static_cast<Eigen::Index>(cands.size()));
  for (std::size_t i = 0; i < cands.size(); ++i) {
    raw[static_cast<Eigen::Index>(i)] = raw_value(cands[i].embedding);
  }
  const double lo = raw.minCoeff();
  const double hi = raw.maxCoeff();
  double scale = 0.0, offset = 0.5;
  if (hi > lo) {
    scale = 1.0 / (hi - lo);
    offset = -lo * scale;
  }
  if (auto rk = std::dynamic_pointer_cast<RkhsObjective>(objective)) {
    rk->set_affine(scale, offset, true);
  } else if (auto ml = std::dynamic_pointer_cast<MlpObjective>(objective)) {
    ml->set_affine(scale, offset, true);
  }
  task.objective = objective;

  Eigen::VectorXd clean = (raw.array() * scale + offset).matrix();
  Eigen::Index best = 0;
  clean.maxCoeff(&best);
  task.true_best_id = cands[static_cast<std::size_t>(best)].id;
  task.true_best_score = clean[best];

  // census of local optima under k-NN neighborhoods
  const int k = task.local_optima_k;
  int count = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto neighbors =
        task.pool.nearest(cands[i].embedding, static_cast<std::size_t>(k),
                          IdSet{cands[i].id});
    bool is_max = true;
    for (const Candidate* nb : neighbors) {
      const auto idx = static_cast<Eigen::Index>(nb - cands.data());
      if (clean[idx] > clean[static_cast<Eigen::Index>(i)]) {
        is_max = false;
        break;
      }
    }
    if (is_max) ++count;
  }
  task.local_optima_count = count;
  return task;
}

}  // namespace zopo
