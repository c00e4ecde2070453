#include <doctest.h>

#include <cmath>

#include "core/errors.hpp"
#include "core/objective.hpp"
#include "core/rng.hpp"

using namespace zopo;

namespace {

Candidate mk(const std::string& id, std::initializer_list<double> values) {
  Candidate c;
  c.id = id;
  c.embedding.resize(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) c.embedding[i++] = v;
  return c;
}

}  // namespace

TEST_CASE("table objective looks scores up by id") {
  TableObjective table({{"c1", 0.4}, {"c2", 0.9}}, 0.0);
  Rng rng(1);
  CHECK(table.evaluate(mk("c2", {0.0}), rng) == 0.9);
  CHECK(table.evaluate(mk("c1", {0.0}), rng) == 0.4);
  CHECK_THROWS_WITH_AS(table.evaluate(mk("c3", {0.0}), rng),
                       doctest::Contains("'c3'"), Error);
}

TEST_CASE("table objective reads pool scores") {
  auto a = mk("a", {0.0});
  a.score = 0.25;
  auto b = mk("b", {1.0});
  b.score = 0.75;
  auto c = mk("c", {2.0});  // no score: simply not tabulated
  const auto pool = CandidatePool::from_records({a, b, c});
  const auto table = TableObjective::from_pool(pool, 0.0);
  CHECK(table->size() == 2);
  Rng rng(1);
  CHECK(table->evaluate(pool.candidates()[1], rng) == 0.75);
  CHECK_THROWS_AS(table->evaluate(pool.candidates()[2], rng), Error);
}

TEST_CASE("kernel-expansion objective peaks at a single center") {
  Eigen::MatrixXd centers(2, 1);
  centers << 0.5, -1.0;
  Eigen::VectorXd weights(1);
  weights << 1.0;
  RkhsObjective f(centers, weights, 1.0, 0.0);
  Rng rng(2);
  CHECK(f.evaluate(mk("at-center", {0.5, -1.0}), rng) == doctest::Approx(1.0));
  CHECK(f.evaluate(mk("off", {1.5, -1.0}), rng) ==
        doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("kernel-expansion gradient matches finite differences") {
  Rng rng(3);
  Eigen::MatrixXd centers(3, 4);
  for (int i = 0; i < 4; ++i) centers.col(i) = rng.gauss_vector(3);
  Eigen::VectorXd weights(4);
  weights << 1.0, -0.5, 0.25, 0.8;
  RkhsObjective f(centers, weights, 0.9, 0.0);
  f.set_affine(1.7, 0.2, false);

  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd z = rng.gauss_vector(3);
    const Eigen::VectorXd g = f.gradient(z);
    for (int i = 0; i < 3; ++i) {
      Eigen::VectorXd zp = z, zm = z;
      zp[i] += 1e-6;
      zm[i] -= 1e-6;
      const double fd = (f.value(zp) - f.value(zm)) / 2e-6;
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("network objective matches an independent forward pass") {
  // dual implementation: plain loops over the packed parameter layout
  const auto net = FeedforwardNet::init(3, {32, 32}, KernelSpec::Activation::tanh, 7);
  MlpObjective obj(net, 1.0, 0.0);
  Rng rng(5);
  for (int probe = 0; probe < 5; ++probe) {
    const Eigen::VectorXd z = rng.gauss_vector(3);

    std::vector<double> x(z.data(), z.data() + z.size());
    std::size_t off = 0;
    const std::vector<int> dims = {3, 32, 32, 1};
    for (std::size_t layer = 0; layer + 1 < dims.size(); ++layer) {
      const int m_in = dims[layer];
      const int m_out = dims[layer + 1];
      std::vector<double> y(m_out, 0.0);
      for (int r = 0; r < m_out; ++r) {
        double acc = 0.0;
        for (int c = 0; c < m_in; ++c) {
          acc += net.theta[off + r * m_in + c] * x[c];
        }
        y[r] = acc;
      }
      off += static_cast<std::size_t>(m_out) * m_in;
      for (int r = 0; r < m_out; ++r) y[r] += net.theta[off + r];
      off += m_out;
      if (layer + 2 < dims.size()) {
        for (double& v : y) v = std::tanh(v);
      }
      x = std::move(y);
    }
    CHECK(obj.value(z) == doctest::Approx(x[0]).epsilon(1e-12));
  }
}

TEST_CASE("noiseless evaluation is a pure function of the candidate") {
  const auto task = make_synthetic_task(SyntheticSpec::parse("rkhs,d=4,pool=50,seed=9,noise=0"));
  Rng r1(10), r2(99);
  const auto& c = task.pool.at(7);
  CHECK(task.objective->evaluate(c, r1) == task.objective->evaluate(c, r2));
}

TEST_CASE("observation noise is calibrated") {
  Eigen::MatrixXd centers(1, 1);
  centers << 0.0;
  Eigen::VectorXd weights(1);
  weights << 0.5;
  RkhsObjective f(centers, weights, 1.0, 0.04);
  Rng rng(17);
  const auto c = mk("x", {0.1});
  const int n = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = f.evaluate(c, rng);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1));
  CHECK(sd == doctest::Approx(0.04).epsilon(0.05));
}

TEST_CASE("synthetic tasks are deterministic and exhaustively grounded") {
  const std::string spec = "rkhs,d=8,pool=120,seed=21,noise=0.01";
  const auto t1 = make_synthetic_task(SyntheticSpec::parse(spec));
  const auto t2 = make_synthetic_task(SyntheticSpec::parse(spec));
  CHECK(t1.true_best_id == t2.true_best_id);
  CHECK(t1.true_best_score == t2.true_best_score);
  CHECK(t1.local_optima_count == t2.local_optima_count);
  REQUIRE(t1.pool.size() == t2.pool.size());
  for (std::size_t i = 0; i < t1.pool.size(); ++i) {
    CHECK(t1.pool.at(i).id == t2.pool.at(i).id);
    CHECK(t1.pool.at(i).embedding == t2.pool.at(i).embedding);
  }

  // no pool member beats the recorded true best (noiseless evaluation)
  Rng rng(0);
  double best = -1.0;
  std::string best_id;
  for (const auto& c : t1.pool.candidates()) {
    const double v = t1.objective->evaluate_clean(c);
    CHECK(v <= t1.true_best_score + 1e-12);
    if (v > best) {
      best = v;
      best_id = c.id;
    }
  }
  CHECK(best_id == t1.true_best_id);
  CHECK(best == doctest::Approx(t1.true_best_score));
  CHECK(t1.true_best_score == doctest::Approx(1.0));  // rescaled onto [0,1]
}

TEST_CASE("well-separated weighted centers create several local optima") {
  const auto task = make_synthetic_task(
      SyntheticSpec::parse("rkhs,d=8,pool=300,seed=3,noise=0,centers=8"));
  CHECK(task.local_optima_count >= 2);

  // recompute the census independently
  int count = 0;
  const auto& cands = task.pool.candidates();
  for (const auto& c : cands) {
    const auto neighbors = task.pool.nearest(c.embedding, 10, IdSet{c.id});
    bool is_max = true;
    for (const Candidate* nb : neighbors) {
      if (task.objective->evaluate_clean(*nb) >
          task.objective->evaluate_clean(c)) {
        is_max = false;
        break;
      }
    }
    if (is_max) ++count;
  }
  CHECK(count == task.local_optima_count);
}

TEST_CASE("mlp task families differ between matched and default arch") {
  const auto matched = make_synthetic_task(
      SyntheticSpec::parse("mlp-matched,d=6,pool=80,seed=2,noise=0"));
  const auto plain = make_synthetic_task(
      SyntheticSpec::parse("mlp,d=6,pool=80,seed=2,noise=0"));
  CHECK(matched.objective->kind() == Objective::Kind::mlp);
  const auto* m = dynamic_cast<const MlpObjective*>(matched.objective.get());
  const auto* p = dynamic_cast<const MlpObjective*>(plain.objective.get());
  REQUIRE(m != nullptr);
  REQUIRE(p != nullptr);
  CHECK(m->network().widths == std::vector<int>{32, 32});
  CHECK(p->network().widths == std::vector<int>{64, 32});
}

TEST_CASE("synthetic spec strings round-trip") {
  const auto spec = SyntheticSpec::parse("mlp,d=16,pool=200,seed=5,noise=0.03");
  CHECK(spec.d == 16);
  CHECK(spec.pool_size == 200);
  CHECK(spec.seed == 5);
  CHECK(spec.noise_sigma == 0.03);
  const auto again = SyntheticSpec::parse(spec.to_string());
  CHECK(again.d == spec.d);
  CHECK(again.pool_size == spec.pool_size);
  CHECK(again.family == spec.family);

  CHECK_THROWS_AS(SyntheticSpec::parse("unknown,d=4"), Error);
  CHECK_THROWS_AS(SyntheticSpec::parse("rkhs,bogus=1"), Error);
  CHECK_THROWS_AS(SyntheticSpec::parse("rkhs,d=0"), Error);
}

TEST_CASE("noisy synthetic scores stay inside the unit interval") {
  const auto task = make_synthetic_task(
      SyntheticSpec::parse("rkhs,d=4,pool=60,seed=11,noise=0.3"));
  Rng rng(13);
  for (const auto& c : task.pool.candidates()) {
    const double v = task.objective->evaluate(c, rng);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
