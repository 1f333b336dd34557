#include <doctest.h>

#include <limits>

#include "nrfc/metrics.hpp"
#include "nrfc/techniques.hpp"
#include "test_util.hpp"

using namespace nrfc;

namespace {

std::vector<long double> softmax_oracle(const Eigen::VectorXd& g, double t) {
  long double m = g.maxCoeff() / t, sum = 0;
  std::vector<long double> e;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    e.push_back(std::exp(static_cast<long double>(g[k]) / t - m));
    sum += e.back();
  }
  for (auto& v : e) v /= sum;
  return e;
}

// Brute-force threshold search: every candidate, every item, full macro F1.
Calibration calibrate_oracle(const std::vector<double>& s, const std::vector<int>& truth, const std::vector<int>& pred) {
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back((sorted[i] + sorted[i + 1]) / 2.0);
  candidates.push_back(std::numeric_limits<double>::infinity());
  Calibration best{0.0, -1.0};
  for (double eta : candidates) {
    ConfusionMatrix cm(kEvalClasses);
    for (std::size_t i = 0; i < s.size(); ++i) cm.add(truth[i], s[i] > eta ? kNoiseLabel : pred[i]);
    if (cm.macro_f1() > best.macro_f1) best = {eta, cm.macro_f1()};
  }
  return best;
}

}  // namespace

TEST_CASE("technique names") {
  for (auto t : all_techniques()) CHECK(parse_technique(to_string(t)) == t);
  CHECK_THROWS_AS(parse_technique("XX"), Error);
  CHECK(uses_exposure(Technique::kNE));
  CHECK(uses_exposure(Technique::kEB));
  CHECK(uses_exposure(Technique::kAC));
  CHECK_FALSE(uses_exposure(Technique::kSM));
  CHECK_FALSE(uses_exposure(Technique::kFE));
}

TEST_CASE("softmax and scores against long-double oracles") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd g = test::random_vector(rng, 13, -30.0, 30.0);
    const double t = rng.uniform(0.2, 5.0);
    const Eigen::VectorXd p = softmax(g, t);
    const auto oracle = softmax_oracle(g, t);
    for (Eigen::Index k = 0; k < 13; ++k) CHECK(std::abs(p[k] - static_cast<double>(oracle[static_cast<std::size_t>(k)])) < 1e-12);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));

    long double lse = 0;
    for (Eigen::Index k = 0; k < 13; ++k) lse += std::exp(static_cast<long double>(g[k]) / t);
    const double e = static_cast<double>(-t * std::log(lse));
    CHECK(free_energy(g, t) == doctest::Approx(e).epsilon(1e-12));
    CHECK(energy_score(g, t) == doctest::Approx(-e).epsilon(1e-12));
    CHECK(noise_score(Technique::kFE, g, t) == doctest::Approx(e).epsilon(1e-12));
    CHECK(noise_score(Technique::kSM, g, t) == doctest::Approx(1.0 - p.maxCoeff()).epsilon(1e-12));
    CHECK(noise_score(Technique::kNE, g, t) == noise_score(Technique::kSM, g, t));
  }
  // no overflow for huge logits
  Eigen::VectorXd big = Eigen::VectorXd::Constant(13, 1000.0);
  big[4] = 1001.0;
  CHECK(softmax(big).allFinite());
  CHECK(free_energy(big) == doctest::Approx(-1001.0 - std::log(1.0 + 12.0 * std::exp(-1.0))).epsilon(1e-12));
  Eigen::VectorXd bad = big;
  bad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(softmax(bad), Error);
  CHECK_THROWS_AS(noise_score(Technique::kAC, Eigen::VectorXd::Zero(14)), Error);
}

TEST_CASE("uniform logits: MSP score and free energy closed forms") {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(13);
  CHECK(noise_score(Technique::kSM, z) == doctest::Approx(1.0 - 1.0 / 13.0).epsilon(1e-15));
  CHECK(free_energy(z) == doctest::Approx(-std::log(13.0)).epsilon(1e-15));
  CHECK(free_energy(z, 2.0) == doctest::Approx(-2.0 * std::log(13.0)).epsilon(1e-15));
}

TEST_CASE("CCE with log floor") {
  Eigen::VectorXd p(3), y(3);
  p << 0.7, 0.3, 0.0;
  y << 1.0, 0.0, 0.0;
  CHECK(cce_loss(p, y) == doctest::Approx(-std::log(0.7)));
  y << 0.0, 0.0, 1.0;
  CHECK(cce_loss(p, y) == doctest::Approx(-std::log(1e-12)));
  CHECK(cce_loss(p, y, 1e-3) == doctest::Approx(-std::log(1e-3)));

  // logits whose softmax underflows: the floored loss and a zero gradient
  Mat<double> g(1, 3);
  g << 0.0, 0.0, -100.0;
  const auto r = cce_batch<double>(g, {2});
  CHECK(r.value == doctest::Approx(-std::log(1e-12)));
  CHECK(r.d_logits.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("batch losses: values and finite-difference gradients") {
  Rng rng(19);
  const TechniqueConfig base;
  auto check_grad = [&](const TechniqueConfig& cfg, const Mat<double>& logits, const std::vector<int>& labels) {
    const auto r = technique_loss(cfg, logits, labels);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      Mat<double> lp = logits, lm = logits;
      lp.data()[i] += 1e-6;
      lm.data()[i] -= 1e-6;
      const double num = (technique_loss(cfg, lp, labels).value - technique_loss(cfg, lm, labels).value) / 2e-6;
      CHECK(r.d_logits.data()[i] == doctest::Approx(num).epsilon(1e-5).scale(1.0));
    }
    return r;
  };
  for (auto kind : all_techniques()) {
    TechniqueConfig cfg = base;
    cfg.kind = kind;
    const int k = output_dim(kind);
    const Eigen::Index noise_rows = uses_exposure(kind) ? 3 : 0;
    Mat<double> logits(4 + noise_rows, k);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-3.0, 3.0);
    // push some items across the energy margins
    if (kind == Technique::kEB) {
      logits.row(0).array() += 30.0;
      logits.row(5).array() -= 10.0;
    }
    INFO(to_string(kind));
    check_grad(cfg, logits, {0, 4, 9, 12});
  }
}

TEST_CASE("noise exposure loss") {
  Mat<double> m(1, 13), n(2, 13);
  m.setZero();
  n.setZero();
  // uniform logits: each CCE term is log 13
  const auto r = ne_loss<double>(m, {3}, n, 0.5);
  CHECK(r.classification == doctest::Approx(std::log(13.0)));
  CHECK(r.auxiliary == doctest::Approx(std::log(13.0)));
  CHECK(r.value == doctest::Approx(1.5 * std::log(13.0)));
  // the uniform target is already met: noise gradient vanishes
  CHECK(r.d_logits.bottomRows(2).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("energy regularizer hinges") {
  TechniqueConfig cfg;
  cfg.kind = Technique::kEB;
  // E = -log 13 ~ -2.56: above m_M = -25 (penalized), above m_N = -7 (not)
  const Mat<double> z = Mat<double>::Zero(1, 13);
  const auto r = energy_reg_loss<double>(z, z, -25.0, -7.0);
  const double e = -std::log(13.0);
  CHECK(r.value == doctest::Approx((e + 25.0) * (e + 25.0)));
  // large logits: noise energy far below m_N
  Mat<double> low = Mat<double>::Constant(1, 13, 20.0);
  const auto r2 = energy_reg_loss<double>(Mat<double>(0, 13), low, -25.0, -7.0);
  const double e2 = -20.0 - std::log(13.0);
  CHECK(r2.value == doctest::Approx((-7.0 - e2) * (-7.0 - e2)));
  // total: CCE + beta * reg
  const auto t = eb_total_loss<double>(z, {1}, z, cfg);
  CHECK(t.value == doctest::Approx(std::log(13.0) + 0.1 * r.value));
}

TEST_CASE("additional-class loss targets the extra output") {
  Mat<double> m = Mat<double>::Zero(1, 14), n = Mat<double>::Zero(1, 14);
  n(0, 13) = 5.0;
  const auto r = ac_loss<double>(m, {2}, n);
  const double noise_term = -(5.0 - std::log(13.0 + std::exp(5.0)));
  CHECK(r.value == doctest::Approx((std::log(14.0) + noise_term) / 2.0));
  CHECK_THROWS_AS(ac_loss<double>(Mat<double>::Zero(1, 13), {2}, Mat<double>::Zero(0, 13)), Error);
  TechniqueConfig sm;
  sm.kind = Technique::kSM;
  CHECK_THROWS_AS(technique_loss<double>(sm, Mat<double>::Zero(2, 13), {1}), Error);
}

TEST_CASE("decide") {
  TechniqueConfig cfg;
  cfg.kind = Technique::kNE;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(13);
  g[5] = 4.0;
  CHECK_THROWS_AS(decide(cfg, g), Error);  // no eta yet
  cfg.eta = 0.5;
  const Decision d = decide(cfg, g);
  CHECK_FALSE(d.noise);
  CHECK(d.label() == 5);
  cfg.eta = 0.0;
  CHECK(decide(cfg, g).label() == kNoiseLabel);
  // exactly at the threshold is not noise
  cfg.eta = noise_score(Technique::kNE, g);
  CHECK(decide(cfg, g).label() == 5);

  TechniqueConfig ac;
  ac.kind = Technique::kAC;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(14);
  h[13] = 1.0;
  CHECK(decide(ac, h).label() == kNoiseLabel);
  h[2] = 2.0;
  CHECK(decide(ac, h).label() == 2);
  CHECK_THROWS_AS(decide(ac, g), Error);
}

TEST_CASE("threshold calibration") {
  SUBCASE("separable scores pick the midpoint") {
    // machine items score 0.1, 0.2 (both correctly classified), noise 0.8, 0.9
    const auto c = calibrate_threshold({0.1, 0.8, 0.2, 0.9}, {0, 13, 1, 13}, {0, 5, 1, 7});
    CHECK(c.eta == doctest::Approx(0.5));
    CHECK(c.macro_f1 == doctest::Approx(3.0 / 14.0));
  }
  SUBCASE("identical scores leave only the extreme candidates") {
    const auto c = calibrate_threshold({0.3, 0.3, 0.3}, {0, 13, 13}, {0, 0, 0});
    // -inf: everything noise, F1(noise) = 0.8; +inf: F1(0) = 0.5
    CHECK(c.eta == -std::numeric_limits<double>::infinity());
    CHECK(c.macro_f1 == doctest::Approx(0.8 / 14.0));
  }
  SUBCASE("needs both families and finite scores") {
    CHECK_THROWS_AS(calibrate_threshold({0.1}, {0}, {0}), Error);
    CHECK_THROWS_AS(calibrate_threshold({0.1, std::nan("")}, {0, 13}, {0, 0}), Error);
  }
  SUBCASE("property: matches a brute-force sweep") {
    Rng rng(1234);
    for (int trial = 0; trial < 300; ++trial) {
      const auto n = static_cast<std::size_t>(2 + rng.below(40));
      std::vector<double> s(n);
      std::vector<int> truth(n), pred(n);
      for (std::size_t i = 0; i < n; ++i) {
        // coarse grid so ties are common
        s[i] = static_cast<double>(rng.below(8)) / 8.0;
        truth[i] = static_cast<int>(rng.below(4)) == 0 ? kNoiseLabel : static_cast<int>(rng.below(4));
        pred[i] = static_cast<int>(rng.below(4));
      }
      truth[0] = kNoiseLabel;
      truth[1] = 2;
      const auto fast = calibrate_threshold(s, truth, pred);
      const auto slow = calibrate_oracle(s, truth, pred);
      CHECK(fast.macro_f1 == doctest::Approx(slow.macro_f1).epsilon(1e-12));
      CHECK(fast.eta == slow.eta);
    }
  }
}

TEST_CASE("confusion matrix and macro F1") {
  ConfusionMatrix cm(3);
  // rows truth, columns prediction: [[2,0,0],[1,1,0],[0,0,2]]
  cm.add(0, 0);
  cm.add(0, 0);
  cm.add(1, 0);
  cm.add(1, 1);
  cm.add(2, 2);
  cm.add(2, 2);
  CHECK(cm.f1(0) == doctest::Approx(0.8));
  CHECK(cm.f1(1) == doctest::Approx(2.0 / 3.0));
  CHECK(cm.f1(2) == doctest::Approx(1.0));
  CHECK(cm.macro_f1() == doctest::Approx((0.8 + 2.0 / 3.0 + 1.0) / 3.0));
  CHECK(cm.total() == 6);

  ConfusionMatrix absent(4);
  absent.add(0, 0);
  absent.add(1, 1);
  CHECK(absent.f1(3) == 0.0);
  CHECK(absent.macro_f1() == doctest::Approx(0.5));
  CHECK_THROWS_AS(absent.add(4, 0), Error);
}
