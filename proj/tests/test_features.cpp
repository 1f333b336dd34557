#include <doctest.h>

#include <complex>

#include "nrfc/array_io.hpp"
#include "nrfc/batch_norm.hpp"
#include "nrfc/features.hpp"
#include "test_util.hpp"

using namespace nrfc;

namespace {

// |DFT|^2 of one Hann-windowed frame, computed term by term.
Eigen::VectorXd direct_frame_power(const Eigen::VectorXd& x, Eigen::Index start, int n_fft) {
  Eigen::VectorXd p(n_fft / 2 + 1);
  for (int k = 0; k <= n_fft / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int t = 0; t < n_fft; ++t) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / n_fft);
      acc += w * x[start + t] * std::polar(1.0, -2.0 * std::numbers::pi * ((k * t) % n_fft) / n_fft);
    }
    p[k] = std::norm(acc);
  }
  return p;
}

}  // namespace

TEST_CASE("frame count formula") {
  CHECK(FeatureConfig::reference().frame_count(192000) == 374);
  CHECK(FeatureConfig::desk().frame_count(16000) == 61);
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    FeatureConfig c;
    c.n_fft = static_cast<int>(2 + rng.below(600));
    c.hop = static_cast<int>(1 + rng.below(static_cast<std::uint64_t>(c.n_fft)));
    const auto n = static_cast<Eigen::Index>(c.n_fft + rng.below(5000));
    const Eigen::Index frames = c.frame_count(n);
    // last frame fits, one more would not
    CHECK((frames - 1) * c.hop + c.n_fft <= n);
    CHECK(frames * c.hop + c.n_fft > n);
  }
  CHECK_THROWS_AS(FeatureConfig::desk().frame_count(100), Error);
}

TEST_CASE("STFT power matches a direct DFT") {
  Rng rng(8);
  const AudioClip clip = test::random_clip(rng, 2000, 8000);
  FeatureConfig c = FeatureConfig::desk();
  c.n_fft = 64;
  c.hop = 48;
  const Eigen::MatrixXd p = stft_power(clip, c);
  REQUIRE(p.rows() == 33);
  REQUIRE(p.cols() == c.frame_count(2000));
  for (Eigen::Index f : {Eigen::Index(0), Eigen::Index(7), p.cols() - 1}) {
    const Eigen::VectorXd oracle = direct_frame_power(clip.samples(), f * c.hop, c.n_fft);
    CHECK((p.col(f) - oracle).cwiseAbs().maxCoeff() <= 1e-9 * oracle.maxCoeff());
  }
  CHECK(stft_power(AudioClip::zeros(0.5, 8000), FeatureConfig::desk()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sine at a bin center concentrates its energy") {
  // A periodic Hann window spreads a bin-centered tone over that bin and its
  // two neighbours (power ratios 1/4 : 1 : 1/4); nothing leaks further.
  const FeatureConfig c = FeatureConfig::desk();
  const int bin = 37;
  const double f = bin * 8000.0 / c.n_fft;
  const Eigen::MatrixXd p = stft_power(test::sine(f, 0.5, 4000, 8000, 0.3), c);
  for (Eigen::Index t = 0; t < p.cols(); ++t) {
    const double total = p.col(t).sum();
    CHECK(p.col(t).segment(bin - 1, 3).sum() / total > 0.99);
    Eigen::Index peak = 0;
    p.col(t).maxCoeff(&peak);
    CHECK(peak == bin);
    CHECK(p(bin - 1, t) / p(bin, t) == doctest::Approx(1.0 / 4.0).epsilon(1e-6));
  }
}

TEST_CASE("mel scale and filterbank") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  for (double hz : {10.0, 440.0, 3999.0}) CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-12));

  FeatureConfig tiny{16, 8, 4, 0.0, 8000.0, 1e-10};
  const Eigen::VectorXd centers = mel_centers(tiny, 16000);
  const double top = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  for (int m = 0; m < 4; ++m) {
    const double mel = top * (m + 1) / 5.0;
    const double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
    CHECK(std::abs(centers[m] - hz) < 1e-6);
  }

  const FeatureConfig desk = FeatureConfig::desk();
  const Eigen::MatrixXd fb = mel_filterbank(desk, 8000);
  CHECK(fb.rows() == 32);
  CHECK(fb.cols() == 257);
  CHECK(fb.minCoeff() >= 0.0);
  for (Eigen::Index r = 0; r < fb.rows(); ++r) CHECK(fb.row(r).maxCoeff() > 0.0);
  const Eigen::VectorXd dc = mel_centers(desk, 8000);
  for (Eigen::Index m = 1; m < dc.size(); ++m) CHECK(dc[m] > dc[m - 1]);

  FeatureConfig crowded = desk;
  crowded.n_fft = 64;
  crowded.hop = 32;
  crowded.n_mels = 64;
  try {
    mel_filterbank(crowded, 8000);
    FAIL("expected an empty-filter error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }
}

TEST_CASE("log-Mel values") {
  const FeatureConfig c = FeatureConfig::desk();
  const LogMelFeature z = log_mel(AudioClip::zeros(1.0, 8000), c);
  CHECK(z.n_mels() == 32);
  CHECK((z.values.array() == std::log(c.log_floor)).all());

  Rng rng(12);
  const AudioClip x = test::random_clip(rng, 8000, 8000, 0.3);
  const LogMelFeature a = log_mel(x, c);
  const LogMelFeature b = log_mel(scale(x, 2.0), c);
  CHECK(a.values.allFinite());
  CHECK(((b.values - a.values).array() - std::log(4.0)).abs().maxCoeff() < 1e-6);

  const LogMelFeature ref = log_mel(AudioClip::zeros(12.0, 16000), FeatureConfig::reference());
  CHECK(ref.n_mels() == 128);
  CHECK(ref.n_frames() == 374);
}

TEST_CASE("property: circular shift by whole hops shifts the interior frames") {
  const FeatureConfig c = FeatureConfig::desk();
  const LogMelExtractor extract(c, 8000);
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const AudioClip x = test::random_clip(rng, 16000, 8000);
    const int hops = static_cast<int>(1 + rng.below(8));
    const AudioClip shifted = time_shift(x, hops * c.hop / 8000.0);
    const Eigen::MatrixXd a = extract(x).values;
    const Eigen::MatrixXd b = extract(shifted).values;
    // frames that do not straddle the wrap point
    for (Eigen::Index t = 0; t + hops < a.cols(); ++t) {
      CHECK((b.col(t + hops) - a.col(t)).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("input batch normalization") {
  Rng rng(41);
  std::vector<LogMelFeature> batch(4);
  for (auto& f : batch) {
    f.values = Eigen::MatrixXd::Random(6, 9) * 3.0;
    f.values.array() += rng.uniform(-2.0, 2.0);
  }
  const Vec<double> gamma = Vec<double>::Ones(6), beta = Vec<double>::Zero(6);

  SUBCASE("train mode output is standardized per mel bin") {
    BatchNormStats<double> stats(6);
    const auto y = batch_normalize(batch, stats, gamma, beta, Mode::kTrain);
    for (Eigen::Index r = 0; r < 6; ++r) {
      double sum = 0.0, sq = 0.0;
      for (const auto& f : y) {
        sum += f.values.row(r).sum();
        sq += f.values.row(r).squaredNorm();
      }
      const double n = 36.0;
      CHECK(std::abs(sum / n) < 1e-9);
      // eps in the denominator keeps this slightly below 1
      CHECK(std::abs(sq / n - 1.0) < 1e-4);
    }
  }
  SUBCASE("eval mode with unit statistics is the identity") {
    BatchNormStats<double> stats(6);
    BatchNormOptions opt;
    opt.eps = 0.0;
    const auto y = batch_normalize(batch, stats, gamma, beta, Mode::kEval, opt);
    for (std::size_t b = 0; b < batch.size(); ++b) CHECK(y[b].values == batch[b].values);
  }
  SUBCASE("running statistics follow a scalar EMA") {
    BatchNormStats<double> stats(6);
    std::vector<double> mean_oracle(6, 0.0), var_oracle(6, 1.0);
    for (int step = 0; step < 5; ++step) {
      std::vector<LogMelFeature> b(3);
      for (auto& f : b) f.values = Eigen::MatrixXd::Random(6, 5) + Eigen::MatrixXd::Constant(6, 5, step);
      for (int r = 0; r < 6; ++r) {
        std::vector<double> v;
        for (const auto& f : b) {
          for (Eigen::Index t = 0; t < 5; ++t) v.push_back(f.values(r, t));
        }
        double m = 0.0;
        for (double e : v) m += e;
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double e : v) s += (e - m) * (e - m);
        const double unbiased = s / static_cast<double>(v.size() - 1);
        mean_oracle[static_cast<std::size_t>(r)] = 0.9 * mean_oracle[static_cast<std::size_t>(r)] + 0.1 * m;
        var_oracle[static_cast<std::size_t>(r)] = 0.9 * var_oracle[static_cast<std::size_t>(r)] + 0.1 * unbiased;
      }
      batch_normalize(b, stats, gamma, beta, Mode::kTrain);
    }
    for (int r = 0; r < 6; ++r) {
      CHECK(stats.running_mean[r] == doctest::Approx(mean_oracle[static_cast<std::size_t>(r)]).epsilon(1e-12));
      CHECK(stats.running_var[r] == doctest::Approx(var_oracle[static_cast<std::size_t>(r)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("feature cache roundtrip") {
  test::TempDir dir("feat");
  Rng rng(3);
  std::vector<LogMelFeature> feats(3);
  for (auto& f : feats) f.values = Eigen::MatrixXd::Random(4, 7);
  write_features(dir / "f.bin", feats, StoredType::kFloat64);
  const auto back = read_features(dir / "f.bin");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back[i].values == feats[i].values);
  write_features(dir / "g.bin", feats, StoredType::kFloat32);
  const auto single = read_features(dir / "g.bin");
  CHECK((single[1].values - feats[1].values).cwiseAbs().maxCoeff() < 1e-6);

  StoredArray arr{{2, 3}, {1, 2, 3, 4, 5, 6}};
  write_array(dir / "a.bin", arr);
  const StoredArray a2 = read_array(dir / "a.bin");
  CHECK(a2.dims == arr.dims);
  CHECK(a2.values == arr.values);
  std::ofstream(dir / "junk.bin") << "not an array";
  CHECK_THROWS_AS(read_array(dir / "junk.bin"), Error);
}
