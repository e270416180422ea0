#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sibf/baselines.hpp"
#include "support/generators.hpp"

using namespace sibf;
using sibf::testing::direct_inverse;
using sibf::testing::Gen;
using sibf::testing::random_mixture;
using sibf::testing::rel_frobenius;

namespace {

std::vector<Complex> project(const CVector& w, const ComplexMatrix& x) {
  std::vector<Complex> q(x.cols());
  for (Eigen::Index t = 0; t < x.cols(); ++t) q[t] = w.dot(x.col(t));
  return q;
}

}  // namespace

TEST_CASE("mmse_filter_batch recovers an exact linear image") {
  Gen gen(91);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = gen.integer(1, 8);
    const ComplexMatrix x = gen.observations(n, gen.integer(4 * n, 300));
    const CVector w0 = gen.cvector(n);
    const CVector w = mmse_filter_batch(x, project(w0, x));
    CHECK((w - w0).norm() <= 1e-8 * w0.norm());
  }
}

TEST_CASE("mmse_filter_batch examples") {
  Gen gen(92);
  const ComplexMatrix x = gen.observations(3, 100);
  CHECK(mmse_filter_batch(x, std::vector<Complex>(100, 0.0)).norm() == 0.0);

  // N = 1 reduces to the scalar Wiener gain.
  const ComplexMatrix x1 = gen.observations(1, 80);
  std::vector<Complex> q(80);
  Complex num(0, 0);
  double den = 0.0;
  for (int t = 0; t < 80; ++t) {
    q[t] = gen.cnormal();
    num += x1(0, t) * std::conj(q[t]);
    den += std::norm(x1(0, t));
  }
  CHECK(std::abs(mmse_filter_batch(x1, q)(0) - num / den) < 1e-14 * std::abs(num / den));
  CHECK_THROWS_AS(mmse_filter_batch(x, std::vector<Complex>(99, 0.0)), std::invalid_argument);
}

TEST_CASE("property: the MMSE residual is orthogonal to the observations") {
  Gen gen(93);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = gen.integer(2, 6);
    const int frames = gen.integer(5 * n, 400);
    const ComplexMatrix x = gen.observations(n, frames);
    std::vector<Complex> q(frames);
    for (auto& v : q) v = gen.cnormal();
    const CVector w = mmse_filter_batch(x, q);
    CVector cross = CVector::Zero(n);
    double scale = 0.0;
    for (int t = 0; t < frames; ++t) {
      const Complex e = q[t] - w.dot(x.col(t));
      cross += x.col(t) * std::conj(e);
      scale += x.col(t).norm() * std::abs(q[t]);
    }
    CHECK(cross.norm() <= 1e-8 * scale);
  }
}

TEST_CASE("the MMSE output carries its own scale") {
  Gen gen(94);
  const auto mix = random_mixture(gen, 3, 4, 6, 300);
  const MmseResult res = mmse_extract(mix.x, mix.reference, MmseOptions{});
  for (int f = 0; f < 6; ++f) {
    const ComplexMatrix xb = mix.x.bin_matrix(f);
    std::vector<Complex> q(300), y(300);
    for (int t = 0; t < 300; ++t) {
      q[t] = scaling_target(mix.reference(f, t), xb(0, t));
      y[t] = res.output.bins(f, t);
    }
    CHECK(std::abs(swf_factor_least_squares(q, y) - 1.0) < 1e-8);
  }
}

TEST_CASE("OnlineMmseBin") {
  Gen gen(95);
  const int n = 3;
  const double g = 0.99;

  SUBCASE("exact linear image is tracked at every frame") {
    const CVector w0 = gen.cvector(n);
    const ComplexMatrix init = gen.observations(n, 50);
    std::vector<CVector> init_x(50);
    for (int i = 0; i < 50; ++i) init_x[i] = init.col(i);
    const auto init_q = project(w0, init);
    OnlineMmseBin bin(init_x, init_q, g);
    for (int t = 0; t < 500; ++t) {
      const CVector x = gen.cvector(n);
      CHECK((bin.update(x, w0.dot(x)) - w0).norm() <= 1e-8 * w0.norm());
    }
  }

  SUBCASE("stationary noisy input converges to the batch solution") {
    const int frames = 20000;
    const double slow = 0.999;
    const CVector w0 = gen.cvector(n);
    const ComplexMatrix x = gen.observations(n, frames);
    std::vector<Complex> q = project(w0, x);
    for (auto& v : q) v += 0.1 * gen.cnormal();
    std::vector<CVector> init_x(20);
    for (int i = 0; i < 20; ++i) init_x[i] = x.col(i);
    OnlineMmseBin bin(init_x, std::span<const Complex>(q.data(), 20), slow);
    for (int t = 0; t < frames; ++t) bin.update(x.col(t), q[t]);
    const CVector batch = mmse_filter_batch(x, q);
    // Initialization weight has decayed by slow^frames; what remains is the
    // sampling noise of an exponential window of ~1000 frames.
    CHECK((bin.w() - batch).norm() <= 0.05 * batch.norm() + std::pow(slow, frames));
  }

  SUBCASE("q = 0 decays the filter toward zero") {
    const ComplexMatrix init = gen.observations(n, 30);
    std::vector<CVector> init_x(30);
    std::vector<Complex> init_q(30);
    for (int i = 0; i < 30; ++i) init_x[i] = init.col(i), init_q[i] = gen.cnormal();
    OnlineMmseBin bin(init_x, init_q, g);
    const double start = bin.w().norm();
    for (int t = 0; t < 2000; ++t) bin.update(gen.cvector(n), 0.0);
    CHECK(bin.w().norm() < 1e-6 * start);
  }

  SUBCASE("matrix-inversion-lemma inverse stays within 1e-6 of direct inversion") {
    const ComplexMatrix init = gen.observations(n, 30);
    std::vector<CVector> init_x(30);
    std::vector<Complex> init_q(30);
    for (int i = 0; i < 30; ++i) init_x[i] = init.col(i), init_q[i] = gen.cnormal();
    OnlineMmseBin bin(init_x, init_q, g, 1e-6, 1 << 30);
    double worst = 0.0;
    for (int t = 0; t < 2000; ++t) {
      const double scale = gen.log_uniform(0.1, 10.0);
      bin.update(scale * gen.cvector(n), gen.cnormal());
      worst = std::max(worst, rel_frobenius(bin.phi_x_inv().matrix(), direct_inverse(bin.phi_x().matrix())));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("mmse_extract modes") {
  Gen gen(96);
  const auto mix = random_mixture(gen, 2, 2, 3, 120);
  MmseOptions opts;
  opts.mode = RlsOnline{40, 0.98};
  const MmseResult online = mmse_extract(mix.x, mix.reference, opts);
  CHECK(online.output.bins.allFinite());
  CHECK(online.stats.window == 40);
  opts.mode = FifoOnline{40, 0.98};
  CHECK_THROWS_AS(mmse_extract(mix.x, mix.reference, opts), std::invalid_argument);
  opts.mode = Batch{};
  opts.ref_mic = 5;
  CHECK_THROWS_AS(mmse_extract(mix.x, mix.reference, opts), std::invalid_argument);
}

TEST_CASE("IVE-constrained SIBF with a single bin equals plain TV Laplacian SIBF") {
  Gen gen(97);
  const auto mix = random_mixture(gen, 3, 3, 1, 300);
  SibfConfig plain;
  plain.model.kind = TvGeneralizedGaussian{1.0, 0.25};
  plain.model.epsilon = 1e-9;
  const ExtractionResult a = extract(mix.x, mix.reference, plain);
  const ExtractionResult b = ive_constrained_extract(mix.x, mix.reference, SibfConfig{});
  CHECK((a.output.bins - b.output.bins).norm() <= 1e-8 * a.output.bins.norm());
}

TEST_CASE("IVE-constrained SIBF on a mixture") {
  Gen gen(98);
  auto mix = random_mixture(gen, 2, 2, 8, 200);
  SUBCASE("batch and RLS complete with finite output") {
    for (const AlgorithmMode& mode : {AlgorithmMode{Batch{}}, AlgorithmMode{RlsOnline{50, 0.98}}}) {
      SibfConfig cfg;
      cfg.mode = mode;
      const ExtractionResult res = ive_constrained_extract(mix.x, mix.reference, cfg);
      CHECK(res.output.bins.allFinite());
      CHECK(res.output.bins.norm() > 0.0);
    }
  }
  SUBCASE("an all-zero reference frame engages the floors without NaN") {
    mix.reference.col(17).setZero();
    mix.reference.col(120).setZero();
    for (const AlgorithmMode& mode : {AlgorithmMode{Batch{}}, AlgorithmMode{RlsOnline{50, 0.98}}}) {
      SibfConfig cfg;
      cfg.mode = mode;
      CHECK(ive_constrained_extract(mix.x, mix.reference, cfg).output.bins.allFinite());
    }
  }
}
