#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "sibf/sibf.hpp"
#include "support/generators.hpp"

using namespace sibf;
using sibf::testing::abs_cosine;
using sibf::testing::brute_force_gev;
using sibf::testing::Gen;
using sibf::testing::random_mixture;

namespace {

SourceModelSpec tv_gaussian() {
  SourceModelSpec m;
  m.kind = TvGeneralizedGaussian{2.0, 0.25};
  return m;
}

SourceModelSpec tv_laplacian() { return SourceModelSpec{}; }

std::vector<Complex> row(const ComplexMatrix& m, int i) {
  return std::vector<Complex>(m.row(i).begin(), m.row(i).end());
}

double relative_rms(const ComplexMatrix& a, const ComplexMatrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

// Runs the streaming engine over every frame and returns the outputs in order.
std::vector<OutputFrame> run_stream(const MultichannelSpectrogram& x, const RealMatrix& r,
                                    const SibfConfig& cfg, EngineOptions opts = {}) {
  PerFrameSibf engine(x.num_channels(), x.num_bins(), cfg, std::move(opts));
  std::vector<OutputFrame> all;
  for (int t = 0; t < x.num_frames(); ++t)
    for (OutputFrame& o : engine.push(frame_input(x, r, t))) all.push_back(std::move(o));
  for (OutputFrame& o : engine.finish()) all.push_back(std::move(o));
  return all;
}

ComplexMatrix stack_outputs(const std::vector<OutputFrame>& frames, int bins) {
  ComplexMatrix out(bins, static_cast<int>(frames.size()));
  for (std::size_t t = 0; t < frames.size(); ++t)
    for (int f = 0; f < bins; ++f) out(f, static_cast<int>(t)) = frames[t].y_scale[f];
  return out;
}

}  // namespace

TEST_CASE("normalize_reference") {
  CHECK(normalize_reference(2.0, 4.0) == 1.0);
  CHECK(normalize_reference(0.0, 3.0) == 0.0);

  // Constant reference: the initial window gives v_ref = 1 - g^Tb, after which
  // the recursion drives v_ref to 1.
  const double g = 0.99;
  const int tb = 50;
  const std::vector<double> ones(tb, 1.0);
  double v = init_v_ref(ones, g);
  CHECK(normalize_reference(1.0, v) == doctest::Approx(1.0 / std::sqrt(1.0 - std::pow(g, tb))).epsilon(1e-12));
  for (int t = 0; t < 5000; ++t) v = update_v_ref(v, 1.0, g);
  CHECK(normalize_reference(1.0, v) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("apply_filter") {
  Gen gen(71);
  const CVector x = gen.cvector(4);
  CVector e1 = CVector::Zero(4);
  e1(0) = 1.0;
  CHECK(apply_filter(e1, x) == x(0));
  CHECK(apply_filter(CVector::Zero(4), x) == Complex(0, 0));
  const CVector w = gen.cvector(4);
  Complex expected(0, 0);
  for (int i = 0; i < 4; ++i) expected += std::conj(w(i)) * x(i);
  CHECK(std::abs(apply_filter(w, x) - expected) < 1e-14);
  CHECK_THROWS_AS(apply_filter(gen.cvector(3), x), std::invalid_argument);
}

TEST_CASE("evaluate_objective examples") {
  const int t = 37;
  SourceModelSpec laplace;
  laplace.kind = TvGeneralizedGaussian{1.0, 0.25};
  const std::vector<double> ones(t, 1.0);
  const std::vector<Complex> y(t, Complex(1, 0));
  CHECK(evaluate_objective(y, ones, laplace) == doctest::Approx(t).epsilon(1e-14));
  std::vector<Complex> doubled(y);
  for (auto& z : doubled) z *= 2.0;
  CHECK(evaluate_objective(doubled, ones, laplace) ==
        doctest::Approx(2.0 * evaluate_objective(y, ones, laplace)).epsilon(1e-14));

  // Rho = 2 under the unit mean-square constraint.
  Gen gen(72);
  std::vector<Complex> unit(t);
  double e = 0.0;
  for (auto& z : unit) z = gen.cnormal(), e += std::norm(z);
  for (auto& z : unit) z *= std::sqrt(t / e);
  CHECK(evaluate_objective(unit, ones, tv_gaussian()) == doctest::Approx(t).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate_objective(unit, std::vector<double>(t - 1, 1.0), tv_gaussian()),
                  std::invalid_argument);
}

TEST_CASE("batch SIBF separates a noiseless two-source instantaneous mixture") {
  Gen gen(73);
  const auto mix = random_mixture(gen, 2, 2, 6, 400);
  SibfConfig cfg;
  cfg.model = tv_laplacian();
  const BatchEstimate est = estimate_filter_batch(mix.x, mix.reference, cfg);
  for (int f = 0; f < 6; ++f) {
    const ComplexMatrix xb = mix.x.bin_matrix(f);
    Complex cross(0, 0);
    double ey = 0.0, es = 0.0;
    for (int t = 0; t < 400; ++t) {
      const Complex y = est.filters.w[f].dot(xb.col(t));
      cross += y * std::conj(mix.sources[f](0, t));
      ey += std::norm(y);
      es += std::norm(mix.sources[f](0, t));
    }
    CHECK(std::abs(cross) / std::sqrt(ey * es) > 0.999);
  }
}

TEST_CASE("TV Gaussian batch filter matches the brute-force generalized eigenvector") {
  Gen gen(74);
  const int frames = 300;
  const auto mix = random_mixture(gen, 3, 3, 5, frames);
  SibfConfig cfg;
  cfg.model = tv_gaussian();
  const BatchEstimate est = estimate_filter_batch(mix.x, mix.reference, cfg);
  for (int f = 0; f < 5; ++f) {
    // Independent weighted covariance with c = r'^(-2 beta), r' = r / rms(r).
    double ms = 0.0;
    for (int t = 0; t < frames; ++t) ms += mix.reference(f, t) * mix.reference(f, t);
    ms /= frames;
    CMatrix phi_c = CMatrix::Zero(3, 3);
    CMatrix phi_x = CMatrix::Zero(3, 3);
    for (int t = 0; t < frames; ++t) {
      const CVector x = mix.x.frame_vector(f, t);
      const double rn = std::max(mix.reference(f, t) / std::sqrt(ms), 1e-9);
      phi_c += std::pow(rn, -0.5) * x * x.adjoint() / double(frames);
      phi_x += x * x.adjoint() / double(frames);
    }
    const auto oracle = brute_force_gev(phi_c, phi_x);
    CHECK(abs_cosine(est.filters.w[f], oracle.vectors.col(0)) >= 1.0 - 1e-9);
  }
}

TEST_CASE("batch estimate: constraint and descent") {
  Gen gen(75);
  const int frames = 250;
  const auto mix = random_mixture(gen, 3, 4, 8, frames);
  SibfConfig cfg;
  cfg.model = tv_laplacian();
  BatchOptions opts;
  opts.record_objective = true;
  const BatchEstimate est = estimate_filter_batch(mix.x, mix.reference, cfg, opts);
  for (int f = 0; f < 8; ++f) {
    const ComplexMatrix xb = mix.x.bin_matrix(f);
    double ms = 0.0;
    for (int t = 0; t < frames; ++t) ms += std::norm(est.filters.w[f].dot(xb.col(t)));
    CHECK(std::abs(ms / frames - 1.0) < 1e-8);

    const auto& obj = est.objective[f];
    REQUIRE(obj.size() == 10u);
    for (std::size_t k = 1; k < obj.size(); ++k) CHECK(obj[k] <= obj[k - 1] * (1.0 + 1e-9));
  }
}

TEST_CASE("TV Gaussian runs a single pass and a flat reference still yields a feasible filter") {
  Gen gen(76);
  auto mix = random_mixture(gen, 2, 2, 3, 100);
  mix.reference.setOnes();
  SibfConfig cfg;
  cfg.model = tv_gaussian();
  cfg.k_aux = 10;
  BatchOptions opts;
  opts.record_objective = true;
  const BatchEstimate est = estimate_filter_batch(mix.x, mix.reference, cfg, opts);
  for (int f = 0; f < 3; ++f) {
    CHECK(est.objective[f].size() == 1u);
    const CVector& w = est.filters.w[f];
    CHECK(w.allFinite());
    const HermitianMatrix phi = batch_covariance(mix.x.bin_matrix(f));
    CHECK(std::abs(w.dot(phi.matrix() * w) - 1.0) < 1e-8);
  }
}

TEST_CASE("property: the scaled output is invariant to the filter's phase") {
  Gen gen(77);
  const auto mix = random_mixture(gen, 3, 3, 6, 200);
  SibfConfig cfg;
  const ExtractionResult res = extract(mix.x, mix.reference, cfg);
  for (int f = 0; f < 6; ++f) {
    const ComplexMatrix xb = mix.x.bin_matrix(f);
    const CVector w = std::polar(1.0, gen.uniform(0.0, 6.283)) * res.final_filters.w[f];
    std::vector<Complex> y(200), q(200);
    const std::vector<Complex> x_m = row(xb, 0);
    for (int t = 0; t < 200; ++t) {
      y[t] = w.dot(xb.col(t));
      q[t] = scaling_target(mix.reference(f, t), x_m[t]);
    }
    const Complex g_swf = swf_factor_batch(q, y);
    const Complex g_mdp = mdp_factor_batch(x_m, y);
    const Spectrogram mdp_out = res.rescaled(ScalingMethod::Mdp);
    for (int t = 0; t < 200; ++t) {
      const double scale = std::abs(res.output.bins(f, t)) + 1e-12;
      CHECK(std::abs(g_swf * y[t] - res.output.bins(f, t)) <= 1e-10 * scale);
      CHECK(std::abs(g_mdp * y[t] - mdp_out.bins(f, t)) <= 1e-10 * (std::abs(mdp_out.bins(f, t)) + 1e-12));
    }
  }
}

TEST_CASE("property: repeated runs are bit-identical in every mode") {
  Gen gen(78);
  const auto mix = random_mixture(gen, 3, 3, 4, 160);
  const std::vector<AlgorithmMode> modes{Batch{}, WindowedBatch{60, 0.97}, FifoOnline{60, 0.97},
                                         RlsOnline{40, 0.97}};
  for (const AlgorithmMode& mode : modes) {
    SibfConfig cfg;
    cfg.mode = mode;
    const ExtractionResult a = extract(mix.x, mix.reference, cfg);
    const ExtractionResult b = extract(mix.x, mix.reference, cfg);
    CHECK(a.output.bins == b.output.bins);
    CHECK(a.y.bins == b.y.bins);
  }
}

TEST_CASE("TV Gaussian: windowed-batch and FIFO filters agree on every frame") {
  Gen gen(79);
  const int bins = 5;
  const auto mix = random_mixture(gen, 4, 4, bins, 260);
  SibfConfig windowed;
  windowed.model = tv_gaussian();
  windowed.mode = WindowedBatch{70, 0.97};
  SibfConfig fifo = windowed;
  fifo.mode = FifoOnline{70, 0.97};
  EngineOptions opts;
  opts.record_filters = true;
  const auto a = run_stream(mix.x, mix.reference, windowed, opts);
  const auto b = run_stream(mix.x, mix.reference, fifo, opts);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 260u);
  for (std::size_t t = 0; t < a.size(); ++t)
    for (int f = 0; f < bins; ++f)
      CHECK((a[t].w[f] - b[t].w[f]).norm() <= 1e-6 * b[t].w[f].norm());
  CHECK(relative_rms(stack_outputs(a, bins), stack_outputs(b, bins)) <= 1e-6);
}

TEST_CASE("windowed-batch auxiliary passes descend on the window objective") {
  Gen gen(80);
  const auto mix = random_mixture(gen, 3, 3, 4, 150);
  SibfConfig cfg;
  cfg.mode = WindowedBatch{50, 0.97};
  cfg.k_aux = 4;
  std::map<std::pair<int, int>, std::vector<double>> trace;
  EngineOptions opts;
  opts.observer = [&](const StepEvent& e) {
    if (e.kind == StepKind::AuxiliaryPass && e.window_objective)
      trace[{e.frame, e.bin}].push_back(*e.window_objective);
  };
  run_stream(mix.x, mix.reference, cfg, opts);
  REQUIRE(!trace.empty());
  for (const auto& [key, values] : trace) {
    CHECK(values.size() == 4u);
    for (std::size_t k = 1; k < values.size(); ++k) CHECK(values[k] <= values[k - 1] * (1.0 + 1e-9));
  }
}

TEST_CASE("RLS power-method steps keep w^H Phi_x w = 1") {
  Gen gen(81);
  const auto mix = random_mixture(gen, 3, 3, 3, 120);
  SibfConfig cfg;
  cfg.mode = RlsOnline{40, 0.98};
  cfg.pm_iterations = 3;
  int steps = 0;
  EngineOptions opts;
  opts.observer = [&](const StepEvent& e) {
    if (e.kind != StepKind::PowerStep) return;
    ++steps;
    CHECK(std::abs(e.w->dot(e.phi_x->matrix() * *e.w) - 1.0) < 1e-12);
  };
  run_stream(mix.x, mix.reference, cfg, opts);
  CHECK(steps == 120 * 3 * 3);
}

TEST_CASE("RLS tracks the FIFO output on stationary data") {
  Gen gen(82);
  const int bins = 4;
  const auto mix = random_mixture(gen, 3, 3, bins, 900);
  SibfConfig fifo;
  fifo.model = tv_laplacian();
  fifo.k_aux = 1;
  fifo.mode = FifoOnline{312, 0.99};
  SibfConfig rls = fifo;
  rls.mode = RlsOnline{312, 0.99};
  const auto a = run_stream(mix.x, mix.reference, rls);
  const auto b = run_stream(mix.x, mix.reference, fifo);
  CHECK(relative_rms(stack_outputs(a, bins), stack_outputs(b, bins)) < 0.1);
}

TEST_CASE("a segment shorter than T_b shrinks the window to the segment") {
  Gen gen(83);
  const auto mix = random_mixture(gen, 3, 3, 4, 50);
  SibfConfig cfg;
  cfg.model = tv_gaussian();
  cfg.mode = WindowedBatch{312, 1.0 - 1e-9};
  const ExtractionResult res = extract(mix.x, mix.reference, cfg);
  CHECK(res.stats.window == 50);
  CHECK(res.stats.frames == 50);

  // With g -> 1 every frame sees a rotation of the same 50 frames with equal
  // weight, so each per-frame filter is the single batch estimate.
  SibfConfig batch = cfg;
  batch.mode = Batch{};
  const BatchEstimate once = estimate_filter_batch(mix.x, mix.reference, batch);
  EngineOptions opts;
  opts.record_filters = true;
  const auto frames = run_stream(mix.x, mix.reference, cfg, opts);
  REQUIRE(frames.size() == 50u);
  for (const OutputFrame& o : frames)
    for (int f = 0; f < 4; ++f) CHECK(abs_cosine(o.w[f], once.filters.w[f]) >= 1.0 - 1e-6);
}

TEST_CASE("silent bins emit zeros without counting as failures") {
  Gen gen(84);
  auto mix = random_mixture(gen, 2, 2, 4, 80);
  for (auto& ch : mix.x.channels) ch.bins.row(2).setZero();
  for (const AlgorithmMode& mode : {AlgorithmMode{Batch{}}, AlgorithmMode{RlsOnline{30, 0.97}}}) {
    SibfConfig cfg;
    cfg.mode = mode;
    const ExtractionResult res = extract(mix.x, mix.reference, cfg);
    CHECK(res.output.bins.row(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(res.stats.failed_bins == 0);
    CHECK(res.stats.failed_updates == 0);
    CHECK(res.output.bins.allFinite());
  }
}

TEST_CASE("rank-deficient bins are isolated as failures and zero-filled") {
  // Four microphones observing three noiseless sources: Phi_x is singular and
  // the minimum generalized eigenvector lies in its null space.
  Gen gen(87);
  const auto mix = random_mixture(gen, 4, 3, 3, 100);
  for (const AlgorithmMode& mode : {AlgorithmMode{Batch{}}, AlgorithmMode{RlsOnline{40, 0.97}}}) {
    SibfConfig cfg;
    cfg.mode = mode;
    const ExtractionResult res = extract(mix.x, mix.reference, cfg);
    CHECK(res.output.bins.allFinite());
    for (int f = 0; f < 3; ++f) {
      if (res.final_filters.failed[f]) CHECK(res.output.bins.row(f).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("configuration and input validation") {
  Gen gen(85);
  const auto mix = random_mixture(gen, 2, 2, 3, 40);
  SibfConfig cfg;
  cfg.ref_mic = 2;
  CHECK_THROWS_AS(extract(mix.x, mix.reference, cfg), std::invalid_argument);
  cfg.ref_mic = 0;
  cfg.pm_iterations = 0;
  CHECK_THROWS_AS(extract(mix.x, mix.reference, cfg), std::invalid_argument);
  cfg.pm_iterations = 2;
  cfg.scaling = ScalingMethod::Ideal;
  CHECK_THROWS_AS(extract(mix.x, mix.reference, cfg), std::invalid_argument);
  OracleInput oracle{&mix.target_image};
  CHECK_NOTHROW(extract(mix.x, mix.reference, cfg, oracle));
  cfg.scaling = ScalingMethod::Swf;
  CHECK_THROWS_AS(extract(mix.x, RealMatrix::Ones(3, 39), cfg), std::invalid_argument);

  SibfConfig ive;
  ive.model.kind = IveConstrainedTvLaplacian{0.25};
  ive.mode = WindowedBatch{20, 0.97};
  CHECK_THROWS_AS(extract(mix.x, mix.reference, ive), std::invalid_argument);

  SibfConfig rls;
  rls.mode = RlsOnline{};
  PerFrameSibf engine(2, 3, rls);
  CHECK_THROWS_AS(engine.finish(), std::invalid_argument);
}

TEST_CASE("ideal scaling restores the target image under exact extraction") {
  Gen gen(86);
  const auto mix = random_mixture(gen, 2, 2, 4, 300);
  SibfConfig cfg;
  cfg.scaling = ScalingMethod::Ideal;
  const ExtractionResult res = extract(mix.x, mix.reference, cfg, OracleInput{&mix.target_image});
  const ComplexMatrix& target = mix.target_image.channels[0].bins;
  CHECK(relative_rms(res.output.bins, target) < 0.05);
}
