#include <catch2/catch.hpp>

#include <cmath>

#include "amci/models/cancer.hpp"
#include "amci/models/tail.hpp"

using namespace amci;

namespace {

const std::string kDataDir = AMCI_DEFAULT_DATA_DIR;

// Gauss-Jordan inverse, independent of the Cholesky route.
Matrix gauss_jordan_inverse(Matrix a) {
  const std::size_t n = a.rows();
  Matrix inv = Matrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    for (std::size_t c = 0; c < n; ++c) {
      std::swap(a(col, c), a(pivot, c));
      std::swap(inv(col, c), inv(pivot, c));
    }
    const double d = a(col, col);
    for (std::size_t c = 0; c < n; ++c) {
      a(col, c) /= d;
      inv(col, c) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a(r, col);
      for (std::size_t c = 0; c < n; ++c) {
        a(r, c) -= factor * a(col, c);
        inv(r, c) -= factor * inv(col, c);
      }
    }
  }
  return inv;
}

}  // namespace

TEST_CASE("tail posterior conjugacy", "[models]") {
  const auto model = make_tail1d();
  SECTION("y = 0 gives N(0, 1/2)") {
    const std::vector<double> y = {0.0};
    CHECK(model->posterior_mean(y)[0] == Approx(0.0).margin(1e-15));
    CHECK(model->posterior_cov()(0, 0) == Approx(0.5).epsilon(1e-12));
  }
  SECTION("y = 1 gives mean 1/2, variance 1/2") {
    const std::vector<double> y = {1.0};
    CHECK(model->posterior_mean(y)[0] == Approx(0.5).epsilon(1e-12));
  }
  SECTION("posterior density times evidence recovers the joint") {
    RngStream rng(3, 1);
    for (int i = 0; i < 100; ++i) {
      const auto [x, y] = model->sample_joint(rng);
      const Density post = model->posterior_density(y);
      const double lhs = post.log_pdf(x) + model->log_evidence(y);
      const double rhs = model->log_joint(x, y);
      REQUIRE(lhs == Approx(rhs).epsilon(1e-10));
    }
  }
}

TEST_CASE("five-dimensional posterior against a dense inverse oracle", "[models]") {
  const auto model = make_tail5d(kDataDir + "/tail5d_sigma1.txt");
  // The shipped matrix must round-trip exactly.
  const Matrix sigma1 = load_matrix(kDataDir + "/tail5d_sigma1.txt", 5);
  CHECK(sigma1(0, 0) == 1.2449);
  CHECK(sigma1(4, 4) == 1.0625);
  CHECK(sigma1(0, 4) == 0.0604);
  CHECK(sigma1(2, 1) == 0.1650);

  // Sigma_post = (Sigma1^-1 + I)^-1 via an independent inverse.
  Matrix sum = gauss_jordan_inverse(sigma1);
  for (std::size_t i = 0; i < 5; ++i) sum(i, i) += 1.0;
  const Matrix expect = gauss_jordan_inverse(sum);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(model->posterior_cov()(i, j) == Approx(expect(i, j)).margin(1e-10));

  SECTION("joint factorization holds in five dimensions") {
    RngStream rng(5, 2);
    for (int i = 0; i < 100; ++i) {
      const auto [x, y] = model->sample_joint(rng);
      const Density post = model->posterior_density(y);
      REQUIRE(post.log_pdf(x) + model->log_evidence(y) ==
              Approx(model->log_joint(x, y)).epsilon(1e-10));
    }
  }
}

TEST_CASE("tail ground truth", "[models]") {
  const auto model = make_tail1d();
  RngStream rng(7, 3);
  SECTION("symmetric point gives exactly one half") {
    const std::vector<double> y = {0.0}, theta = {0.0};
    CHECK(model->truth(y, theta, rng).value == Approx(0.5).epsilon(1e-14));
  }
  SECTION("high-mismatch point matches the quadrature oracle") {
    const std::vector<double> y = {1.0}, theta = {3.0};
    const double mu = model->truth(y, theta, rng).value;
    CHECK(mu == Approx(model->truth_quadrature(1.0, 3.0)).epsilon(1e-8));
    CHECK(mu == Approx(2.03476e-4).epsilon(1e-4));
  }
  SECTION("low-mismatch point") {
    const std::vector<double> y = {3.0}, theta = {0.1};
    const double mu = model->truth(y, theta, rng).value;
    CHECK(mu == Approx(model->truth_quadrature(3.0, 0.1)).epsilon(1e-8));
    CHECK(mu == Approx(0.97614).margin(5e-6));
  }
  SECTION("analytic and quadrature truths agree across random datapoints") {
    for (int i = 0; i < 100; ++i) {
      const auto [x, y] = model->sample_joint(rng);
      (void)x;
      const std::vector<double> theta = model->sample_theta(rng);
      const double analytic = model->truth(y, theta, rng).value;
      const double quad = model->truth_quadrature(y[0], theta[0]);
      REQUIRE(analytic == Approx(quad).epsilon(1e-6));
    }
  }
}

TEST_CASE("five-dimensional oracle truth validates on a diagonal model", "[models][slow]") {
  // With a diagonal prior the posterior factorizes and the tail mass has a
  // closed form; the half-normal importance oracle must agree.
  Matrix diag1 = Matrix::identity(5);
  for (std::size_t i = 0; i < 5; ++i) diag1(i, i) = 1.2;
  TailIntegralModel model(5, diag1, Matrix::identity(5), 3.0);
  RngStream rng(11, 4);
  const auto [x0, y] = model.sample_joint(rng);
  (void)x0;
  const std::vector<double> theta = {0.3, 1.0, 0.2, 1.4, 0.6};
  const GroundTruth analytic = model.truth(y, theta, rng);
  REQUIRE(analytic.method == GroundTruth::Method::analytic);
  const GroundTruth oracle = model.truth_oracle(y, theta, 1000000, rng);
  CHECK(std::abs(oracle.value - analytic.value) < 4.0 * oracle.std_error + 1e-12);
  CHECK(oracle.std_error / oracle.value < 0.05);
}

TEST_CASE("theorem-1 oracle proposals", "[models]") {
  const auto model = make_tail1d();
  const OracleProposals oracle = model->oracle_proposals();
  RngStream rng(13, 5);

  SECTION("one sample from each proposal reproduces the truth exactly") {
    for (int i = 0; i < 50; ++i) {
      const auto [x0, y] = model->sample_joint(rng);
      (void)x0;
      const std::vector<double> theta = model->sample_theta(rng);
      const double mu = model->truth(y, theta, rng).value;
      const std::vector<double> cond1 = concat_cond(y, theta);

      WeightedBatch b1, b2;
      auto [xp, lqp] = oracle.q1_plus->sample(cond1, rng);
      b1.log_weights.push_back(model->log_joint(xp, y) - lqp);
      b1.f_values.push_back(model->f(xp, theta));
      auto [xm, lqm] = oracle.q2->sample(y, rng);
      b2.log_weights.push_back(model->log_joint(xm, y) - lqm);
      const AmciEstimate est = amci_two_term(b1, b2);
      REQUIRE(est.value == Approx(mu).epsilon(1e-10));
    }
  }
  SECTION("oracle q2 density integrates to one") {
    const std::vector<double> y = {1.4};
    const double mass = integrate(
        [&](double x) {
          return std::exp(oracle.q2->log_density(std::vector<double>{x}, y));
        },
        -8.0, 9.0, 1e-9);
    CHECK(mass == Approx(1.0).margin(1e-6));
  }
  SECTION("oracle q1+ draws stay above theta") {
    const std::vector<double> cond = {0.5, 2.0};  // (y, theta)
    for (int i = 0; i < 2000; ++i) {
      const auto [x, lq] = oracle.q1_plus->sample(cond, rng);
      (void)lq;
      REQUIRE(x[0] > 2.0);
    }
  }
  SECTION("the cancer model has no closed-form oracles") {
    CancerModel cancer;
    CHECK_THROWS_AS(cancer.oracle_proposals(), std::logic_error);
  }
}

TEST_CASE("amci components are unbiased", "[models][slow]") {
  // Mean of E2-hat over many replicates approaches the analytic evidence
  // p(y) = N(y; 0, Sigma1 + Sigma2), even under an imperfect proposal.
  const auto model = make_tail1d();
  const std::vector<double> y = {0.8};
  const double evidence = std::exp(model->log_evidence(y));
  const Density q2{Normal{0.3, 1.4}};
  RngStream rng(37, 20);
  const std::size_t reps = 10000, m = 4;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    std::vector<double> lw(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double x = q2.sample1(rng);
      lw[i] = model->log_joint(std::vector<double>{x}, y) - q2.log_pdf(x);
    }
    const double e2 = std::exp(log_sum_exp(lw) - std::log(double(m)));
    sum += e2;
    sum_sq += e2 * e2;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum_sq / reps - mean * mean) / reps);
  CHECK(std::abs(mean - evidence) < 4.0 * se);
}

TEST_CASE("kappa vanishes under an oracle numerator proposal", "[models]") {
  const auto model = make_tail1d();
  const OracleProposals oracle = model->oracle_proposals();
  RngStream rng(41, 21);
  const std::vector<double> y = {0.6}, theta = {1.2};
  const std::vector<double> cond1 = concat_cond(y, theta);
  // Oracle q1 collapses the numerator spread; a deliberately widened q2
  // keeps sigma2 positive so the ratio is well defined.
  const Density q2{Normal{model->posterior_mean(y)[0], 1.3 * std::sqrt(0.5)}};
  WeightedBatch b1, b2;
  for (int i = 0; i < 32; ++i) {
    auto [xp, lqp] = oracle.q1_plus->sample(cond1, rng);
    b1.log_weights.push_back(model->log_joint(xp, y) - lqp);
    b1.f_values.push_back(model->f(xp, theta));
    const double xm = q2.sample1(rng);
    b2.log_weights.push_back(model->log_joint(std::vector<double>{xm}, y) - q2.log_pdf(xm));
  }
  const AmciEstimate est = amci_two_term(b1, b2);
  CHECK(est.sigma1 < 1e-12);
  CHECK(est.sigma2 > 0.0);
  CHECK(est.kappa < 1e-10);
  CHECK(est.ess1 == Approx(32.0).epsilon(1e-9));  // unit-variance oracle weights
}

TEST_CASE("snis with the exact posterior at the symmetric point", "[models][slow]") {
  const auto model = make_tail1d();
  const std::vector<double> y = {0.0}, theta = {0.0};
  const Density post = model->posterior_density(y);
  RngStream rng(17, 6);
  const std::size_t n = 100000;
  WeightedBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = post.sample1(rng);
    const std::vector<double> xv = {x};
    b.log_weights.push_back(model->log_joint(xv, y) - post.log_pdf(x));
    b.f_values.push_back(model->f(xv, theta));
  }
  CHECK(snis_estimate(b) == Approx(0.5).margin(3.0 * std::sqrt(0.25 / static_cast<double>(n))));
}

TEST_CASE("positivised estimator recovers a posterior mean exactly", "[models]") {
  // f(x) = x with target p(x | y = 2) = N(1, 1/2); oracle halves are
  // x^{+-} weighted posteriors sampled by inverse CDF on the analytic
  // partial-expectation CDF.
  const auto model = make_tail1d();
  const std::vector<double> y = {2.0};
  const double m = 1.0, s = std::sqrt(0.5);
  const double c_plus = m * normal_cdf(m / s) + s * std::exp(normal_logpdf(m / s));
  const double c_minus = c_plus - m;

  const auto partial_cdf_plus = [&](double x) {  // integral of t n(t; m, s) from 0 to x
    const double z0 = -m / s, zx = (x - m) / s;
    return (m * (normal_cdf(zx) - normal_cdf(z0)) +
            s * (std::exp(normal_logpdf(z0)) - std::exp(normal_logpdf(zx)))) /
           c_plus;
  };
  const auto sample_plus = [&](RngStream& rng) {
    const double u = rng.uniform();
    double lo = 0.0, hi = m + 12.0 * s;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (partial_cdf_plus(mid) < u ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  const auto sample_minus = [&](RngStream& rng) {  // |x| under the negative half
    const double u = rng.uniform();
    double lo = -(m + 12.0 * s), hi = 0.0;
    const auto cdf = [&](double x) {  // integral of -t n(t; m, s) from -inf to x, x <= 0
      const double zx = (x - m) / s;
      return (s * std::exp(normal_logpdf(zx)) - m * normal_cdf(zx)) / c_minus;
    };
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < u ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };

  const Density post = model->posterior_density(y);
  RngStream rng(19, 7);
  for (int rep = 0; rep < 25; ++rep) {
    WeightedBatch bp, bm, b2;
    const double xp = sample_plus(rng);
    bp.f_values.push_back(xp);
    bp.log_weights.push_back(model->log_joint(std::vector<double>{xp}, y) -
                             (std::log(xp) + post.log_pdf(xp) - std::log(c_plus)));
    const double xm = sample_minus(rng);
    bm.f_values.push_back(-xm);
    bm.log_weights.push_back(model->log_joint(std::vector<double>{xm}, y) -
                             (std::log(-xm) + post.log_pdf(xm) - std::log(c_minus)));
    const double x2 = post.sample1(rng);
    b2.log_weights.push_back(model->log_joint(std::vector<double>{x2}, y) - post.log_pdf(x2));
    const AmciEstimate est = amci_positivised(bp, bm, b2);
    REQUIRE(est.value == Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("tumor ODE", "[models]") {
  const TumorOdeParams p;
  SECTION("at c = K the log term vanishes") {
    const detail::TumorState s{700.0, 700.0};
    CHECK(detail::tumor_deriv(p, 0.0, s).c == 0.0);
    CHECK(detail::tumor_deriv(p, 0.4, s).c == Approx(-0.4 * 700.0));
    CHECK(detail::tumor_deriv(p, 0.0, s).k ==
          Approx(p.phi * 700.0 - p.psi * 700.0 * std::cbrt(700.0 * 700.0)));
  }
  SECTION("halving the step changes c100 by less than 1e-6 relative") {
    RngStream rng(23, 8);
    const Density c0_prior{Gamma{25.0, 20.0}};
    const Density eps_prior{Beta{5.0, 10.0}};
    for (int i = 0; i < 100; ++i) {
      const double c0 = c0_prior.sample1(rng);
      const double eps = eps_prior.sample1(rng);
      const double coarse = tumor_rk4_fixed(p, c0, eps, 100.0, 0.05);
      const double fine = tumor_rk4_fixed(p, c0, eps, 100.0, 0.025);
      REQUIRE(std::abs(coarse - fine) / std::max(std::abs(fine), 1.0) < 1e-6);
    }
  }
  SECTION("global error scales as step^4") {
    const double c0 = 500.0, eps = 0.3;
    const double ref = tumor_rk4_fixed(p, c0, eps, 100.0, 1e-3);
    std::vector<double> log_h, log_err;
    for (double h : {0.5, 0.25, 0.125, 0.0625}) {
      const double err = std::abs(tumor_rk4_fixed(p, c0, eps, 100.0, h) - ref);
      log_h.push_back(std::log(h));
      log_err.push_back(std::log(err));
    }
    double mh = 0.0, me = 0.0;
    for (std::size_t i = 0; i < log_h.size(); ++i) {
      mh += log_h[i];
      me += log_err[i];
    }
    mh /= 4.0;
    me /= 4.0;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      num += (log_h[i] - mh) * (log_err[i] - me);
      den += (log_h[i] - mh) * (log_h[i] - mh);
    }
    const double slope = num / den;
    CHECK(slope == Approx(4.0).margin(0.3));
  }
  SECTION("path integration matches two separate runs") {
    const auto [c5, c100] = tumor_rk4_path(p, 480.0, 0.25, 5.0, 100.0, 0.05);
    CHECK(c5 == Approx(tumor_rk4_fixed(p, 480.0, 0.25, 5.0, 0.05)).epsilon(1e-12));
    CHECK(c100 == Approx(tumor_rk4_fixed(p, 480.0, 0.25, 100.0, 0.05)).epsilon(1e-12));
  }
  SECTION("tumor size is non-increasing in the treatment response") {
    for (double c0 : {200.0, 500.0, 900.0}) {
      double prev = pos_inf;
      for (double eps = 0.0; eps <= 1.0; eps += 0.1) {
        const double c100 = simulate_tumor(p, c0, eps, 100.0);
        CHECK(c100 <= prev + 1e-9);
        prev = c100;
      }
    }
  }
  SECTION("input validation") {
    CHECK_THROWS_AS(simulate_tumor(p, -1.0, 0.5, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(simulate_tumor(p, 500.0, 1.5, 10.0), std::invalid_argument);
  }
}

TEST_CASE("treatment loss", "[models]") {
  CHECK(cancer_loss(300.0) == Approx(0.5).margin(1e-15));
  CHECK(cancer_loss(1e7) == Approx(1e-8).epsilon(1e-6));
  const double expect0 = 0.5 * (1.0 - 2e-8) * (std::tanh(2.0) + 1.0) + 1e-8;
  CHECK(cancer_loss(0.0) == Approx(expect0).epsilon(1e-14));
  CHECK(cancer_loss(0.0) == Approx(0.98201).margin(5e-6));
  for (double c : {0.0, 10.0, 290.0, 300.0, 310.0, 5000.0}) {
    const double l = cancer_loss(c);
    CHECK(l > 0.0);
    CHECK(l < 1.0);
  }
}

TEST_CASE("cancer observation model", "[models]") {
  SECTION("moment identities: mean c and variance 1e4") {
    for (double c : {120.0, 500.0, 850.0}) {
      const Density d = CancerModel::observation_density(c);
      CHECK(d.mean() == Approx(c).epsilon(1e-12));
      const auto& g = std::get<Gamma>(d.family());
      CHECK(g.shape * g.scale * g.scale == Approx(1e4).epsilon(1e-12));
    }
  }
  SECTION("empirical moments agree") {
    RngStream rng(29, 9);
    const Density d = CancerModel::observation_density(400.0);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = d.sample1(rng);
      s += x;
      s2 += x * x;
    }
    const double mean = s / n;
    CHECK(mean == Approx(400.0).margin(1.5));
    CHECK(s2 / n - mean * mean == Approx(1e4).epsilon(0.05));
  }
}

TEST_CASE("cancer ground truth oracle", "[models][slow]") {
  CancerModel model;
  model.set_oracle_samples(30000);
  RngStream rng(31, 10);
  const auto [x, y] = model.sample_joint(rng);
  (void)x;

  SECTION("truth lies strictly inside (0, 1) and carries an error bar") {
    RngStream trng(31, 11);
    const GroundTruth t = model.truth(y, {}, trng);
    CHECK(t.value > 0.0);
    CHECK(t.value < 1.0);
    CHECK(t.std_error > 0.0);
    CHECK(t.method == GroundTruth::Method::snis_oracle);
  }
  SECTION("two disjoint-seed oracles agree within three combined errors") {
    CancerModel a, b;
    a.set_oracle_samples(30000);
    b.set_oracle_samples(30000);
    a.prepare_truth_cache(30000, RngStream(1, 100));
    b.prepare_truth_cache(30000, RngStream(2, 200));
    RngStream ra(0, 0), rb(0, 0);
    const GroundTruth ta = a.truth(y, {}, ra);
    const GroundTruth tb = b.truth(y, {}, rb);
    const double combined = std::sqrt(ta.std_error * ta.std_error + tb.std_error * tb.std_error);
    CHECK(std::abs(ta.value - tb.value) < 3.0 * combined);
  }
}
