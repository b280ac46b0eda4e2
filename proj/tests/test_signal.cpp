#include <doctest.h>

#include <cmath>

#include "fedmix/signal.hpp"
#include "test_util.hpp"

using namespace fedmix;

namespace {

AudioBuffer buf(std::initializer_list<double> samples, int rate = 8000) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(samples.size()));
  Eigen::Index i = 0;
  for (double s : samples) v(i++) = s;
  return AudioBuffer{std::move(v), rate};
}

}  // namespace

TEST_SUITE("signal") {

TEST_CASE("si_sdr hand-evaluated example") {
  // alpha = (1*1 + 1*0) / 1 = 1; |alpha*y|^2 = 1; residual = [0,-1], |r|^2 = 1
  // => 10*log10(1/1) = 0 dB up to the epsilon guard.
  const double db = si_sdr(buf({1, 1}), buf({1, 0}));
  CHECK(std::abs(db) < 1e-6);
}

TEST_CASE("si_sdr is invariant to positive estimate scaling") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const AudioBuffer estimate = testutil::random_audio(rng, 128);
    const AudioBuffer target = testutil::random_audio(rng, 128);
    const double base = si_sdr(estimate, target);
    for (double c : {0.1, 1.0, 3.7}) {
      const AudioBuffer scaled{c * estimate.samples, estimate.sample_rate};
      CHECK(std::abs(si_sdr(scaled, target) - base) < 1e-9);
    }
  }
}

TEST_CASE("si_sdr of a perfect estimate hits the cap") {
  CHECK(si_sdr(buf({1, 2, 3}), buf({1, 2, 3})) == kSiSdrCapDb);
}

TEST_CASE("si_sdr is invariant under a common sample permutation") {
  Rng rng(102);
  const AudioBuffer estimate = testutil::random_audio(rng, 64);
  const AudioBuffer target = testutil::random_audio(rng, 64);
  const double base = si_sdr(estimate, target);

  std::vector<int> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Eigen::VectorXd pe(64), pt(64);
  for (int i = 0; i < 64; ++i) {
    pe(i) = estimate.samples(perm[static_cast<std::size_t>(i)]);
    pt(i) = target.samples(perm[static_cast<std::size_t>(i)]);
  }
  CHECK(si_sdr(AudioBuffer{pe, 8000}, AudioBuffer{pt, 8000}) ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("si_sdr error paths") {
  CHECK_THROWS_AS(si_sdr(buf({1, 2}), buf({1, 2, 3})), ContractViolation);
  CHECK_THROWS_AS(si_sdr(buf({1, 2}, 8000), buf({1, 2}, 16000)), ContractViolation);
  CHECK_THROWS_AS(si_sdr(buf({1, 2}), buf({0, 0})), DomainError);
}

TEST_CASE("si_sdr_improvement examples") {
  const AudioBuffer target = buf({1, 0});
  const AudioBuffer mixture = buf({1, 1});

  SUBCASE("estimate equal to the mixture scores zero") {
    CHECK(si_sdr_improvement(mixture, target, mixture) == 0.0);
  }
  SUBCASE("perfect estimate scores cap minus the mixture score") {
    const double mixture_db = si_sdr(mixture, target);
    CHECK(si_sdr_improvement(target, target, mixture) ==
          doctest::Approx(kSiSdrCapDb - mixture_db).epsilon(1e-12));
  }
  SUBCASE("hand-evaluated example: both terms are 0 dB") {
    CHECK(std::abs(si_sdr_improvement(buf({1, 1}), target, mixture)) < 1e-6);
  }
}

TEST_CASE("synthesize_mom examples and properties") {
  CHECK(synthesize_mom(buf({1, 2}), buf({0, 0})).samples.isApprox(buf({1, 2}).samples));
  CHECK(synthesize_mom(buf({1, -1}), buf({-1, 1})).samples.cwiseAbs().maxCoeff() == 0.0);
  const AudioBuffer mom = synthesize_mom(buf({0.5, 0.5}), buf({0.25, -0.25}));
  CHECK(mom.samples(0) == doctest::Approx(0.75));
  CHECK(mom.samples(1) == doctest::Approx(0.25));
  CHECK_THROWS_AS(synthesize_mom(buf({1}), buf({1, 2})), ContractViolation);

  Rng rng(103);
  const AudioBuffer a = testutil::random_audio(rng, 32);
  const AudioBuffer b = testutil::random_audio(rng, 32);
  const AudioBuffer c = testutil::random_audio(rng, 32);
  // commutative exactly, associative within 1e-12
  CHECK(synthesize_mom(a, b).samples == synthesize_mom(b, a).samples);
  const Eigen::VectorXd left = synthesize_mom(synthesize_mom(a, b), c).samples;
  const Eigen::VectorXd right = synthesize_mom(a, synthesize_mom(b, c)).samples;
  CHECK((left - right).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mixture consistency projection") {
  Rng rng(104);

  SUBCASE("estimates already summing to the mixture are unchanged") {
    SourceStack stack = testutil::random_stack(rng, 3, 40);
    const AudioBuffer mixture{stack.sources.colwise().sum().transpose(), 8000};
    const SourceStack projected = mixture_consistency_project(stack, mixture);
    CHECK((projected.sources - stack.sources).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("zero estimates split the mixture uniformly") {
    SourceStack stack{Eigen::MatrixXd::Zero(3, 2), 8000};
    const SourceStack projected = mixture_consistency_project(stack, buf({3, 6}));
    for (int m = 0; m < 3; ++m) {
      CHECK(projected.sources(m, 0) == doctest::Approx(1.0));
      CHECK(projected.sources(m, 1) == doctest::Approx(2.0));
    }
  }

  SUBCASE("outputs sum to the mixture and the projection is idempotent") {
    for (int trial = 0; trial < 20; ++trial) {
      SourceStack stack = testutil::random_stack(rng, 3, 64);
      const AudioBuffer mixture = testutil::random_audio(rng, 64);
      const SourceStack once = mixture_consistency_project(stack, mixture);
      const Eigen::VectorXd sums = once.sources.colwise().sum().transpose();
      CHECK((sums - mixture.samples).cwiseAbs().maxCoeff() < 1e-6);
      const SourceStack twice = mixture_consistency_project(once, mixture);
      CHECK((twice.sources - once.sources).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("length mismatch rejected") {
    SourceStack stack = testutil::random_stack(rng, 3, 8);
    CHECK_THROWS_AS(mixture_consistency_project(stack, buf({1, 2})), ContractViolation);
  }
}

TEST_CASE("make_audio validates") {
  CHECK_THROWS_AS(make_audio(Eigen::VectorXd(), 8000), ContractViolation);
  Eigen::VectorXd bad(2);
  bad << 1.0, std::nan("");
  CHECK_THROWS_AS(make_audio(bad, 8000), NumericError);
}

}  // TEST_SUITE
