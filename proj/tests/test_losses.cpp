#include <doctest.h>

#include <cmath>

#include "fedmix/losses.hpp"
#include "fedmix/model.hpp"
#include "fedmix/signal.hpp"
#include "test_util.hpp"

using namespace fedmix;

namespace {

// Independent oracle: negative SI-SDR straight from the published formula,
// written without the library's kernels.
double oracle_neg_si_sdr(const Eigen::VectorXd& est, const Eigen::VectorXd& tgt) {
  const double alpha = est.dot(tgt) / tgt.squaredNorm();
  const Eigen::VectorXd scaled = alpha * tgt;
  const double num = scaled.squaredNorm();
  if (num == 0.0) return kSiSdrCapDb;
  const double den = (scaled - est).squaredNorm() + kSiSdrEps * num;
  double db = 10.0 * std::log10(num / den);
  db = std::min(db, kSiSdrCapDb);
  db = std::max(db, -kSiSdrCapDb);
  return -db;
}

// Brute-force enumeration over Pi_{2,3} = {(2,3),(3,2)}.
double oracle_supervised(const SourceStack& est, const LossInstance& inst) {
  const Eigen::VectorXd e1 = est.sources.row(0).transpose();
  const Eigen::VectorXd e2 = est.sources.row(1).transpose();
  const Eigen::VectorXd e3 = est.sources.row(2).transpose();
  const Eigen::VectorXd& s1 = inst.references->first.samples;
  const Eigen::VectorXd& s2 = inst.references->second.samples;
  const Eigen::VectorXd& n = inst.noise.samples;
  const std::array<std::array<const Eigen::VectorXd*, 2>, 2> perms = {
      {{&e2, &e3}, {&e3, &e2}}};
  double best = std::numeric_limits<double>::infinity();
  for (const auto& perm : perms) {
    best = std::min(best,
                    oracle_neg_si_sdr(*perm[0], s2) + oracle_neg_si_sdr(*perm[1], n));
  }
  return oracle_neg_si_sdr(e1, s1) + 0.5 * best;
}

double oracle_unsupervised(const SourceStack& est, const LossInstance& inst) {
  const Eigen::VectorXd e1 = est.sources.row(0).transpose();
  const Eigen::VectorXd e2 = est.sources.row(1).transpose();
  const Eigen::VectorXd e3 = est.sources.row(2).transpose();
  const Eigen::VectorXd& x = inst.noisy_speech.samples;
  const Eigen::VectorXd& n = inst.noise.samples;
  const std::array<std::array<const Eigen::VectorXd*, 2>, 2> perms = {
      {{&e2, &e3}, {&e3, &e2}}};
  double best = std::numeric_limits<double>::infinity();
  for (const auto& perm : perms) {
    best = std::min(best, oracle_neg_si_sdr(e1 + *perm[0], x) +
                              oracle_neg_si_sdr(*perm[1], n));
  }
  return best;
}

SourceStack swap_slots_23(const SourceStack& stack) {
  SourceStack swapped = stack;
  swapped.sources.row(1) = stack.sources.row(2);
  swapped.sources.row(2) = stack.sources.row(1);
  return swapped;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("supervised loss with perfect estimates hits the capped floor") {
  Rng rng(41);
  const LossInstance inst = testutil::random_supervised_instance(rng, 32);
  SourceStack perfect{Eigen::MatrixXd(3, 32), 8000};
  perfect.sources.row(0) = inst.references->first.samples.transpose();
  perfect.sources.row(1) = inst.references->second.samples.transpose();
  perfect.sources.row(2) = inst.noise.samples.transpose();
  // -(cap + 0.5*(cap + cap)) = -2*cap
  CHECK(supervised_loss(perfect, inst) == doctest::Approx(-2.0 * kSiSdrCapDb));
}

TEST_CASE("unsupervised loss with a perfect regrouping hits -2*cap") {
  Rng rng(43);
  const LossInstance inst = testutil::random_unsupervised_instance(rng, 32);
  SourceStack perfect{Eigen::MatrixXd(3, 32), 8000};
  // slots 1+2 rebuild x, slot 3 rebuilds n
  perfect.sources.row(0) = 0.5 * inst.noisy_speech.samples.transpose();
  perfect.sources.row(1) = 0.5 * inst.noisy_speech.samples.transpose();
  perfect.sources.row(2) = inst.noise.samples.transpose();
  CHECK(unsupervised_mixit_loss(perfect, inst) == doctest::Approx(-2.0 * kSiSdrCapDb));
}

TEST_CASE("both losses are invariant to swapping slots 2 and 3") {
  Rng rng(47);
  for (int trial = 0; trial < 100; ++trial) {
    const SourceStack stack = testutil::random_stack(rng, 3, 40);
    const SourceStack swapped = swap_slots_23(stack);
    if (trial % 2 == 0) {
      const LossInstance inst = testutil::random_supervised_instance(rng, 40);
      CHECK(supervised_loss(stack, inst) == supervised_loss(swapped, inst));
    } else {
      const LossInstance inst = testutil::random_unsupervised_instance(rng, 40);
      CHECK(unsupervised_mixit_loss(stack, inst) == unsupervised_mixit_loss(swapped, inst));
    }
  }
}

TEST_CASE("losses equal the independent enumeration oracle") {
  Rng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const SourceStack stack = testutil::random_stack(rng, 3, 48);
    const LossInstance sup = testutil::random_supervised_instance(rng, 48);
    CHECK(supervised_loss(stack, sup) ==
          doctest::Approx(oracle_supervised(stack, sup)).epsilon(1e-9));
    const LossInstance unsup = testutil::random_unsupervised_instance(rng, 48);
    CHECK(unsupervised_mixit_loss(stack, unsup) ==
          doctest::Approx(oracle_unsupervised(stack, unsup)).epsilon(1e-9));
  }
}

TEST_CASE("min over permutations never exceeds either branch") {
  Rng rng(59);
  for (int trial = 0; trial < 25; ++trial) {
    const SourceStack stack = testutil::random_stack(rng, 3, 40);
    const LossInstance inst = testutil::random_unsupervised_instance(rng, 40);
    const Eigen::VectorXd e1 = stack.sources.row(0).transpose();
    const Eigen::VectorXd e2 = stack.sources.row(1).transpose();
    const Eigen::VectorXd e3 = stack.sources.row(2).transpose();
    const double branch_a = oracle_neg_si_sdr(e1 + e2, inst.noisy_speech.samples) +
                            oracle_neg_si_sdr(e3, inst.noise.samples);
    const double branch_b = oracle_neg_si_sdr(e1 + e3, inst.noisy_speech.samples) +
                            oracle_neg_si_sdr(e2, inst.noise.samples);
    const double loss = unsupervised_mixit_loss(stack, inst);
    CHECK(loss <= branch_a + 1e-9);
    CHECK(loss <= branch_b + 1e-9);
  }
}

TEST_CASE("supervised loss: perfect estimates beat perturbed ones") {
  Rng rng(61);
  const LossInstance inst = testutil::random_supervised_instance(rng, 40);
  SourceStack perfect{Eigen::MatrixXd(3, 40), 8000};
  perfect.sources.row(0) = inst.references->first.samples.transpose();
  perfect.sources.row(1) = inst.references->second.samples.transpose();
  perfect.sources.row(2) = inst.noise.samples.transpose();
  const double best = supervised_loss(perfect, inst);
  for (int trial = 0; trial < 10; ++trial) {
    SourceStack noisy = perfect;
    for (Eigen::Index r = 0; r < 3; ++r) {
      for (Eigen::Index c = 0; c < 40; ++c) noisy.sources(r, c) += 0.05 * rng.normal();
    }
    CHECK(best <= supervised_loss(noisy, inst));
  }
}

TEST_CASE("losses inherit SI-SDR scale invariance per compared pair") {
  // Scaling every estimate slot by one positive factor rescales each
  // (estimate, target) comparison's estimate; the loss must not move.
  Rng rng(67);
  const SourceStack stack = testutil::random_stack(rng, 3, 40);
  const LossInstance inst = testutil::random_unsupervised_instance(rng, 40);
  const double base = unsupervised_mixit_loss(stack, inst);
  for (double c : {0.1, 3.7}) {
    SourceStack scaled = stack;
    scaled.sources *= c;
    CHECK(std::abs(unsupervised_mixit_loss(scaled, inst) - base) < 1e-8);
  }
}

TEST_CASE("loss programs cross-evaluate bit-for-bit against the direct path") {
  ModelConfig config;
  config.frame_len = 8;
  config.hop = 4;
  config.basis = 8;
  config.hidden = 10;
  config.init_seed = 77;
  const ParamVector params = init_params(config);
  Rng rng(71);

  for (int trial = 0; trial < 20; ++trial) {
    const bool supervised = trial % 2 == 0;
    const LossInstance inst = supervised
                                  ? testutil::random_supervised_instance(rng, 44)
                                  : testutil::random_unsupervised_instance(rng, 44);
    const LossProgram program = make_loss_program(
        supervised ? LossKind::kSupervised : LossKind::kUnsupervised, config);
    const double recorded = ad::forward_record(program.bind(inst), params.values).loss;

    const SourceStack stack = separate(config, params, inst.mom);
    const double direct = supervised ? supervised_loss(stack, inst)
                                     : unsupervised_mixit_loss(stack, inst);
    CHECK(recorded == direct);
  }
}

TEST_CASE("losses reject stacks without exactly three sources") {
  Rng rng(73);
  const SourceStack wrong = testutil::random_stack(rng, 2, 32);
  const LossInstance sup = testutil::random_supervised_instance(rng, 32);
  const LossInstance unsup = testutil::random_unsupervised_instance(rng, 32);
  CHECK_THROWS_AS(supervised_loss(wrong, sup), ContractViolation);
  CHECK_THROWS_AS(unsupervised_mixit_loss(wrong, unsup), ContractViolation);

  ad::Tape tape(Eigen::VectorXd::Ones(1));
  const ad::Value bad_stack = tape.constant(Eigen::MatrixXd::Ones(32, 2));
  CHECK_THROWS_AS(build_loss(tape, bad_stack, unsup), ContractViolation);
}

TEST_CASE("kind mismatches are contract violations") {
  Rng rng(79);
  const SourceStack stack = testutil::random_stack(rng, 3, 32);
  const LossInstance sup = testutil::random_supervised_instance(rng, 32);
  const LossInstance unsup = testutil::random_unsupervised_instance(rng, 32);
  CHECK_THROWS_AS(supervised_loss(stack, unsup), ContractViolation);
  CHECK_THROWS_AS(unsupervised_mixit_loss(stack, sup), ContractViolation);
}

TEST_CASE("supervised instances validate x = s1 + s2") {
  Rng rng(83);
  AudioBuffer s1 = testutil::random_audio(rng, 16);
  AudioBuffer s2 = testutil::random_audio(rng, 16);
  AudioBuffer x{s1.samples + s2.samples, 8000};
  x.samples(3) += 1e-3;  // break the decomposition
  CHECK_THROWS_AS(make_supervised_instance(x, testutil::random_audio(rng, 16), s1, s2),
                  ContractViolation);
}

}  // TEST_SUITE
